"""Capture block-input hidden states from a causal LM into an LADF dump.

A forward pre-hook on every decoder block records the tensor entering it, so
record l of a token is exactly the residual-stream input of block l at that
position. Capture always down-casts to float32 at write time regardless of
the model's compute precision; that is the dump's storage dtype and plenty
for cosine statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
from torch import nn

from .ladf_writer import write_chunk, write_header


class UnsupportedArchitectureError(RuntimeError):
    """Model has no single uniform decoder-block list to hook."""


@dataclass
class CaptureConfig:
    model_id: str
    corpus_path: str | None = None
    n_samples: int = 128
    seq_len: int = 2048
    output_path: str = "activations.ladf"
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.seq_len < 1:
            raise ValueError(f"seq_len must be >= 1, got {self.seq_len}")


def find_decoder_blocks(model: nn.Module) -> nn.ModuleList:
    """Locate the ModuleList holding the model's decoder blocks.

    Matches any ModuleList whose length equals config.num_hidden_layers;
    ambiguity or absence means the architecture is not supported.
    """
    num = getattr(getattr(model, "config", None), "num_hidden_layers", None)
    if num is None:
        raise UnsupportedArchitectureError("model config declares no num_hidden_layers")
    matches = [
        (name, module)
        for name, module in model.named_modules()
        if isinstance(module, nn.ModuleList) and len(module) == num
    ]
    if not matches:
        raise UnsupportedArchitectureError(f"no ModuleList of {num} decoder blocks found")
    if len(matches) > 1:
        names = [name for name, _ in matches]
        raise UnsupportedArchitectureError(f"ambiguous decoder block lists: {names}")
    return matches[0][1]


def capture_sequence(model: nn.Module, blocks: Sequence[nn.Module], input_ids: torch.Tensor) -> np.ndarray:
    """Run one forward pass and return the (T, n_blocks, d) block-input stack."""
    if input_ids.ndim == 1:
        input_ids = input_ids.unsqueeze(0)
    if input_ids.shape[0] != 1:
        raise ValueError("capture runs one sequence at a time")
    captured: dict[int, torch.Tensor] = {}

    def make_hook(index: int):
        def hook(module, args, kwargs):
            hidden = args[0] if args else kwargs.get("hidden_states")
            if hidden is None:
                raise UnsupportedArchitectureError(f"block {index} received no hidden-state input")
            captured[index] = hidden.detach().to("cpu", torch.float32)

        return hook

    handles = [
        block.register_forward_pre_hook(make_hook(i), with_kwargs=True)
        for i, block in enumerate(blocks)
    ]
    try:
        with torch.no_grad():
            model(input_ids)
    finally:
        for handle in handles:
            handle.remove()
    if len(captured) != len(blocks):
        missing = [i for i in range(len(blocks)) if i not in captured]
        raise UnsupportedArchitectureError(f"blocks {missing} never ran in the forward pass")
    dims = {tuple(t.shape) for t in captured.values()}
    if len(dims) != 1:
        raise UnsupportedArchitectureError(f"hidden-state shapes drift across blocks: {sorted(dims)}")
    stack = torch.stack([captured[i][0] for i in range(len(blocks))], dim=1)  # (T, N, d)
    return np.ascontiguousarray(stack.numpy(), dtype="<f4")


def sample_documents(lines: Sequence[str], n_samples: int, seed: int) -> list[str]:
    """Seeded, document-order-stable selection of calibration documents."""
    docs = [line for line in lines if line.strip()]
    if not docs:
        raise ValueError("calibration corpus contains no non-empty documents")
    if len(docs) <= n_samples:
        return list(docs)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(docs), size=n_samples, replace=False))
    return [docs[i] for i in idx]


def iter_input_ids(config: CaptureConfig, model: nn.Module, tokenizer=None) -> Iterator[torch.Tensor]:
    """Yield one token-id tensor per calibration sequence.

    With a corpus file, documents are sampled stably and tokenized to at most
    seq_len tokens each; without one, seeded uniform token ids stand in (toy
    and smoke-test use).
    """
    if config.corpus_path is not None:
        if tokenizer is None:
            raise ValueError("a tokenizer is required to capture from a text corpus")
        lines = Path(config.corpus_path).read_text().splitlines()
        for doc in sample_documents(lines, config.n_samples, config.seed):
            ids = tokenizer(doc, return_tensors="pt", truncation=True, max_length=config.seq_len)
            if ids["input_ids"].shape[1] >= 1:
                yield ids["input_ids"]
        return
    vocab = int(model.config.vocab_size)
    rng = np.random.default_rng(config.seed)
    for _ in range(config.n_samples):
        ids = rng.integers(0, vocab, size=(1, config.seq_len))
        yield torch.as_tensor(ids, dtype=torch.long)


def capture_model(model: nn.Module, config: CaptureConfig, tokenizer=None) -> tuple[int, int]:
    """Stream every calibration sequence through the model into the dump file.

    Returns (n_blocks, total_tokens).
    """
    model.eval()
    blocks = find_decoder_blocks(model)
    d_model = int(model.config.hidden_size)
    total_tokens = 0
    with open(config.output_path, "wb") as sink:
        write_header(sink, len(blocks), d_model)
        for input_ids in iter_input_ids(config, model, tokenizer):
            records = capture_sequence(model, blocks, input_ids.to(config.device))
            if records.shape[2] != d_model:
                raise UnsupportedArchitectureError(
                    f"captured width {records.shape[2]} != config.hidden_size {d_model}"
                )
            write_chunk(sink, records)
            total_tokens += records.shape[0]
    return len(blocks), total_tokens


def capture(config: CaptureConfig) -> tuple[int, int]:
    """Load the checkpoint named by the config and capture its activations."""
    from transformers import AutoModelForCausalLM, AutoTokenizer

    model = AutoModelForCausalLM.from_pretrained(config.model_id)
    model.to(config.device)
    tokenizer = None
    if config.corpus_path is not None:
        tokenizer = AutoTokenizer.from_pretrained(config.model_id)
    return capture_model(model, config, tokenizer)
