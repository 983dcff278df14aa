"""Apply a pruning plan to a checkpoint by physically deleting decoder blocks.

Reads the plan JSON's 0-based index list, deletes those entries from the
model's block list (deepest first), renumbers per-layer indices used by the
attention cache, updates config.num_hidden_layers, and saves a standard
checkpoint directory. Remaining blocks keep their original relative order.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .capture import find_decoder_blocks


class PlanError(ValueError):
    """Plan file is malformed or inconsistent with the model."""


def load_plan(path: str | Path) -> dict:
    """Read and validate a pruning-plan JSON file."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PlanError(f"cannot read plan {path}: {exc}") from exc
    try:
        n_layers = int(doc["n_layers"])
        pruned = [int(i) for i in doc["pruned_layers_0based"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanError(f"plan {path} is missing n_layers/pruned_layers_0based: {exc}") from exc
    if len(set(pruned)) != len(pruned):
        raise PlanError("plan contains duplicate layers")
    for i in pruned:
        if not 0 <= i < n_layers:
            raise PlanError(f"pruned index {i} out of range for {n_layers} layers")
        if i == 0 or i == n_layers - 1:
            raise PlanError(f"plan prunes boundary layer {i}; boundary layers are never removable")
    return {"n_layers": n_layers, "pruned_0based": sorted(pruned)}


def apply_plan_to_model(model, pruned_0based: list[int], expected_layers: int) -> None:
    """Delete the given blocks in place and renumber the survivors."""
    blocks = find_decoder_blocks(model)
    if len(blocks) != expected_layers:
        raise PlanError(f"plan covers {expected_layers} layers but model has {len(blocks)}")
    for index in sorted(pruned_0based, reverse=True):
        del blocks[index]
    for i, layer in enumerate(blocks):
        if hasattr(layer, "layer_idx"):
            layer.layer_idx = i
        attn = getattr(layer, "self_attn", None)
        if attn is not None and hasattr(attn, "layer_idx"):
            attn.layer_idx = i
    model.config.num_hidden_layers = len(blocks)
    if getattr(model.config, "max_window_layers", None):
        model.config.max_window_layers = min(model.config.max_window_layers, len(blocks))


def forward_smoke_test(model, prompt_len: int = 8) -> torch.Tensor:
    """One short forward pass; returns the logits so callers can compare runs."""
    model.eval()
    vocab = int(model.config.vocab_size)
    ids = torch.arange(prompt_len, dtype=torch.long).remainder(vocab).unsqueeze(0)
    with torch.no_grad():
        out = model(ids)
    return out.logits


def apply_plan(model_id: str, plan_path: str | Path, output_dir: str | Path) -> int:
    """Load checkpoint, delete the planned blocks, save the pruned checkpoint.

    Returns the remaining block count. A short forward pass must succeed
    before anything is written.
    """
    from transformers import AutoModelForCausalLM

    plan = load_plan(plan_path)
    model = AutoModelForCausalLM.from_pretrained(model_id)
    apply_plan_to_model(model, plan["pruned_0based"], plan["n_layers"])
    forward_smoke_test(model)
    model.save_pretrained(output_dir)
    try:
        from transformers import AutoTokenizer

        AutoTokenizer.from_pretrained(model_id).save_pretrained(output_dir)
    except Exception:
        pass  # checkpoints without a tokenizer are still valid outputs
    return model.config.num_hidden_layers
