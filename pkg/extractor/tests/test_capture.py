import json
import struct
import subprocess
import sys
from types import SimpleNamespace

import numpy as np
import pytest
import torch
from torch import nn

from lorp_extractor.capture import (
    CaptureConfig,
    UnsupportedArchitectureError,
    capture,
    capture_model,
    capture_sequence,
    find_decoder_blocks,
    sample_documents,
)

from conftest import ToyStack

HEADER = struct.Struct("<4sIIIB3s")
CHUNK = struct.Struct("<I")


def parse_dump(path):
    """Local byte-level parser: the wire format is the contract under test."""
    raw = open(path, "rb").read()
    magic, version, n_layers, d_model, dtype_tag, _ = HEADER.unpack(raw[: HEADER.size])
    assert magic == b"LADF" and version == 1 and dtype_tag == 0
    offset = HEADER.size
    chunks = []
    while offset < len(raw):
        (t,) = CHUNK.unpack(raw[offset : offset + CHUNK.size])
        offset += CHUNK.size
        count = t * n_layers * d_model
        values = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        chunks.append(values.reshape(t, n_layers, d_model))
        offset += count * 4
    return n_layers, d_model, chunks


class TestFindBlocks:
    def test_finds_toy_stack(self):
        model = ToyStack(n_layers=4)
        blocks = find_decoder_blocks(model)
        assert len(blocks) == 4

    def test_rejects_model_without_config(self):
        with pytest.raises(UnsupportedArchitectureError):
            find_decoder_blocks(nn.Linear(3, 3))

    def test_rejects_missing_block_list(self):
        model = nn.Linear(3, 3)
        model.config = SimpleNamespace(num_hidden_layers=4)
        with pytest.raises(UnsupportedArchitectureError, match="no ModuleList"):
            find_decoder_blocks(model)

    def test_rejects_ambiguous_block_lists(self):
        class TwoLists(nn.Module):
            def __init__(self):
                super().__init__()
                self.config = SimpleNamespace(num_hidden_layers=2)
                self.a = nn.ModuleList([nn.Linear(2, 2), nn.Linear(2, 2)])
                self.b = nn.ModuleList([nn.Linear(2, 2), nn.Linear(2, 2)])

        with pytest.raises(UnsupportedArchitectureError, match="ambiguous"):
            find_decoder_blocks(TwoLists())


class TestCaptureSequence:
    def test_matches_manual_forward(self):
        # Fidelity: record l must equal the tensor entering block l exactly.
        model = ToyStack(n_layers=4, d=16, seed=7).eval()
        ids = torch.arange(10) % 32
        records = capture_sequence(model, model.blocks, ids)
        with torch.no_grad():
            hidden = model.embed(ids.unsqueeze(0))
            for l, block in enumerate(model.blocks):
                expected = hidden[0].numpy().astype("<f4")
                assert np.array_equal(records[:, l, :], expected)
                hidden = block(hidden)

    def test_output_is_float32(self):
        model = ToyStack().eval().double()
        records = capture_sequence(model, model.blocks, torch.arange(4))
        assert records.dtype == np.dtype("<f4")

    def test_batch_dimension_guard(self):
        model = ToyStack().eval()
        with pytest.raises(ValueError):
            capture_sequence(model, model.blocks, torch.zeros((2, 4), dtype=torch.long))


class TestCaptureModel:
    def test_token_counting_on_toy_model(self, tmp_path):
        model = ToyStack(n_layers=4, d=16)
        config = CaptureConfig(
            model_id="toy", n_samples=2, seq_len=8, output_path=str(tmp_path / "toy.ladf")
        )
        n_blocks, tokens = capture_model(model, config)
        assert (n_blocks, tokens) == (4, 16)
        n_layers, d_model, chunks = parse_dump(config.output_path)
        assert (n_layers, d_model) == (4, 16)
        assert [c.shape[0] for c in chunks] == [8, 8]

    def test_capture_from_checkpoint(self, tiny_checkpoint, tmp_path):
        config = CaptureConfig(
            model_id=tiny_checkpoint,
            n_samples=3,
            seq_len=12,
            output_path=str(tmp_path / "ckpt.ladf"),
            seed=5,
        )
        n_blocks, tokens = capture(config)
        assert (n_blocks, tokens) == (6, 36)

    def test_capture_is_seed_deterministic(self, tmp_path):
        paths = []
        for run in range(2):
            model = ToyStack(n_layers=4, d=16, seed=3)
            path = tmp_path / f"run{run}.ladf"
            capture_model(model, CaptureConfig("toy", n_samples=2, seq_len=6, output_path=str(path), seed=9))
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestCorpusSampling:
    def test_small_corpus_taken_whole_in_order(self):
        docs = ["alpha", "beta", "gamma"]
        assert sample_documents(docs, 8, seed=0) == docs

    def test_large_corpus_sampled_stably(self):
        docs = [f"doc {i}" for i in range(100)]
        a = sample_documents(docs, 10, seed=4)
        b = sample_documents(docs, 10, seed=4)
        assert a == b
        assert a == sorted(a, key=lambda d: int(d.split()[1]))  # document order preserved

    def test_corpus_mode_uses_tokenizer(self, tmp_path):
        class FakeTokenizer:
            def __call__(self, text, return_tensors, truncation, max_length):
                n = min(len(text.split()), max_length)
                return {"input_ids": torch.arange(n, dtype=torch.long).unsqueeze(0) % 32}

        corpus = tmp_path / "corpus.txt"
        corpus.write_text("one two three\nfour five\n\nsix seven eight nine\n")
        model = ToyStack(n_layers=4, d=16)
        config = CaptureConfig(
            model_id="toy",
            corpus_path=str(corpus),
            n_samples=3,
            seq_len=3,
            output_path=str(tmp_path / "corpus.ladf"),
        )
        n_blocks, tokens = capture_model(model, config, FakeTokenizer())
        assert n_blocks == 4
        assert tokens == 3 + 2 + 3  # truncated at seq_len=3

    def test_corpus_without_tokenizer_rejected(self, tmp_path):
        corpus = tmp_path / "corpus.txt"
        corpus.write_text("something\n")
        model = ToyStack()
        config = CaptureConfig("toy", corpus_path=str(corpus), output_path=str(tmp_path / "x.ladf"))
        with pytest.raises(ValueError, match="tokenizer"):
            capture_model(model, config)


class TestPlannerInterop:
    def test_planner_cli_reads_captured_dump(self, tiny_checkpoint, tmp_path):
        # The dump must be consumable by the planner through its public CLI.
        dump = tmp_path / "interop.ladf"
        capture(CaptureConfig(model_id=tiny_checkpoint, n_samples=4, seq_len=16, output_path=str(dump)))
        proc = subprocess.run(
            [sys.executable, "-m", "lorp.cli", "sim", str(dump), "--out", str(tmp_path)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        doc = json.loads((tmp_path / "similarity.json").read_text())
        rows = np.asarray(doc["rows"])
        assert doc["n_layers"] == 6
        assert doc["token_total"] == 64
        assert np.array_equal(rows, rows.T)
        assert np.min(np.diag(rows)) >= 0.999
