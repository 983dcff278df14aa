"""End-to-end smoke: capture -> planner CLI -> layer surgery on a small checkpoint."""

import json
import subprocess
import sys

import torch

from lorp_extractor.capture import CaptureConfig, capture
from lorp_extractor.surgery import apply_plan, forward_smoke_test


def run_planner(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "lorp.cli", *args], capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def test_a9_extractor_smoke(tiny_checkpoint, tmp_path):
    """A9: dump from a small checkpoint -> plan -> surgery, forward pass intact."""
    budget = 2
    dump = tmp_path / "calib.ladf"
    n_blocks, tokens = capture(
        CaptureConfig(model_id=tiny_checkpoint, n_samples=8, seq_len=32, output_path=str(dump), seed=0)
    )
    assert (n_blocks, tokens) == (6, 256)

    run_planner("sim", str(dump), "--out", str(tmp_path))
    run_planner("plan", str(tmp_path / "similarity.json"), "--budget", str(budget), "--k", "2", "--out", str(tmp_path))
    plan_doc = json.loads((tmp_path / "plan.json").read_text())
    assert plan_doc["n_layers"] == 6
    assert len(plan_doc["pruned_layers_0based"]) == budget

    out = tmp_path / "pruned"
    remaining = apply_plan(tiny_checkpoint, tmp_path / "plan.json", out)
    assert remaining == 6 - budget

    from transformers import AutoModelForCausalLM

    pruned = AutoModelForCausalLM.from_pretrained(out)
    assert len(pruned.model.layers) == 6 - budget
    logits = forward_smoke_test(pruned)
    assert logits.shape == (1, 8, pruned.config.vocab_size)
    assert torch.isfinite(logits).all()
    print(f"\nA9 PASS: captured {tokens} tokens, planned {plan_doc['pruned_layers_1based']}, "
          f"pruned checkpoint has {remaining} blocks and a working forward pass")
