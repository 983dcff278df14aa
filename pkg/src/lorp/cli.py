"""Command-line front end: sim, locality, plan, synth, check.

Exit codes: 0 success, 2 usage error, 3 file-format error, 4 computation
error. Every command with identical flags and inputs writes byte-identical
outputs; the resolved configuration is echoed into each JSON output under a
"config" key for provenance.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import ladf
from .allocation import PruneBudget, contiguous_window_plan, plan
from .clustering import spectral_cluster, to_affinity
from .errors import ComputationError, DimensionMismatchError, DumpFormatError, LorpError
from .locality import build_report
from .similarity import DEFAULT_EPSILON, SimilarityAccumulator, SimilarityMatrix
from .synth import PlantedSpec, generate_dump, generate_similarity
from .validation import invariant_battery

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_COMPUTE = 4


class UsageError(ValueError):
    pass


def _resolve(args: argparse.Namespace, config_doc: dict, key: str, default):
    """Precedence: explicit flag > config file > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config_doc:
        return config_doc[key]
    return default


def _load_config_doc(args: argparse.Namespace) -> dict:
    path = getattr(args, "config", None)
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return doc


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _load_matrix(path: str) -> SimilarityMatrix:
    sidecar = Path(path).with_suffix(".bin")
    return SimilarityMatrix.load(path, sidecar if sidecar.exists() else None)


def _accumulate_sharded(
    header: ladf.DumpHeader, chunks, epsilon: float, workers: int
) -> SimilarityAccumulator:
    if workers <= 1:
        acc = SimilarityAccumulator(header.n_layers, epsilon)
        for chunk in chunks:
            acc.add_batch(chunk)
        return acc
    # Round-robin chunk sharding; each shard is owned by one worker and the
    # shards merge in index order, so the result is stable for a fixed W.
    shards = [SimilarityAccumulator(header.n_layers, epsilon) for _ in range(workers)]
    buckets: list[list[np.ndarray]] = [[] for _ in range(workers)]
    for i, chunk in enumerate(chunks):
        buckets[i % workers].append(chunk)

    def run(w: int) -> None:
        for chunk in buckets[w]:
            shards[w].add_batch(chunk)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(run, range(workers)))
    acc = shards[0]
    for shard in shards[1:]:
        acc.merge(shard)
    return acc


def cmd_sim(args: argparse.Namespace) -> int:
    config_doc = _load_config_doc(args)
    epsilon = float(_resolve(args, config_doc, "epsilon", DEFAULT_EPSILON))
    workers = int(_resolve(args, config_doc, "workers", 1))
    out_dir = Path(_resolve(args, config_doc, "out", "."))
    if epsilon < 0:
        raise UsageError(f"epsilon must be >= 0, got {epsilon}")
    if workers < 1:
        raise UsageError(f"workers must be >= 1, got {workers}")
    header, chunks = ladf.stream_dump_chunks(args.dumps)
    acc = _accumulate_sharded(header, chunks, epsilon, workers)
    matrix = acc.finalize()
    resolved = {
        "command": "sim",
        "dumps": list(args.dumps),
        "epsilon": epsilon,
        "workers": workers,
    }
    doc = matrix.to_json_dict()
    doc["config"] = resolved
    _write_json(out_dir / "similarity.json", doc)
    (out_dir / "similarity.bin").write_bytes(
        np.ascontiguousarray(matrix.entries, dtype="<f8").tobytes()
    )
    if args.heatmap:
        with open(out_dir / "heatmap.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer_i", "layer_j", "similarity"])
            for i in range(matrix.n_layers):
                for j in range(matrix.n_layers):
                    writer.writerow([i + 1, j + 1, repr(float(matrix.entries[i, j]))])
    print(f"similarity: {matrix.n_layers} layers, {matrix.token_total} tokens -> {out_dir}")
    return EXIT_OK


def cmd_locality(args: argparse.Namespace) -> int:
    config_doc = _load_config_doc(args)
    out_dir = Path(_resolve(args, config_doc, "out", "."))
    matrix = _load_matrix(args.matrix)
    report = build_report(matrix)
    doc = report.to_json_dict()
    doc["config"] = {"command": "locality", "matrix": args.matrix}
    _write_json(out_dir / "locality.json", doc)
    if args.profile_csv:
        with open(out_dir / "distance_profile.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["normalized_distance", "mean_similarity"])
            for x, y in report.distance_profile:
                writer.writerow([repr(x), repr(y)])
    rls_text = "undefined" if report.rls is None else f"{report.rls:.4f}"
    print(f"locality: off-diag mean {report.off_diag_mean:.6f}, score {rls_text}, K={report.recommended_k}")
    return EXIT_OK


def cmd_plan(args: argparse.Namespace) -> int:
    config_doc = _load_config_doc(args)
    out_dir = Path(_resolve(args, config_doc, "out", "."))
    seed = int(_resolve(args, config_doc, "seed", 0))
    method = _resolve(args, config_doc, "method", "lorp")
    k_arg = _resolve(args, config_doc, "k", "auto")
    budget_val = _resolve(args, config_doc, "budget", None)
    if budget_val is None:
        raise UsageError("--budget is required")
    budget_int = int(budget_val)
    if budget_int < 1:
        raise UsageError(f"budget must be >= 1, got {budget_int}")
    matrix = _load_matrix(args.matrix)
    if budget_int > matrix.n_layers - 2:
        raise UsageError(
            f"budget {budget_int} exceeds the {matrix.n_layers - 2} non-boundary layers"
        )
    budget = PruneBudget(budget_int)
    report = build_report(matrix)
    if method == "contiguous":
        result = contiguous_window_plan(matrix, budget)
        k_resolved = None
    elif method == "lorp":
        if isinstance(k_arg, str) and k_arg == "auto":
            k_resolved = report.recommended_k
        else:
            k_resolved = int(k_arg)
            if not 2 <= k_resolved <= matrix.n_layers:
                raise UsageError(f"k must satisfy 2 <= k <= {matrix.n_layers}, got {k_resolved}")
        partition = spectral_cluster(to_affinity(matrix), k_resolved, seed)
        result = plan(matrix, partition, budget)
    else:
        raise UsageError(f"unknown method {method!r}")
    doc = result.to_json_dict()
    doc["warnings"] = list(report.warnings) + doc["warnings"]
    doc["config"] = {
        "command": "plan",
        "matrix": args.matrix,
        "k": "auto" if (isinstance(k_arg, str) and k_arg == "auto") else int(k_arg),
        "k_resolved": k_resolved,
        "budget": budget_int,
        "seed": seed,
        "method": method,
    }
    _write_json(out_dir / "plan.json", doc)
    (out_dir / "pattern.txt").write_text(result.pattern_strip() + "\n")
    print(f"plan: {method}, pruned {list(result.pruned_layers)}")
    print(result.pattern_strip())
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    config_doc = _load_config_doc(args)
    out_dir = Path(_resolve(args, config_doc, "out", "."))
    spec = PlantedSpec.from_json(args.spec)
    if args.mode == "matrix":
        matrix = generate_similarity(spec)
        doc = matrix.to_json_dict()
        doc["config"] = {"command": "synth", "spec": args.spec, "mode": "matrix"}
        _write_json(out_dir / "similarity.json", doc)
        (out_dir / "similarity.bin").write_bytes(
            np.ascontiguousarray(matrix.entries, dtype="<f8").tobytes()
        )
        print(f"synth: planted {spec.k}-cluster matrix for {spec.n_layers} layers -> {out_dir}")
    else:
        dump = generate_dump(spec, args.samples, args.tokens)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "synthetic.ladf"
        with open(path, "wb") as fh:
            n = dump.write(fh)
        print(f"synth: {dump.total_tokens} tokens, {n} bytes -> {path}")
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    matrix = _load_matrix(args.matrix)
    results = invariant_battery(matrix)
    failed = False
    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        if not passed and name != "diagonal":
            failed = True
        if not passed and name == "diagonal":
            status = "WARN"
        print(f"{status} {name}: {detail}")
    if failed:
        raise ComputationError("invariant battery failed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lorp",
        description="Depth-pruning planner driven by layer-representation locality.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("sim", help="compute the layer similarity matrix from activation dumps")
    p_sim.add_argument("dumps", nargs="+", help="LADF dump file(s), logically concatenated")
    p_sim.add_argument("--epsilon", type=float, default=None, help=f"norm offset (default {DEFAULT_EPSILON})")
    p_sim.add_argument("--workers", type=int, default=None, help="shard count for accumulation (default 1)")
    p_sim.add_argument("--heatmap", action="store_true", help="also write heatmap.csv")
    p_sim.add_argument("--out", default=None, help="output directory (default .)")
    p_sim.add_argument("--config", default=None, help="JSON config file (flags take precedence)")
    p_sim.set_defaults(func=cmd_sim)

    p_loc = sub.add_parser("locality", help="locality report for a similarity matrix")
    p_loc.add_argument("matrix", help="similarity.json path")
    p_loc.add_argument("--profile-csv", action="store_true", help="also write distance_profile.csv")
    p_loc.add_argument("--out", default=None)
    p_loc.add_argument("--config", default=None)
    p_loc.set_defaults(func=cmd_locality)

    p_plan = sub.add_parser("plan", help="emit a deterministic pruning plan")
    p_plan.add_argument("matrix", help="similarity.json path")
    p_plan.add_argument("--k", default=None, help='cluster count or "auto" (locality policy)')
    p_plan.add_argument("--budget", type=int, default=None, help="number of layers to remove")
    p_plan.add_argument("--seed", type=int, default=None, help="clustering seed (default 0)")
    p_plan.add_argument("--method", choices=["lorp", "contiguous"], default=None)
    p_plan.add_argument("--out", default=None)
    p_plan.add_argument("--config", default=None)
    p_plan.set_defaults(func=cmd_plan)

    p_synth = sub.add_parser("synth", help="generate planted dumps or matrices")
    p_synth.add_argument("spec", help="PlantedSpec JSON path")
    p_synth.add_argument("--mode", choices=["dump", "matrix"], default="matrix")
    p_synth.add_argument("--samples", type=int, default=4, help="sample count (dump mode)")
    p_synth.add_argument("--tokens", type=int, default=64, help="tokens per sample (dump mode)")
    p_synth.add_argument("--out", default=None)
    p_synth.add_argument("--config", default=None)
    p_synth.set_defaults(func=cmd_synth)

    p_check = sub.add_parser("check", help="run the invariant battery on a matrix")
    p_check.add_argument("matrix", help="similarity.json path")
    p_check.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DumpFormatError, DimensionMismatchError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ComputationError, ValueError) as exc:
        print(f"computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except LorpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
