"""Command-line front end.

Four subcommands cover the workflows: ``theorems`` verifies the analytic
bounds, ``pasac-bench`` sweeps the group-testing methods, ``threshold-trace``
replays a score stream through several initial thresholds, and ``e2e`` runs
the full per-frame defense loop. Every run writes a manifest with a digest of
the effective configuration so outputs can be reproduced exactly.

Exit codes: 0 success, 1 failed bound check, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys

from . import __version__
from .bench import (
    SweepSpec,
    check_thm1,
    check_thm2,
    check_thm3,
    convergence_summary,
    run_e2e,
    run_sweep,
    run_threshold_trace,
    summarize,
    write_frames_csv,
    write_json,
    write_records_csv,
    write_summary_csv,
    write_trace_csv,
)
from .consistency import CCLossParams
from .oracle import ScoreDistributions
from .scenarios import (
    DEFAULT_MASTER_SEED,
    default_bench_doc,
    default_theorems_doc,
    default_trace_doc,
    smoke_e2e_doc,
)
from .scene import parse_sim_config
from .threshold import ThresholdParams
from .types import ConfigError


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _load_doc(path: str | None, defaults: dict) -> dict:
    if path is None:
        return copy.deepcopy(defaults)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return _deep_merge(defaults, user)


def _canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _write_manifest(out_dir: str, command: str, seed: int, doc: dict,
                    artifacts: list[str]) -> None:
    canonical = _canonical(doc)
    write_json({
        "command": command,
        "tool_version": __version__,
        "master_seed": seed,
        "config_canonical": doc,
        "config_digest": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "artifacts": artifacts,
    }, os.path.join(out_dir, "manifest.json"))


def _dists(doc: dict) -> ScoreDistributions:
    return ScoreDistributions(
        benign_mean=float(doc["benign"]["mean"]),
        benign_sigma=float(doc["benign"]["sigma"]),
        contam_mean=float(doc["contam"]["mean"]),
        contam_sigma=float(doc["contam"]["sigma"]))


def _tparams(doc: dict) -> ThresholdParams:
    return ThresholdParams(
        alpha=float(doc["alpha"]), beta=float(doc["beta"]),
        window=int(doc["window"]), window_min=int(doc["window_min"]),
        eta=float(doc["eta"]))


def cmd_theorems(doc: dict, out_dir: str, seed: int, args) -> int:
    t1, t2, t3 = doc["thm1"], doc["thm2"], doc["thm3"]
    reports = [
        check_thm1(float(t1["alpha"]), float(t1["beta"]), int(t1["n"]),
                   int(t1["m"]), int(t1["trials"]), seed),
        check_thm2(tuple(t2["n_range"]),
                   tuple(t2["m_range"]) if t2.get("m_range") else None,
                   int(t2["trials"]), seed),
        check_thm3(_dists(t3), float(t3["alpha"]), float(t3["beta"]),
                   int(t3["stream_len"]), seed),
    ]
    names = []
    for report in reports:
        name = f"{report['theorem']}.json"
        write_json(report, os.path.join(out_dir, name))
        names.append(name)
        print(f"{report['theorem']}: {report['status']}")
    _write_manifest(out_dir, "theorems", seed, doc, names)
    return 1 if any(r["status"] == "fail" for r in reports) else 0


def cmd_pasac_bench(doc: dict, out_dir: str, seed: int, args) -> int:
    spec = SweepSpec(
        n_values=tuple(int(n) for n in doc["n_values"]),
        m_values=tuple(int(m) for m in doc["m_values"]),
        methods=tuple(doc["methods"]),
        trials=int(doc["trials"]),
        master_seed=seed,
        alpha=float(doc["alpha"]),
        beta=float(doc["beta"]),
        n_max=int(doc["n_max"]) if doc.get("n_max") is not None else None,
        max_attempts=int(doc["max_attempts"]),
        timing=bool(doc["timing"]),
        keep_trace=not args.no_trace,
        parallelism=args.parallelism,
    )
    records = run_sweep(spec)
    write_records_csv(records, os.path.join(out_dir, "records.csv"))
    write_summary_csv(summarize(records), os.path.join(out_dir, "summary.csv"))
    _write_manifest(out_dir, "pasac-bench", seed, doc,
                    ["records.csv", "summary.csv"])
    print(f"{len(records)} trial records over {len(spec.grid())} grid points")
    return 0


def cmd_threshold_trace(doc: dict, out_dir: str, seed: int, args) -> int:
    stream_len = int(doc["stream_len"])
    traces = run_threshold_trace(
        _dists(doc), _tparams(doc["threshold"]),
        [float(e) for e in doc["initial_epsilons"]], stream_len, seed)
    names = []
    for eps0 in sorted(traces):
        name = f"trace_{eps0!r}.csv"
        write_trace_csv(traces[eps0], os.path.join(out_dir, name))
        names.append(name)
    settle_after = int(doc["settle_after"])
    if stream_len > settle_after:
        summary = convergence_summary(traces, settle_after=settle_after)
    else:
        summary = {"converged": None,
                   "note": f"stream of {stream_len} steps is shorter than "
                           f"settle_after={settle_after}"}
    write_json(summary, os.path.join(out_dir, "convergence.json"))
    names.append("convergence.json")
    _write_manifest(out_dir, "threshold-trace", seed, doc, names)
    print(f"{len(traces)} traces, converged: {summary['converged']}")
    return 0


def cmd_e2e(doc: dict, out_dir: str, seed: int, args) -> int:
    config = parse_sim_config(doc["sim"])
    result = run_e2e(
        config,
        frames=int(doc["frames"]),
        master_seed=seed,
        tparams=_tparams(doc["threshold"]),
        epsilon0=float(doc["epsilon0"]),
        ccparams=CCLossParams(phi=float(doc["phi"]),
                              symmetric_det=bool(doc.get("symmetric_det", False))),
        n_max=int(doc["n_max"]) if doc.get("n_max") is not None else None,
    )
    write_frames_csv(result.rows, os.path.join(out_dir, "frames.csv"))
    write_json({
        "truth": sorted(result.truth),
        "precision": result.precision,
        "recall": result.recall,
        "frames_all_flagged": result.frames_all_flagged,
        "frames_clean": result.frames_clean,
        "eps_final": result.eps_final,
        "frames": len(result.rows),
    }, os.path.join(out_dir, "result.json"))
    _write_manifest(out_dir, "e2e", seed, doc, ["frames.csv", "result.json"])
    print(f"recall {result.recall:.3f}, clean frames {result.frames_clean:.3f}, "
          f"final threshold {result.eps_final:.3f}")
    return 0


_COMMANDS = {
    "theorems": (cmd_theorems, default_theorems_doc),
    "pasac-bench": (cmd_pasac_bench, default_bench_doc),
    "threshold-trace": (cmd_threshold_trace, default_trace_doc),
    "e2e": (cmd_e2e, smoke_e2e_doc),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peersieve",
        description="Group-testing defense for collaborative perception: "
                    "bound checks, benchmarks, threshold traces, and "
                    "end-to-end simulation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None,
                       help="JSON config; built-in defaults when omitted")
        p.add_argument("--out", default="peersieve-out",
                       help="output directory (default: %(default)s)")
        p.add_argument("--seed", type=int, default=DEFAULT_MASTER_SEED,
                       help="master seed (default: %(default)s)")
        p.add_argument("--parallelism", type=int, default=1,
                       help="worker processes for sweeps")
        p.add_argument("--no-trace", action="store_true",
                       help="keep only counters, not per-query traces")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    command, defaults = _COMMANDS[args.command]
    try:
        doc = _load_doc(args.config, defaults())
        os.makedirs(args.out, exist_ok=True)
        return command(doc, args.out, args.seed, args)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
