"""Experiment runner: method sweeps, bound verification, end-to-end frames.

Every trial derives its seed from (master seed, grid index, trial index), so
sweeps are reproducible byte for byte and can be split across processes
without changing any output. Timing capture is off by default for the same
reason.
"""

from __future__ import annotations

import csv
import json
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from .consistency import CCLossParams
from .oracle import CCLossOracle, ScoreDistributions, SyntheticOracle, SyntheticOracleSpec
from .pasac import (
    PasacConfig,
    linear_scan,
    pasac_run,
    query_bound,
    error_bound,
    random_consensus,
)
from .rng import derive_seed, make_rng
from .scene import SimConfig, corrupt, gen_scene, observe
from .threshold import (
    ThresholdParams,
    ThresholdState,
    ThresholdTraceRow,
    classify,
    threshold_update,
    update_with_trace,
)
from .types import ConfigError, Verdict

METHODS = ("pasac", "linear", "random")


@dataclass(frozen=True)
class TrialRecord:
    n: int
    m: int
    method: str
    queries: int
    correct: bool
    stopped_early: bool
    seed: int
    wall_ns: int | None = None


@dataclass(frozen=True)
class SweepSummary:
    n: int
    m: int
    method: str
    min_q: int
    max_q: int
    avg_q: float
    error_rate: float
    trials: int

    @property
    def ratio(self) -> float:
        return self.m / self.n


@dataclass(frozen=True)
class SweepSpec:
    n_values: tuple[int, ...]
    m_values: tuple[int, ...]
    methods: tuple[str, ...] = METHODS
    trials: int = 1000
    master_seed: int = 0
    alpha: float = 0.0
    beta: float = 0.0
    n_max: int | None = None
    max_attempts: int = 1000
    timing: bool = False
    keep_trace: bool = True
    parallelism: int = 1

    def __post_init__(self) -> None:
        if not self.n_values or any(n < 1 for n in self.n_values):
            raise ConfigError("n_values must be non-empty positive integers")
        if any(m < 0 for m in self.m_values):
            raise ConfigError("m_values must be >= 0")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError(f"methods must be a non-empty subset of {METHODS}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if not self.grid():
            raise ConfigError("sweep grid is empty (every m exceeds every n)")

    def grid(self) -> list[tuple[int, int]]:
        return [(n, m) for n in self.n_values for m in self.m_values if m <= n]


def _sample_truth(ids: Sequence[int], m: int, seed: int) -> frozenset[int]:
    order = make_rng(seed).permutation(len(ids))
    return frozenset(int(ids[int(i)]) for i in order[:m])


def _classified_correctly(result, truth: frozenset[int]) -> bool:
    # no classified agent mislabeled; exhaustive runs reduce this to equality
    if result.failed:
        return False
    return result.malicious <= truth and not (result.benign & truth)


def _run_grid_point(spec: SweepSpec, grid_idx: int, n: int, m: int) -> list[TrialRecord]:
    ids = tuple(range(1, n + 1))
    records = []
    for trial_idx in range(spec.trials):
        seed = derive_seed(spec.master_seed, grid_idx, trial_idx)
        truth = _sample_truth(ids, m, derive_seed(seed, 0))
        for method_idx, method in enumerate(spec.methods):
            oracle = SyntheticOracle(
                SyntheticOracleSpec(spec.alpha, spec.beta, truth),
                derive_seed(seed, 1, method_idx))
            t0 = time.perf_counter_ns() if spec.timing else 0
            if method == "pasac":
                result = pasac_run(ids, oracle, PasacConfig(
                    n_max=spec.n_max, split_seed=derive_seed(seed, 2),
                    keep_trace=spec.keep_trace))
            elif method == "linear":
                result = linear_scan(ids, oracle, keep_trace=spec.keep_trace)
            else:
                result = random_consensus(ids, oracle, assumed_m=m,
                                          max_attempts=spec.max_attempts,
                                          seed=derive_seed(seed, 3),
                                          keep_trace=spec.keep_trace)
            wall = time.perf_counter_ns() - t0 if spec.timing else None
            records.append(TrialRecord(
                n=n, m=m, method=method, queries=result.queries,
                correct=_classified_correctly(result, truth),
                stopped_early=result.stopped_early, seed=seed, wall_ns=wall))
    return records


def run_sweep(spec: SweepSpec) -> list[TrialRecord]:
    grid = spec.grid()
    if spec.parallelism > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=spec.parallelism) as pool:
            chunks = list(pool.map(
                _run_grid_point,
                [spec] * len(grid),
                range(len(grid)),
                [g[0] for g in grid],
                [g[1] for g in grid]))
    else:
        chunks = [_run_grid_point(spec, i, n, m) for i, (n, m) in enumerate(grid)]
    return [rec for chunk in chunks for rec in chunk]


def summarize(records: Sequence[TrialRecord]) -> list[SweepSummary]:
    groups: dict[tuple[int, int, str], list[TrialRecord]] = {}
    for rec in records:
        groups.setdefault((rec.n, rec.m, rec.method), []).append(rec)
    out = []
    for (n, m, method) in sorted(groups):
        rows = groups[(n, m, method)]
        queries = [r.queries for r in rows]
        out.append(SweepSummary(
            n=n, m=m, method=method,
            min_q=min(queries), max_q=max(queries),
            avg_q=sum(queries) / len(queries),
            error_rate=1.0 - sum(r.correct for r in rows) / len(rows),
            trials=len(rows)))
    return out


# ---------- bound checks ----------


def check_thm1(alpha: float, beta: float, n: int, m: int, trials: int,
               seed: int) -> dict:
    """Empirical misclassification probability against its analytic bound."""
    bound = error_bound(alpha, beta, n, m)
    params = {"alpha": alpha, "beta": beta, "n": n, "m": m,
              "trials": trials, "seed": seed}
    if bound >= 1.0:
        return {"theorem": "thm1", "params": params, "empirical": None,
                "bound": bound, "status": "vacuous"}
    ids = tuple(range(1, n + 1))
    errors = 0
    for t in range(trials):
        tseed = derive_seed(seed, t)
        truth = _sample_truth(ids, m, derive_seed(tseed, 0))
        oracle = SyntheticOracle(SyntheticOracleSpec(alpha, beta, truth),
                                 derive_seed(tseed, 1))
        result = pasac_run(ids, oracle, PasacConfig(
            split_seed=derive_seed(tseed, 2), keep_trace=False))
        if result.malicious != truth:
            errors += 1
    empirical = errors / trials
    status = "pass" if empirical <= bound else "fail"
    return {"theorem": "thm1", "params": params, "empirical": empirical,
            "bound": bound, "status": status}


def check_thm2(n_range: tuple[int, int], m_range: tuple[int, int] | None,
               trials: int, seed: int) -> dict:
    """Query-count bound under a perfect oracle, over random (n, m) instances.

    Also verifies exact classification and that no benign agent is accepted
    through more than one singleton query.
    """
    n_lo, n_hi = n_range
    if not 1 <= n_lo <= n_hi:
        raise ConfigError(f"invalid n_range {n_range}")
    violations = 0
    exact = 0
    singleton_repeats = 0
    max_queries = 0
    for t in range(trials):
        tseed = derive_seed(seed, t)
        rng = make_rng(derive_seed(tseed, 0))
        n = int(rng.integers(n_lo, n_hi + 1))
        if m_range is None:
            m = int(rng.integers(0, n + 1))
        else:
            m = int(rng.integers(m_range[0], min(m_range[1], n) + 1))
        ids = tuple(range(1, n + 1))
        truth = _sample_truth(ids, m, derive_seed(tseed, 1))
        oracle = SyntheticOracle(SyntheticOracleSpec(0.0, 0.0, truth),
                                 derive_seed(tseed, 2))
        result = pasac_run(ids, oracle, PasacConfig(
            split_seed=derive_seed(tseed, 3), keep_trace=True))
        if result.queries > query_bound(n, m):
            violations += 1
        if result.malicious == truth:
            exact += 1
        singles = Counter(rec.subset[0] for rec in result.trace
                          if len(rec.subset) == 1
                          and rec.verdict.label == Verdict.BENIGN)
        if singles and max(singles.values()) > 1:
            singleton_repeats += 1
        max_queries = max(max_queries, result.queries)
    return {
        "theorem": "thm2",
        "params": {"n_range": list(n_range),
                   "m_range": list(m_range) if m_range else None,
                   "trials": trials, "seed": seed},
        "empirical": {"violations": violations, "exact": exact,
                      "singleton_repeat_violations": singleton_repeats,
                      "max_queries": max_queries, "trials": trials},
        "bound": "queries <= 2*m*ceil(log2 n) + (n - m) on every run",
        "status": "pass" if violations == 0 else "fail",
    }


def check_thm3(dists: ScoreDistributions, alpha: float, beta: float,
               stream_len: int, seed: int,
               params: ThresholdParams | None = None,
               epsilon0: float = 0.5) -> dict:
    """Reliability of the adaptive threshold on separated score distributions."""
    tparams = params or ThresholdParams(alpha=alpha, beta=beta)
    report_params = {"benign": [dists.benign_mean, dists.benign_sigma],
                     "contam": [dists.contam_mean, dists.contam_sigma],
                     "alpha": alpha, "beta": beta,
                     "stream_len": stream_len, "seed": seed}
    if not dists.separated(alpha, beta):
        return {"theorem": "thm3", "params": report_params, "empirical": None,
                "bound": {"fpr": alpha + 0.02, "fnr": beta + 0.02},
                "status": "assumption_unmet"}
    rng = make_rng(seed)
    state = ThresholdState(tparams, epsilon0)
    # warm both windows to capacity before measuring
    warm_cap = 100 * tparams.window
    warmed = 0
    while (len(state.window_benign) < tparams.window
           or len(state.window_contam) < tparams.window):
        if warmed >= warm_cap:
            raise RuntimeError("threshold warm-up did not fill both windows")
        contaminated = bool(rng.uniform() < 0.5)
        score = dists.sample(contaminated, rng)
        threshold_update(state, score,
                         Verdict.CONTAM if contaminated else Verdict.BENIGN)
        warmed += 1
    fp = fn = n_ben = n_con = 0
    for _ in range(stream_len):
        contaminated = bool(rng.uniform() < 0.5)
        score = dists.sample(contaminated, rng)
        predicted = classify(score, state.epsilon)
        if contaminated:
            n_con += 1
            fn += predicted == Verdict.BENIGN
        else:
            n_ben += 1
            fp += predicted == Verdict.CONTAM
        threshold_update(state, score,
                         Verdict.CONTAM if contaminated else Verdict.BENIGN)
    fpr = fp / n_ben if n_ben else 0.0
    fnr = fn / n_con if n_con else 0.0
    ok = fpr <= alpha + 0.02 and fnr <= beta + 0.02
    return {
        "theorem": "thm3",
        "params": report_params,
        "empirical": {"fpr": fpr, "fnr": fnr, "eps_final": state.epsilon,
                      "warmup_steps": warmed},
        "bound": {"fpr": alpha + 0.02, "fnr": beta + 0.02},
        "status": "pass" if ok else "fail",
    }


# ---------- threshold tracing ----------


def run_threshold_trace(dists: ScoreDistributions, tparams: ThresholdParams,
                        initial_epsilons: Sequence[float], stream_len: int,
                        seed: int) -> dict[float, list[ThresholdTraceRow]]:
    """Replay one labeled score stream through several initial thresholds."""
    if not initial_epsilons:
        raise ConfigError("need at least one initial threshold")
    if stream_len < 1:
        raise ConfigError("stream_len must be >= 1")
    rng = make_rng(seed)
    stream = []
    for _ in range(stream_len):
        contaminated = bool(rng.uniform() < 0.5)
        stream.append((dists.sample(contaminated, rng),
                       Verdict.CONTAM if contaminated else Verdict.BENIGN))
    traces: dict[float, list[ThresholdTraceRow]] = {}
    for eps0 in initial_epsilons:
        state = ThresholdState(tparams, eps0)
        traces[float(eps0)] = [
            update_with_trace(state, step, score, label)
            for step, (score, label) in enumerate(stream)]
    return traces


def convergence_summary(traces: Mapping[float, Sequence[ThresholdTraceRow]],
                        settle_after: int = 500, band: float = 0.05,
                        tail: int = 100, tail_std: float = 0.01) -> dict:
    """Cross-trajectory agreement band and per-trajectory tail stability."""
    keys = sorted(traces)
    length = min(len(traces[k]) for k in keys)
    if length <= settle_after:
        raise ConfigError(
            f"stream too short: {length} steps, settle_after={settle_after}")
    band_max = 0.0
    for step in range(settle_after, length):
        values = [traces[k][step].eps for k in keys]
        band_max = max(band_max, max(values) - min(values))
    tails = {}
    for k in keys:
        window = [row.eps for row in traces[k][-tail:]]
        mean = sum(window) / len(window)
        var = sum((v - mean) ** 2 for v in window) / len(window)
        tails[repr(k)] = var ** 0.5
    return {
        "initial_epsilons": keys,
        "band_max_after_settle": band_max,
        "band_limit": band,
        "tail_std": tails,
        "tail_std_limit": tail_std,
        "final_eps": {repr(k): traces[k][length - 1].eps for k in keys},
        "converged": band_max <= band and all(v <= tail_std for v in tails.values()),
    }


# ---------- end-to-end frames ----------


@dataclass(frozen=True)
class FrameRow:
    frame: int
    benign_found: int
    malicious_found: int
    queries: int
    eps: float


@dataclass(frozen=True)
class E2EResult:
    rows: tuple[FrameRow, ...]
    truth: frozenset[int]
    precision: float
    recall: float
    frames_all_flagged: float
    frames_clean: float
    eps_final: float


def run_e2e(config: SimConfig, frames: int, master_seed: int,
            tparams: ThresholdParams, epsilon0: float,
            ccparams: CCLossParams, n_max: int | None = None) -> E2EResult:
    """Frame loop: observe, corrupt, group-test, then adapt the threshold.

    The threshold is frozen within a frame; every query's (score, verdict)
    pair is fed back afterwards, so the system trains on its own decisions.
    """
    if frames < 1:
        raise ConfigError("frames must be >= 1")
    if len(config.agents) < 2:
        raise ConfigError("need an ego agent and at least one collaborator")
    agents = config.agents
    collaborators = [a.agent_id for a in agents[1:]]
    truth = frozenset(a.agent_id for a in agents if a.attack is not None)
    state = ThresholdState(tparams, epsilon0)
    rows = []
    tp = fp = fn = 0
    frames_all = frames_clean = 0
    for f in range(frames):
        scene = gen_scene(config, derive_seed(master_seed, f, 0))
        outputs = {}
        for agent in agents:
            obs = observe(scene, agent, derive_seed(master_seed, f, 1, agent.agent_id))
            if agent.attack is not None:
                obs = corrupt(obs, agent.attack,
                              derive_seed(master_seed, f, 2, agent.agent_id))
            outputs[agent.agent_id] = obs
        oracle = CCLossOracle(outputs[0], outputs, ccparams,
                              epsilon=lambda: state.epsilon,
                              merge_iou=config.merge_iou)
        result = pasac_run(collaborators, oracle, PasacConfig(
            n_max=n_max, split_seed=derive_seed(master_seed, f, 3)))
        for rec in result.trace:
            threshold_update(state, rec.verdict.score, rec.verdict.label)
        flagged = result.malicious
        tp += len(flagged & truth)
        fp += len(flagged - truth)
        fn += len(truth - flagged)
        frames_all += truth <= flagged
        frames_clean += not (flagged - truth)
        rows.append(FrameRow(f, len(result.benign), len(flagged),
                             result.queries, state.epsilon))
    return E2EResult(
        rows=tuple(rows),
        truth=truth,
        precision=tp / (tp + fp) if tp + fp else 1.0,
        recall=tp / (tp + fn) if tp + fn else 1.0,
        frames_all_flagged=frames_all / frames,
        frames_clean=frames_clean / frames,
        eps_final=state.epsilon,
    )


# ---------- serialization ----------


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, Verdict):
        return value.value
    return str(value)


def _write_rows(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_records_csv(records: Sequence[TrialRecord], path: str) -> None:
    _write_rows(path,
                ["n", "m", "method", "queries", "correct", "stopped_early",
                 "seed", "wall_ns"],
                [(r.n, r.m, r.method, r.queries, r.correct, r.stopped_early,
                  r.seed, r.wall_ns) for r in records])


def write_summary_csv(summaries: Sequence[SweepSummary], path: str) -> None:
    _write_rows(path,
                ["n", "m", "ratio", "method", "min_q", "max_q", "avg_q",
                 "error_rate", "trials"],
                [(s.n, s.m, s.ratio, s.method, s.min_q, s.max_q, s.avg_q,
                  s.error_rate, s.trials) for s in summaries])


def write_trace_csv(rows: Sequence[ThresholdTraceRow], path: str) -> None:
    _write_rows(path,
                ["step", "score", "label", "q_p", "q_n", "eps_provisional", "eps"],
                [(r.step, r.score, r.label, r.q_p, r.q_n, r.eps_provisional,
                  r.eps) for r in rows])


def write_frames_csv(rows: Sequence[FrameRow], path: str) -> None:
    _write_rows(path,
                ["frame", "benign_found", "malicious_found", "queries", "eps"],
                [(r.frame, r.benign_found, r.malicious_found, r.queries, r.eps)
                 for r in rows])


def write_json(doc: dict, path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
