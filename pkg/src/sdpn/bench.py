"""Benchmark families and the timing harness.

Three scalable families of single-place cells (one controllable and one
plain transition per cell, rate 1, a reward on the plain transition's
output place) probe the three regimes that matter for the rewriting
approach:

* N1 -- n fully concurrent cells (free-choice occurrence);
* N2 -- n cells in a line, each rewarded place feeding the next cell
  (free-choice occurrence, no concurrency);
* N3 -- n cells in a line where *both* members mark the next cell's input
  place, so every interior input place has two producers (safe acyclic
  free-choice but not occurrence); this is the regime with exponentially
  growing rewritten supports.

Rewards and query thresholds are standard-normal samples from the seeded
generator, quantized to rationals with a fixed denominator so the rest of
the pipeline stays exact.  Timings use the monotonic clock and exclude a
warm-up iteration.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .errors import SolverUnavailable
from .net import Marking, RewardTable, Sdpn, Transition, format_rational
from .rewrite import rewrite_rewards, value_expression, value_via_rewrite
from .rng import GaussianStream
from .solve import brute_force, emit_smtlib, solve_smt

FAMILIES = ("N1", "N2", "N3")
REWARD_DENOMINATOR = 10**6

CSV_COLUMNS = [
    "family",
    "n",
    "seed",
    "rewrite_ms",
    "brute_ms",
    "smt_ms",
    "supp_R_final",
    "decision",
    "value",
]


@dataclass(frozen=True)
class BenchConfig:
    family: str
    n: int
    seed: int
    reward_denominator: int = REWARD_DENOMINATOR
    repetitions: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass
class BenchRecord:
    family: str
    n: int
    seed: int
    rewrite_ms: float
    brute_ms: float
    smt_ms: Optional[float]
    supp_levels: list[int]
    supp_final: int
    decision: bool
    value: Fraction
    threshold: Fraction
    solver_missing: bool = False


def _sample_rationals(stream: GaussianStream, count: int, denominator: int) -> list[Fraction]:
    out = []
    while len(out) < count:
        q = Fraction(round(stream.next() * denominator), denominator)
        if q != 0:  # reward tables cannot hold zero entries
            out.append(q)
    return out


def gen_family(cfg: BenchConfig) -> tuple[Sdpn, Fraction]:
    """Instantiate one family member plus a sampled query threshold.

    Sampling order is fixed: n rewards in cell order, then the threshold.
    """
    stream = GaussianStream(cfg.seed)
    rewards = _sample_rationals(stream, cfg.n, cfg.reward_denominator)
    threshold = Fraction(round(stream.next() * cfg.reward_denominator), cfg.reward_denominator)
    n = cfg.n

    transitions: list[Transition] = []
    reward_items: list[tuple[frozenset, Fraction]] = []
    if cfg.family == "N1":
        places = [f"p{i}" for i in range(1, 2 * n + 1)]
        initial = {f"p{2 * k - 1}": 1 for k in range(1, n + 1)}
        for k in range(1, n + 1):
            pre = {f"p{2 * k - 1}": 1}
            transitions.append(Transition(f"t{2 * k - 1}", pre, {f"p{2 * k}": 1}, Fraction(1)))
            transitions.append(Transition(f"t{2 * k}", pre, {}, Fraction(1)))
            reward_items.append((frozenset({f"p{2 * k}"}), rewards[k - 1]))
    elif cfg.family == "N2":
        places = [f"p{i}" for i in range(1, n + 2)]
        initial = {"p1": 1}
        for k in range(1, n + 1):
            pre = {f"p{k}": 1}
            transitions.append(Transition(f"t{2 * k - 1}", pre, {f"p{k + 1}": 1}, Fraction(1)))
            transitions.append(Transition(f"t{2 * k}", pre, {}, Fraction(1)))
            reward_items.append((frozenset({f"p{k + 1}"}), rewards[k - 1]))
    else:  # N3
        places = [f"p{i}" for i in range(1, 2 * n + 1)]
        initial = {"p1": 1}
        for k in range(1, n + 1):
            pre = {f"p{2 * k - 1}": 1}
            post_plain = {f"p{2 * k}": 1}
            post_ctrl = {}
            if 2 * k + 1 <= 2 * n:  # the last cell has no next input place
                post_plain[f"p{2 * k + 1}"] = 1
                post_ctrl[f"p{2 * k + 1}"] = 1
            transitions.append(Transition(f"t{2 * k - 1}", pre, post_plain, Fraction(1)))
            transitions.append(Transition(f"t{2 * k}", pre, post_ctrl, Fraction(1)))
            reward_items.append((frozenset({f"p{2 * k}"}), rewards[k - 1]))

    net = Sdpn(
        places=places,
        transitions=transitions,
        m0=Marking(initial),
        controllable=[f"t{2 * k}" for k in range(1, n + 1)],
        rewards=RewardTable(reward_items),
    )
    return net, threshold


def run_bench(
    cfgs: Iterable[BenchConfig],
    solver_cmd: Optional[str] = None,
    smt_timeout_ms: int = 60_000,
) -> list[BenchRecord]:
    """Time rewriting, exhaustive search, and optionally SMT per instance.

    The exhaustive search evaluates all deactivation sets against the
    rewritten reward.  A missing solver downgrades the run to brute-only
    records flagged solver_missing.
    """
    records = []
    solver_ok = solver_cmd is not None
    for cfg in cfgs:
        net, threshold = gen_family(cfg)

        rewrite_rewards(net)  # warm-up, excluded from timing
        best_rewrite = None
        for _ in range(cfg.repetitions):
            t0 = time.perf_counter()
            levels, reward = rewrite_rewards(net)
            elapsed = (time.perf_counter() - t0) * 1000.0
            best_rewrite = elapsed if best_rewrite is None else min(best_rewrite, elapsed)

        t0 = time.perf_counter()
        brute = brute_force(net, threshold, valuer="rewrite")
        brute_ms = (time.perf_counter() - t0) * 1000.0

        smt_ms: Optional[float] = None
        solver_missing = False
        if solver_ok:
            expr = value_expression(net, reward)
            script = emit_smtlib(expr, threshold)
            try:
                t0 = time.perf_counter()
                smt = solve_smt(script, solver_cmd, timeout_ms=smt_timeout_ms)
                smt_ms = (time.perf_counter() - t0) * 1000.0
            except SolverUnavailable:
                solver_ok = False
                solver_missing = True
            else:
                if smt.decision != brute.decision:
                    raise AssertionError(
                        f"solver and exhaustive search disagree on {cfg}: "
                        f"{smt.decision} vs {brute.decision}"
                    )
        elif solver_cmd is not None:
            solver_missing = True

        records.append(
            BenchRecord(
                family=cfg.family,
                n=cfg.n,
                seed=cfg.seed,
                rewrite_ms=best_rewrite,
                brute_ms=brute_ms,
                smt_ms=smt_ms,
                supp_levels=[len(aux.entries) for aux in levels],
                supp_final=len(reward),
                decision=brute.decision,
                value=brute.value,
                threshold=threshold,
                solver_missing=solver_missing,
            )
        )
    return records


def write_csv(records: list[BenchRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.family,
                    r.n,
                    r.seed,
                    f"{r.rewrite_ms:.3f}",
                    f"{r.brute_ms:.3f}",
                    "" if r.smt_ms is None else f"{r.smt_ms:.3f}",
                    r.supp_final,
                    "yes" if r.decision else "no",
                    format_rational(r.value),
                ]
            )


def aggregate(records: list[BenchRecord]) -> list[dict]:
    """Median / mean / stddev / 90% quantile per (family, n) and phase."""
    rows = []
    keys = sorted({(r.family, r.n) for r in records})
    for family, n in keys:
        group = [r for r in records if r.family == family and r.n == n]
        row = {"family": family, "n": n, "count": len(group)}
        for phase in ("rewrite_ms", "brute_ms", "smt_ms"):
            values = [getattr(r, phase) for r in group if getattr(r, phase) is not None]
            if not values:
                continue
            row[f"{phase}_median"] = statistics.median(values)
            row[f"{phase}_mean"] = statistics.fmean(values)
            row[f"{phase}_stddev"] = statistics.stdev(values) if len(values) > 1 else 0.0
            row[f"{phase}_q90"] = (
                statistics.quantiles(values, n=10, method="inclusive")[-1]
                if len(values) > 1
                else values[0]
            )
        rows.append(row)
    return rows


def render_figures(records: list[BenchRecord], directory: str) -> list[str]:
    """Runtime and support-growth figures next to the CSV output."""
    import os

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(directory, exist_ok=True)
    rows = aggregate(records)
    families = sorted({r["family"] for r in rows})
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for family in families:
        points = [(r["n"], r["rewrite_ms_median"]) for r in rows if r["family"] == family]
        points.sort()
        ax.plot([p[0] for p in points], [max(p[1], 1e-3) for p in points], marker="o", label=family)
    ax.set_yscale("log")
    ax.set_xlabel("cell count")
    ax.set_ylabel("median rewrite time [ms]")
    ax.set_title("Reward rewriting runtime")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(directory, "rewrite_times.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for family in families:
        group = [(r.n, r.supp_final) for r in records if r.family == family]
        by_n: dict[int, int] = {}
        for n, supp in group:
            by_n[n] = max(by_n.get(n, 0), supp)
        points = sorted(by_n.items())
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="s", label=family)
    ax.set_yscale("log", base=2)
    ax.set_xlabel("cell count")
    ax.set_ylabel("final support size")
    ax.set_title("Rewritten reward support growth")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(directory, "support_growth.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)
    return paths
