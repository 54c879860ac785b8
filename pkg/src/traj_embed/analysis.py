"""Statistical checks of event logs against specs, and of ensembles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .errors import DimensionMismatch, EmptyLog, NoSuchBranch, TooFewSamples
from .process_core import (
    DiscreteProcessSpec,
    EventLog,
    ProcessSpec,
    lift_discrete,
)

MIN_KS_SAMPLES = 50
BAND_SIGMAS = 3.0


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

@dataclass
class TransitionEstimate:
    rows: list[str]
    cols: list[str]
    counts: np.ndarray
    matrix: np.ndarray
    radius: np.ndarray

    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def _mode_labels(log: EventLog, spec: ProcessSpec | None) -> list[str | None]:
    """Mode each wait was spent in: ground truth if logged, else the successor
    of the previous symbol. The first record of each trajectory is unknown."""
    if log.modes is not None:
        return list(log.modes)
    after = spec.mode_after_symbol() if spec is not None else None
    out: list[str | None] = []
    for i, x in enumerate(log.symbols):
        if i == 0 or (log.traj is not None and log.traj[i] != log.traj[i - 1]):
            out.append(None)
            continue
        prev = log.symbols[i - 1]
        out.append(after[prev] if after is not None else prev)
    return out


def empirical_transition_matrix(
    log: EventLog, spec: ProcessSpec | None = None, symbols=None
) -> TransitionEstimate:
    """Next-symbol frequencies conditioned on the mode (previous symbol by default).

    ``radius`` is the 3-sigma binomial half-width of each estimate.
    """
    if len(log) == 0:
        raise EmptyLog("event log is empty")
    cols = list(symbols) if symbols is not None else sorted(set(log.symbols))
    labels = _mode_labels(log, spec)
    rows = sorted({m for m in labels if m is not None})
    if spec is not None and log.modes is None and spec.mode_after_symbol() is None:
        raise ValueError("modes cannot be attributed from symbols for this spec; log true modes")
    ri = {m: i for i, m in enumerate(rows)}
    ci = {x: i for i, x in enumerate(cols)}
    counts = np.zeros((len(rows), len(cols)), dtype=int)
    for m, x in zip(labels, log.symbols):
        if m is not None:
            counts[ri[m], ci[x]] += 1
    n = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(n > 0, counts / np.maximum(n, 1), np.nan)
        radius = BAND_SIGMAS * np.sqrt(P * (1 - P) / np.maximum(n, 1))
    return TransitionEstimate(rows, cols, counts, P, radius)


def ks_test(samples, cdf: Callable) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test with the asymptotic p-value."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < MIN_KS_SAMPLES:
        raise TooFewSamples(f"{samples.size} samples; the asymptotic KS test needs {MIN_KS_SAMPLES}")
    res = stats.kstest(samples, cdf, method="asymp")
    return float(res.statistic), float(min(max(res.pvalue, 0.0), 1.0))


def ks_2samp(a, b) -> tuple[float, float]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if min(a.size, b.size) < MIN_KS_SAMPLES:
        raise TooFewSamples(f"{min(a.size, b.size)} samples; need {MIN_KS_SAMPLES} in each")
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(min(max(res.pvalue, 0.0), 1.0))


def _check_density(rho: np.ndarray, name: str, tol: float = 1e-6) -> None:
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError(f"{name} is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"{name} has trace {np.trace(rho).real:.6g}, expected 1")


def compare_ensemble(rho_a: np.ndarray, rho_b: np.ndarray) -> float:
    """Trace distance ``1/2 ||rho_a - rho_b||_1``."""
    rho_a = np.asarray(rho_a, dtype=complex)
    rho_b = np.asarray(rho_b, dtype=complex)
    if rho_a.shape != rho_b.shape:
        raise DimensionMismatch(f"shapes {rho_a.shape} and {rho_b.shape} differ")
    _check_density(rho_a, "rho_a")
    _check_density(rho_b, "rho_b")
    diff = rho_a - rho_b
    w = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(min(0.5 * np.sum(np.abs(w)), 1.0))


# ---------------------------------------------------------------------------
# aggregate report
# ---------------------------------------------------------------------------

@dataclass
class StatsReport:
    alpha: float
    ks: dict[tuple[str, str], dict] = field(default_factory=dict)
    chi2: dict = field(default_factory=dict)
    transitions: dict[tuple[str, str], dict] = field(default_factory=dict)
    trace_distances: dict[str, float] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)
    n_events: int = 0

    @property
    def failures(self) -> list[str]:
        out = []
        for (g, x), r in self.ks.items():
            if not r["p"] > self.alpha:
                out.append(f"KS wait law ({g}, {x}): p = {r['p']:.3g}")
        if self.chi2 and not self.chi2["p"] > self.alpha:
            out.append(f"symbol frequencies: chi2 p = {self.chi2['p']:.3g}")
        for (g, x), r in self.transitions.items():
            if not r["ok"]:
                out.append(f"transition ({g} -> {x}): {r['freq']:.4f} vs {r['expected']:.4f} +- {r['radius']:.4f}")
        return out

    @property
    def verdict(self) -> str:
        return "PASS" if not self.failures else "FAIL"

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_events": self.n_events,
            "verdict": self.verdict,
            "failures": self.failures,
            "ks": [{"mode": g, "symbol": x, **r} for (g, x), r in sorted(self.ks.items())],
            "chi2": self.chi2,
            "transitions": [{"mode": g, "symbol": x, **r} for (g, x), r in sorted(self.transitions.items())],
            "trace_distances": self.trace_distances,
            "skipped": self.skipped,
        }

    def summary(self) -> str:
        lines = [f"events: {self.n_events}   alpha: {self.alpha}"]
        lines.append(f"{'mode':>8} {'symbol':>8} {'n':>8} {'KS D':>10} {'p':>10}")
        for (g, x), r in sorted(self.ks.items()):
            lines.append(f"{g:>8} {x:>8} {r['n']:>8d} {r['statistic']:>10.5f} {r['p']:>10.4f}")
        if self.chi2:
            lines.append(f"symbol frequencies: chi2 = {self.chi2['statistic']:.3f}, "
                         f"dof = {self.chi2['dof']}, p = {self.chi2['p']:.4f}")
        lines.append(f"{'mode':>8} {'symbol':>8} {'freq':>10} {'expected':>10} {'3sigma':>10}")
        for (g, x), r in sorted(self.transitions.items()):
            flag = "" if r["ok"] else "  <-- outside band"
            lines.append(f"{g:>8} {x:>8} {r['freq']:>10.5f} {r['expected']:>10.5f} {r['radius']:>10.5f}{flag}")
        for s in self.skipped:
            lines.append(f"skipped: {s}")
        for k, v in self.trace_distances.items():
            lines.append(f"trace distance {k}: {v:.5f}")
        lines.append(f"verdict: {self.verdict}")
        return "\n".join(lines)


def _grouped_waits(spec: ProcessSpec, log: EventLog):
    labels = _mode_labels(log, spec)
    groups: dict[tuple[str, str], list[float]] = {}
    per_mode: dict[str, dict[str, int]] = {}
    for m, x, w in zip(labels, log.symbols, log.waits):
        if m is None:
            continue
        groups.setdefault((m, x), []).append(float(w))
        per_mode.setdefault(m, {}).setdefault(x, 0)
        per_mode[m][x] += 1
    return groups, per_mode


def validate_run(
    spec: ProcessSpec | DiscreteProcessSpec,
    log: EventLog,
    alpha: float = 0.01,
    rate: float | None = None,
) -> StatsReport:
    """KS tests on wait laws, a pooled chi-square on symbol frequencies and
    3-sigma bands on transition probabilities; PASS needs every p > alpha and
    every estimate inside its band."""
    if isinstance(spec, DiscreteProcessSpec):
        if rate is None:
            raise ValueError("a discrete chain needs the embedding rate to judge waits")
        spec = lift_discrete(spec, rate)
    if len(log) == 0:
        raise EmptyLog("event log is empty")
    log.check_symbols(spec.symbols)
    if log.modes is None and spec.mode_after_symbol() is None:
        raise ValueError("modes cannot be attributed from symbols for this spec; log true modes")
    report = StatsReport(alpha=alpha, n_events=len(log))
    groups, per_mode = _grouped_waits(spec, log)

    for (g, x), waits in sorted(groups.items()):
        try:
            b = spec.branch(g, x)
        except NoSuchBranch:
            report.transitions[(g, x)] = {"count": len(waits), "n": sum(per_mode[g].values()),
                                          "freq": len(waits) / sum(per_mode[g].values()),
                                          "expected": 0.0, "radius": 0.0, "ok": False}
            continue
        dwell = b.dwell

        def cdf(t, dwell=dwell):
            return 1.0 - dwell.tail(np.asarray(t))

        try:
            stat, p = ks_test(waits, cdf)
        except TooFewSamples:
            report.skipped.append(f"KS ({g}, {x}): {len(waits)} samples < {MIN_KS_SAMPLES}")
            continue
        report.ks[(g, x)] = {"statistic": stat, "p": p, "n": len(waits)}

    chi2_stat, dof = 0.0, 0
    for g, counts in sorted(per_mode.items()):
        n = sum(counts.values())
        for b in spec.branches[g]:
            k = counts.get(b.symbol, 0)
            T = b.prob
            radius = BAND_SIGMAS * math.sqrt(T * (1 - T) / n)
            freq = k / n
            ok = (k == 0) if T == 0 else (k == n) if T == 1 else abs(freq - T) <= radius
            report.transitions[(g, b.symbol)] = {
                "count": k, "n": n, "freq": freq, "expected": T, "radius": radius, "ok": bool(ok)
            }
        live = [b for b in spec.branches[g] if b.prob > 0]
        if len(live) > 1:
            for b in live:
                e = b.prob * n
                chi2_stat += (counts.get(b.symbol, 0) - e) ** 2 / e
            dof += len(live) - 1
    if dof > 0:
        report.chi2 = {"statistic": chi2_stat, "dof": dof, "p": float(stats.chi2.sf(chi2_stat, dof))}
    return report


def compare_logs(spec: ProcessSpec, log_a: EventLog, log_b: EventLog, alpha: float = 0.01) -> dict:
    """Two-sample KS on waits per (mode, symbol) between two logs of one spec."""
    ga, _ = _grouped_waits(spec, log_a)
    gb, _ = _grouped_waits(spec, log_b)
    out = {}
    for key in sorted(set(ga) & set(gb)):
        try:
            stat, p = ks_2samp(ga[key], gb[key])
        except TooFewSamples:
            continue
        out[key] = {"statistic": stat, "p": p, "n_a": len(ga[key]), "n_b": len(gb[key]), "ok": p > alpha}
    return out
