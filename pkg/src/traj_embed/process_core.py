"""Continuous-time HSMMs, discrete-time HMMs, classical sampling and memory.

A continuous-time process is described mode by mode: from mode ``g`` each
branch emits a distinct symbol ``x`` with probability ``T`` after a dwell time
drawn from ``phi``, and the process moves to the deterministic successor
``lambda(g, x)``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from .errors import (
    BadDensity,
    DuplicateSymbolBranch,
    NegativeTime,
    NonStochastic,
    NoSuchBranch,
    NoUniqueStationary,
    SpecError,
    UnreachableMode,
)

PROB_TOL = 1e-10
DENSITY_NORM_TOL = 1e-6


# ---------------------------------------------------------------------------
# Dwell distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Exponential:
    rate: float

    def problems(self) -> list[str]:
        if not (math.isfinite(self.rate) and self.rate > 0):
            return [f"exponential rate must be positive and finite, got {self.rate}"]
        return []

    @property
    def components(self) -> list[tuple[float, float]]:
        return [(1.0, float(self.rate))]

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, self.rate * np.exp(-self.rate * np.maximum(t, 0.0)), 0.0)

    def tail(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-self.rate * np.maximum(t, 0.0))

    def interval_mass(self, t, dt):
        # expm1 keeps small-interval masses accurate far into the tail
        t = np.asarray(t, dtype=float)
        return np.exp(-self.rate * np.maximum(t, 0.0)) * -np.expm1(-self.rate * dt)

    def mean(self) -> float:
        return 1.0 / self.rate

    def from_uniforms(self, u_component, u_wait):
        return -np.log(u_wait) / self.rate


@dataclass(frozen=True)
class ExpMixture:
    weights: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))

    def problems(self) -> list[str]:
        out = []
        if len(self.weights) != len(self.rates) or not self.weights:
            out.append("mixture needs matching, non-empty weights and rates")
            return out
        if any(not (math.isfinite(r) and r > 0) for r in self.rates):
            out.append(f"mixture rates must be positive, got {self.rates}")
        if any(not (w > 0) for w in self.weights):
            out.append(f"mixture weights must be positive, got {self.weights}")
        if abs(sum(self.weights) - 1.0) > PROB_TOL:
            out.append(f"mixture weights sum to {sum(self.weights)!r}, not 1")
        return out

    @property
    def components(self) -> list[tuple[float, float]]:
        return list(zip(self.weights, self.rates))

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        tt = np.maximum(t, 0.0)
        out = sum(w * r * np.exp(-r * tt) for w, r in self.components)
        return np.where(t >= 0, out, 0.0)

    def tail(self, t):
        tt = np.maximum(np.asarray(t, dtype=float), 0.0)
        return sum(w * np.exp(-r * tt) for w, r in self.components)

    def interval_mass(self, t, dt):
        tt = np.maximum(np.asarray(t, dtype=float), 0.0)
        return sum(w * np.exp(-r * tt) * -np.expm1(-r * dt) for w, r in self.components)

    def mean(self) -> float:
        return sum(w / r for w, r in self.components)

    def from_uniforms(self, u_component, u_wait):
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, u_component, side="right")
        idx = np.minimum(idx, len(self.rates) - 1)
        return -np.log(u_wait) / np.asarray(self.rates)[idx]


class Tabulated:
    """Piecewise-linear density on a grid, zero outside it.

    Integrals are exact for the piecewise-linear interpolant, which coincides
    with the trapezoid rule on the grid. The density is rescaled internally by
    its trapezoid integral, so ``tail(t_grid[0]) == 1``.
    """

    def __init__(self, t_grid: Sequence[float], density: Sequence[float]):
        self.t_grid = np.asarray(t_grid, dtype=float)
        self.density = np.asarray(density, dtype=float)
        ok = not self._shape_problems()
        if ok:
            h = np.diff(self.t_grid)
            seg = 0.5 * h * (self.density[:-1] + self.density[1:])
            self._norm = float(seg.sum())
        else:
            self._norm = float("nan")
        if ok and self._norm > 0:
            self._f = self.density / self._norm
            self._h = np.diff(self.t_grid)
            self._seg = 0.5 * self._h * (self._f[:-1] + self._f[1:])
            # mass strictly after grid point i
            self._after = np.concatenate([np.cumsum(self._seg[::-1])[::-1], [0.0]])
            self._before = np.concatenate([[0.0], np.cumsum(self._seg)])

    def __repr__(self) -> str:
        return f"Tabulated(<{self.t_grid.size} points on [{self.t_grid[0]}, {self.t_grid[-1]}]>)"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tabulated)
            and np.array_equal(self.t_grid, other.t_grid)
            and np.array_equal(self.density, other.density)
        )

    __hash__ = None

    def _shape_problems(self) -> list[str]:
        out = []
        if self.t_grid.ndim != 1 or self.t_grid.shape != self.density.shape or self.t_grid.size < 2:
            return ["tabulated grid and density must be 1-d arrays of equal length >= 2"]
        if not (np.all(np.isfinite(self.t_grid)) and np.all(np.isfinite(self.density))):
            out.append("tabulated density must be finite")
        if np.any(np.diff(self.t_grid) <= 0):
            out.append("tabulated grid must be strictly increasing")
        if self.t_grid[0] < 0:
            out.append("tabulated grid must start at t >= 0")
        if np.any(self.density < 0):
            out.append("tabulated density must be non-negative")
        return out

    def problems(self) -> list[str]:
        out = self._shape_problems()
        if out:
            return out
        if abs(self._norm - 1.0) > DENSITY_NORM_TOL:
            out.append(f"tabulated density integrates to {self._norm!r}, not 1")
        return out

    @property
    def components(self):
        return None

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.interp(t, self.t_grid, self._f, left=0.0, right=0.0)

    def _partial(self, i, s):
        a = (self._f[i + 1] - self._f[i]) / self._h[i]
        return self._f[i] * s + 0.5 * a * s * s

    def tail(self, t):
        t = np.asarray(t, dtype=float)
        grid = self.t_grid
        i = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, grid.size - 2)
        s = np.clip(t - grid[i], 0.0, self._h[i])
        out = self._after[i] - self._partial(i, s)
        out = np.where(t <= grid[0], 1.0, out)
        out = np.where(t >= grid[-1], 0.0, out)
        return np.maximum(out, 0.0)

    def interval_mass(self, t, dt):
        t = np.asarray(t, dtype=float)
        return np.maximum(self.tail(t) - self.tail(t + dt), 0.0)

    def mean(self) -> float:
        g, f = self.t_grid, self._f
        return float(np.sum(self._h / 6.0 * (f[:-1] * (2 * g[:-1] + g[1:]) + f[1:] * (g[:-1] + 2 * g[1:]))))

    def from_uniforms(self, u_component, u_wait):
        u = np.asarray(u_wait, dtype=float)
        i = np.clip(np.searchsorted(self._before, u, side="right") - 1, 0, self._seg.size - 1)
        r = u - self._before[i]
        fi = self._f[i]
        a = (self._f[i + 1] - fi) / self._h[i]
        disc = np.sqrt(np.maximum(fi * fi + 2.0 * a * r, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(fi + disc > 0, 2.0 * r / (fi + disc), 0.0)
        return self.t_grid[i] + np.clip(s, 0.0, self._h[i])


Dwell = Union[Exponential, ExpMixture, Tabulated]


# ---------------------------------------------------------------------------
# Process definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Branch:
    symbol: str
    prob: float
    successor: str
    dwell: Dwell


@dataclass(frozen=True, eq=False)
class ProcessSpec:
    """Continuous-time hidden semi-Markov model."""

    symbols: tuple[str, ...]
    modes: tuple[str, ...]
    branches: Mapping[str, tuple[Branch, ...]]

    def branch(self, g: str, x: str) -> Branch:
        for b in self.branches.get(g, ()):
            if b.symbol == x:
                return b
        raise NoSuchBranch(f"mode {g!r} has no branch emitting {x!r}")

    def successor(self, g: str, x: str) -> str:
        return self.branch(g, x).successor

    @property
    def states(self) -> tuple[str, ...]:
        return self.modes

    def transition_matrix(self) -> np.ndarray:
        """Row-stochastic mode-to-mode matrix, summed over symbols."""
        idx = {m: i for i, m in enumerate(self.modes)}
        P = np.zeros((len(self.modes), len(self.modes)))
        for g, bs in self.branches.items():
            for b in bs:
                P[idx[g], idx[b.successor]] += b.prob
        return P

    def mode_after_symbol(self) -> dict[str, str] | None:
        """Map each emitted symbol to the mode it always leads to.

        Returns None when some symbol leads to different modes depending on
        where it was emitted (the mode is then not the previous symbol).
        """
        out: dict[str, str] = {}
        for bs in self.branches.values():
            for b in bs:
                if out.setdefault(b.symbol, b.successor) != b.successor:
                    return None
        return out


@dataclass(frozen=True)
class DiscreteBranch:
    symbol: str
    prob: float
    successor: str
    phase: float = 0.0


@dataclass(frozen=True, eq=False)
class DiscreteProcessSpec:
    """Discrete-time HMM with deterministic successors and per-branch phases."""

    symbols: tuple[str, ...]
    states: tuple[str, ...]
    branches: Mapping[str, tuple[DiscreteBranch, ...]]

    @property
    def modes(self) -> tuple[str, ...]:
        return self.states

    def branch(self, s: str, x: str) -> DiscreteBranch:
        for b in self.branches.get(s, ()):
            if b.symbol == x:
                return b
        raise NoSuchBranch(f"state {s!r} has no branch emitting {x!r}")

    def transition_matrix(self) -> np.ndarray:
        idx = {m: i for i, m in enumerate(self.states)}
        P = np.zeros((len(self.states), len(self.states)))
        for s, bs in self.branches.items():
            for b in bs:
                P[idx[s], idx[b.successor]] += b.prob
        return P


AnySpec = Union[ProcessSpec, DiscreteProcessSpec]


def lift_discrete(spec: DiscreteProcessSpec, rate: float) -> ProcessSpec:
    """Continuous-time version of a discrete chain with Exponential(rate) waits.

    Phases have no classical meaning and are dropped.
    """
    dwell = Exponential(float(rate))
    branches = {
        s: tuple(Branch(b.symbol, b.prob, b.successor, dwell) for b in bs)
        for s, bs in spec.branches.items()
    }
    return ProcessSpec(spec.symbols, spec.states, branches)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _reachable(start: int, adj: list[set[int]]) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in adj[i]:
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return seen


def check_spec(spec: AnySpec) -> list[SpecError]:
    """Collect every violation in ``spec``; an empty list means valid."""
    found: list[SpecError] = []
    states = tuple(spec.states)
    symbols = set(spec.symbols)
    if not states:
        return [SpecError("spec has no modes")]
    if len(set(states)) != len(states):
        found.append(SpecError("mode names are not unique"))
    idx = {m: i for i, m in enumerate(states)}
    adj: list[set[int]] = [set() for _ in states]

    for g in spec.branches:
        if g not in idx:
            found.append(SpecError(f"branches given for unknown mode {g!r}"))

    for g in states:
        bs = spec.branches.get(g, ())
        seen = set()
        total = 0.0
        for b in bs:
            if b.symbol not in symbols:
                found.append(SpecError(f"mode {g!r}: unknown symbol {b.symbol!r}"))
            if b.successor not in idx:
                found.append(SpecError(f"mode {g!r}: unknown successor {b.successor!r}"))
            if b.symbol in seen:
                found.append(DuplicateSymbolBranch(f"mode {g!r} has two branches emitting {b.symbol!r}"))
            seen.add(b.symbol)
            if not (math.isfinite(b.prob) and b.prob >= 0):
                found.append(NonStochastic(f"mode {g!r}, symbol {b.symbol!r}: bad probability {b.prob!r}"))
            total += b.prob
            if b.prob > 0 and b.successor in idx:
                adj[idx[g]].add(idx[b.successor])
            dwell = getattr(b, "dwell", None)
            if dwell is not None:
                for msg in dwell.problems():
                    found.append(BadDensity(f"mode {g!r}, symbol {b.symbol!r}: {msg}"))
        if abs(total - 1.0) > PROB_TOL:
            found.append(NonStochastic(f"mode {g!r}: branch probabilities sum to {total!r}"))

    for i, g in enumerate(states):
        missing = set(range(len(states))) - _reachable(i, adj)
        if missing:
            names = sorted(states[j] for j in missing)
            found.append(UnreachableMode(f"modes {names} unreachable from {g!r}"))
            break
    return found


def validate_spec(spec: AnySpec) -> AnySpec:
    """Return ``spec`` unchanged if valid, else raise its first violation.

    The raised error carries the full list in ``.violations``.
    """
    found = check_spec(spec)
    if found:
        first = found[0]
        first.violations = found
        raise first
    return spec


# ---------------------------------------------------------------------------
# Survival, densities, stationary distribution
# ---------------------------------------------------------------------------

def survival(spec: ProcessSpec, g: str, t):
    """Probability of no event for at least ``t`` after entering mode ``g``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise NegativeTime(f"survival needs t >= 0, got {t}")
    out = sum(b.prob * b.dwell.tail(t_arr) for b in spec.branches[g])
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(t) == 0 else out


def dwell_density(spec: ProcessSpec, g: str, x: str, t):
    """Joint density of emitting ``x`` after waiting ``t`` in mode ``g``."""
    b = spec.branch(g, x)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise NegativeTime(f"dwell density needs t >= 0, got {t}")
    out = b.prob * b.dwell.pdf(t_arr)
    return float(out) if np.ndim(t) == 0 else out


def branch_interval_mass(spec: ProcessSpec, g: str, x: str, t, dt: float):
    """``int_t^{t+dt} T phi`` for branch (g, x); zero if the branch is absent."""
    try:
        b = spec.branch(g, x)
    except NoSuchBranch:
        return np.zeros_like(np.asarray(t, dtype=float))
    return b.prob * b.dwell.interval_mass(t, dt)


def stationary_mode_dist(spec: AnySpec) -> dict[str, float]:
    """Post-event stationary distribution of the mode chain."""
    P = spec.transition_matrix()
    n = P.shape[0]
    A = P.T - np.eye(n)
    if n > 1 and np.linalg.matrix_rank(A, tol=1e-10) < n - 1:
        raise NoUniqueStationary("mode chain has more than one recurrent class")
    M = np.vstack([A, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return dict(zip(spec.states, (float(v) for v in pi)))


def mean_dwell(spec: ProcessSpec) -> float:
    """Mean inter-event time in the stationary process (``1/mu``)."""
    pi = stationary_mode_dist(spec)
    return float(sum(pi[g] * sum(b.prob * b.dwell.mean() for b in spec.branches[g]) for g in spec.modes))


# ---------------------------------------------------------------------------
# Event logs and classical sampling
# ---------------------------------------------------------------------------

@dataclass
class EventLog:
    """Sequence of (symbol, wait) records.

    ``modes`` optionally records the true mode each wait was spent in, and
    ``traj`` the trajectory index when several runs share one log.
    """

    symbols: list[str]
    waits: np.ndarray
    modes: list[str] | None = None
    traj: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    truncated: bool = False

    def __post_init__(self):
        self.symbols = [str(s) for s in self.symbols]
        self.waits = np.asarray(self.waits, dtype=float).reshape(-1)
        if len(self.symbols) != self.waits.size:
            raise ValueError("symbols and waits differ in length")
        if np.any(self.waits < 0):
            raise ValueError("waits must be non-negative")
        if self.traj is not None:
            self.traj = np.asarray(self.traj, dtype=int).reshape(-1)

    def __len__(self) -> int:
        return self.waits.size

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return zip(self.symbols, (float(w) for w in self.waits))

    @property
    def records(self) -> list[tuple[str, float]]:
        return list(self)

    def check_symbols(self, alphabet) -> None:
        bad = set(self.symbols) - set(alphabet)
        if bad:
            raise ValueError(f"log contains symbols outside the alphabet: {sorted(bad)}")


def classical_sample(
    spec: ProcessSpec,
    seed,
    n_events: int,
    burn_in: int = 100,
    initial_mode: str | None = None,
) -> EventLog:
    """Sample ``n_events`` records directly from the HSMM.

    The initial mode is drawn from the stationary post-event distribution and
    the first ``burn_in`` events are discarded. Branch choice, mixture
    component and wait each consume their own uniform, drawn up front, so the
    log is a deterministic function of ``seed``.
    """
    from .io import spec_hash

    validate_spec(spec)
    rng = np.random.default_rng(seed)
    modes = list(spec.modes)
    midx = {m: i for i, m in enumerate(modes)}
    total = burn_in + n_events
    meta = {"generator": "classical_sample", "seed": _seed_repr(seed), "model_hash": spec_hash(spec)}
    if n_events == 0:
        return EventLog([], np.zeros(0), modes=[], metadata=meta)

    pi = stationary_mode_dist(spec)
    u0 = rng.random()
    if initial_mode is None:
        cum = np.cumsum([pi[m] for m in modes])
        g = modes[min(int(np.searchsorted(cum, u0, side="right")), len(modes) - 1)]
    else:
        g = initial_mode
    u_branch = rng.random(total)
    u_comp = rng.random(total)
    u_wait = 1.0 - rng.random(total)  # (0, 1]

    tables = []
    for m in modes:
        bs = spec.branches[m]
        cum = np.cumsum([b.prob for b in bs])
        cum[-1] = 1.0
        tables.append((bs, cum))

    branch_of = np.empty(total, dtype=object)
    mode_seq = []
    gi = midx[g]
    for n in range(total):
        bs, cum = tables[gi]
        k = min(int(np.searchsorted(cum, u_branch[n], side="right")), len(bs) - 1)
        b = bs[k]
        branch_of[n] = b
        mode_seq.append(modes[gi])
        gi = midx[b.successor]

    waits = np.empty(total)
    groups: dict[int, list[int]] = {}
    for n, b in enumerate(branch_of):
        groups.setdefault(id(b), []).append(n)
    for ids in groups.values():
        ids = np.asarray(ids)
        b = branch_of[ids[0]]
        waits[ids] = b.dwell.from_uniforms(u_comp[ids], u_wait[ids])

    sl = slice(burn_in, total)
    return EventLog(
        [b.symbol for b in branch_of[sl]],
        waits[sl],
        modes=mode_seq[burn_in:],
        metadata=meta,
    )


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    return seed


# ---------------------------------------------------------------------------
# Memory measures
# ---------------------------------------------------------------------------

@dataclass
class MemoryMeasures:
    """Topological (``D``) and statistical (``C``) memory in bits."""

    flavor: str
    D: float | None
    C: float | None
    divergent: bool = False
    diagnostics: dict = field(default_factory=dict)


def shannon_bits(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p))) + 0.0 if p.size else 0.0


def _memoryless(spec: ProcessSpec, g: str) -> bool:
    rates = set()
    for b in spec.branches[g]:
        if b.prob == 0:
            continue
        if not isinstance(b.dwell, Exponential):
            return False
        rates.add(b.dwell.rate)
    return len(rates) <= 1


def classical_measures(spec: AnySpec) -> MemoryMeasures:
    pi = stationary_mode_dist(spec)
    if isinstance(spec, DiscreteProcessSpec):
        return MemoryMeasures(
            "classical",
            D=math.log2(len(spec.states)),
            C=shannon_bits(list(pi.values())),
            diagnostics={"stationary": pi},
        )
    if all(_memoryless(spec, g) for g in spec.modes):
        # the time since the last event carries no information: states are modes,
        # occupied in proportion to post-event frequency times mean dwell
        occ = np.array([pi[g] * sum(b.prob * b.dwell.mean() for b in spec.branches[g]) for g in spec.modes])
        occ /= occ.sum()
        return MemoryMeasures(
            "classical",
            D=math.log2(len(spec.modes)),
            C=shannon_bits(occ),
            diagnostics={"stationary": pi, "occupation": dict(zip(spec.modes, occ.tolist()))},
        )
    # the (g, t) causal states form a continuum
    return MemoryMeasures(
        "classical",
        D=None,
        C=None,
        divergent=True,
        diagnostics={"stationary": pi, "mean_dwell": mean_dwell(spec)},
    )
