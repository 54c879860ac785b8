"""Quantum-jump trajectories and the master-equation reference.

A trajectory alternates three steps: draw ``r`` uniform on (0, 1] and find the
time at which the no-jump norm ``||exp(-i H_eff t) psi||^2`` falls to ``r``;
pick a jump ``x`` with weight ``||J_x psi_t||^2``; apply ``J_x`` and renormalise.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .embedding import Lindblad, lindblad_rhs
from .errors import DeadState, HorizonExceeded, StepTooLarge
from .linalg import Propagator, hermitian_part
from .process_core import EventLog

HORIZON_FACTOR = 200.0
TIME_TOL = 1e-10
RK4_LIMIT = 0.05


@dataclass
class TrajectoryState:
    psi: np.ndarray
    clock: float = 0.0
    last_symbol: str | None = None


def bloch_vector(psi: np.ndarray) -> np.ndarray:
    """``(2 Re rho01, 2 Im rho10, rho00 - rho11)`` of a normalised qubit state."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    rho01 = psi[0] * np.conj(psi[1])
    return np.array([2 * rho01.real, 2 * np.conj(rho01).imag, abs(psi[0]) ** 2 - abs(psi[1]) ** 2])


@dataclass
class StatePath:
    """Post-jump states, with the state just before each jump."""

    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    before: list[np.ndarray | None] = field(default_factory=list)

    def append(self, t: float, psi: np.ndarray, before: np.ndarray | None) -> None:
        self.times.append(float(t))
        self.states.append(np.array(psi, dtype=complex))
        self.before.append(None if before is None else np.array(before, dtype=complex))

    def __len__(self) -> int:
        return len(self.times)

    def bloch(self) -> np.ndarray:
        return np.array([bloch_vector(s) for s in self.states])

    def segment_fidelities(self) -> np.ndarray:
        """``|<after jump n | before jump n+1>|^2`` for each segment."""
        out = []
        for a, b in zip(self.states[:-1], self.before[1:]):
            out.append(abs(np.vdot(a, b)) ** 2)
        return np.array(out)

    def rows(self) -> tuple[list[str], list[list[float]]]:
        D = self.states[0].size if self.states else 0
        header = ["time"]
        for k in range(D):
            header += [f"re{k}", f"im{k}"]
        if D == 2:
            header += ["bloch_x", "bloch_y", "bloch_z"]
        rows = []
        for t, s in zip(self.times, self.states):
            row = [t]
            for a in s:
                row += [float(a.real), float(a.imag)]
            if D == 2:
                row += [float(v) for v in bloch_vector(s)]
            rows.append(row)
        return header, rows

    def write_csv(self, path) -> None:
        import csv

        header, rows = self.rows()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([repr(v) for v in row])


# ---------------------------------------------------------------------------
# single-step primitives
# ---------------------------------------------------------------------------

class Engine:
    """Propagator and jump data for one Lindblad, shared by its trajectories."""

    def __init__(self, lb: Lindblad):
        self.lb = lb
        self.prop = Propagator(lb.H_eff)
        self.symbols = list(lb.jumps)
        self.jumps = [lb.jumps[x] for x in self.symbols]
        self.decay = [J.conj().T @ J for J in self.jumps]
        rates = self.prop.rates
        pos = rates[rates > 1e-14]
        self.max_rate = float(rates.max()) if rates.size and rates.max() > 0 else 1.0
        self.horizon = HORIZON_FACTOR / float(pos.min()) if pos.size else 0.0

    def evolve(self, psi: np.ndarray, t: float) -> tuple[np.ndarray, float]:
        if t < 0:
            raise ValueError(f"t must be non-negative, got {t}")
        v = self.prop.apply(np.asarray(psi, dtype=complex), t)
        return v, float(np.real(np.vdot(v, v)))

    def jump_time(self, psi: np.ndarray, r: float) -> float:
        if not 0.0 < r <= 1.0:
            raise ValueError(f"r must lie in (0, 1], got {r}")
        f = self.prop.norm2_function(psi)
        f0 = f(0.0)
        target = r * f0
        if r == 1.0:
            return 0.0
        log_target = math.log(target)

        def g(t):
            v = f(t)
            return (math.log(v) if v > 0 else -math.inf) - log_target

        lo, hi = 0.0, 1e-3 / self.max_rate
        while g(hi) > 0:
            lo = hi
            hi *= 2.0
            if hi > self.horizon:
                plateau = f(self.horizon) / f0
                if plateau > r:
                    raise HorizonExceeded(
                        f"survival plateaus at {plateau:.3e} above r={r:.3e}", plateau=plateau
                    )
        return brentq(g, lo, hi, xtol=TIME_TOL, rtol=4 * np.finfo(float).eps)

    def jump_weights(self, psi: np.ndarray) -> np.ndarray:
        return np.array([float(np.real(np.vdot(psi, A @ psi))) for A in self.decay])

    def select(self, psi: np.ndarray, u: float) -> int:
        w = self.jump_weights(psi)
        total = w.sum()
        if not total > 0:
            raise DeadState("every jump operator annihilates the state")
        cum = np.cumsum(w) / total
        return min(int(np.searchsorted(cum, u, side="right")), len(w) - 1)


def evolve_no_jump(lb: Lindblad, psi: np.ndarray, t: float) -> tuple[np.ndarray, float]:
    """Unnormalised ``exp(-i H_eff t) psi`` and its squared norm."""
    return Engine(lb).evolve(psi, t)


def sample_jump_time(lb: Lindblad, psi: np.ndarray, r: float) -> float:
    """Time at which the no-jump survival of ``psi`` drops to ``r``."""
    return Engine(lb).jump_time(psi, r)


def select_jump(lb: Lindblad, psi_t: np.ndarray, u: float) -> str:
    """Jump label drawn with weights ``<psi|J^H J|psi>``, using uniform ``u``."""
    eng = Engine(lb)
    return eng.symbols[eng.select(psi_t, u)]


def jump_probabilities(lb: Lindblad, psi_t: np.ndarray) -> dict[str, float]:
    eng = Engine(lb)
    w = eng.jump_weights(psi_t)
    if not w.sum() > 0:
        raise DeadState("every jump operator annihilates the state")
    return dict(zip(eng.symbols, w / w.sum()))


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _start(lb: Lindblad, psi0) -> np.ndarray:
    if psi0 is None:
        psi0 = lb.initial_state
    if psi0 is None:
        raise ValueError("no initial state given and the model carries none")
    psi0 = np.asarray(psi0, dtype=complex)
    return psi0 / np.linalg.norm(psi0)


def run_trajectory(
    lb: Lindblad,
    psi0: np.ndarray | None = None,
    seed=0,
    n_events: int | None = None,
    t_total: float | None = None,
    record_path: bool = True,
    engine: Engine | None = None,
) -> tuple[EventLog, StatePath]:
    """One trajectory, stopped after ``n_events`` jumps or at time ``t_total``."""
    if n_events is None and t_total is None:
        raise ValueError("give n_events or t_total")
    eng = engine or Engine(lb)
    rng = _rng(seed)
    psi = _start(lb, psi0)
    path = StatePath()
    if record_path:
        path.append(0.0, psi, None)
    symbols: list[str] = []
    waits: list[float] = []
    clock = 0.0
    truncated = False
    while n_events is None or len(symbols) < n_events:
        r = 1.0 - rng.random()
        u = rng.random()
        try:
            wait = eng.jump_time(psi, r)
        except HorizonExceeded:
            truncated = True
            break
        if t_total is not None and clock + wait > t_total:
            break
        psi_t, _ = eng.evolve(psi, wait)
        k = eng.select(psi_t, u)
        before = psi_t / np.linalg.norm(psi_t)
        psi = eng.jumps[k] @ psi_t
        psi /= np.linalg.norm(psi)
        clock += wait
        symbols.append(eng.symbols[k])
        waits.append(wait)
        if record_path:
            path.append(clock, psi, before)
    meta = {"generator": "run_trajectory", "seed": _seed_meta(seed)}
    meta.update({k: v for k, v in lb.metadata.items() if k == "spec_hash"})
    return EventLog(symbols, np.asarray(waits), metadata=meta, truncated=truncated), path


def _seed_meta(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    return seed


def trajectory_seeds(master_seed, M: int) -> list[np.random.SeedSequence]:
    """Independent child seeds; trajectory ``i`` always gets child ``i``."""
    return np.random.SeedSequence(master_seed).spawn(M)


def thread_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("TRAJ_EMBED_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def simulate_ensemble(
    lb: Lindblad,
    M: int,
    master_seed=0,
    psi0: np.ndarray | None = None,
    n_events: int | None = None,
    t_total: float | None = None,
    threads: int | None = None,
) -> EventLog:
    """``M`` trajectories merged into one log with a ``traj`` column."""
    eng = Engine(lb)
    seeds = trajectory_seeds(master_seed, M)

    def one(i):
        return run_trajectory(lb, psi0, seeds[i], n_events, t_total, record_path=False, engine=eng)[0]

    logs = _map(one, list(range(M)), thread_count(threads))
    symbols, waits, traj = [], [], []
    for i, log in enumerate(logs):
        symbols += log.symbols
        waits.append(log.waits)
        traj += [i] * len(log)
    meta = {"generator": "run_trajectory", "seed": master_seed, "trajectories": M}
    meta.update({k: v for k, v in lb.metadata.items() if k == "spec_hash"})
    return EventLog(
        symbols,
        np.concatenate(waits) if waits else np.zeros(0),
        traj=np.asarray(traj, dtype=int),
        metadata=meta,
        truncated=any(log.truncated for log in logs),
    )


def _states_at(eng: Engine, psi: np.ndarray, times: np.ndarray, seed) -> np.ndarray:
    """Normalised conditional states of one trajectory at sorted ``times``."""
    rng = _rng(seed)
    out = np.empty((times.size, psi.size), dtype=complex)
    clock, i = 0.0, 0
    while i < times.size:
        r = 1.0 - rng.random()
        u = rng.random()
        try:
            wait = eng.jump_time(psi, r)
        except HorizonExceeded:
            wait = math.inf
        while i < times.size and clock + wait > times[i]:
            v, _ = eng.evolve(psi, times[i] - clock)
            out[i] = v / np.linalg.norm(v)
            i += 1
        if i == times.size:
            break
        psi_t, _ = eng.evolve(psi, wait)
        k = eng.select(psi_t, u)
        psi = eng.jumps[k] @ psi_t
        psi = psi / np.linalg.norm(psi)
        clock += wait
    return out


def ensemble_density(
    lb: Lindblad,
    psi0: np.ndarray | None,
    t,
    M: int,
    master_seed=0,
    threads: int | None = None,
):
    """Average of ``|psi(t)><psi(t)|`` over ``M`` trajectories.

    ``t`` may be a scalar or a sequence; a sequence gives one matrix per time.
    The reduction runs in trajectory order, so the result does not depend on
    the thread count.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    scalar = np.ndim(t) == 0
    times = np.atleast_1d(np.asarray(t, dtype=float))
    order = np.argsort(times)
    psi = _start(lb, psi0)
    eng = Engine(lb)
    seeds = trajectory_seeds(master_seed, M)

    def one(i):
        return _states_at(eng, psi, times[order], seeds[i])

    states = np.stack(_map(one, list(range(M)), thread_count(threads)))  # M x T x D
    rhos = np.einsum("mti,mtj->tij", states, states.conj()) / M
    out = np.empty_like(rhos)
    out[order] = rhos
    out = np.array([hermitian_part(r) for r in out])
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# master equation
# ---------------------------------------------------------------------------

def rk4_step(lb: Lindblad, rho: np.ndarray, h: float) -> np.ndarray:
    k1 = lindblad_rhs(lb, rho)
    k2 = lindblad_rhs(lb, rho + 0.5 * h * k1)
    k3 = lindblad_rhs(lb, rho + 0.5 * h * k2)
    k4 = lindblad_rhs(lb, rho + h * k3)
    return hermitian_part(rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))


def master_equation_evolve(lb: Lindblad, rho0: np.ndarray, t: float, dt: float | None = None) -> np.ndarray:
    """Classical RK4 integration of the master equation up to time ``t``."""
    norm = float(np.linalg.norm(lb.H_eff, 2))
    if dt is None:
        dt = 0.01 / norm if norm > 0 else max(t, 1e-2)
    if dt * norm >= RK4_LIMIT:
        raise StepTooLarge(f"dt * |H_eff| = {dt * norm:.3g} >= {RK4_LIMIT}")
    rho = hermitian_part(np.asarray(rho0, dtype=complex))
    if t <= 0:
        return rho
    n = max(1, math.ceil(t / dt - 1e-12))
    h = t / n
    for _ in range(n):
        rho = rk4_step(lb, rho, h)
    return rho
