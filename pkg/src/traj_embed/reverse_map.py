"""Semi-Markov processes from Lindblad generators with erasing jumps.

When every jump operator has rank one, ``J_x = |psi_x><a_x|``, the state after
an ``x`` event is ``psi_x`` whatever came before. The observed process is then
semi-Markov with the last symbol as its mode, and

    P(x', t | x) = <psi_x(t)| J_x'^H J_x' |psi_x(t)>,   psi_x(t) = exp(-i H_eff t) psi_x

gives both the transition probabilities (its time integral) and the dwell
densities (its normalised shape).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .embedding import Lindblad, embed_process
from .errors import GridTooShort, NotErasingError
from .linalg import Propagator
from .process_core import (
    Branch,
    DiscreteProcessSpec,
    ExpMixture,
    Exponential,
    ProcessSpec,
    Tabulated,
    lift_discrete,
    validate_spec,
)

ERASING_TOL = 1e-8
SURVIVAL_END = 1e-10
FIT_TOL = 1e-8
MAX_COMPONENTS = 4
PRUNE_T = 1e-12


@dataclass
class ErasingStructure:
    states: dict[str, np.ndarray]
    rows: dict[str, np.ndarray]
    ratios: dict[str, float]

    def reconstruct(self, x: str) -> np.ndarray:
        return np.outer(self.states[x], self.rows[x].conj())


@dataclass(frozen=True)
class NotErasing:
    """Refusal: jump ``symbol`` has singular-value ratio ``ratio`` above tolerance."""

    symbol: str
    ratio: float

    def __bool__(self) -> bool:
        return False


def is_erasing(lb: Lindblad, tol: float = ERASING_TOL) -> ErasingStructure | NotErasing:
    """Rank-one factorisation of every jump operator, or the first refusal."""
    states, rows, ratios = {}, {}, {}
    for x, J in lb.jumps.items():
        U, s, Vh = np.linalg.svd(J)
        if s[0] == 0.0:
            # the symbol never fires; any post-jump state will do
            states[x] = np.eye(lb.dim, dtype=complex)[0]
            rows[x] = np.zeros(lb.dim, dtype=complex)
            ratios[x] = 0.0
            continue
        ratio = float(s[1] / s[0]) if s.size > 1 else 0.0
        if not ratio < tol:
            return NotErasing(x, ratio)
        psi = U[:, 0]
        nz = np.flatnonzero(np.abs(psi) > 1e-12)
        phase = np.exp(-1j * np.angle(psi[nz[0]]))
        states[x] = psi * phase
        # J = s u v^H = (u e^{-i th}) (s e^{-i th} v)^H
        rows[x] = s[0] * phase * Vh[0].conj()
        ratios[x] = ratio
    return ErasingStructure(states, rows, ratios)


def _require_erasing(lb: Lindblad, structure, tol: float) -> ErasingStructure:
    if structure is None:
        structure = is_erasing(lb, tol)
    if isinstance(structure, NotErasing):
        raise NotErasingError(structure)
    return structure


def conditional_density(lb: Lindblad, x: str, x2: str, t, structure: ErasingStructure | None = None,
                        tol: float = ERASING_TOL):
    """``P(x2, t | x)``: density of the next event being ``x2`` after a wait ``t``."""
    st = _require_erasing(lb, structure, tol)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    prop = Propagator(lb.H_eff)
    J = lb.jumps[x2]
    M = J.conj().T @ J
    out = np.empty(t_arr.size)
    for i, ti in enumerate(t_arr):
        v = prop.apply(st.states[x], ti)
        out[i] = max(float(np.real(np.vdot(v, M @ v))), 0.0)
    return out if np.ndim(t) else float(out[0])


def survival_after(lb: Lindblad, x: str, t, structure: ErasingStructure | None = None,
                   tol: float = ERASING_TOL):
    """``Phi_x(t) = ||exp(-i H_eff t) psi_x||^2``."""
    st = _require_erasing(lb, structure, tol)
    f = Propagator(lb.H_eff).norm2_function(st.states[x])
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([f(ti) for ti in t_arr])
    return out if np.ndim(t) else float(out[0])


def _exponential_terms(prop: Propagator, psi: np.ndarray, M: np.ndarray):
    """``P(t) = sum_k c_k exp(-r_k t)`` when every exponent is real; else None."""
    if not prop.spectral:
        return None
    c = prop.Vinv @ psi
    B = prop.V.conj().T @ M @ prop.V
    A = (np.outer(c.conj(), c) * B).ravel()
    E = (1j * np.add.outer(prop.w.conj(), -prop.w)).ravel()
    scale = float(np.sum(np.abs(A))) or 1.0
    keep = np.abs(A) > 1e-14 * scale
    A, E = A[keep], E[keep]
    if np.any(np.abs(E.imag) > 1e-9 * np.maximum(1.0, np.abs(E.real))):
        return None
    rates = -E.real
    terms: list[list[float]] = []
    for r, a in sorted(zip(rates, A), key=lambda p: p[0]):
        if terms and abs(r - terms[-1][0]) <= 1e-9 * max(1.0, r):
            terms[-1][1] += a.real
        else:
            terms.append([float(r), float(a.real)])
    # drop terms carrying a negligible share of the probability mass
    mass = sum(abs(a) / r for r, a in terms if r > 0) or 1.0
    return [(r, a) for r, a in terms if r <= 0 or abs(a) / r > 1e-10 * mass]


def _fit_dwell(terms, T: float, grid: np.ndarray, shape: np.ndarray):
    """Exponential-family dwell law if the decomposition is exact, else None."""
    if terms is None or not terms or len(terms) > MAX_COMPONENTS:
        return None
    if any(r <= 0 or a <= 0 for r, a in terms):
        return None
    weights = np.array([a / (r * T) for r, a in terms])
    rates = np.array([r for r, _ in terms])
    if abs(weights.sum() - 1.0) > FIT_TOL:
        return None
    weights = weights / weights.sum()
    dwell = Exponential(float(rates[0])) if len(terms) == 1 else ExpMixture(tuple(weights), tuple(rates))
    resid = float(np.max(np.abs(dwell.pdf(grid) - shape)))
    if resid > FIT_TOL * max(1.0, float(np.max(shape))):
        return None
    return dwell


def _horizon(f, rate_hint: float) -> float:
    t = 1.0 / max(rate_hint, 1e-12)
    for _ in range(200):
        if f(t) < SURVIVAL_END:
            return t
        t *= 2.0
    raise GridTooShort(f"survival stays above {SURVIVAL_END} (plateau {f(t):.3e})")


@dataclass
class Extraction:
    spec: ProcessSpec
    grid: dict[str, np.ndarray]
    raw_totals: dict[str, float]
    families: dict[tuple[str, str], str] = field(default_factory=dict)


def extract_hsmm(
    lb: Lindblad,
    t_grid=None,
    tol: float = ERASING_TOL,
    grid_points: int = 2001,
    grid_max: float | None = None,
    full: bool = False,
):
    """Semi-Markov spec (modes = last symbol) induced by an erasing Lindblad.

    Transition probabilities are quadrature integrals of ``P(x', t | x)`` out
    to the horizon where the survival is below 1e-10 (doubled until it is),
    renormalised per mode. Dwell laws are exponential families when the
    eigen-decomposition of ``P`` gives at most four positive decaying terms
    reproducing it to 1e-8, and tabulated on the grid otherwise.
    """
    st = _require_erasing(lb, None, tol)
    prop = Propagator(lb.H_eff)
    rates = prop.rates[prop.rates > 1e-14]
    rate_hint = float(rates.max()) if rates.size else 1.0
    symbols = list(lb.jumps)
    live = [x for x in symbols if np.any(lb.jumps[x] != 0)]
    decay = {x: lb.jumps[x].conj().T @ lb.jumps[x] for x in symbols}

    branches: dict[str, tuple[Branch, ...]] = {}
    grids, totals, families = {}, {}, {}
    for x in live:
        psi = st.states[x]
        f = prop.norm2_function(psi)
        if t_grid is not None:
            grid = np.asarray(t_grid, dtype=float)
            if f(grid[-1]) >= SURVIVAL_END:
                raise GridTooShort(f"survival after {x!r} at t={grid[-1]} is {f(grid[-1]):.3e}")
        else:
            end = grid_max if grid_max is not None else _horizon(f, rate_hint)
            if f(end) >= SURVIVAL_END:
                raise GridTooShort(f"survival after {x!r} at t={end} is {f(end):.3e}")
            grid = np.linspace(0.0, end, grid_points)
        horizon = _horizon(f, rate_hint)
        # doubling panels keep fast early decay visible when slow rates stretch the horizon
        edges = [0.0]
        t = 1.0 / max(rate_hint, 1e-12)
        while t < horizon:
            edges.append(t)
            t *= 2.0
        edges.append(horizon)
        T_raw = {}
        for x2 in symbols:
            M = decay[x2]

            def P(t, M=M):
                v = prop.apply(psi, t)
                return float(np.real(np.vdot(v, M @ v)))

            val = sum(integrate.quad(P, a, b, epsabs=1e-14, epsrel=1e-10, limit=500)[0]
                      for a, b in zip(edges, edges[1:]))
            T_raw[x2] = max(val, 0.0)
        total = sum(T_raw.values())
        totals[x] = total
        grids[x] = grid
        out = []
        for x2 in symbols:
            T = T_raw[x2] / total
            if T < PRUNE_T:
                continue
            dens = conditional_density(lb, x, x2, grid, st) / T_raw[x2]
            terms = _exponential_terms(prop, psi, decay[x2])
            dwell = _fit_dwell(terms, T_raw[x2], grid, dens)
            if dwell is None:
                # the grid truncates and discretises; rescale to unit trapezoid mass
                dwell = Tabulated(grid, dens / integrate.trapezoid(dens, grid))
                families[(x, x2)] = "tabulated"
            else:
                families[(x, x2)] = type(dwell).__name__
            out.append((x2, T, dwell))
        Tsum = sum(T for _, T, _ in out)
        branches[x] = tuple(Branch(x2, T / Tsum, x2, d) for x2, T, d in out)

    spec = ProcessSpec(tuple(symbols), tuple(live), branches)
    validate_spec(spec)
    if full:
        return Extraction(spec, grids, totals, families)
    return spec


# ---------------------------------------------------------------------------
# round trip
# ---------------------------------------------------------------------------

@dataclass
class RoundtripReport:
    passed: bool
    max_T_error: float
    max_density_error: float
    T_errors: dict[tuple[str, str], float]
    density_errors: dict[tuple[str, str], float]
    extracted: ProcessSpec
    tol: float


def observable_difference(source: ProcessSpec, extracted: ProcessSpec, grid_points: int = 2001,
                          grid_max: float | None = None):
    """Compare two semi-Markov specs symbol by symbol.

    ``source`` modes are mapped to the symbol that leads into them; both specs
    must be attributable that way. Densities are compared after normalisation
    on a uniform grid.
    """
    after = source.mode_after_symbol()
    if after is None:
        raise ValueError("source modes are not determined by the last symbol")
    if grid_max is None:
        from .quantum_model import auto_horizon

        grid_max = auto_horizon(source, 1e-10)
    grid = np.linspace(0.0, grid_max, grid_points)
    T_err, d_err = {}, {}
    for x in source.symbols:
        if x not in after:
            continue
        g = after[x]
        src = {b.symbol: b for b in source.branches[g]}
        ext = {b.symbol: b for b in extracted.branches.get(x, ())}
        for x2 in set(src) | set(ext):
            Ts = src[x2].prob if x2 in src else 0.0
            Te = ext[x2].prob if x2 in ext else 0.0
            T_err[(x, x2)] = abs(Ts - Te)
            if Ts > 0 and Te > 0:
                d_err[(x, x2)] = float(np.max(np.abs(src[x2].dwell.pdf(grid) - ext[x2].dwell.pdf(grid))))
    return T_err, d_err


def roundtrip_check(
    spec: ProcessSpec | DiscreteProcessSpec,
    rate: float = 1.0,
    tol: float = 1e-6,
    grid_points: int = 2001,
) -> RoundtripReport:
    """Embed, extract, and compare at the level of observable statistics."""
    lb, _ = embed_process(spec, rate=rate)
    source = lift_discrete(spec, rate) if isinstance(spec, DiscreteProcessSpec) else spec
    extracted = extract_hsmm(lb, grid_points=grid_points)
    T_err, d_err = observable_difference(source, extracted, grid_points)
    mt = max(T_err.values(), default=0.0)
    md = max(d_err.values(), default=0.0)
    return RoundtripReport(mt < tol and md < tol, mt, md, T_err, d_err, extracted, tol)


def lyapunov_totals(lb: Lindblad, x: str, structure: ErasingStructure | None = None,
                    tol: float = ERASING_TOL) -> dict[str, float]:
    """Closed-form ``T_{x'x}`` from ``int_0^inf U(t)^H M U(t) dt``.

    ``X`` solving ``A^H X + X A = -M`` with ``A = -i H_eff`` gives
    ``T = <psi_x|X|psi_x>``; used to cross-check the quadrature.
    """
    from scipy.linalg import solve_sylvester

    st = _require_erasing(lb, structure, tol)
    A = -1j * lb.H_eff
    out = {}
    for x2, J in lb.jumps.items():
        X = solve_sylvester(A.conj().T, A, -(J.conj().T @ J))
        out[x2] = float(np.real(np.vdot(st.states[x], X @ st.states[x])))
    return out
