"""From Kraus families to trajectory generators.

The no-event Kraus operator gives the non-Hermitian effective Hamiltonian
through ``H_eff = lim ln(K0)/(-i dt)`` and the event operators give the jump
operators through ``J_x = lim Kx/sqrt(dt)``. Both limits are estimated on a
ladder of halving steps and Richardson-extrapolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonConvergent, NonPositiveRate, NotHermitian
from .linalg import hermitian_part, logm_principal, richardson_table
from .process_core import DiscreteProcessSpec, ProcessSpec, validate_spec
from .quantum_model import (
    RANK_TOL,
    DiscreteModel,
    KrausSet,
    MemoryBasis,
    analytic_gram,
    build_kraus,
    discrete_model,
    extract_states,
    gram_fixed_point,
    supports_analytic,
)

DEFAULT_LADDER = (1e-2, 5e-3, 2.5e-3)
HERMITIAN_TOL = 1e-6


@dataclass
class Lindblad:
    """Effective Hamiltonian, natural Hamiltonian and labelled jump operators."""

    H_eff: np.ndarray
    jumps: dict[str, np.ndarray]
    H: np.ndarray | None = None
    initial_state: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.H_eff = np.asarray(self.H_eff, dtype=complex)
        if self.H_eff.ndim != 2 or self.H_eff.shape[0] != self.H_eff.shape[1]:
            raise ValueError(f"H_eff must be square, got shape {self.H_eff.shape}")
        self.jumps = {str(x): np.asarray(J, dtype=complex) for x, J in self.jumps.items()}
        for x, J in self.jumps.items():
            if J.shape != self.H_eff.shape:
                raise ValueError(f"jump {x!r} has shape {J.shape}, expected {self.H_eff.shape}")
        if self.H is None:
            self.H = self.H_eff + 0.5j * jump_sum(self.jumps, self.dim)
        else:
            self.H = np.asarray(self.H, dtype=complex)
        if self.initial_state is not None:
            self.initial_state = np.asarray(self.initial_state, dtype=complex)

    @property
    def dim(self) -> int:
        return self.H_eff.shape[0]

    @property
    def symbols(self) -> list[str]:
        return list(self.jumps)

    def decay_operator(self) -> np.ndarray:
        return jump_sum(self.jumps, self.dim)

    def conjugated(self, U: np.ndarray) -> "Lindblad":
        """The same dynamics in the basis rotated by unitary ``U``."""
        Ud = U.conj().T
        return Lindblad(
            U @ self.H_eff @ Ud,
            {x: U @ J @ Ud for x, J in self.jumps.items()},
            H=U @ self.H @ Ud,
            initial_state=None if self.initial_state is None else U @ self.initial_state,
            metadata=dict(self.metadata),
        )


def jump_sum(jumps: dict[str, np.ndarray], dim: int) -> np.ndarray:
    A = np.zeros((dim, dim), dtype=complex)
    for J in jumps.values():
        A += J.conj().T @ J
    return A


def dissipator(jumps: dict[str, np.ndarray], rho: np.ndarray) -> np.ndarray:
    """``sum_x J rho J^H - 1/2 {J^H J, rho}``."""
    out = np.zeros_like(rho, dtype=complex)
    for J in jumps.values():
        JdJ = J.conj().T @ J
        out += J @ rho @ J.conj().T - 0.5 * (JdJ @ rho + rho @ JdJ)
    return out


def lindblad_rhs(lb: Lindblad, rho: np.ndarray) -> np.ndarray:
    """Master-equation generator written with ``H_eff``."""
    out = -1j * (lb.H_eff @ rho - rho @ lb.H_eff.conj().T)
    for J in lb.jumps.values():
        out += J @ rho @ J.conj().T
    return out


# ---------------------------------------------------------------------------
# limits over the step ladder
# ---------------------------------------------------------------------------

@dataclass
class LimitEstimate:
    rungs: list[np.ndarray]
    value: np.ndarray
    residual: float
    ratios: list[float]
    table: list[list[np.ndarray]]


def _step_ratio(dts: Sequence[float]) -> float:
    r = [dts[i] / dts[i + 1] for i in range(len(dts) - 1)]
    if any(abs(v - r[0]) > 1e-9 * r[0] for v in r) or r[0] <= 1.0:
        raise ValueError(f"step ladder must shrink geometrically, got {list(dts)}")
    return r[0]


def extrapolate(rungs: Sequence[np.ndarray], dts: Sequence[float], label: str = "limit") -> LimitEstimate:
    """Richardson limit of per-rung estimates with errors in powers of dt.

    The answer is the highest-order entry of the table; the residual is its
    distance to the next-lower-order extrapolant from the same rungs.
    ``ratios[i]`` is ``|e_i - e_{i+1}| / |e_{i+1} - e_{i+2}|`` for consecutive
    raw estimates ``e`` (about 2 for a first-order error, 4 for second-order).
    """
    if len(rungs) < 2:
        raise ValueError("need at least two rungs")
    r = _step_ratio(dts)
    table = richardson_table(rungs, ratio=r)
    last = table[-1]
    value = last[-1]
    residual = float(np.max(np.abs(last[-1] - last[-2])))
    diffs = [float(np.max(np.abs(rungs[i] - rungs[i + 1]))) for i in range(len(rungs) - 1)]
    ratios = []
    for a, b in zip(diffs, diffs[1:]):
        ratios.append(a / b if b > 0 else math.inf)
    floor = 1e-11 * max(1.0, float(np.max(np.abs(value))))
    if len(diffs) >= 2 and diffs[-1] > diffs[-2] and diffs[-1] > floor:
        raise NonConvergent(f"{label}: rung differences grow ({diffs[-2]:.3e} -> {diffs[-1]:.3e})")
    return LimitEstimate(list(rungs), value, residual, ratios, table)


def effective_hamiltonian(family: Sequence[KrausSet], full: bool = False):
    """``H_eff`` from the no-event operators on a halving ladder."""
    dts = [k.dt for k in family]
    rungs = [logm_principal(k.K0) / (-1j * k.dt) for k in family]
    est = extrapolate(rungs, dts, "H_eff")
    return est if full else est.value


def jump_operators(family: Sequence[KrausSet], full: bool = False):
    """``J_x`` from the event operators on a halving ladder, keyed by symbol."""
    dts = [k.dt for k in family]
    out = {}
    for x in family[0].Kx:
        rungs = [k.Kx[x] / math.sqrt(k.dt) for k in family]
        est = extrapolate(rungs, dts, f"J[{x}]")
        out[x] = est if full else est.value
    return out


def natural_hamiltonian(H_eff: np.ndarray, jumps: dict[str, np.ndarray], tol: float = HERMITIAN_TOL):
    """``H = H_eff + (i/2) sum J^H J``; returns ``(H, residual)``.

    ``residual`` is the max-entry anti-Hermitian part before symmetrisation.
    """
    H_eff = np.asarray(H_eff, dtype=complex)
    H = H_eff + 0.5j * jump_sum(jumps, H_eff.shape[0])
    residual = float(np.max(np.abs(H - H.conj().T))) if H.size else 0.0
    if residual > tol:
        raise NotHermitian(f"recovered Hamiltonian has anti-Hermitian part {residual:.3e} > {tol:.1e}")
    return hermitian_part(H), residual


def embed_discrete(model: DiscreteModel, rate: float) -> Lindblad:
    """Jump-only Lindblad of a discrete chain ticking at ``rate``."""
    if not rate > 0:
        raise NonPositiveRate(f"rate must be positive, got {rate}")
    D = model.basis.dimension
    jumps = {x: math.sqrt(rate) * K for x, K in model.kraus.items()}
    return Lindblad(
        -0.5j * rate * np.eye(D, dtype=complex),
        jumps,
        H=np.zeros((D, D), dtype=complex),
    )


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingReport:
    ladder: list[float]
    pathway: str
    dimension: int
    heff_rungs: list[np.ndarray]
    jump_rungs: dict[str, list[np.ndarray]]
    heff: np.ndarray
    jumps: dict[str, np.ndarray]
    residuals: dict[str, float]
    ratios: dict[str, list[float]]
    hermiticity_residual: float
    completeness: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        from .io import encode_complex

        return {
            "ladder": list(self.ladder),
            "pathway": self.pathway,
            "dimension": self.dimension,
            "heff_rungs": [encode_complex(m) for m in self.heff_rungs],
            "jump_rungs": {x: [encode_complex(m) for m in ms] for x, ms in self.jump_rungs.items()},
            "heff": encode_complex(self.heff),
            "jumps": {x: encode_complex(m) for x, m in self.jumps.items()},
            "residuals": self.residuals,
            "ratios": self.ratios,
            "hermiticity_residual": self.hermiticity_residual,
            "kraus_completeness_error": self.completeness,
        }


def _use_analytic(spec: ProcessSpec, pathway: str) -> bool:
    if pathway not in ("auto", "analytic", "numeric"):
        raise ValueError(f"unknown pathway {pathway!r}")
    return pathway == "analytic" or (pathway == "auto" and supports_analytic(spec))


def gauge_nodes(spec: ProcessSpec, coarse_dt: float, per_mode: int = 40) -> list[tuple[str, float]]:
    """Lattice-independent nodes for fixing the gauge of numeric bases.

    Times are multiples of ``coarse_dt`` and so lie on every finer halving
    lattice; they cover each mode up to where its survival reaches 1e-3.
    """
    from .process_core import survival

    nodes = []
    for g in spec.modes:
        t_hi = coarse_dt
        while survival(spec, g, t_hi) > 1e-3:
            t_hi *= 2.0
        step = coarse_dt * max(1, round(t_hi / (coarse_dt * per_mode)))
        nodes += [(g, j * step) for j in range(per_mode + 1)]
    return nodes


def memory_basis(spec: ProcessSpec, pathway: str = "auto", lattice_dt: float = DEFAULT_LADDER[-1],
                 rank_tol: float = RANK_TOL, gauge_dt: float | None = None) -> MemoryBasis:
    """Closed-form basis when the dwell families allow it, else the lattice one."""
    if _use_analytic(spec, pathway):
        return analytic_gram(spec, rank_tol)[1]
    nodes = gauge_nodes(spec, gauge_dt if gauge_dt is not None else lattice_dt)
    return extract_states(gram_fixed_point(spec, lattice_dt), rank_tol, gauge_nodes=nodes)


def embed_process(
    spec: ProcessSpec | DiscreteProcessSpec,
    ladder: Sequence[float] = DEFAULT_LADDER,
    pathway: str = "auto",
    rate: float | None = None,
    rank_tol: float = RANK_TOL,
) -> tuple[Lindblad, EmbeddingReport | None]:
    """Lindblad generator whose trajectories reproduce ``spec``.

    Discrete chains need ``rate`` and are embedded exactly (no report);
    continuous specs go through the Kraus ladder and extrapolation.
    """
    from .io import spec_hash

    validate_spec(spec)
    if isinstance(spec, DiscreteProcessSpec):
        if rate is None:
            raise NonPositiveRate("a discrete chain needs a positive rate to embed")
        model = discrete_model(spec, rank_tol)
        lb = embed_discrete(model, rate)
        lb.initial_state = model.basis.embed(spec.states[0])
        lb.metadata = {"spec_hash": spec_hash(spec), "pathway": "discrete", "rate": float(rate)}
        return lb, None

    ladder = sorted((float(d) for d in ladder), reverse=True)
    if _use_analytic(spec, pathway):
        basis = analytic_gram(spec, rank_tol)[1]
        family = [build_kraus(spec, basis, dt) for dt in ladder]
    else:
        # one lattice per rung: a Kraus set is exact only at its own lattice
        # step; the shared gauge keeps the rungs comparable
        bases = [memory_basis(spec, "numeric", dt, rank_tol, gauge_dt=ladder[0]) for dt in ladder]
        dims = {b.dimension for b in bases}
        if len(dims) != 1:
            raise NonConvergent(f"memory dimension changes along the ladder: {[b.dimension for b in bases]}")
        family = [build_kraus(spec, b, dt) for b, dt in zip(bases, ladder)]
        basis = bases[-1]
    h = effective_hamiltonian(family, full=True)
    js = jump_operators(family, full=True)
    jumps = {x: e.value for x, e in js.items()}
    H, herm_res = natural_hamiltonian(h.value, jumps)
    # H_eff is re-derived from the Hermitian H so the defining identity is exact
    H_eff = H - 0.5j * jump_sum(jumps, basis.dimension)
    lb = Lindblad(
        H_eff,
        jumps,
        H=H,
        initial_state=basis.embed(spec.modes[0], 0.0),
        metadata={"spec_hash": spec_hash(spec), "pathway": basis.pathway},
    )
    report = EmbeddingReport(
        ladder=list(ladder),
        pathway=basis.pathway,
        dimension=basis.dimension,
        heff_rungs=h.rungs,
        jump_rungs={x: e.rungs for x, e in js.items()},
        heff=H_eff,
        jumps=jumps,
        residuals={"H_eff": h.residual, **{f"J[{x}]": e.residual for x, e in js.items()}},
        ratios={"H_eff": h.ratios, **{f"J[{x}]": e.ratios for x, e in js.items()}},
        hermiticity_residual=herm_res,
        completeness=[k.completeness_error() for k in family],
    )
    return lb, report


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    dt_check: float
    hermiticity_residual: float
    completeness_error: float
    completeness_bound: float
    trace_drift: float
    hermitian_ok: bool
    completeness_ok: bool
    trace_ok: bool

    @property
    def passed(self) -> bool:
        return self.hermitian_ok and self.completeness_ok and self.trace_ok


def verify_embedding(lb: Lindblad, dt_check: float | None = None) -> VerificationReport:
    """Consistency checks on a Lindblad generator.

    (a) ``H`` Hermitian; (b) the first-order Kraus set ``{1 - i H_eff dt,
    sqrt(dt) J_x}`` is complete up to ``O(dt^2)``; (c) one RK4 step of the
    master equation keeps the trace within 1e-8.
    """
    from .trajectory_engine import rk4_step

    D = lb.dim
    norm = float(np.linalg.norm(lb.H_eff, 2))
    if dt_check is None:
        dt_check = 0.01 / norm if norm > 0 else 1e-2
    if norm * dt_check >= 0.1:
        raise ValueError(f"dt_check={dt_check} too large: |H_eff| dt = {norm * dt_check:.3f} >= 0.1")
    herm = float(np.max(np.abs(lb.H - lb.H.conj().T)))
    I = np.eye(D)
    K0 = I - 1j * lb.H_eff * dt_check
    S = K0.conj().T @ K0 + dt_check * lb.decay_operator()
    comp = float(np.max(np.abs(S - I)))
    bound = 2.0 * (norm * dt_check) ** 2 + 1e-12
    rho = lb.initial_state if lb.initial_state is not None else None
    rho = np.outer(rho, rho.conj()) / np.vdot(rho, rho).real if rho is not None else I / D
    stepped = rk4_step(lb, rho.astype(complex), dt_check)
    drift = abs(float(np.real(np.trace(stepped))) - 1.0)
    return VerificationReport(
        dt_check, herm, comp, bound, drift,
        hermitian_ok=herm <= 1e-8,
        completeness_ok=comp <= bound,
        trace_ok=drift <= 1e-8,
    )
