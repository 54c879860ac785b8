"""Quantum memory states and Kraus operators for a process.

Two routes lead to a :class:`MemoryBasis`:

* ``analytic_gram`` builds states in closed form from orthonormal generator
  states, one per (symbol, successor) pair, each decaying at its symbol's rate.
  It applies when every branch dwell is a single exponential and all branches
  emitting a given symbol share that rate.
* ``gram_fixed_point`` + ``extract_states`` compute overlaps on a uniform time
  lattice from the unrolled overlap recursion and recover vectors by an
  eigendecomposition of the Gram matrix. Any dwell family works; the memory is
  truncated at ``rank_tol``.

Discrete-time chains go through ``discrete_model``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    HorizonTooShort,
    InconsistentAction,
    InsufficientSpan,
    NoConvergence,
    NoSuchBranch,
    NotPSD,
    UnsupportedDwellFamily,
)
from .linalg import hermitian_part, psd_sqrt_factor
from .process_core import (
    DiscreteProcessSpec,
    Exponential,
    ExpMixture,
    MemoryMeasures,
    ProcessSpec,
    branch_interval_mass,
    mean_dwell,
    stationary_mode_dist,
    survival,
    validate_spec,
)

SURVIVAL_FLOOR = 1e-12
RANK_TOL = 1e-10
MAX_ITER = 10_000
COMPLETENESS_TOL = 1e-8

Node = tuple[str, float]


# ---------------------------------------------------------------------------
# Kraus sets
# ---------------------------------------------------------------------------

@dataclass
class KrausSet:
    dt: float
    K0: np.ndarray
    Kx: dict[str, np.ndarray]

    @property
    def dim(self) -> int:
        return self.K0.shape[0]

    def completeness_error(self) -> float:
        S = self.K0.conj().T @ self.K0
        for K in self.Kx.values():
            S = S + K.conj().T @ K
        return float(np.max(np.abs(S - np.eye(self.dim))))


# ---------------------------------------------------------------------------
# Memory bases
# ---------------------------------------------------------------------------

class MemoryBasis:
    """Map from memory nodes ``(g, t)`` to unit vectors in C^D."""

    def __init__(
        self,
        dimension: int,
        pathway: str,
        embed_many: Callable[[str, np.ndarray], np.ndarray],
        reference: Sequence[Node],
        lattice_dt: float | None = None,
    ):
        self.dimension = int(dimension)
        self.pathway = pathway
        self._embed_many = embed_many
        self._reference = list(reference)
        self.lattice_dt = lattice_dt

    def __repr__(self) -> str:
        return f"MemoryBasis(D={self.dimension}, pathway={self.pathway!r})"

    def embed_many(self, g: str, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return self._embed_many(g, ts)

    def embed(self, g: str, t: float = 0.0) -> np.ndarray:
        return self.embed_many(g, [t])[0]

    def reference_nodes(self) -> list[Node]:
        return list(self._reference)

    def overlap(self, a: Node, b: Node) -> complex:
        return complex(np.vdot(self.embed(*a), self.embed(*b)))


def _phase_fix(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-14)
    if nz.size:
        v = v * np.exp(-1j * np.angle(v[nz[0]]))
    return v


def gauge_unitary(rows: np.ndarray, pick_tol: float = 1e-3) -> np.ndarray:
    """Unitary ``Q`` fixing the basis gauge for the vectors in ``rows``.

    Vectors are scanned in order and kept when their residual outside the span
    of earlier picks exceeds ``pick_tol``; the picks are then orthonormalised
    (Gram-Schmidt with positive real diagonal), so the first node lies along
    ``|0>`` with a real positive amplitude and each later pick adds one real
    positive component. Remaining directions, if any, are filled from the
    standard basis. New coordinates are ``Q^H v``.
    """
    D = rows.shape[1]
    cols: list[np.ndarray] = []
    for v in list(rows) + list(np.eye(D, dtype=complex)):
        if len(cols) == D:
            break
        r = np.asarray(v, dtype=complex).copy()
        for q in cols:
            r -= q * np.vdot(q, r)
        for q in cols:  # second pass for stability
            r -= q * np.vdot(q, r)
        nrm = np.linalg.norm(r)
        if nrm > pick_tol * max(np.linalg.norm(v), 1e-300):
            cols.append(r / nrm)
    return np.column_stack(cols)


def _matrix_basis(G: np.ndarray, labels: Sequence[Node], rank_tol: float, pathway: str) -> MemoryBasis:
    lam, U, keep = psd_sqrt_factor(G, rank_tol)
    scale = max(1.0, float(lam[0]) if lam.size else 1.0)
    if lam.size and lam[-1] < -1e-10 * scale:
        raise NotPSD(f"Gram matrix has eigenvalue {lam[-1]:.3e}")
    E = np.conj(U[:, keep]) * np.sqrt(lam[keep])
    Q = gauge_unitary(E)
    vecs = E @ Q.conj()  # rows v -> Q^H v
    lookup = {(str(g), float(t)): v for (g, t), v in zip(labels, vecs)}

    def embed_many(g, ts):
        try:
            return np.array([lookup[(g, float(t))] for t in ts])
        except KeyError as exc:
            raise KeyError(f"node {exc} is not part of this basis") from None

    return MemoryBasis(int(keep.sum()), pathway, embed_many, labels)


# ---------------------------------------------------------------------------
# Numeric Gram lattice
# ---------------------------------------------------------------------------

def auto_horizon(spec: ProcessSpec, floor: float = SURVIVAL_FLOOR) -> float:
    """Smallest (to ~1e-3 relative) ``T`` with ``max_g Phi_g(T) < floor``."""

    def worst(t):
        return max(survival(spec, g, t) for g in spec.modes)

    hi = 1.0
    while worst(hi) >= floor:
        hi *= 2.0
        if hi > 1e12:
            raise HorizonTooShort("survival never drops below the floor")
    lo = 0.0
    while hi - lo > 1e-3 * hi:
        mid = 0.5 * (lo + hi)
        if worst(mid) >= floor:
            lo = mid
        else:
            hi = mid
    return hi


class GramLattice:
    """Overlaps of the quasi-continuous memory states on ``t = k * dt``.

    Unrolling the overlap recursion along the no-event branch gives

        <g,k|g',k'> = sum_x G0[l(g,x), l(g',x)]
                      * sum_n sqrt(q_gx[k+n] q_g'x[k'+n]) / sqrt(Phi_g[k] Phi_g'[k'])

    where ``q_gx[m]`` is the mass of branch (g, x) in ``[m dt, (m+1) dt)`` and
    ``G0`` the overlaps of the post-event states, found as a fixed point. The
    full node-by-node matrix is never stored; ``matrix`` and ``cross`` build
    the blocks that are asked for.
    """

    def __init__(self, spec: ProcessSpec, dt: float, t_max: float, tol: float = 1e-12):
        self.spec = spec
        self.dt = float(dt)
        self.t_max = float(t_max)
        self.n = int(math.ceil(self.t_max / self.dt - 1e-9))
        self.modes = tuple(spec.modes)
        self._midx = {g: i for i, g in enumerate(self.modes)}
        M = 2 * self.n + 1
        self._M = M
        grid = np.arange(M + 1) * self.dt
        self.phi = {g: survival(spec, g, grid) for g in self.modes}
        self.sq: dict[tuple[str, str], np.ndarray] = {}
        for g in self.modes:
            for b in spec.branches[g]:
                q = branch_interval_mass(spec, g, b.symbol, grid[:M], self.dt)
                self.sq[(g, b.symbol)] = np.sqrt(np.maximum(q, 0.0))
        # nodes with vanishing survival carry no state
        self.last = {}
        for g in self.modes:
            alive = np.flatnonzero(self.phi[g][: self.n + 1] > 0)
            self.last[g] = int(alive[-1]) if alive.size else 0
        self.post_event = self._solve_post_event(tol)

    # -- fixed point of the post-event overlaps --
    def _solve_post_event(self, tol: float) -> np.ndarray:
        spec, modes, idx = self.spec, self.modes, self._midx
        G = len(modes)
        terms = []  # (i, j, coeff, i', j')
        for a in modes:
            for b in modes:
                for br in spec.branches[a]:
                    x = br.symbol
                    if (b, x) not in self.sq:
                        continue
                    c = float(np.dot(self.sq[(a, x)], self.sq[(b, x)]))
                    if c == 0.0:
                        continue
                    terms.append((idx[a], idx[b], c, idx[br.successor], idx[spec.successor(b, x)]))
        if terms:
            I, J, C, I2, J2 = (np.array(v) for v in zip(*terms))
        S = np.ones((G, G))
        for it in range(MAX_ITER):
            new = np.zeros((G, G))
            if terms:
                np.add.at(new, (I, J), C * S[I2, J2])
            delta = float(np.max(np.abs(new - S)))
            S = new
            if delta < tol:
                self.iterations = it + 1
                return S
        raise NoConvergence(f"post-event overlaps did not converge in {MAX_ITER} iterations")

    # -- node access --
    def nodes(self, g: str | None = None) -> list[tuple[str, int]]:
        modes = self.modes if g is None else (g,)
        return [(m, k) for m in modes for k in range(self.last[m] + 1)]

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)) or k < 0 or k > self.n:
            raise KeyError(f"t={t} is not a lattice time (dt={self.dt}, t_max={self.t_max})")
        return k

    def _raw(self, g: str, k: int, g2: str, k2: int) -> float:
        total = 0.0
        L = self._M - max(k, k2)
        if L <= 0:
            return 0.0
        for br in self.spec.branches[g]:
            x = br.symbol
            if (g2, x) not in self.sq:
                continue
            w = self.post_event[self._midx[br.successor], self._midx[self.spec.successor(g2, x)]]
            total += w * float(np.dot(self.sq[(g, x)][k: k + L], self.sq[(g2, x)][k2: k2 + L]))
        return total

    def overlap(self, g: str, k: int, g2: str, k2: int) -> float:
        norm = math.sqrt(self.phi[g][k] * self.phi[g2][k2])
        return self._raw(g, k, g2, k2) / norm

    def cross(self, g: str, ka, g2: str, kb) -> np.ndarray:
        """Overlap block between nodes ``(g, ka)`` and ``(g2, kb)``."""
        ka = np.asarray(ka, dtype=int)
        kb = np.asarray(kb, dtype=int)
        out = np.zeros((ka.size, kb.size))
        M = self._M
        D = kb[None, :] - ka[:, None]
        uniq = np.unique(D)
        for br in self.spec.branches[g]:
            x = br.symbol
            if (g2, x) not in self.sq:
                continue
            w = self.post_event[self._midx[br.successor], self._midx[self.spec.successor(g2, x)]]
            if w == 0.0:
                continue
            a, b = self.sq[(g, x)], self.sq[(g2, x)]
            if uniq.size >= ka.size * kb.size:
                for i, k in enumerate(ka):
                    for j, k2 in enumerate(kb):
                        L = M - max(k, k2)
                        if L > 0:
                            out[i, j] += w * float(np.dot(a[k: k + L], b[k2: k2 + L]))
                continue
            flat = D.ravel()
            order = np.argsort(flat, kind="stable")
            cuts = np.flatnonzero(np.diff(flat[order])) + 1
            for grp in np.split(order, cuts):
                d = int(flat[grp[0]])
                if d >= 0:
                    prod = a[: M - d] * b[d:]
                    shift = 0
                else:
                    prod = a[-d:] * b[: M + d]
                    shift = d
                suffix = np.append(np.cumsum(prod[::-1])[::-1], 0.0)
                ii, jj = np.divmod(grp, kb.size)
                pos = np.minimum(ka[ii] + shift, suffix.size - 1)
                out[ii, jj] += w * suffix[pos]
        norm = np.sqrt(np.outer(self.phi[g][ka], self.phi[g2][kb]))
        return out / norm

    def matrix(self, nodes: Sequence[tuple[str, int]] | None = None) -> np.ndarray:
        """Dense overlap matrix over ``nodes`` (default: every lattice node)."""
        if nodes is None:
            nodes = self.nodes()
            if len(nodes) > 6000:
                raise MemoryError(f"{len(nodes)} lattice nodes; pass an explicit node subset")
        nodes = list(nodes)
        by_mode: dict[str, list[int]] = {}
        for pos, (g, _) in enumerate(nodes):
            by_mode.setdefault(g, []).append(pos)
        out = np.zeros((len(nodes), len(nodes)))
        for g, pa in by_mode.items():
            ka = [nodes[p][1] for p in pa]
            for g2, pb in by_mode.items():
                kb = [nodes[p][1] for p in pb]
                out[np.ix_(pa, pb)] = self.cross(g, ka, g2, kb)
        return out

    @property
    def overlaps(self) -> np.ndarray:
        return self.matrix()

    def recursion_residual(self, g: str, k: int, g2: str, k2: int) -> float:
        """Mismatch of one step of the overlap recursion at a node pair."""
        lhs = self.overlap(g, k, g2, k2)
        ratio = math.sqrt(self.phi[g][k + 1] * self.phi[g2][k2 + 1] / (self.phi[g][k] * self.phi[g2][k2]))
        rhs = ratio * self.overlap(g, k + 1, g2, k2 + 1) if ratio > 0 else 0.0
        norm = math.sqrt(self.phi[g][k] * self.phi[g2][k2])
        for br in self.spec.branches[g]:
            x = br.symbol
            if (g2, x) not in self.sq:
                continue
            w = self.post_event[self._midx[br.successor], self._midx[self.spec.successor(g2, x)]]
            rhs += w * self.sq[(g, x)][k] * self.sq[(g2, x)][k2] / norm
        return abs(lhs - rhs)


def gram_fixed_point(
    spec: ProcessSpec, dt: float, t_max: float | None = None, tol: float = 1e-12
) -> GramLattice:
    """Overlap lattice of the quasi-continuous memory states at step ``dt``."""
    validate_spec(spec)
    if t_max is None:
        t_max = auto_horizon(spec)
    worst = max(survival(spec, g, t_max) for g in spec.modes)
    if worst >= SURVIVAL_FLOOR:
        raise HorizonTooShort(f"survival at t_max={t_max} is {worst:.3e} >= {SURVIVAL_FLOOR}")
    return GramLattice(spec, dt, t_max, tol)


# ---------------------------------------------------------------------------
# Analytic generator-state pathway
# ---------------------------------------------------------------------------

def _post_event_discrete(spec, tol: float = 1e-14) -> np.ndarray:
    """Fixed point of the discrete overlap relation, from the all-ones start."""
    states = list(spec.states)
    idx = {s: i for i, s in enumerate(states)}
    terms = []
    for s in states:
        for r in states:
            for b in spec.branches[s]:
                try:
                    c = spec.branch(r, b.symbol)
                except NoSuchBranch:
                    continue
                amp = math.sqrt(b.prob * c.prob) * np.exp(1j * (getattr(c, "phase", 0.0) - getattr(b, "phase", 0.0)))
                terms.append((idx[s], idx[r], amp, idx[b.successor], idx[c.successor]))
    n = len(states)
    S = np.ones((n, n), dtype=complex)
    if not terms:
        return np.eye(n, dtype=complex)
    I, J, A, I2, J2 = (np.array(v) for v in zip(*terms))
    for _ in range(MAX_ITER):
        new = np.zeros((n, n), dtype=complex)
        np.add.at(new, (I, J), A * S[I2, J2])
        delta = float(np.max(np.abs(new - S)))
        S = new
        if delta < tol:
            return S
    raise NoConvergence(f"discrete overlaps did not converge in {MAX_ITER} iterations")


def _generator_layout(spec: ProcessSpec):
    """Generators keyed by (symbol, successor); each symbol has one rate."""
    rate_of: dict[str, float] = {}
    gens: list[tuple[str, str]] = []
    for g in spec.modes:
        for b in spec.branches[g]:
            d = b.dwell
            if isinstance(d, ExpMixture) and len(d.rates) == 1:
                rate = d.rates[0]
            elif isinstance(d, Exponential):
                rate = d.rate
            else:
                raise UnsupportedDwellFamily(
                    f"mode {g!r}, symbol {b.symbol!r}: closed-form states need a single exponential rate"
                )
            if rate_of.setdefault(b.symbol, rate) != rate:
                raise UnsupportedDwellFamily(
                    f"symbol {b.symbol!r} is emitted at rates {rate_of[b.symbol]} and {rate}"
                )
            key = (b.symbol, b.successor)
            if key not in gens:
                gens.append(key)
    return gens, rate_of


class AnalyticGram:
    """Closed-form overlaps of the continuum memory states."""

    def __init__(self, basis: MemoryBasis):
        self.basis = basis

    def overlap(self, g: str, t: float, g2: str, t2: float) -> complex:
        return complex(np.vdot(self.basis.embed(g, t), self.basis.embed(g2, t2)))

    def matrix(self, nodes: Sequence[Node]) -> np.ndarray:
        V = np.array([self.basis.embed(g, t) for g, t in nodes])
        return V.conj() @ V.T


def analytic_gram(spec: ProcessSpec, rank_tol: float = RANK_TOL) -> tuple[AnalyticGram, MemoryBasis]:
    """Closed-form memory states from generator states.

    ``|s_{g,t}> ~ sum_x sqrt(T^x_g exp(-gamma_x t)) |phi_(x, l(g,x))>``,
    normalised by ``sqrt(Phi_g(t))``. Generators for different symbols are
    orthogonal; two generators with the same symbol overlap like the
    post-event states they lead to.
    """
    validate_spec(spec)
    gens, rate_of = _generator_layout(spec)
    S = _post_event_discrete(spec)
    sidx = {s: i for i, s in enumerate(spec.states)}
    n = len(gens)
    Gphi = np.zeros((n, n), dtype=complex)
    for a, (x, la) in enumerate(gens):
        for b, (y, lb) in enumerate(gens):
            if x == y:
                Gphi[a, b] = S[sidx[la], sidx[lb]]
    if np.allclose(Gphi, np.eye(n), atol=1e-12):
        B = np.eye(n, dtype=complex)  # generator states are the basis
    else:
        lam, U, keep = psd_sqrt_factor(Gphi, rank_tol)
        E = np.conj(U[:, keep]) * np.sqrt(lam[keep])
        Q = gauge_unitary(E)
        B = E @ Q.conj()
    gpos = {key: i for i, key in enumerate(gens)}
    layout = {
        g: [(b.prob, rate_of[b.symbol], B[gpos[(b.symbol, b.successor)]]) for b in spec.branches[g] if b.prob > 0]
        for g in spec.modes
    }

    def embed_many(g, ts):
        terms = layout[g]
        logs = np.array([[0.5 * (math.log(p) - r * t) for p, r, _ in terms] for t in ts])
        logs -= logs.max(axis=1, keepdims=True)  # scale out underflow
        amps = np.exp(logs)
        vecs = np.array([row for _, _, row in terms])
        out = amps @ vecs
        return out / np.linalg.norm(out, axis=1, keepdims=True)

    ref = [(g, 0.0) for g in spec.modes]
    basis = MemoryBasis(B.shape[1], "analytic", embed_many, ref)
    return AnalyticGram(basis), basis


def supports_analytic(spec: ProcessSpec) -> bool:
    try:
        _generator_layout(spec)
    except UnsupportedDwellFamily:
        return False
    return True


# ---------------------------------------------------------------------------
# State extraction
# ---------------------------------------------------------------------------

def extract_states(
    gram,
    rank_tol: float = RANK_TOL,
    labels: Sequence[Node] | None = None,
    max_ref_per_mode: int = 200,
    gauge_nodes: Sequence[Node] | None = None,
) -> MemoryBasis:
    """Vectors reproducing a Gram matrix, up to rank truncation.

    ``gram`` is either an explicit PSD matrix (nodes named by ``labels``) or a
    :class:`GramLattice`. For a lattice, a strided subset of nodes is
    eigendecomposed and every other node is embedded through its overlaps with
    that subset. ``gauge_nodes`` (lattice times) replace the reference nodes
    when fixing the gauge, so bases built on different lattices can share it.
    """
    if not isinstance(gram, GramLattice):
        G = np.asarray(gram, dtype=complex)
        if labels is None:
            labels = [(str(i), 0.0) for i in range(G.shape[0])]
        return _matrix_basis(G, labels, rank_tol, "numeric")

    lat = gram
    tops = {}
    for g in lat.modes:
        alive = np.flatnonzero(lat.phi[g][: lat.last[g] + 1] >= 1e-10)
        tops[g] = int(alive[-1]) if alive.size else 0
    # one power-of-two stride for every mode keeps the set of lags between
    # blocks small, also against grids refined by halving
    need = max(1, math.ceil(max(tops.values()) / max(max_ref_per_mode - 1, 1)))
    stride = 1 << (need - 1).bit_length()
    ref = [(g, k) for g in lat.modes for k in range(0, tops[g] + 1, stride)]
    G = lat.matrix(ref)
    lam, U, keep = psd_sqrt_factor(G, rank_tol)
    if lam[-1] < -1e-10 * max(1.0, lam[0]):
        raise NotPSD(f"lattice Gram matrix has eigenvalue {lam[-1]:.3e}")
    Uk, lk = U[:, keep], lam[keep]
    E = np.conj(Uk) * np.sqrt(lk)
    nystrom = Uk.conj().T / np.sqrt(lk)[:, None]  # D x m
    ref_by_mode: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for g in lat.modes:
        pos = [i for i, (m, _) in enumerate(ref) if m == g]
        ref_by_mode[g] = (np.array(pos), np.array([ref[i][1] for i in pos]))

    def overlaps_with_ref(g, ks):
        over = np.zeros((len(ref), ks.size))
        for m, (pos, kr) in ref_by_mode.items():
            over[pos] = lat.cross(m, kr, g, ks)
        return over

    if gauge_nodes is None:
        Q = gauge_unitary(E)
    else:
        rows = [(nystrom @ overlaps_with_ref(g, np.array([lat.index_of(t)]))).T[0] for g, t in gauge_nodes]
        Q = gauge_unitary(np.array(rows))
    proj = Q.conj().T @ nystrom

    ref_vecs = E @ Q.conj()
    ref_row = {node: i for i, node in enumerate(ref)}

    def embed_many(g, ts):
        ks = np.array([lat.index_of(t) for t in ts], dtype=int)
        out = np.zeros((ks.size, Q.shape[1]), dtype=complex)
        hit = np.array([(g, int(k)) in ref_row for k in ks], dtype=bool)
        for i in np.flatnonzero(hit):
            out[i] = ref_vecs[ref_row[(g, int(ks[i]))]]
        miss = np.flatnonzero(~hit)
        if miss.size:
            out[miss] = (proj @ overlaps_with_ref(g, ks[miss])).T
        return out / np.linalg.norm(out, axis=1, keepdims=True)

    labels_out = [(g, k * lat.dt) for g, k in ref]
    basis = MemoryBasis(int(keep.sum()), "numeric", embed_many, labels_out, lattice_dt=lat.dt)
    basis.ref_stride = stride
    basis.horizon = lat.n * lat.dt
    return basis


# ---------------------------------------------------------------------------
# Kraus operators
# ---------------------------------------------------------------------------

def _time_at_survival(spec: ProcessSpec, g: str, level: float) -> float:
    hi = 1.0
    while survival(spec, g, hi) > level and hi < 1e12:
        hi *= 2.0
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if survival(spec, g, mid) > level:
            lo = mid
        else:
            hi = mid
    return lo


def _sample_nodes(spec: ProcessSpec, basis: MemoryBasis, dt: float, per_mode: int = 9) -> list[Node]:
    nodes: list[Node] = []
    for g in spec.modes:
        t_hi = _time_at_survival(spec, g, 1e-3)
        if basis.lattice_dt is None:
            ts = np.linspace(0.0, t_hi, per_mode)
        else:
            h = basis.lattice_dt
            step = int(round(dt / h))
            k_hi = max(0, min(int(t_hi / h), int(round(_time_at_survival(spec, g, 1e-6) / h)) - step))
            ts = np.unique(np.round(np.linspace(0, k_hi, per_mode))).astype(int) * h
        nodes += [(g, float(t)) for t in ts]
    return nodes


def build_kraus(
    spec: ProcessSpec,
    basis: MemoryBasis,
    dt: float,
    nodes: Sequence[Node] | None = None,
    tol: float = 1e-6,
) -> KrausSet:
    """Kraus operators at step ``dt`` from their action on memory states.

    ``K0 |s_gt> = sqrt(Phi_g(t+dt)/Phi_g(t)) |s_g,t+dt>`` and
    ``Kx |s_gt> = sqrt(int_t^{t+dt} T phi / Phi_g(t)) |s_l(g,x),0>``; each
    matrix is the least-squares solution over the sampled nodes.
    """
    if basis.lattice_dt is not None:
        ratio = dt / basis.lattice_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 0:
            raise ValueError(f"dt={dt} is not a multiple of the lattice step {basis.lattice_dt}")
    if nodes is None:
        nodes = _sample_nodes(spec, basis, dt)
    V = np.array([basis.embed(g, t) for g, t in nodes])
    D = basis.dimension
    sv = np.linalg.svd(V, compute_uv=False)
    if sv.size < D or sv[D - 1] < 1e-10 * sv[0]:
        raise InsufficientSpan(f"{len(nodes)} sampled nodes span fewer than {D} dimensions")

    W0 = np.zeros_like(V)
    Wx = {x: np.zeros_like(V) for x in spec.symbols}
    post = {g: basis.embed(g, 0.0) for g in spec.modes}
    for i, (g, t) in enumerate(nodes):
        phi_t = survival(spec, g, t)
        if dt > 0:
            W0[i] = math.sqrt(survival(spec, g, t + dt) / phi_t) * basis.embed(g, t + dt)
        else:
            W0[i] = V[i]
        for b in spec.branches[g]:
            mass = float(branch_interval_mass(spec, g, b.symbol, t, dt)) if dt > 0 else 0.0
            Wx[b.symbol][i] = math.sqrt(max(mass, 0.0) / phi_t) * post[b.successor]

    def solve(W):
        KT, *_ = np.linalg.lstsq(V, W, rcond=None)
        resid = float(np.max(np.abs(V @ KT - W)))
        if resid > tol:
            raise InconsistentAction(f"Kraus action residual {resid:.3e} exceeds {tol:.1e}")
        return KT.T

    ks = KrausSet(float(dt), solve(W0), {x: solve(W) for x, W in Wx.items()})
    err = ks.completeness_error()
    if err > COMPLETENESS_TOL:
        raise InconsistentAction(
            f"Kraus set at dt={dt} misses completeness by {err:.3e}; "
            f"the memory was truncated (D={D}) below its true rank"
        )
    return ks


class DiscreteModel(NamedTuple):
    basis: MemoryBasis
    kraus: dict[str, np.ndarray]


def discrete_model(spec: DiscreteProcessSpec, rank_tol: float = RANK_TOL) -> DiscreteModel:
    """Memory states and per-symbol Kraus matrices of a discrete-time chain.

    ``U|s_s>|0> = sum_x sqrt(T) exp(i phase) |s_s'>|x>`` fixes the overlaps;
    the states follow from the fixed point of that relation.
    """
    validate_spec(spec)
    S = _post_event_discrete(spec)
    labels = [(s, 0.0) for s in spec.states]
    base = _matrix_basis(S, labels, rank_tol, "discrete")
    V = np.array([base.embed(s) for s in spec.states])
    kraus = {}
    for x in spec.symbols:
        W = np.zeros_like(V)
        for i, s in enumerate(spec.states):
            try:
                b = spec.branch(s, x)
            except NoSuchBranch:
                continue
            W[i] = math.sqrt(b.prob) * np.exp(1j * b.phase) * base.embed(b.successor)
        KT, *_ = np.linalg.lstsq(V, W, rcond=None)
        if np.max(np.abs(V @ KT - W)) > 1e-8:
            raise InconsistentAction(f"no Kraus matrix realises symbol {x!r} on these states")
        kraus[x] = KT.T
    return DiscreteModel(base, kraus)


def quasi_discrete_kraus(model: DiscreteModel, rate: float, dt: float) -> KrausSet:
    """Kraus set of the discrete model lifted to continuous time.

    Between events the memory is untouched; an event in ``dt`` happens with
    probability ``1 - exp(-rate dt)`` and applies the discrete Kraus matrix.
    """
    D = model.basis.dimension
    K0 = math.exp(-0.5 * rate * dt) * np.eye(D, dtype=complex)
    amp = math.sqrt(-math.expm1(-rate * dt))
    return KrausSet(float(dt), K0, {x: amp * K for x, K in model.kraus.items()})


# ---------------------------------------------------------------------------
# Quantum memory measures
# ---------------------------------------------------------------------------

def _entropy_rank(rho: np.ndarray, cutoff: float = 1e-10) -> tuple[float, float, np.ndarray]:
    lam = np.linalg.eigvalsh(hermitian_part(rho))
    lam = np.clip(lam, 0.0, None)
    lam = lam / lam.sum()
    nz = lam[lam > cutoff]
    C = float(-np.sum(nz * np.log2(nz)))
    D = math.log2(nz.size) if nz.size else 0.0
    return D, max(C, 0.0), lam


def _steady_state_rho(spec: ProcessSpec, basis: MemoryBasis, ts: np.ndarray, weights: np.ndarray) -> np.ndarray:
    pi = stationary_mode_dist(spec)
    mu = 1.0 / mean_dwell(spec)
    D = basis.dimension
    rho = np.zeros((D, D), dtype=complex)
    for g in spec.modes:
        V = basis.embed_many(g, ts)
        w = mu * pi[g] * weights * survival(spec, g, ts)
        rho += (V.T * w) @ V.conj()
    return rho


def quantum_measures(
    basis: MemoryBasis,
    spec,
    tol: float = 1e-4,
    start_intervals: int = 32,
    max_intervals: int = 1 << 15,
) -> MemoryMeasures:
    """Entropy and log-rank of the steady-state memory ``rho``.

    For continuous-time specs ``rho = mu sum_g pi_g int Phi_g(t) |s_gt><s_gt| dt``
    is integrated with composite Simpson, doubling the node count until ``C``
    moves by less than ``tol``.
    """
    if isinstance(spec, DiscreteProcessSpec):
        pi = stationary_mode_dist(spec)
        rho = sum(pi[s] * np.outer(v, v.conj()) for s in spec.states for v in [basis.embed(s)])
        D, C, lam = _entropy_rank(rho)
        return MemoryMeasures("quantum", D, C, diagnostics={"rho": rho, "eigenvalues": lam})

    h_min = basis.lattice_dt
    if h_min is None:
        T = auto_horizon(spec)
        n_steps, step = None, None
    else:
        T = basis.horizon
        n_steps = int(round(T / h_min))
        step = getattr(basis, "ref_stride", 1)  # reference nodes are cached
    history = []
    n = start_intervals
    prev = None
    while True:
        if h_min is None:
            ts = np.linspace(0.0, T, n + 1)
        else:
            count = (n_steps // step) // 2 * 2
            ts = np.arange(count + 1) * step * h_min
        h = ts[1] - ts[0]
        w = np.ones(ts.size)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= h / 3.0
        rho = _steady_state_rho(spec, basis, ts, w)
        trace = float(np.real(np.trace(rho)))
        D, C, lam = _entropy_rank(rho / trace)
        history.append((ts.size - 1, C))
        converged = prev is not None and abs(C - prev) < tol
        if h_min is None:
            exhausted = n >= max_intervals
        else:
            exhausted = step == 1 or ts.size > max_intervals
        if converged or exhausted:
            break
        prev = C
        n *= 2
        if step is not None:
            step = max(1, step // 2)
    return MemoryMeasures(
        "quantum",
        D,
        C,
        diagnostics={
            "rho": rho / trace,
            "eigenvalues": lam,
            "raw_trace": trace,
            "history": history,
            "converged": converged,
            "horizon": T,
        },
    )
