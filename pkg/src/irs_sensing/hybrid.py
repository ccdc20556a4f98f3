"""Hybrid time-division / simultaneous sensing with target grouping.

Targets are split into ``L`` groups.  Groups are sensed in successive time
slots, and the targets within one group share the slot through signature
sequences.  Each group has its own IRS phase vector and the full power
budget.  The grouping is binary; it enters the lifted problem through big-M
matrix inequalities

    Wt_{k,l} <= c_{k,l} P I,            Wh_{k,k',l} <= c_{k',l} P I,
    Wh_{k,k',l} <= Wt_{k,l},            Wh_{k,k',l} >= Wt_{k,l} - (1 - c_{k',l}) P I,

where ``Wt_{k,l}`` is the beam covariance of target ``k`` in slot ``l``
(zero unless ``k`` belongs to ``l``) and ``Wh_{k,k',l}`` is its copy that
counts as leakage towards ``k'`` (zero unless ``k'`` shares the slot).  The
grouping is relaxed to ``[0, 1]`` with a penalty on ``c (1 - c)`` whose
weight grows until the assignment is binary.  Beams and grouping are
optimised jointly for fixed phases; phases are optimised for fixed beams
with a relaxed modulus and then projected.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import Beamformer, PhaseConfig, beam_gain
from .conic import (Affine, ConicProblem, ConicSolveError, HermitianVar, LinearConstraint,
                    LmiConstraint, NormSquare, QuadConstraint, ScalarVar, SolverSettings, VectorVar, solve)
from .ss import SsConfig, channel_scale, design_beams, effective_vectors, enforce_feasibility, solve_ss
from .td import PenaltyConfig, mrt_beamformer, project_unit_modulus, random_phase, solve_td_phase


# ---------------------------------------------------------------- timing

@dataclass(frozen=True)
class TimingConfig:
    """Pulse timing of one sensing dwell.

    Parameters
    ----------
    delta : float
        Pulse repetition interval in seconds.
    n_pulses : int
        Pulses per dwell.
    guard : float
        Guard period between dwells in seconds.
    """

    delta: float = 1e-4
    n_pulses: int = 20
    guard: float = 8e-3

    def __post_init__(self):
        if not (self.delta > 0 and self.n_pulses > 0 and self.guard > 0):
            raise ValueError("timing parameters must be positive")

    @property
    def dwell(self) -> float:
        return self.delta * self.n_pulses + self.guard


def sensing_frequency(timing: TimingConfig, groups: int) -> float:
    """How often every target is revisited when ``groups`` slots are used, in Hz."""
    if groups < 1:
        raise ValueError("at least one group is required")
    return 1.0 / (groups * timing.dwell)


# ---------------------------------------------------------------- grouping

@dataclass
class Grouping:
    """Binary assignment ``c[k, l]`` of ``K`` targets to ``L`` groups."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c)
        if c.ndim != 2:
            raise ValueError("assignment must be a K x L matrix")
        if not np.all((c == 0) | (c == 1)):
            raise ValueError("assignment entries must be 0 or 1")
        if not np.all(c.sum(axis=1) == 1):
            raise ValueError("every target must belong to exactly one group")
        self.c = c.astype(int)

    @classmethod
    def from_labels(cls, labels, L):
        labels = np.asarray(labels, dtype=int)
        c = np.zeros((labels.size, L), dtype=int)
        c[np.arange(labels.size), labels] = 1
        return cls(c)

    @classmethod
    def round(cls, c_relaxed):
        """Per-target argmax, which always yields a valid assignment."""
        c_relaxed = np.asarray(c_relaxed)
        return cls.from_labels(np.argmax(c_relaxed, axis=1), c_relaxed.shape[1])

    @property
    def K(self) -> int:
        return self.c.shape[0]

    @property
    def L(self) -> int:
        return self.c.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.c, axis=1)

    def members(self, l) -> list:
        return [int(k) for k in np.flatnonzero(self.c[:, l])]

    def to_list(self) -> list:
        return self.c.tolist()


def binary_penalty_term(c, c_ref):
    """Affine majorant ``c - 2 c c_ref + c_ref^2`` of ``c (1 - c)``, tight at ``c_ref``."""
    return c - 2 * c * c_ref + c_ref ** 2


# ---------------------------------------------------------------- lifted blocks

def _wt(k, l):
    return f"Wt{k}_{l}"


def _wh(k, kp, l):
    return f"Wh{k}_{kp}_{l}"


def _c(k, l):
    return f"c{k}_{l}"


def build_bigM(K, L, M, P_max, with_copies=True):
    """Matrix inequalities tying beam covariances to the relaxed grouping.

    Covariances are named ``Wt{k}_{l}``, leakage copies ``Wh{k}_{k'}_{l}``
    and grouping variables ``c{k}_{l}``.  Positive semidefiniteness of the
    covariances is implied by their variable type.
    """
    eye = P_max * np.eye(M)
    cons = []
    for l in range(L):
        for k in range(K):
            cons.append(LmiConstraint(M, ((_wt(k, l), 1.0),), ((_c(k, l), -eye),),
                                      label=f"cap{k}_{l}"))
            if not with_copies:
                continue
            for kp in range(K):
                if kp == k:
                    continue
                wh = _wh(k, kp, l)
                cons.append(LmiConstraint(M, ((wh, 1.0),), ((_c(kp, l), -eye),),
                                          label=f"copycap{k}_{kp}_{l}"))
                cons.append(LmiConstraint(M, ((wh, 1.0), (_wt(k, l), -1.0)),
                                          label=f"copyupper{k}_{kp}_{l}"))
                cons.append(LmiConstraint(M, ((_wt(k, l), 1.0), (wh, -1.0)),
                                          ((_c(kp, l), eye),), -eye,
                                          label=f"copylower{k}_{kp}_{l}"))
    return cons


@dataclass
class Block1Result:
    Wt: dict
    Wh: dict
    c: np.ndarray
    R: float
    objective: float
    status: str


def solve_block1(Qs, vs, c_ref, weight, eps, P_max=1.0,
                 settings: SolverSettings = SolverSettings()) -> Block1Result:
    """Beam covariances and relaxed grouping for fixed per-group phases.

    Maximises ``R - weight * sum binary_penalty_term(c, c_ref)`` subject to
    the per-target gain, leakage, per-slot power, assignment and big-M
    constraints.  ``eps = inf`` drops leakage and the copies entirely.
    """
    Qs = np.asarray(Qs, dtype=complex)
    K, N, M = Qs.shape
    L = len(vs)
    c_ref = np.asarray(c_ref, dtype=float)
    finite = np.isfinite(eps)
    H = [effective_vectors(Qs, v) for v in vs]  # H[l][k] = Q_k^H v_l

    herm = [HermitianVar(_wt(k, l), M) for l in range(L) for k in range(K)]
    if finite:
        herm += [HermitianVar(_wh(k, kp, l), M) for l in range(L) for k in range(K)
                 for kp in range(K) if kp != k]
    scalars = [ScalarVar("R")] + [ScalarVar(_c(k, l), 0.0, 1.0) for k in range(K)
                                  for l in range(L)]
    terms = {"R": 1.0}
    for k in range(K):
        for l in range(L):
            terms[_c(k, l)] = -weight * (1 - 2 * c_ref[k, l])
    p = ConicProblem(herm, scalars, objective=Affine(terms, -weight * float(np.sum(c_ref ** 2))))
    for k in range(K):
        g = {"R": 1.0}
        for l in range(L):
            g[_wt(k, l)] = -np.outer(H[l][k], H[l][k].conj())
        p.add(LinearConstraint(Affine(g), "<=", f"gain{k}"))
        if finite and K > 1:
            leak = {}
            for l in range(L):
                for kp in range(K):
                    if kp != k:
                        leak[_wh(k, kp, l)] = np.outer(H[l][kp], H[l][kp].conj())
            p.add(LinearConstraint(Affine(leak, -eps), "<=", f"leak{k}"))
        p.add(LinearConstraint(Affine({_c(k, l): 1.0 for l in range(L)}, -1.0), "==",
                               f"assign{k}"))
    for l in range(L):
        p.add(LinearConstraint(Affine({_wt(k, l): np.eye(M) for k in range(K)}, -P_max), "<=",
                               f"power{l}"))
    p.add(*build_bigM(K, L, M, P_max, with_copies=finite))
    sol = solve(p, settings).raise_for_status()
    vals = sol.values
    c = np.array([[vals[_c(k, l)] for l in range(L)] for k in range(K)])
    Wt = {(k, l): vals[_wt(k, l)] for k in range(K) for l in range(L)}
    Wh = {key: vals[_wh(*key)] for key in
          ((k, kp, l) for l in range(L) for k in range(K) for kp in range(K) if kp != k)} \
        if finite else {}
    return Block1Result(Wt, Wh, np.clip(c, 0.0, 1.0), vals["R"], sol.objective, sol.status.value)


def _psd_factor(W, tol=1e-7):
    """Factor ``F`` with ``F F^H ~ W``, dropping eigenvalues below ``tol`` (absolute)."""
    lam, U = np.linalg.eigh((W + W.conj().T) / 2)
    keep = lam > tol
    return U[:, keep] * np.sqrt(lam[keep])


@dataclass
class Block2Result:
    relaxed: list
    projected: list
    R: float
    status: str


def solve_block2(Qs, Wt, Wh, vs_ref, eps, settings: SolverSettings = SolverSettings()):
    """Per-group phases for fixed covariances.

    Gains are replaced by their tangent lower bound at ``vs_ref``; leakage
    stays convex quadratic; the modulus is relaxed to ``|v_n| <= 1``.  The
    relaxed solution is projected element-wise to unit modulus, falling back
    to the reference phase for zero entries.
    """
    Qs = np.asarray(Qs, dtype=complex)
    K, N, M = Qs.shape
    L = len(vs_ref)
    p = ConicProblem(vectors=[VectorVar(f"v{l}", N, 1.0) for l in range(L)],
                     scalars=[ScalarVar("R")], objective=Affine({"R": 1.0}))
    for k in range(K):
        terms, const = {"R": 1.0}, 0.0
        for l in range(L):
            A = Qs[k] @ Wt[(k, l)] @ Qs[k].conj().T
            Av = A @ vs_ref[l]
            terms[f"v{l}"] = -2 * Av
            const += float(np.real(np.vdot(vs_ref[l], Av)))
        p.add(LinearConstraint(Affine(terms, const), "<=", f"gain{k}"))
        if not np.isfinite(eps) or not Wh:
            continue
        quads = []
        for l in range(L):
            for kp in range(K):
                if kp == k:
                    continue
                F = _psd_factor(Wh[(k, kp, l)])
                if F.shape[1]:
                    quads.append((1.0, NormSquare(f"v{l}", Qs[kp] @ F)))
        if quads:
            p.add(QuadConstraint(Affine({}, -eps), tuple(quads), f"leak{k}"))
    sol = solve(p, settings).raise_for_status()
    relaxed = [np.asarray(sol.values[f"v{l}"]) for l in range(L)]
    projected = [project_unit_modulus(r, fallback=vs_ref[l]) for l, r in enumerate(relaxed)]
    return Block2Result(relaxed, projected, sol.values["R"], sol.status.value)


def recover_beams(Wt, grouping: Grouping, Qs, vs):
    """Rank-one beams ``Wt h / sqrt(h^H Wt h)`` for assigned targets, zero otherwise."""
    K, L = grouping.c.shape
    M = Qs.shape[2]
    beams = []
    for k in range(K):
        l = int(grouping.labels[k])
        W = Wt[(k, l)]
        h = Qs[k].conj().T @ vs[l]
        g = float(np.real(np.vdot(h, W @ h)))
        beams.append(W @ h / np.sqrt(g) if g > 0 else np.zeros(M, dtype=complex))
    return beams


# ---------------------------------------------------------------- solution

@dataclass
class HybridSolution:
    """Per-group phases, per-target beams (each active only in its slot) and grouping."""

    vs: list
    beams: list
    grouping: Grouping
    gains: np.ndarray
    leakages: np.ndarray
    frequency: float
    status: str
    history: list = field(default_factory=list)

    @property
    def min_gain(self) -> float:
        return float(np.min(self.gains))

    @property
    def L(self) -> int:
        return self.grouping.L

    def slot_powers(self) -> np.ndarray:
        p = np.zeros(self.L)
        for k, b in enumerate(self.beams):
            p[self.grouping.labels[k]] += b.power
        return p

    def to_dict(self) -> dict:
        def cplx(x):
            return {"re": np.real(x).tolist(), "im": np.imag(x).tolist()}
        return {"grouping": self.grouping.to_list(),
                "phases": [cplx(v.v) for v in self.vs],
                "beams": [cplx(b.w) for b in self.beams],
                "gains": self.gains.tolist(), "leakages": self.leakages.tolist(),
                "min_gain": self.min_gain, "sensing_frequency": self.frequency,
                "status": self.status, "history": list(self.history)}


def evaluate_hybrid(Qs, vs, beams, grouping: Grouping):
    """Gains and within-group leakages evaluated directly from vectors."""
    K = len(beams)
    gains = np.zeros(K)
    leaks = np.zeros(K)
    for k in range(K):
        l = int(grouping.labels[k])
        gains[k] = beam_gain(vs[l], Qs[k], beams[k])
        leaks[k] = sum(beam_gain(vs[l], Qs[j], beams[k]) for j in grouping.members(l) if j != k)
    return gains, leaks


def _make_solution(Qs, vs, beams, grouping, timing, status, history):
    gains, leaks = evaluate_hybrid(Qs, vs, beams, grouping)
    freq = sensing_frequency(timing, grouping.L)
    return HybridSolution([PhaseConfig(project_unit_modulus(v)) for v in vs],
                          [Beamformer(b) for b in beams], grouping, gains, leaks, freq, status,
                          history)


# ---------------------------------------------------------------- per-group design

def _best_single(Q, v_candidates, P_max, config):
    """Best MRT design for one target among candidate phases and a fresh phase design."""
    cands = list(v_candidates)
    cands.append(solve_td_phase(Q, config.penalty, seed=config.seed).v.v)
    best = None
    for v in cands:
        w = mrt_beamformer(Q, v, P_max)
        g = beam_gain(v, Q, w)
        if best is None or g > best[2]:
            best = (v, w, g)
    return best[0], [best[1]]


def design_group(Qs, members, v, beams, P_max, eps, config: "HybridConfig"):
    """Refine one group's phases and beams, keeping the best of the candidates.

    Candidates are the given design (made feasible), the fixed-phase beam
    design at ``v`` and, if enabled, a joint refinement started from ``v``.
    Returns ``(v, beams)`` with beams ordered as ``members``.
    """
    Qg = Qs[members]
    if len(members) == 1:
        return _best_single(Qg[0], [v], P_max, config)
    settings = config.penalty.solver

    def score(vv, ws):
        return min(beam_gain(vv, Qg[i], ws[i]) for i in range(len(members)))

    cands = []
    if beams is not None:
        ws, _ = enforce_feasibility(beams, Qg, v, P_max, eps)
        cands.append((v, ws))
    fixed = design_beams(Qg, v, P_max, eps, settings)
    cands.append((v, fixed.ws))
    if config.refine:
        ss = solve_ss(Qg, P_max, eps, config.ss, v0=v)
        cands.append((ss.v.v, [b.w for b in ss.beams]))
    return max(cands, key=lambda c: score(*c))


# ---------------------------------------------------------------- solver

@dataclass(frozen=True)
class HybridConfig:
    """Settings of the grouping penalty loop.

    Parameters
    ----------
    weight0 : float, optional
        Initial weight of the binary penalty in normalised units; by default
        ``weight_ratio`` times the first unpenalised objective.
    growth : float
        The weight is divided by ``growth`` after every outer round.
    eps_inner : float
        Relative objective change that ends an inner round.
    eps_binary : float
        Largest ``c (1 - c)`` accepted as binary.
    jitter : float
        Half-width of the seeded perturbation of the uniform initial grouping.
    refine : bool
        Run a joint phase/beam refinement inside every final group.
    """

    weight0: float | None = None
    weight_ratio: float = 0.1
    growth: float = 0.5
    eps_inner: float = 1e-3
    eps_binary: float = 1e-6
    max_inner: int = 5
    max_outer: int = 40
    jitter: float = 0.01
    seed: int = 0
    refine: bool = True
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    ss: SsConfig = field(default_factory=SsConfig)

    def __post_init__(self):
        if not 0.0 < self.growth < 1.0:
            raise ValueError("growth must lie in (0, 1)")
        if not (self.eps_inner > 0 and self.eps_binary > 0):
            raise ValueError("tolerances must be positive")


COMPLEXITY_WARN = 10_000


def _finish(Qs, grouping, vs, beams_by_target, P_max, eps, timing, config, status, history):
    vs = list(vs)
    beams = [None] * grouping.K
    for l in range(grouping.L):
        members = grouping.members(l)
        if not members:
            continue
        given = None if beams_by_target is None else [beams_by_target[k] for k in members]
        v, ws = design_group(Qs, members, vs[l], given, P_max, eps, config)
        vs[l] = v
        for k, w in zip(members, ws):
            beams[k] = w
    return _make_solution(Qs, vs, beams, grouping, timing, status, history)


def solve_hybrid(Qs, L, P_max, eps, timing: TimingConfig = TimingConfig(),
                 config: HybridConfig = HybridConfig()) -> HybridSolution:
    """Joint grouping, beams and per-group phases maximising the minimum gain.

    With ``L = 1`` or ``L = K`` the grouping is fixed up to relabelling, so
    the solver goes straight to the per-group design (joint design for a
    single group, single-target design otherwise).  In between, the penalty
    loop alternates the lifted beam/grouping block and the phase block; the
    weight of the binary penalty grows until ``max c (1 - c)`` falls below
    ``eps_binary``.  The grouping is then rounded, rank-one beams are
    recovered and every group is refined.  A failed subproblem after the
    first iterate ends the loop at the last iterate with status
    ``'stalled'``.
    """
    Qs = np.asarray(Qs, dtype=complex)
    K, N, M = Qs.shape
    if not 1 <= L <= K:
        raise ValueError("the number of groups must lie in [1, K]")
    if K * L * M * M > COMPLEXITY_WARN:
        warnings.warn(f"large hybrid problem (K*L*M^2 = {K * L * M * M})", stacklevel=2)
    rng = np.random.default_rng(config.seed)
    if L == 1:
        grouping = Grouping(np.ones((K, 1), dtype=int))
        v0 = random_phase(N, rng)
        return _finish(Qs, grouping, [v0], None, P_max, eps, timing, config, "fixed-grouping", [])
    if L == K:
        grouping = Grouping(np.eye(K, dtype=int))
        vs = [random_phase(N, rng) for _ in range(L)]
        return _finish(Qs, grouping, vs, None, P_max, eps, timing, config, "fixed-grouping", [])

    c2 = channel_scale(Qs)
    Qn = Qs / np.sqrt(c2)
    eps_n = eps / (c2 * P_max)
    settings = config.penalty.solver
    vs = [random_phase(N, rng) for _ in range(L)]
    c = 1.0 / L + rng.uniform(-config.jitter, config.jitter, size=(K, L))
    c = np.clip(c / c.sum(axis=1, keepdims=True), 0.0, 1.0)

    weight = config.weight0
    history = []
    status = "max-iterations"
    block1 = None
    stalled = False
    for outer in range(config.max_outer):
        prev = None
        for inner in range(config.max_inner):
            try:
                if weight is None:
                    # The unpenalised solve sets the scale and doubles as the first iterate.
                    block1 = solve_block1(Qn, vs, c, 0.0, eps_n, 1.0, settings)
                    weight = config.weight_ratio * max(block1.R, 1e-12)
                else:
                    block1 = solve_block1(Qn, vs, c, weight, eps_n, 1.0, settings)
                c = block1.c
                block2 = solve_block2(Qn, block1.Wt, block1.Wh, vs, eps_n, settings)
            except ConicSolveError:
                if block1 is None:
                    raise
                # block1 was solved for the current phases, so the pair is consistent.
                stalled = True
                break
            vs = block2.relaxed
            gains = [sum(float(np.real(np.vdot(vs[l], Qn[k] @ block1.Wt[(k, l)]
                                                @ Qn[k].conj().T @ vs[l])))
                         for l in range(L)) for k in range(K)]
            value = min(gains) - weight * float(np.sum(c * (1 - c)))
            history.append({"outer": outer, "inner": inner, "weight": weight,
                            "objective": value * c2 * P_max,
                            "binary_violation": float(np.max(c * (1 - c)))})
            if prev is not None and abs(value - prev) <= config.eps_inner * max(1.0, abs(value)):
                break
            prev = value
        if np.max(c * (1 - c)) <= config.eps_binary:
            status = "converged"
            break
        if stalled:
            status = "stalled"
            break
        weight /= config.growth
    if status != "converged":
        warnings.warn("grouping not binary at exit; rounding per target", stacklevel=2)
    grouping = Grouping.round(c)
    vs = [project_unit_modulus(v) for v in vs]
    beams = [b * np.sqrt(P_max) for b in recover_beams(block1.Wt, grouping, Qn, vs)]
    return _finish(Qs, grouping, vs, beams, P_max, eps, timing, config, status, history)


# ---------------------------------------------------------------- trade-off

def split_worst_group(solution: HybridSolution, Qs, P_max, eps, timing: TimingConfig,
                      config: HybridConfig) -> HybridSolution:
    """Move the weakest target of a multi-target group into a new slot.

    The remaining targets keep their beams and phases (their leakage caps
    only loosen) and the moved target gets a dedicated design with the full
    budget, so the minimum gain cannot decrease.
    """
    g = solution.grouping
    sizes = g.c.sum(axis=0)
    order = np.argsort(solution.gains)
    k_bar = next((int(k) for k in order if sizes[g.labels[k]] > 1), None)
    if k_bar is None:
        raise ValueError("every group already holds a single target")
    labels = g.labels.copy()
    l_src = int(labels[k_bar])
    labels[k_bar] = g.L
    grouping = Grouping.from_labels(labels, g.L + 1)
    vs = [v.v for v in solution.vs]
    beams = [b.w for b in solution.beams]
    v_new, (w_new,) = _best_single(Qs[k_bar], [vs[l_src]], P_max, config)
    vs.append(v_new)
    beams[k_bar] = w_new
    return _make_solution(Qs, vs, beams, grouping, timing, "split", [])


@dataclass
class TradeoffPoint:
    L: int
    frequency: float
    min_gain: float
    solution: HybridSolution


def tradeoff_curve(Qs, P_max, eps, timing: TimingConfig = TimingConfig(), groups=(1,),
                   config: HybridConfig = HybridConfig()) -> list:
    """Minimum gain against sensing frequency for a list of group counts.

    Group counts are solved in increasing order.  Each solve is compared
    with the previous solution split into more slots, and the better of the
    two is kept, so the curve is monotone on every instance.  Points are
    returned sorted by frequency.
    """
    groups = sorted(set(int(L) for L in groups))
    if not groups:
        raise ValueError("no group counts given")
    points, prev = [], None
    for L in groups:
        sol = solve_hybrid(Qs, L, P_max, eps, timing, config)
        if prev is not None:
            lifted = prev
            while lifted.L < L:
                lifted = split_worst_group(lifted, Qs, P_max, eps, timing, config)
            if lifted.min_gain > sol.min_gain:
                sol = lifted
        points.append(TradeoffPoint(L, sol.frequency, sol.min_gain, sol))
        prev = sol
    return sorted(points, key=lambda p: p.frequency)


# ---------------------------------------------------------------- benchmarks

def block_tie_matrix(Nx, Ny, bx=2, by=2):
    """0/1 matrix mapping ``(Nx/bx)(Ny/by)`` free phases to the ``Nx*Ny`` elements."""
    if Nx % bx or Ny % by:
        raise ValueError("array dimensions must be divisible by the block size")
    T = np.zeros((Nx * Ny, (Nx // bx) * (Ny // by)))
    for ix in range(Nx):
        for iy in range(Ny):
            T[ix * Ny + iy, (ix // bx) * (Ny // by) + iy // by] = 1.0
    return T


def solve_tied(Qs, T, L, P_max, eps, timing: TimingConfig = TimingConfig(),
               config: HybridConfig = HybridConfig()) -> HybridSolution:
    """Hybrid design with element phases tied by ``v = T u``."""
    Qs = np.asarray(Qs, dtype=complex)
    T = np.asarray(T, dtype=float)
    reduced = np.einsum("nj,knm->kjm", T, Qs)
    sol = solve_hybrid(reduced, L, P_max, eps, timing, config)
    vs = [T @ v.v for v in sol.vs]
    return _make_solution(Qs, vs, [b.w for b in sol.beams], sol.grouping, timing, sol.status,
                          sol.history)


def element_blocks(N, K):
    """Contiguous row-major blocks of IRS elements, remainder spread over the first blocks."""
    if K > N:
        raise ValueError("more targets than IRS elements")
    sizes = np.full(K, N // K)
    sizes[: N % K] += 1
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return [np.arange(edges[i], edges[i + 1]) for i in range(K)]


def solve_divided(Qs, P_max, eps, config: HybridConfig = HybridConfig()):
    """Targets sensed together, each owning one block of IRS elements.

    Each block's phases are designed for its own target with the other
    blocks held at fixed seeded random phases; the BS beams then come from
    the fixed-phase design under the same leakage cap.  Returns
    ``(v, beams, gains)``.
    """
    Qs = np.asarray(Qs, dtype=complex)
    K, N, M = Qs.shape
    rng = np.random.default_rng(config.seed)
    background = random_phase(N, rng)
    v = background.copy()
    for k, idx in enumerate(element_blocks(N, K)):
        rest = np.setdiff1d(np.arange(N), idx)
        if rest.size == 0:
            v = solve_td_phase(Qs[k], config.penalty, seed=rng).v.v
            continue
        # One extra element pinned to unit phase carries the fixed background.
        extra = background[rest].conj() @ Qs[k][rest]
        sol = solve_td_phase(np.vstack([Qs[k][idx], extra[None, :]]), config.penalty, seed=rng)
        u = sol.v.v
        v[idx] = u[:-1] * np.conj(u[-1])
    if K == 1:
        beams = [mrt_beamformer(Qs[0], v, P_max)]
    else:
        beams = design_beams(Qs, v, P_max, eps, config.penalty.solver).ws
    gains = np.array([beam_gain(v, Qs[k], beams[k]) for k in range(K)])
    return v, beams, gains
