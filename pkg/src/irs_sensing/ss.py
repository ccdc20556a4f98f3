"""Simultaneous sensing: all targets are illuminated in one slot.

The design maximises the minimum beam gain subject to a total power budget
and a per-beam cap on the power leaking towards the other targets.  In the
lifted variables ``W_k = w_k w_k^H`` and ``V = v v^H`` every gain is the
bilinear form ``Tr(W_k Q_k^H V Q_k)``.  This is written as a difference of
convex quadratics and each side is linearised at the current point, giving a
convex inner approximation.  A rank-one penalty on ``V`` is handled by the
same schedule as the single-target phase design.

Two scalings keep the subproblems well conditioned.  The channels are
normalised to unit mean power and the budget to one.  Each bilinear term is
written as ``Tr((s W) (B / s))`` with ``s`` set from the two factors at the
reference point.  The bounds stay exact for every ``s > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import Beamformer, PhaseConfig, beam_gain
from .conic import (Affine, ConicProblem, FrobeniusSquare, HermitianVar, LinearConstraint,
                    QuadConstraint, ScalarVar, SolverSettings, solve)
from .td import (PenaltyConfig, PenaltyTrace, diag_constraints, penalty_loop, phase_from_lifted,
                 random_phase, rank_residual)


class RankError(ValueError):
    """Raised when a lifted matrix is not rank one."""


def effective_vectors(Qs, v):
    """Per-target effective channels ``h_k = Q_k^H v`` as rows of a ``K x M`` array."""
    return np.stack([np.asarray(Q).conj().T @ v for Q in Qs])


@dataclass
class BeamSDR:
    W: list
    R: float
    status: str


def solve_fixed_phase_sdr(H, P_max, eps, settings: SolverSettings = SolverSettings()):
    """Max-min beam gain with the phases fixed, as a linear SDP.

    Parameters
    ----------
    H : ndarray, shape (K, M)
        Effective channels ``h_k = Q_k^H v``.
    P_max : float
        Total transmit power.
    eps : float
        Leakage cap per beam; ``inf`` removes it.

    Returns
    -------
    BeamSDR
        Covariances ``W_k`` and the optimal minimum gain ``R``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    K, M = H.shape
    hs = max(float(np.max(np.sum(np.abs(H) ** 2, axis=1))), 1e-300)
    Hn = H / np.sqrt(hs)
    outer = [np.outer(h, h.conj()) for h in Hn]
    names = [f"W{k}" for k in range(K)]
    p = ConicProblem([HermitianVar(n, M) for n in names], [ScalarVar("R")],
                     objective=Affine({"R": 1.0}))
    p.add(LinearConstraint(Affine({n: np.eye(M) for n in names}, -1.0), "<=", "power"))
    eps_n = eps / (P_max * hs)
    for k in range(K):
        p.add(LinearConstraint(Affine({"R": 1.0, names[k]: -outer[k]}), "<=", f"gain{k}"))
        if np.isfinite(eps_n) and K > 1:
            leak = sum(outer[j] for j in range(K) if j != k)
            p.add(LinearConstraint(Affine({names[k]: leak}, -eps_n), "<=", f"leak{k}"))
    sol = solve(p, settings).raise_for_status()
    W = [sol.values[n] * P_max for n in names]
    return BeamSDR(W, sol.values["R"] * P_max * hs, sol.status.value)


def extract_rank_one(W, V=None, Q=None, h=None, tol=1e-6):
    """Rank-one beamformer with the same gain as a covariance ``W``.

    Computes ``w = (h^H W h)^{-1/2} W h`` with ``h = Q^H v``.  The gain
    ``|h^H w|^2`` equals ``h^H W h`` and the power reaching any other
    direction does not increase.  Either ``h`` or the pair ``(V, Q)`` must be
    given; ``V`` must be rank one.
    """
    W = np.asarray(W, dtype=complex)
    if h is None:
        V = np.asarray(V, dtype=complex)
        res = rank_residual(V)
        if res > tol * max(1.0, float(np.trace(V).real)):
            raise RankError(f"phase matrix is not rank one (residual {res:.3g})")
        lam, U = np.linalg.eigh((V + V.conj().T) / 2)
        v = U[:, -1] * np.sqrt(max(lam[-1], 0.0))
        h = np.asarray(Q).conj().T @ v
    Wh = W @ h
    q = float(np.real(np.vdot(h, Wh)))
    if q <= 0:
        return np.zeros(W.shape[0], dtype=complex)
    return Wh / np.sqrt(q)


def enforce_feasibility(ws, Qs, v, P_max, eps, targets=None):
    """Shrink beams that exceed the power budget or leakage cap.

    Interior-point solutions satisfy constraints only up to the solver
    tolerance.  Each beam is scaled down to meet its leakage cap and then
    all beams together to meet the budget.  Returns the scaled beams and the
    applied factors (1.0 when nothing was violated).
    """
    ws = [np.array(w, dtype=complex) for w in ws]
    K = len(ws)
    targets = list(range(K)) if targets is None else list(targets)
    factors = np.ones(K)
    if np.isfinite(eps):
        for i, k in enumerate(targets):
            leak = sum(beam_gain(v, Qs[j], ws[i]) for j in targets if j != k)
            if leak > eps:
                factors[i] = np.sqrt(eps / leak) * (1 - 1e-12)
                ws[i] = ws[i] * factors[i]
    power = sum(float(np.vdot(w, w).real) for w in ws)
    if power > P_max:
        f = np.sqrt(P_max / power) * (1 - 1e-12)
        ws = [w * f for w in ws]
        factors = factors * f
    return ws, factors


@dataclass
class BeamDesign:
    """Beams for a fixed phase vector with their gains and leakages."""

    ws: list
    gains: np.ndarray
    leakages: np.ndarray
    sdr_value: float
    rescale: np.ndarray


def design_beams(Qs, v, P_max, eps, settings: SolverSettings = SolverSettings()) -> BeamDesign:
    """Fixed-phase SDR, rank-one extraction and feasibility scaling."""
    H = effective_vectors(Qs, v)
    sdr = solve_fixed_phase_sdr(H, P_max, eps, settings)
    ws = [extract_rank_one(W, h=h) for W, h in zip(sdr.W, H)]
    ws, factors = enforce_feasibility(ws, Qs, v, P_max, eps)
    K = len(Qs)
    gains = np.array([beam_gain(v, Qs[k], ws[k]) for k in range(K)])
    leaks = np.array([sum(beam_gain(v, Qs[j], ws[k]) for j in range(K) if j != k) for k in range(K)])
    return BeamDesign(ws, gains, leaks, sdr.R, factors)


@dataclass(frozen=True)
class SsConfig:
    """Settings of the simultaneous-sensing solver.

    ``balance_factor`` scales the balancing scalar of the bilinear splits
    (larger values let the phases move further per iteration).
    ``warm_rounds`` bounds the alternating rounds used to initialise the
    joint iterations (0 starts them from the random phases directly) and
    ``warm_tol`` is the relative improvement that ends them.
    """

    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    seed: int = 0
    balance_factor: float = 1.0
    warm_rounds: int = 50
    warm_tol: float = 1e-4


@dataclass
class SsSolution:
    v: PhaseConfig
    beams: list
    gains: np.ndarray
    leakages: np.ndarray
    status: str
    trace: PenaltyTrace
    rank_residual: float
    rescale: np.ndarray
    initial_min_gain: float = float("nan")

    @property
    def min_gain(self) -> float:
        return float(np.min(self.gains))


def _balance(Wr, Br, factor=1.0):
    """Balancing scalar ``s`` of the split ``Tr(W B) = Tr((s W)(B / s))``.

    ``s^2`` is ``factor`` times the ratio ``||B_r|| / ||W_r||`` of the
    reference norms.
    """
    a, b = np.linalg.norm(Wr), np.linalg.norm(Br)
    delta = 1e-9 * max(a, b, 1e-300)
    return float(np.sqrt(factor * (b + delta) / (a + delta)))


def _ss_problem(Qs, eps_n, refs, u, rho, balance):
    """Convex inner approximation around the reference point ``refs``.

    With ``dW = W - W_r`` and ``dB = B - B_r`` the bilinear term satisfies
    ``Tr(W B) = lin + Tr(dW dB)`` where ``lin`` is its linearisation.  The
    gains use the minorant ``lin - (s^2 ||dW||^2 + ||dB||^2 / s^2) / 2`` and
    the leakage the majorant ``lin + ||s dW + dB / s||^2 / 2``.  Both follow
    from writing ``Tr(W B)`` as a difference of squared norms and are tight
    at the reference point.
    """
    K, N, M = Qs.shape
    Wn = [f"W{k}" for k in range(K)]
    V_r = refs["V"]
    W_r = [refs[n] for n in Wn]
    p = ConicProblem([HermitianVar(n, M) for n in Wn] + [HermitianVar("V", N)],
                     [ScalarVar("R")],
                     objective=Affine({"R": 1.0, "V": rho * np.outer(u, u.conj())}, -rho * N))
    p.add(LinearConstraint(Affine({n: np.eye(M) for n in Wn}, -1.0), "<=", "power"))
    p.add(*diag_constraints(N))
    B_r = [Q.conj().T @ V_r @ Q for Q in Qs]

    def linearised(k, j):
        # Tr(W_r B_r) + Tr(dW B_r) + Tr(W_r dB) = Tr(W B_r) + Tr(W_r B) - Tr(W_r B_r)
        Qj = Qs[j]
        return Affine({Wn[k]: B_r[j], "V": Qj @ W_r[k] @ Qj.conj().T},
                      -float(np.real(np.trace(W_r[k] @ B_r[j]))))

    def separate(k, j):
        s = _balance(W_r[k], B_r[j], balance)
        return ((0.5 * s * s, FrobeniusSquare.of((Wn[k], None, 1.0), offset=W_r[k])),
                (0.5 / (s * s), FrobeniusSquare.of(("V", Qs[j], 1.0), offset=B_r[j])))

    def joint(k, j):
        s = _balance(W_r[k], B_r[j], balance)
        return ((0.5, FrobeniusSquare.of((Wn[k], None, s), ("V", Qs[j], 1.0 / s),
                                         offset=s * W_r[k] + B_r[j] / s)),)

    for k in range(K):
        p.add(QuadConstraint(Affine({"R": 1.0}) - linearised(k, k), separate(k, k), f"gain{k}"))
        if K > 1 and np.isfinite(eps_n):
            expr, quads = Affine({}, -eps_n), ()
            for j in range(K):
                if j != k:
                    expr = expr + linearised(k, j)
                    quads = quads + joint(k, j)
            p.add(QuadConstraint(expr, quads, f"leak{k}"))
    return p


def lifted_beam_step(Qs, V, eps_n, settings=SolverSettings()):
    """Optimal covariances ``W_k`` for a fixed lifted phase matrix ``V``."""
    K, _, M = Qs.shape
    names = [f"W{k}" for k in range(K)]
    B = [Q.conj().T @ V @ Q for Q in Qs]
    p = ConicProblem([HermitianVar(n, M) for n in names], [ScalarVar("R")],
                     objective=Affine({"R": 1.0}))
    p.add(LinearConstraint(Affine({n: np.eye(M) for n in names}, -1.0), "<=", "power"))
    for k in range(K):
        p.add(LinearConstraint(Affine({"R": 1.0, names[k]: -B[k]}), "<=", f"gain{k}"))
        if K > 1 and np.isfinite(eps_n):
            p.add(LinearConstraint(Affine({names[k]: sum(B[j] for j in range(K) if j != k)},
                                          -eps_n), "<=", f"leak{k}"))
    sol = solve(p, settings).raise_for_status()
    return [sol.values[n] for n in names], sol.objective


def lifted_phase_step(Qs, W, eps_n, settings=SolverSettings()):
    """Optimal lifted phase matrix ``V`` for fixed covariances ``W_k``."""
    K, N, _ = Qs.shape
    p = ConicProblem([HermitianVar("V", N)], [ScalarVar("R")], objective=Affine({"R": 1.0}))
    p.add(*diag_constraints(N))
    for k in range(K):
        p.add(LinearConstraint(Affine({"R": 1.0, "V": -Qs[k] @ W[k] @ Qs[k].conj().T}), "<=",
                               f"gain{k}"))
        if K > 1 and np.isfinite(eps_n):
            leak = sum(Qs[j] @ W[k] @ Qs[j].conj().T for j in range(K) if j != k)
            p.add(LinearConstraint(Affine({"V": leak}, -eps_n), "<=", f"leak{k}"))
    sol = solve(p, settings).raise_for_status()
    return sol.values["V"], sol.objective


def alternating_warm_start(Qs, V, W, eps_n, rounds, tol, settings=SolverSettings()):
    """Alternate exact phase and beam steps in the lifted domain.

    Every step maximises the minimum gain over one block with the other
    fixed, so the objective never decreases.  Returns ``(V, W, R, history)``.
    """
    history = []
    R = -np.inf
    for _ in range(rounds):
        V, _ = lifted_phase_step(Qs, W, eps_n, settings)
        W, R_new = lifted_beam_step(Qs, V, eps_n, settings)
        history.append(R_new)
        done = R_new - R <= tol * max(1.0, abs(R_new))
        R = R_new
        if done:
            break
    return V, W, R, history


def channel_scale(Qs) -> float:
    """Mean squared magnitude of the cascaded channel entries."""
    return max(float(np.mean(np.abs(np.asarray(Qs)) ** 2)), 1e-300)


def solve_ss(Qs, P_max, eps, config: SsConfig = SsConfig(), v0=None) -> SsSolution:
    """Joint beamforming and phase design for simultaneous sensing.

    Parameters
    ----------
    Qs : ndarray, shape (K, N, M)
        Cascaded channels of the targets.
    P_max : float
        Total transmit power.
    eps : float
        Leakage cap per beam (``inf`` ignores interference).
    config : SsConfig
    v0 : array_like, optional
        Initial unit-modulus phases; random (from ``config.seed``) otherwise.

    Returns
    -------
    SsSolution
        Unit-modulus phases and rank-one beams evaluated directly.  The
        beams come from the fixed-phase SDR at the final phases followed by
        rank-one extraction.  The initial phases are kept if they do better.
    """
    Qs = np.asarray(Qs, dtype=complex)
    if Qs.ndim != 3:
        raise ValueError("Qs must have shape (K, N, M)")
    K, N, M = Qs.shape
    c2 = channel_scale(Qs)
    Qn = Qs / np.sqrt(c2)
    eps_n = eps / (c2 * P_max)
    v = random_phase(N, config.seed) if v0 is None else np.asarray(v0, dtype=complex)

    settings = config.penalty.solver
    init = design_beams(Qs, v, P_max, eps, settings)
    V = np.outer(v, v.conj())
    W, R0 = lifted_beam_step(Qn, V, eps_n, settings)
    if config.warm_rounds > 0:
        V, W, R0, _ = alternating_warm_start(Qn, V, W, eps_n, config.warm_rounds,
                                             config.warm_tol, settings)
    refs = {f"W{k}": W[k] for k in range(K)}
    refs["V"] = V
    rho0 = config.penalty.rho0
    if rho0 is None:
        rho0 = 0.01 * max(R0, 1e-12) / N

    def build(vals, u, rho):
        return _ss_problem(Qn, eps_n, vals, u, rho, config.balance_factor)

    def track(values):
        return {"R": values["R"]}

    res = penalty_loop(build, refs, N, rho0, config.penalty, on_iterate=track)
    v_fin = phase_from_lifted(res.values["V"])
    final = design_beams(Qs, v_fin, P_max, eps, config.penalty.solver)
    if np.min(init.gains) > np.min(final.gains):
        v_fin, final = v, init
    return SsSolution(PhaseConfig(v_fin), [Beamformer(w) for w in final.ws], final.gains,
                      final.leakages, res.status, res.trace, res.rank_residual, final.rescale,
                      float(np.min(init.gains)))
