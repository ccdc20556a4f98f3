"""Closed-form beams and power split for simultaneous sensing of two targets.

For fixed phases the beam of target ``k`` sees effective channel ``h_k`` and
may leak at most ``eps`` towards the other target ``j``.  With beam power
``p`` the optimal beam is maximum-ratio transmission when its leakage
``p |h_j^H h_k|^2 / ||h_k||^2`` is within the cap.  Otherwise it is

    w = rho1 h_k + rho2 h_perp,  h_perp = (I - h_j h_j^H / ||h_j||^2) h_k,

which meets the cap with equality (``rho1 = sqrt(eps) / |h_j^H h_k|``) and
spends the remaining power along ``h_perp``.  The max-min power split
equalises the two gains, found by a bracketing root search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .channel import Beamformer, PhaseConfig, beam_gain
from .conic import Affine, ConicProblem, HermitianVar, LinearConstraint, ScalarVar
from .ss import effective_vectors
from .td import PenaltyConfig, diag_constraints, penalty_loop, phase_from_lifted, random_phase


class InfeasibleGeometryError(ValueError):
    """The two effective channels are collinear, so no beam can both reach
    one target and respect the leakage cap at the other."""


MRT = "mrt"
CONSTRAINED = "constrained"


def _parts(h_k, h_j):
    h_k = np.asarray(h_k, dtype=complex)
    h_j = np.asarray(h_j, dtype=complex)
    nk2 = float(np.vdot(h_k, h_k).real)
    nj2 = float(np.vdot(h_j, h_j).real)
    if nk2 == 0:
        raise ValueError("zero effective channel")
    cross = np.vdot(h_j, h_k)  # h_j^H h_k
    perp = h_k - h_j * (cross / nj2) if nj2 > 0 else h_k.copy()
    return h_k, nk2, cross, perp, float(np.vdot(perp, perp).real)


def branch_of(h_k, h_j, p, eps) -> str:
    """Which closed-form branch applies at beam power ``p``."""
    _, nk2, cross, _, _ = _parts(h_k, h_j)
    return MRT if p * abs(cross) ** 2 / nk2 <= eps else CONSTRAINED


def closed_form_w(h_k, h_j, p, eps):
    """Optimal beam towards ``h_k`` with power ``p`` and leakage cap ``eps`` at ``h_j``.

    Returns
    -------
    w : ndarray
    branch : {'mrt', 'constrained'}

    Raises
    ------
    InfeasibleGeometryError
        If the cap binds and ``h_k`` is collinear with ``h_j``.
    """
    if p < 0 or eps < 0:
        raise ValueError("power and leakage cap must be non-negative")
    h_k, nk2, cross, perp, np2 = _parts(h_k, h_j)
    if p * abs(cross) ** 2 / nk2 <= eps:
        return np.sqrt(p) * h_k / np.sqrt(nk2), MRT
    if np2 <= 1e-24 * nk2:
        raise InfeasibleGeometryError("effective channels are collinear")
    rho1 = np.sqrt(eps) / abs(cross)
    disc = rho1 ** 2 * np2 ** 2 - np2 * (rho1 ** 2 * nk2 - p)
    rho2 = (-rho1 * np2 + np.sqrt(max(disc, 0.0))) / np2
    return rho1 * h_k + rho2 * perp, CONSTRAINED


def closed_form_gain(h_k, h_j, p, eps) -> float:
    """Gain ``|h_k^H w|^2`` of :func:`closed_form_w` without forming the beam."""
    h_k, nk2, cross, perp, np2 = _parts(h_k, h_j)
    if p * abs(cross) ** 2 / nk2 <= eps:
        return p * nk2
    if np2 <= 1e-24 * nk2:
        raise InfeasibleGeometryError("effective channels are collinear")
    rho1 = np.sqrt(eps) / abs(cross)
    par2 = nk2 - np2  # squared norm of the component along h_j
    rest = max(p - rho1 ** 2 * par2, 0.0)
    return (rho1 * par2 + np.sqrt(np2) * np.sqrt(rest)) ** 2


@dataclass
class PowerSplit:
    p: tuple
    gains: tuple
    branches: tuple
    bracketed: bool


def power_split(h1, h2, P_max, eps, xtol=1e-15) -> PowerSplit:
    """Split ``P_max`` between the two beams so that their gains are equal.

    Each gain grows with its own power, so the max-min split is the root of
    ``g1(p) - g2(P_max - p)``.  If no sign change exists (a degenerate
    channel) the better boundary split is returned with ``bracketed=False``.
    """
    def f(p1):
        return closed_form_gain(h1, h2, p1, eps) - closed_form_gain(h2, h1, P_max - p1, eps)

    lo, hi = f(0.0), f(P_max)
    if lo < 0 < hi:
        p1 = brentq(f, 0.0, P_max, xtol=xtol * max(P_max, 1e-300), rtol=4 * np.finfo(float).eps,
                    maxiter=500)
        bracketed = True
    else:
        p1 = P_max if lo >= 0 and hi >= 0 and f(P_max) <= f(0.0) else 0.0
        bracketed = lo == 0 or hi == 0
    p = (p1, P_max - p1)
    gains = (closed_form_gain(h1, h2, p[0], eps), closed_form_gain(h2, h1, p[1], eps))
    branches = (branch_of(h1, h2, p[0], eps), branch_of(h2, h1, p[1], eps))
    return PowerSplit(p, gains, branches, bracketed)


def two_target_beams(h1, h2, P_max, eps):
    """Max-min beams for fixed phases: power split plus closed-form directions."""
    split = power_split(h1, h2, P_max, eps)
    w1, _ = closed_form_w(h1, h2, split.p[0], eps)
    w2, _ = closed_form_w(h2, h1, split.p[1], eps)
    return (w1, w2), split


@dataclass(frozen=True)
class TwoTargetConfig:
    """Alternating optimisation settings.

    ``tol`` is the relative change of the minimum gain that ends the loop.
    """

    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    max_rounds: int = 30
    tol: float = 1e-3
    seed: int = 0


@dataclass
class TwoTargetSolution:
    v: PhaseConfig
    beams: list
    gains: np.ndarray
    leakages: np.ndarray
    powers: tuple
    branches: tuple
    history: list
    status: str

    @property
    def min_gain(self) -> float:
        return float(np.min(self.gains))


def _phase_problem(Qs, ws, eps, u, rho):
    """Max-min gain over the lifted phases for fixed beams (normalised data)."""
    N = Qs.shape[1]
    p = ConicProblem([HermitianVar("V", N)], [ScalarVar("R")],
                     objective=Affine({"R": 1.0, "V": rho * np.outer(u, u.conj())}, -rho * N))
    p.add(*diag_constraints(N))
    for k in range(2):
        j = 1 - k
        gk = Qs[k] @ ws[k]
        gj = Qs[j] @ ws[k]
        p.add(LinearConstraint(Affine({"R": 1.0, "V": -np.outer(gk, gk.conj())}), "<=", f"gain{k}"))
        if np.isfinite(eps):
            p.add(LinearConstraint(Affine({"V": np.outer(gj, gj.conj())}, -eps), "<=", f"leak{k}"))
    return p


def solve_two_target(Qs, P_max, eps, config: TwoTargetConfig = TwoTargetConfig(), v0=None):
    """Alternate closed-form beams and penalised phase design for two targets.

    A phase update is kept only if the closed-form beams at the new phases
    raise the minimum gain, so the recorded objective never decreases.
    """
    Qs = np.asarray(Qs, dtype=complex)
    if Qs.shape[0] != 2:
        raise ValueError("exactly two targets are required")
    N = Qs.shape[1]
    v = random_phase(N, config.seed) if v0 is None else np.asarray(v0, dtype=complex)
    c2 = max(float(np.mean(np.abs(Qs) ** 2)), 1e-300)
    Qn = Qs / np.sqrt(c2)
    eps_n = eps / (c2 * P_max)

    def beams_at(vv):
        H = effective_vectors(Qn, vv)
        return two_target_beams(H[0], H[1], 1.0, eps_n)

    ws, split = beams_at(v)
    obj = min(split.gains)
    history = [obj * c2 * P_max]
    status = "max-iterations"
    for _ in range(config.max_rounds):
        rho0 = config.penalty.rho0 or 0.01 * max(obj, 1e-12) / N
        res = penalty_loop(lambda vals, u, rho: _phase_problem(Qn, ws, eps_n, u, rho),
                           {"V": np.outer(v, v.conj())}, N, rho0, config.penalty)
        v_new = phase_from_lifted(res.values["V"])
        ws_new, split_new = beams_at(v_new)
        obj_new = min(split_new.gains)
        if obj_new <= obj:
            status = "converged"
            break
        gain = obj_new - obj
        v, ws, split, obj = v_new, ws_new, split_new, obj_new
        history.append(obj * c2 * P_max)
        if gain <= config.tol * obj:
            status = "converged"
            break

    scale = np.sqrt(P_max)
    beams = [w * scale for w in ws]
    gains = np.array([beam_gain(v, Qs[k], beams[k]) for k in range(2)])
    leaks = np.array([beam_gain(v, Qs[1 - k], beams[k]) for k in range(2)])
    return TwoTargetSolution(PhaseConfig(v), [Beamformer(w) for w in beams], gains, leaks,
                             tuple(p * P_max for p in split.p), split.branches, history, status)
