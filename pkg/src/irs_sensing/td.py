"""Single-target phase design, used for time-division sensing.

Each target gets its own time slot.  The BS beamformer is maximum-ratio
transmission, so the phase design maximises ``||Q^H v||^2`` over unit-modulus
``v``.  Lifting ``V = v v^H`` gives a linear SDP with the rank-one
requirement handled by a penalty: ``Tr(V) - ||V||_2 = 0`` holds exactly for
rank-one PSD ``V``.  The penalty is linearised at the current reference point
and its weight grows geometrically until the rank residual falls below a
threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import PhaseConfig, Beamformer, beam_gain
from .conic import (Affine, ConicProblem, HermitianVar, LinearConstraint, SolverSettings,
                    solve)


@dataclass(frozen=True)
class PenaltyConfig:
    """Schedule of the rank-one penalty.

    Parameters
    ----------
    rho0 : float, optional
        Initial penalty weight (the reciprocal of the penalty factor).  By
        default the penalty starts at about 1% of the initial objective.
    growth : float
        Factor by which the penalty factor shrinks after every outer round
        (the weight grows by ``1 / growth``); must lie in ``(0, 1)``.
    eps_inner : float
        Relative change of the inner objective that ends an inner round.
    eps_rank : float
        Rank residual ``Tr(V) - ||V||_2`` that ends the outer loop.
    """

    rho0: float | None = None
    growth: float = 0.5
    eps_inner: float = 1e-3
    eps_rank: float = 1e-6
    max_inner: int = 30
    max_outer: int = 40
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if not 0.0 < self.growth < 1.0:
            raise ValueError("growth must lie in (0, 1)")
        if self.rho0 is not None and not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        if not (self.eps_inner > 0 and self.eps_rank > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class PenaltyTrace:
    """Per-iteration record of a penalty run."""

    rows: list = field(default_factory=list)

    def append(self, outer, inner, rho, objective, rank_residual, extra=None):
        row = {"outer": outer, "inner": inner, "rho": rho, "objective": objective,
               "rank_residual": rank_residual}
        row.update(extra or {})
        self.rows.append(row)

    def objectives(self, outer=None):
        return [r["objective"] for r in self.rows if outer is None or r["outer"] == outer]

    def to_csv(self, path):
        if not self.rows:
            return
        keys = list(self.rows[0])
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=keys)
            wr.writeheader()
            wr.writerows(self.rows)


def dominant_eigvec(V, tol=1e-9):
    """Dominant eigenpair of Hermitian ``V``.

    Returns ``(value, vector, degenerate)``.  If the top eigenvalue is
    repeated within ``tol`` (relative), the first eigenvector returned by the
    factorisation among the tied ones is used and ``degenerate`` is True.
    """
    lam, U = np.linalg.eigh((V + V.conj().T) / 2)
    top = lam[-1]
    tied = np.flatnonzero(lam >= top - tol * max(abs(top), 1.0))
    j = tied[0] if tied.size > 1 else lam.size - 1
    return float(lam[j]), U[:, j], tied.size > 1


def rank_residual(V) -> float:
    """``Tr(V) - ||V||_2``; zero exactly for rank-one PSD ``V``."""
    V = (V + V.conj().T) / 2
    return float(np.trace(V).real - np.linalg.eigvalsh(V)[-1])


def project_unit_modulus(x, fallback=None):
    """Element-wise phase of ``x``; zero entries take the fallback phase (or 1)."""
    x = np.asarray(x, dtype=complex)
    mag = np.abs(x)
    out = np.ones_like(x) if fallback is None else np.asarray(fallback, dtype=complex).copy()
    nz = mag > 1e-12 * max(float(mag.max(initial=0.0)), 1e-300)
    out[nz] = x[nz] / mag[nz]
    return out


def phase_from_lifted(V):
    """Unit-modulus phase vector from the dominant eigenvector of ``V``."""
    _, u, _ = dominant_eigvec(V)
    return project_unit_modulus(u)


def random_phase(N, rng):
    rng = np.random.default_rng(rng)
    return np.exp(2j * np.pi * rng.uniform(size=N))


def diag_constraints(N, name="V"):
    cons = []
    for n in range(N):
        E = np.zeros((N, N))
        E[n, n] = 1.0
        cons.append(LinearConstraint(Affine({name: E}, -1.0), "==", f"diag{n}"))
    return cons


@dataclass
class PenaltyResult:
    values: dict
    status: str
    trace: PenaltyTrace
    rank_residual: float
    outer_iterations: int


def penalty_loop(make_problem: Callable, values0: dict, N: int, rho0: float,
                 config: PenaltyConfig, name="V", on_iterate: Callable | None = None):
    """Run the rank-one penalty scheme around a convex subproblem builder.

    ``make_problem(values, u, rho)`` returns a :class:`ConicProblem` whose
    objective already subtracts ``rho * (N - u^H V u)`` and whose solution
    contains the lifted matrix under ``name``.  ``values`` are the reference
    values of the previous iterate.  The inner loop repeats until the
    objective changes by less than ``eps_inner`` (relative); the outer loop
    raises ``rho`` until the rank residual is below ``eps_rank``.  A failed
    subproblem after the first ends the run at the last solved iterate with
    status ``'stalled'``.
    """
    values = dict(values0)
    trace = PenaltyTrace()
    rho = rho0
    status = "max-iterations"
    outer = 0
    stalled = False
    for outer in range(config.max_outer):
        prev = None
        for inner in range(config.max_inner):
            _, u, _ = dominant_eigvec(values[name])
            sol = solve(make_problem(values, u, rho), config.solver)
            if not sol.ok:
                if not trace.rows:
                    sol.raise_for_status()
                # Keep the last solved iterate; it is feasible for the current subproblem.
                stalled = True
                break
            values = sol.values
            obj = sol.objective
            res = rank_residual(values[name])
            extra = on_iterate(values) if on_iterate else None
            trace.append(outer, inner, rho, obj, res, extra)
            if prev is not None and abs(obj - prev) <= config.eps_inner * max(1.0, abs(obj)):
                break
            prev = obj
        if rank_residual(values[name]) <= config.eps_rank:
            status = "converged"
            break
        if stalled:
            status = "stalled"
            break
        rho /= config.growth
    return PenaltyResult(values, status, trace, rank_residual(values[name]), outer + 1)


@dataclass
class PhaseSolution:
    """Result of the single-target phase design."""

    v: PhaseConfig
    value: float
    status: str
    trace: PenaltyTrace
    rank_residual: float
    degenerate: bool = False


def _td_problem(C, N, u, rho):
    p = ConicProblem([HermitianVar("V", N)],
                     objective=Affine({"V": C + rho * np.outer(u, u.conj())}, -rho * N))
    return p.add(*diag_constraints(N))


def solve_td_phase(Q, config: PenaltyConfig = PenaltyConfig(), seed=0, v0=None) -> PhaseSolution:
    """Maximise ``||Q^H v||^2`` over unit-modulus ``v``.

    Parameters
    ----------
    Q : ndarray, shape (N, M)
        Cascaded channel of the target.
    config : PenaltyConfig
    seed : int or Generator
        Seeds the random initial phase when ``v0`` is not given.
    v0 : array_like, optional
        Initial unit-modulus phase vector.

    Returns
    -------
    PhaseSolution
        The phase vector is the unit-modulus projection of the dominant
        eigenvector; among all iterates the best projected candidate is kept.
    """
    Q = np.asarray(Q, dtype=complex)
    N = Q.shape[0]
    if N == 0:
        raise ValueError("empty IRS")
    scale = max(np.linalg.norm(Q) ** 2 / N, 1e-300)
    C = Q @ Q.conj().T / scale
    C = (C + C.conj().T) / 2
    v = random_phase(N, seed) if v0 is None else np.asarray(v0, dtype=complex)
    V0 = np.outer(v, v.conj())
    obj0 = float(np.real(v.conj() @ C @ v))
    rho0 = config.rho0 if config.rho0 is not None else 0.01 * max(obj0, 1e-12) / N

    best = {"v": v, "value": obj0}

    def track(values):
        cand = phase_from_lifted(values["V"])
        val = float(np.real(cand.conj() @ C @ cand))
        if val > best["value"]:
            best.update(v=cand, value=val)
        return {"projected_value": val * scale}

    res = penalty_loop(lambda vals, u, rho: _td_problem(C, N, u, rho), {"V": V0}, N, rho0,
                       config, on_iterate=track)
    _, _, degenerate = dominant_eigvec(res.values["V"])
    return PhaseSolution(PhaseConfig(best["v"]), best["value"] * scale, res.status, res.trace,
                         res.rank_residual, degenerate)


def mrt_beamformer(Q, v, P_max):
    """Maximum-ratio transmission ``sqrt(P) Q^H v / ||Q^H v||``."""
    h = np.asarray(Q).conj().T @ np.asarray(v)
    nrm = np.linalg.norm(h)
    if nrm == 0:
        raise ValueError("zero effective channel")
    return np.sqrt(P_max) * h / nrm


def sdr_upper_bound(Q, settings: SolverSettings = SolverSettings()) -> float:
    """Upper bound on ``max ||Q^H v||^2`` from the semidefinite relaxation."""
    Q = np.asarray(Q, dtype=complex)
    N = Q.shape[0]
    scale = max(np.linalg.norm(Q) ** 2 / N, 1e-300)
    C = Q @ Q.conj().T / scale
    p = ConicProblem([HermitianVar("V", N)], objective=Affine({"V": (C + C.conj().T) / 2}))
    p.add(*diag_constraints(N))
    return solve(p, settings).raise_for_status().objective * scale


@dataclass
class TdTargetResult:
    v: PhaseConfig
    w: Beamformer
    gain: float
    status: str


def td_scheme(Qs, P_max, config: PenaltyConfig = PenaltyConfig(), seed=0):
    """Time-division sensing: one phase design and MRT beam per target."""
    ss = np.random.SeedSequence(seed)
    out = []
    for Q, child in zip(Qs, ss.spawn(len(Qs))):
        ph = solve_td_phase(Q, config, seed=np.random.default_rng(child))
        w = mrt_beamformer(Q, ph.v.v, P_max)
        out.append(TdTargetResult(ph.v, Beamformer(w), beam_gain(ph.v.v, Q, w), ph.status))
    return out
