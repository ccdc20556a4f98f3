"""Complex semidefinite problems and their solution through real embeddings.

A :class:`ConicProblem` is stated over Hermitian PSD matrices, bounded real
scalars and complex vectors with element-wise modulus bounds.  Affine
expressions are sums of ``Re Tr(A X)``, ``c s`` and ``Re(g^H x)`` terms.  Two
kinds of convex nonlinearity are supported: squared Frobenius norms of
congruences ``sum_i c_i T_i^H X_i T_i`` and squared norms ``||B^H x||^2``.
Linear matrix inequalities over the matrix and scalar variables are also
available.

Two solution routes exist:

``dual``
    Purely linear problems (no vectors, quadratic terms or LMIs) are passed
    to CVXOPT's SDP solver in their Lagrange dual form.  The dual has one
    variable per linear constraint, which keeps problems with large matrices
    and few constraints cheap.
``primal``
    Everything else is assembled directly into a real cone program for the
    Clarabel interior-point solver.  Hermitian matrices are parameterised by
    their ``n^2`` real coordinates and squared norms enter through
    rotated second-order cones.

On the dual route each complex Hermitian ``X`` of size ``n`` is represented
by a real symmetric ``Y`` of size ``2n``.  When
``Y = [[Re X, -Im X], [Im X, Re X]]``, the identity
``Re Tr(A X) = <emb(A), Y> / 2`` holds.  ``X`` is recovered by block
averaging, which keeps every linear functional and preserves PSD-ness.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Union

import numpy as np

Number = Union[int, float]


class Status(str, Enum):
    OPTIMAL = "optimal"
    NEAR_OPTIMAL = "near-optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical-failure"


class ConicSolveError(RuntimeError):
    """Raised when a conic solve ends without a usable solution."""

    def __init__(self, status, message=""):
        super().__init__(f"{status.value}: {message}" if message else status.value)
        self.status = status


def complex_to_real_embedding(H, tol=1e-10):
    """Real symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]`` of a Hermitian matrix."""
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expected a square matrix")
    if np.max(np.abs(H - H.conj().T), initial=0.0) > tol * max(1.0, np.max(np.abs(H), initial=0.0)):
        raise ValueError("matrix is not Hermitian")
    return _embed(H)


def _embed(A):
    A = np.asarray(A, dtype=complex)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def real_to_complex(Y):
    """Inverse of :func:`complex_to_real_embedding` with block averaging."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0] // 2
    Y = (Y + Y.T) / 2
    re = (Y[:n, :n] + Y[n:, n:]) / 2
    im = (Y[n:, :n] - Y[:n, n:]) / 2
    X = re + 1j * im
    return (X + X.conj().T) / 2


# --------------------------------------------------------------------------
# problem description

@dataclass(frozen=True)
class HermitianVar:
    """Hermitian positive semidefinite matrix variable."""
    name: str
    dim: int


@dataclass(frozen=True)
class ScalarVar:
    """Real scalar variable with optional box bounds."""
    name: str
    lower: float = -np.inf
    upper: float = np.inf


@dataclass(frozen=True)
class VectorVar:
    """Complex vector variable, ``|x_n| <= max_modulus`` if a bound is given."""
    name: str
    dim: int
    max_modulus: float | None = None


class Affine:
    """Real affine expression ``sum Re Tr(A X) + sum c s + sum Re(g^H x) + const``.

    ``terms`` maps a variable name to its coefficient: a Hermitian matrix for
    matrix variables, a real number for scalars, a complex vector for vectors.
    """

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping | None = None, const: Number = 0.0):
        self.terms = dict(terms or {})
        self.const = float(const)

    @classmethod
    def var(cls, name, coef=1.0):
        return cls({name: coef})

    def __add__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return Affine(self.terms, self.const + float(other))
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out[k] + c if k in out else c
        return Affine(out, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        s = float(s)
        return Affine({k: c * s for k, c in self.terms.items()}, self.const * s)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Affine({sorted(self.terms)}, const={self.const:g})"


@dataclass(frozen=True)
class FrobeniusSquare:
    """``|| sum_i c_i T_i^H X_i T_i - D ||_F^2``; ``T_i = None`` means identity."""
    parts: tuple
    offset: np.ndarray | None = None

    @classmethod
    def of(cls, *parts, offset=None):
        """Each part is ``(name, T, weight)``; ``offset`` is ``D``."""
        return cls(tuple((n, None if T is None else np.asarray(T, dtype=complex), float(c))
                         for n, T, c in parts),
                   None if offset is None else np.asarray(offset, dtype=complex))


@dataclass(frozen=True)
class NormSquare:
    """``||B^H x||^2`` for a complex vector variable ``x``."""
    name: str
    B: np.ndarray


@dataclass(frozen=True)
class LinearConstraint:
    """``expr <sense> 0`` with sense one of ``'<='``, ``'>='``, ``'=='``."""
    expr: Affine
    sense: str
    label: str = ""

    def __post_init__(self):
        if self.sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad constraint sense {self.sense!r}")


@dataclass(frozen=True)
class QuadConstraint:
    """``expr + sum_j c_j q_j <= 0`` with ``c_j >= 0`` and convex ``q_j``."""
    expr: Affine
    quads: tuple
    label: str = ""

    def __post_init__(self):
        if any(c < 0 for c, _ in self.quads):
            raise ValueError("quadratic weights must be non-negative")


@dataclass(frozen=True)
class LmiConstraint:
    """``sum_i c_i X_i + sum_j s_j A_j + A_0 <= 0`` in the PSD order.

    ``matrix_terms`` holds ``(name, c_i)`` pairs, ``scalar_terms`` holds
    ``(name, A_j)`` pairs with Hermitian ``A_j`` and ``const`` is ``A_0``.
    """
    dim: int
    matrix_terms: tuple = ()
    scalar_terms: tuple = ()
    const: np.ndarray | None = None
    label: str = ""


@dataclass
class ConicProblem:
    """Maximize an affine objective over the declared variables."""

    hermitian: tuple = ()
    scalars: tuple = ()
    vectors: tuple = ()
    objective: Affine = field(default_factory=Affine)
    constraints: list = field(default_factory=list)

    def __post_init__(self):
        self.hermitian = tuple(self.hermitian)
        self.scalars = tuple(self.scalars)
        self.vectors = tuple(self.vectors)
        self.constraints = list(self.constraints)

    def add(self, *cons):
        self.constraints.extend(cons)
        return self

    @property
    def kinds(self) -> dict:
        out = {}
        for v in self.hermitian:
            out[v.name] = ("hermitian", v)
        for v in self.scalars:
            out[v.name] = ("scalar", v)
        for v in self.vectors:
            out[v.name] = ("vector", v)
        return out

    @property
    def is_linear(self) -> bool:
        return not self.vectors and all(isinstance(c, LinearConstraint) for c in self.constraints)

    def validate(self):
        kinds = self.kinds
        if len(kinds) != len(self.hermitian) + len(self.scalars) + len(self.vectors):
            raise ValueError("duplicate variable names")

        def check_affine(e: Affine):
            for name, c in e.terms.items():
                if name not in kinds:
                    raise ValueError(f"unknown variable {name!r}")
                kind, var = kinds[name]
                if kind == "hermitian":
                    c = np.asarray(c)
                    if c.shape != (var.dim, var.dim):
                        raise ValueError(f"coefficient of {name!r} has shape {c.shape}")
                    complex_to_real_embedding(c, tol=1e-8)
                elif kind == "vector" and np.shape(c) != (var.dim,):
                    raise ValueError(f"coefficient of {name!r} has shape {np.shape(c)}")

        check_affine(self.objective)
        for con in self.constraints:
            if isinstance(con, (LinearConstraint, QuadConstraint)):
                check_affine(con.expr)
            if isinstance(con, LmiConstraint):
                for name, A in con.scalar_terms:
                    if kinds.get(name, ("",))[0] != "scalar":
                        raise ValueError(f"{name!r} is not a scalar variable")
                    complex_to_real_embedding(A, tol=1e-8)
                for name, _ in con.matrix_terms:
                    if kinds.get(name, ("",))[0] != "hermitian" or kinds[name][1].dim != con.dim:
                        raise ValueError(f"{name!r} does not fit an LMI of size {con.dim}")

    # ---------------------------------------------------------------- JSON
    def to_dict(self) -> dict:
        def enc(c):
            c = np.asarray(c)
            if np.iscomplexobj(c) or c.ndim > 0:
                c = np.asarray(c, dtype=complex)
                return {"re": c.real.tolist(), "im": c.imag.tolist()}
            return float(c)

        def aff(e):
            return {"terms": {k: enc(c) for k, c in e.terms.items()}, "const": e.const}

        cons = []
        for c in self.constraints:
            if isinstance(c, LinearConstraint):
                cons.append({"type": "linear", "sense": c.sense, "expr": aff(c.expr), "label": c.label})
            elif isinstance(c, QuadConstraint):
                quads = []
                for w, q in c.quads:
                    if isinstance(q, FrobeniusSquare):
                        quads.append({"weight": w, "frobenius": [
                            {"var": n, "T": None if T is None else enc(T), "scale": s}
                            for n, T, s in q.parts],
                            "offset": None if q.offset is None else enc(q.offset)})
                    else:
                        quads.append({"weight": w, "norm": {"var": q.name, "B": enc(q.B)}})
                cons.append({"type": "quadratic", "expr": aff(c.expr), "quads": quads, "label": c.label})
            else:
                cons.append({"type": "lmi", "dim": c.dim,
                             "matrix_terms": [[n, float(s)] for n, s in c.matrix_terms],
                             "scalar_terms": [[n, enc(A)] for n, A in c.scalar_terms],
                             "const": None if c.const is None else enc(c.const), "label": c.label})
        return {
            "sense": "maximize",
            "hermitian": [{"name": v.name, "dim": v.dim} for v in self.hermitian],
            "scalars": [{"name": v.name, "lower": _json_float(v.lower), "upper": _json_float(v.upper)}
                        for v in self.scalars],
            "vectors": [{"name": v.name, "dim": v.dim, "max_modulus": v.max_modulus}
                        for v in self.vectors],
            "objective": aff(self.objective),
            "constraints": cons,
        }

    def dump(self, path):
        """Write the problem as JSON for offline inspection."""
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def _json_float(x):
    return None if not np.isfinite(x) else float(x)


# --------------------------------------------------------------------------
# evaluation

def evaluate_affine(e: Affine, values: Mapping) -> float:
    total = e.const
    for name, c in e.terms.items():
        x = values[name]
        if np.ndim(x) == 2:
            total += float(np.real(np.sum(np.asarray(c) * np.asarray(x).T)))
        elif np.ndim(x) == 1:
            total += float(np.real(np.vdot(c, x)))
        else:
            total += float(c) * float(x)
    return total


def evaluate_quad(q, values) -> float:
    if isinstance(q, FrobeniusSquare):
        acc = 0.0 if q.offset is None else -q.offset
        for name, T, s in q.parts:
            X = np.asarray(values[name])
            acc = acc + s * (X if T is None else T.conj().T @ X @ T)
        return float(np.linalg.norm(acc) ** 2)
    return float(np.linalg.norm(q.B.conj().T @ values[q.name]) ** 2)


def constraint_violations(problem: ConicProblem, values: Mapping) -> list[float]:
    """Violation of every constraint and implicit cone at ``values`` (0 if satisfied)."""
    out = []
    for c in problem.constraints:
        if isinstance(c, LinearConstraint):
            r = evaluate_affine(c.expr, values)
            out.append(max(r, 0.0) if c.sense == "<=" else max(-r, 0.0) if c.sense == ">=" else abs(r))
        elif isinstance(c, QuadConstraint):
            r = evaluate_affine(c.expr, values) + sum(w * evaluate_quad(q, values) for w, q in c.quads)
            out.append(max(r, 0.0))
        else:
            S = np.zeros((c.dim, c.dim), dtype=complex) if c.const is None else np.array(c.const, dtype=complex)
            for name, s in c.matrix_terms:
                S = S + s * values[name]
            for name, A in c.scalar_terms:
                S = S + values[name] * np.asarray(A)
            out.append(max(float(np.linalg.eigvalsh((S + S.conj().T) / 2)[-1]), 0.0))
    for v in problem.hermitian:
        out.append(max(-float(np.linalg.eigvalsh(values[v.name])[0]), 0.0))
    for v in problem.scalars:
        s = values[v.name]
        out.append(max(v.lower - s, s - v.upper, 0.0))
    for v in problem.vectors:
        if v.max_modulus is not None:
            out.append(max(float(np.max(np.abs(values[v.name]))) - v.max_modulus, 0.0))
    return out


# --------------------------------------------------------------------------
# solve

@dataclass(frozen=True)
class SolverSettings:
    """Interior-point tolerances and route selection (``auto``, ``dual``, ``primal``)."""
    feastol: float = 1e-8
    gaptol: float = 1e-9
    max_iter: int = 200
    route: str = "auto"


@dataclass
class ConicSolution:
    status: Status
    objective: float
    values: dict
    residual: float
    route: str
    solve_time: float
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.NEAR_OPTIMAL)

    def raise_for_status(self):
        if not self.ok:
            raise ConicSolveError(self.status, self.message)
        return self


# Largest constraint violation at which a stalled interior-point iterate is kept.
STALL_RESIDUAL = 1e-6
# Tolerance factor of the single primal-route retry.
RETRY_LOOSENING = 10.0


def solve(problem: ConicProblem, settings: SolverSettings = SolverSettings()) -> ConicSolution:
    """Solve ``problem`` and report recovered complex values with a status tag.

    The residual is the largest constraint violation obtained by evaluating
    the original complex constraints at the recovered point.  An iterate on
    which the solver stalled is reported as near-optimal when this residual
    is at most ``STALL_RESIDUAL``.  A primal-route failure is retried once
    with ``RETRY_LOOSENING`` times looser tolerances.
    """
    problem.validate()
    route = settings.route
    auto = route == "auto"
    if auto:
        route = "dual" if problem.is_linear and problem.hermitian else "primal"
    if route == "dual" and not problem.is_linear:
        raise ValueError("the dual route only handles linear problems")
    t0 = time.perf_counter()
    out = _attempt(route, problem, settings)
    if auto and route == "dual" and out[0] is Status.NUMERICAL_FAILURE:
        # The two routes stall on different instances; try the other one.
        route = "primal"
        out = _attempt(route, problem, settings)
    if route == "primal" and out[0] is Status.NUMERICAL_FAILURE:
        # Clarabel can pass an acceptable iterate while chasing a tight gap and then diverge.
        looser = replace(settings, feastol=settings.feastol * RETRY_LOOSENING,
                         gaptol=settings.gaptol * RETRY_LOOSENING)
        out = _attempt(route, problem, looser)
    status, values, msg, obj, res = out
    return ConicSolution(status, obj, values, res, route, time.perf_counter() - t0, msg)


def _attempt(route, problem, settings):
    status, values, msg = _run(route, problem, settings)
    if not values:
        return status, values, msg, float("nan"), float("inf")
    obj = evaluate_affine(problem.objective, values)
    res = max(constraint_violations(problem, values), default=0.0)
    if status is Status.NUMERICAL_FAILURE and res <= STALL_RESIDUAL:
        status = Status.NEAR_OPTIMAL
    return status, values, msg, obj, res


def _run(route, problem, settings):
    try:
        if route == "dual":
            return _solve_dual(problem, settings)
        return _solve_primal(problem, settings)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, ValueError) and "rank" not in str(exc) and "Rank" not in str(exc):
            raise
        return Status.NUMERICAL_FAILURE, {}, str(exc)


def _linear_rows(problem: ConicProblem):
    """Rows ``(affine, is_equality)`` meaning ``affine <= 0`` or ``affine == 0``."""
    rows = []
    for c in problem.constraints:
        if c.sense == "<=":
            rows.append((c.expr, False))
        elif c.sense == ">=":
            rows.append((-c.expr, False))
        else:
            rows.append((c.expr, True))
    for v in problem.scalars:
        if np.isfinite(v.upper):
            rows.append((Affine({v.name: 1.0}, -v.upper), False))
        if np.isfinite(v.lower):
            rows.append((Affine({v.name: -1.0}, v.lower), False))
    return rows


def _solve_dual(problem: ConicProblem, settings: SolverSettings):
    """Solve a linear problem through CVXOPT applied to its Lagrange dual.

    Primal:  max  sum_j <C_j, X_j> + c^T s   s.t.  sum_j <A_ij, X_j> + a_i^T s <= b_i.
    Dual:    min  b^T y   s.t.  sum_i y_i A_ij - C_j >= 0 (PSD),  sum_i y_i a_i = c,
             y_i >= 0 on inequality rows.
    The matrix multipliers of the dual LMIs are the primal matrices.
    """
    from cvxopt import matrix, solvers

    rows = _linear_rows(problem)
    m = len(rows)
    if m == 0:
        raise ValueError("problem has no constraints; rank deficient dual")
    b = np.array([-r.const for r, _ in rows])
    ineq = [i for i, (_, eq) in enumerate(rows) if not eq]

    Gs, hs = [], []
    for var in problem.hermitian:
        n2 = 2 * var.dim
        G = np.zeros((n2 * n2, m))
        for i, (r, _) in enumerate(rows):
            if var.name in r.terms:
                G[:, i] = -_embed(r.terms[var.name]).ravel(order="F") / 2
        C = problem.objective.terms.get(var.name)
        h = -_embed(C) / 2 if C is not None else np.zeros((n2, n2))
        Gs.append(matrix(G))
        hs.append(matrix(h))

    A = np.zeros((len(problem.scalars), m))
    cs = np.zeros(len(problem.scalars))
    for t, var in enumerate(problem.scalars):
        cs[t] = float(problem.objective.terms.get(var.name, 0.0))
        for i, (r, _) in enumerate(rows):
            A[t, i] = float(r.terms.get(var.name, 0.0))

    kw = {}
    if ineq:
        Gl = np.zeros((len(ineq), m))
        Gl[np.arange(len(ineq)), ineq] = -1.0
        kw.update(Gl=matrix(Gl), hl=matrix(np.zeros(len(ineq))))
    if len(problem.scalars):
        kw.update(A=matrix(A), b=matrix(cs))
    feastol = settings.feastol
    for _ in range(3):
        opts = {"show_progress": False, "abstol": settings.gaptol, "reltol": settings.gaptol,
                "feastol": feastol, "maxiters": settings.max_iter}
        try:
            sol = solvers.sdp(matrix(b), Gs=Gs, hs=hs, options=opts, **kw)
        except (ValueError, ArithmeticError) as exc:
            # CVXOPT raises on a lost interior point (e.g. sqrt of a negative slack).
            return Status.NUMERICAL_FAILURE, {}, str(exc)
        if sol["status"] != "unknown":
            break
        # Interior-point iterates can stall just short of a tight tolerance.
        feastol *= 10.0

    st = sol["status"]
    if st == "optimal":
        status = Status.OPTIMAL
    elif st == "primal infeasible":
        # The dual is infeasible, i.e. our maximisation is unbounded.
        return Status.UNBOUNDED, {}, st
    elif st == "dual infeasible":
        return Status.INFEASIBLE, {}, st
    else:
        status = Status.NEAR_OPTIMAL if _small_gap(sol) else Status.NUMERICAL_FAILURE
    if sol["zs"] is None or any(z is None for z in sol["zs"]):
        return Status.NUMERICAL_FAILURE, {}, st

    values = {}
    for var, Z in zip(problem.hermitian, sol["zs"]):
        values[var.name] = real_to_complex(np.array(Z))
    if len(problem.scalars):
        mu = np.array(sol["y"]).ravel()
        for t, var in enumerate(problem.scalars):
            values[var.name] = float(-mu[t])
    return status, values, st


def _small_gap(sol):
    gap = sol.get("relative gap")
    pres, dres = sol.get("primal infeasibility"), sol.get("dual infeasibility")
    return (gap is not None and gap < 1e-5 and pres is not None and pres < 1e-6
            and dres is not None and dres < 1e-6)


class _HermitianParams:
    """Real coordinates of an ``n x n`` Hermitian matrix.

    The ``n^2`` coordinates are the diagonal, then the real and the imaginary
    parts of the strict upper triangle (row-major order).
    """

    def __init__(self, n):
        self.n = n
        self.iu, self.ju = np.triu_indices(n, 1)
        self.m = self.iu.size
        self.size = n * n
        # squared Frobenius norm is sum(weights * p**2)
        self.weights = np.concatenate([np.ones(n), 2 * np.ones(2 * self.m)])
        self._svec = None

    def linear(self, C):
        """Coefficients ``c`` with ``Re Tr(C X) = c @ p``."""
        C = np.asarray(C, dtype=complex)
        Cu = C[self.iu, self.ju]
        return np.concatenate([np.real(np.diag(C)), 2 * Cu.real, 2 * Cu.imag])

    def params(self, X):
        X = np.asarray(X, dtype=complex)
        Xu = X[self.iu, self.ju]
        return np.concatenate([np.real(np.diag(X)), Xu.real, Xu.imag])

    def matrix(self, p):
        n = self.n
        X = np.zeros((n, n), dtype=complex)
        X[np.arange(n), np.arange(n)] = p[:n]
        up = p[n:n + self.m] + 1j * p[n + self.m:]
        X[self.iu, self.ju] = up
        X[self.ju, self.iu] = up.conj()
        return X

    def vec_map(self):
        """Complex ``n^2 x n^2`` matrix taking coordinates to ``vec(X)`` (row-major)."""
        n, m = self.n, self.m
        T = np.zeros((n * n, self.size), dtype=complex)
        T[np.arange(n) * (n + 1), np.arange(n)] = 1.0
        up, lo = self.iu * n + self.ju, self.ju * n + self.iu
        cols = n + np.arange(m)
        T[up, cols] = 1.0
        T[lo, cols] = 1.0
        T[up, cols + m] = 1j
        T[lo, cols + m] = -1j
        return T

    def coords_of_vec(self):
        """Real ``n^2 x 2 n^2`` matrix taking ``[Re vec(Y), Im vec(Y)]`` to coordinates."""
        n, m = self.n, self.m
        S = np.zeros((self.size, 2 * n * n))
        S[np.arange(n), np.arange(n) * (n + 1)] = 1.0
        up = self.iu * n + self.ju
        S[n + np.arange(m), up] = 1.0
        S[n + m + np.arange(m), n * n + up] = 1.0
        return S

    def svec_embedding(self):
        """Sparse map from coordinates to the scaled upper triangle of the real embedding."""
        if self._svec is not None:
            return self._svec
        import scipy.sparse as sp

        n, m = self.n, self.m
        pos = {}
        for t, (i, j) in enumerate(zip(self.iu, self.ju)):
            pos[(i, j)] = t
        rows, cols, vals = [], [], []
        r = 0
        d = 2 * n
        sq2 = np.sqrt(2.0)
        for c in range(d):
            for rr in range(c + 1):
                scale = 1.0 if rr == c else sq2
                i, j = rr % n, c % n
                if (rr < n) == (c < n):
                    # Re X_ij
                    if i == j:
                        rows.append(r); cols.append(i); vals.append(scale)
                    else:
                        a, b = min(i, j), max(i, j)
                        rows.append(r); cols.append(n + pos[(a, b)]); vals.append(scale)
                else:
                    # upper-right block holds -Im X_ij
                    if i != j:
                        sign = -1.0 if i < j else 1.0
                        a, b = min(i, j), max(i, j)
                        rows.append(r); cols.append(n + m + pos[(a, b)]); vals.append(sign * scale)
                r += 1
        self._svec = sp.csc_matrix((vals, (rows, cols)), shape=(r, self.size))
        return self._svec

    def averaging(self):
        """Sparse map from the scaled upper triangle of a real symmetric ``Y``
        of size ``2n`` to the coordinates of its block average ``X(Y)``."""
        import scipy.sparse as sp

        n, m = self.n, self.m

        def idx(r, c):
            r, c = min(r, c), max(r, c)
            return c * (c + 1) // 2 + r

        inv2 = 1.0 / np.sqrt(2.0)
        rows, cols, vals = [], [], []
        for i in range(n):
            rows += [i, i]; cols += [idx(i, i), idx(i + n, i + n)]; vals += [0.5, 0.5]
        for t, (i, j) in enumerate(zip(self.iu, self.ju)):
            rows += [n + t, n + t]
            cols += [idx(i, j), idx(i + n, j + n)]
            vals += [0.5 * inv2, 0.5 * inv2]
            rows += [n + m + t, n + m + t]
            cols += [idx(j, i + n), idx(i, j + n)]
            vals += [0.5 * inv2, -0.5 * inv2]
        d = 2 * n
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.size, d * (d + 1) // 2))

    def congruence(self, T, out: "_HermitianParams"):
        """Real matrix taking coordinates of ``X`` to coordinates of ``T^H X T``."""
        T = np.asarray(T, dtype=complex)
        # row-major vec: vec(A X B) = kron(A, B^T) vec(X)
        K = np.kron(T.conj().T, T.T) @ self.vec_map()
        return out.coords_of_vec() @ np.vstack([K.real, K.imag])


def _solve_primal(problem: ConicProblem, settings: SolverSettings):
    """Assemble the real cone program directly and solve it with Clarabel."""
    import clarabel
    import scipy.sparse as sp

    # A Hermitian variable is held as an unstructured real PSD matrix Y of
    # size 2n; every term reads its block average X(Y).  This avoids the
    # degenerate dual that a structured embedding produces.
    offset, blocks, herm, avg = 0, {}, {}, {}
    for v in problem.hermitian:
        herm[v.name] = _HermitianParams(v.dim)
        avg[v.name] = herm[v.name].averaging()
        width = avg[v.name].shape[1]
        blocks[v.name] = slice(offset, offset + width)
        offset += width
    for v in problem.scalars:
        blocks[v.name] = slice(offset, offset + 1)
        offset += 1
    for v in problem.vectors:
        blocks[v.name] = slice(offset, offset + 2 * v.dim)
        offset += 2 * v.dim
    out_params = {}

    def out_param(m):
        if m not in out_params:
            out_params[m] = _HermitianParams(m)
        return out_params[m]

    # Each distinct congruence T^H X T gets its own coordinate block, tied to
    # X by one dense equality system, so the cones stay sparse.
    congruences = {}
    for c in problem.constraints:
        if not isinstance(c, QuadConstraint):
            continue
        for _, q in c.quads:
            if not isinstance(q, FrobeniusSquare):
                continue
            for name, T, _ in q.parts:
                if T is None:
                    continue
                key = (name, T.shape, T.tobytes())
                if key not in congruences:
                    size = T.shape[1] ** 2
                    congruences[key] = (slice(offset, offset + size), name, T)
                    offset += size
    n_quads = sum(len(c.quads) for c in problem.constraints if isinstance(c, QuadConstraint))
    tau0 = offset
    nvar = offset + n_quads
    kinds = problem.kinds

    def affine_row(e: Affine):
        row = np.zeros(nvar)
        for name, c in e.terms.items():
            kind = kinds[name][0]
            if kind == "hermitian":
                row[blocks[name]] += avg[name].T @ herm[name].linear(c)
            elif kind == "scalar":
                row[blocks[name]] += float(c)
            else:
                g = np.asarray(c, dtype=complex)
                row[blocks[name]] += np.concatenate([g.real, g.imag])
        return row, e.const

    def quad_map(q):
        """``(L, d)`` with ``q(z) = ||L z - d||^2``."""
        if isinstance(q, FrobeniusSquare):
            m = q.parts[0][1].shape[1] if q.parts[0][1] is not None else herm[q.parts[0][0]].n
            op = out_param(m)
            w = np.sqrt(op.weights)
            L = sp.lil_matrix((op.size, nvar))
            for name, T, s in q.parts:
                if T is None:
                    L[:, blocks[name]] += s * (sp.diags(w) @ avg[name])
                else:
                    sl = congruences[(name, T.shape, T.tobytes())][0]
                    L[:, sl] += s * sp.diags(w)
            d = np.zeros(op.size) if q.offset is None else w * op.params(q.offset)
            return L.tocsr(), d
        Bh = np.asarray(q.B, dtype=complex).conj().T
        L = sp.lil_matrix((2 * Bh.shape[0], nvar))
        L[:, blocks[q.name]] = np.block([[Bh.real, -Bh.imag], [Bh.imag, Bh.real]])
        return L.tocsr(), np.zeros(2 * Bh.shape[0])

    zero_A, zero_b, nonneg_A, nonneg_b = [], [], [], []
    cone_blocks = []  # (A rows, b, cone)

    def lin(row, const, sense):
        # row @ z + const (sense) 0  ->  A z + s = b
        if sense == "==":
            zero_A.append(row); zero_b.append(-const)
        elif sense == "<=":
            nonneg_A.append(row); nonneg_b.append(-const)
        else:
            nonneg_A.append(-row); nonneg_b.append(const)

    tau = tau0
    for c in problem.constraints:
        if isinstance(c, LinearConstraint):
            row, const = affine_row(c.expr)
            lin(row, const, c.sense)
        elif isinstance(c, QuadConstraint):
            row, const = affine_row(c.expr)
            for w, q in c.quads:
                L, d = quad_map(q)
                row[tau] += w
                # ||L z - d||^2 <= tau  as  ||(1 - tau, 2 (L z - d))|| <= 1 + tau
                head = sp.csr_matrix(([-1.0, 1.0], ([0, 1], [tau, tau])), shape=(2, nvar))
                A = sp.vstack([head, -2.0 * L], format="csc")
                b = np.concatenate([[1.0, 1.0], -2.0 * d])
                cone_blocks.append((A, b, clarabel.SecondOrderConeT(A.shape[0])))
                tau += 1
            lin(row, const, "<=")
        else:
            hp = out_param(c.dim)
            S = hp.svec_embedding()
            A = np.zeros((S.shape[0], nvar))
            for name, coef in c.matrix_terms:
                A[:, blocks[name]] += float(coef) * (S @ avg[name]).toarray()
            for name, Am in c.scalar_terms:
                A[:, blocks[name].start] += S @ hp.params(Am)
            b = np.zeros(S.shape[0]) if c.const is None else -(S @ hp.params(c.const))
            # -(sum ...) - A0 >= 0 in the PSD order: s = b - A z with A = +map
            cone_blocks.append((A, b, clarabel.PSDTriangleConeT(2 * c.dim)))
    for v in problem.scalars:
        j = blocks[v.name].start
        if np.isfinite(v.upper):
            row = np.zeros(nvar); row[j] = 1.0
            lin(row, -v.upper, "<=")
        if np.isfinite(v.lower):
            row = np.zeros(nvar); row[j] = 1.0
            lin(row, -v.lower, ">=")
    for v in problem.hermitian:
        sl = blocks[v.name]
        width = sl.stop - sl.start
        A = sp.csc_matrix((-np.ones(width), (np.arange(width), np.arange(sl.start, sl.stop))),
                          shape=(width, nvar))
        cone_blocks.append((A, np.zeros(width), clarabel.PSDTriangleConeT(2 * v.dim)))
    for v in problem.vectors:
        if v.max_modulus is None:
            continue
        sl = blocks[v.name]
        for i in range(v.dim):
            A = np.zeros((3, nvar))
            A[1, sl.start + i] = -1.0
            A[2, sl.start + v.dim + i] = -1.0
            cone_blocks.append((A, np.array([v.max_modulus, 0.0, 0.0]),
                                clarabel.SecondOrderConeT(3)))

    for sl, name, T in congruences.values():
        hp = herm[name]
        M = hp.congruence(T, out_param(T.shape[1])) @ avg[name]
        width = sl.stop - sl.start
        rows = np.zeros((width, nvar))
        rows[:, sl] = np.eye(width)
        rows[:, blocks[name]] -= M
        zero_A.extend(rows)
        zero_b.extend(np.zeros(width))

    mats, rhs, cones = [], [], []
    if zero_A:
        mats.append(sp.csc_matrix(np.array(zero_A))); rhs.append(np.array(zero_b))
        cones.append(clarabel.ZeroConeT(len(zero_A)))
    if nonneg_A:
        mats.append(sp.csc_matrix(np.array(nonneg_A))); rhs.append(np.array(nonneg_b))
        cones.append(clarabel.NonnegativeConeT(len(nonneg_A)))
    for A, b, cone in cone_blocks:
        mats.append(sp.csc_matrix(A)); rhs.append(b); cones.append(cone)
    A = sp.vstack(mats, format="csc")
    b = np.concatenate(rhs)
    q_row, _ = affine_row(problem.objective)
    P = sp.csc_matrix((nvar, nvar))

    opts = clarabel.DefaultSettings()
    opts.verbose = False
    opts.tol_feas = settings.feastol
    opts.tol_gap_abs = settings.gaptol
    opts.tol_gap_rel = settings.gaptol
    opts.max_iter = settings.max_iter
    sol = clarabel.DefaultSolver(P, -q_row, A, b, cones, opts).solve()
    st = str(sol.status)
    if "PrimalInfeasible" in st:
        return Status.INFEASIBLE, {}, st
    if "DualInfeasible" in st:
        return Status.UNBOUNDED, {}, st
    if st == "Solved":
        status = Status.OPTIMAL
    elif st == "AlmostSolved":
        status = Status.NEAR_OPTIMAL
    elif st in ("InsufficientProgress", "MaxIterations"):
        # Keep the iterate; solve() accepts it only if it checks out as feasible.
        status = Status.NUMERICAL_FAILURE
    else:
        return Status.NUMERICAL_FAILURE, {}, st
    z = np.asarray(sol.x)
    values = {}
    for v in problem.hermitian:
        values[v.name] = herm[v.name].matrix(avg[v.name] @ z[blocks[v.name]])
    for v in problem.scalars:
        values[v.name] = float(z[blocks[v.name].start])
    for v in problem.vectors:
        zz = z[blocks[v.name]]
        values[v.name] = zz[:v.dim] + 1j * zz[v.dim:]
    return status, values, st
