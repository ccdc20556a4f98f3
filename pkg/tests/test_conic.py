import numpy as np
import pytest
from hypothesis import given, strategies as st

from irs_sensing import conic
from irs_sensing.conic import (Affine, ConicProblem, HermitianVar, LinearConstraint, LmiConstraint,
                               NormSquare, QuadConstraint, ScalarVar, SolverSettings, Status,
                               VectorVar, complex_to_real_embedding, real_to_complex, solve)
from irs_sensing.td import diag_constraints
from conftest import crandn

DUAL = SolverSettings(route="dual")
PRIMAL = SolverSettings(route="primal")


def maxcut_problem(C):
    N = C.shape[0]
    p = ConicProblem([HermitianVar("V", N)], objective=Affine({"V": C}))
    return p.add(*diag_constraints(N))


@given(st.integers(0, 2 ** 16))
def test_embedding_roundtrip(seed):
    rng = np.random.default_rng(seed)
    A = crandn(rng, 4, 4)
    H = A + A.conj().T
    Y = complex_to_real_embedding(H)
    np.testing.assert_allclose(real_to_complex(Y), H, atol=1e-12)
    # eigenvalues of the embedding are those of H, each twice
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(Y)),
                               np.sort(np.repeat(np.linalg.eigvalsh(H), 2)), atol=1e-10)


def test_embedding_rejects_non_hermitian():
    with pytest.raises(ValueError):
        complex_to_real_embedding(np.array([[0, 1], [0, 0]]))


def test_rank_one_cost_has_closed_form(rng):
    # max Tr(a a^H V) with unit diagonal equals (sum |a_n|)^2
    a = crandn(rng, 6)
    C = np.outer(a, a.conj())
    for s in (DUAL, PRIMAL):
        sol = solve(maxcut_problem(C), s).raise_for_status()
        assert sol.objective == pytest.approx(np.sum(np.abs(a)) ** 2, rel=1e-6)
        np.testing.assert_allclose(np.diag(sol.values["V"]).real, 1.0, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_routes_agree(seed):
    rng = np.random.default_rng(seed)
    B = crandn(rng, 8, 3)
    C = B @ B.conj().T
    d = solve(maxcut_problem(C), DUAL).raise_for_status()
    p = solve(maxcut_problem(C), PRIMAL).raise_for_status()
    assert d.route == "dual" and p.route == "primal"
    assert d.objective == pytest.approx(p.objective, rel=1e-6)
    assert d.residual < 1e-6 and p.residual < 1e-6


def test_lmi_gives_smallest_eigenvalue(rng):
    A = crandn(rng, 5, 5)
    C = A + A.conj().T
    # maximise t subject to t I - C <= 0
    p = ConicProblem(scalars=[ScalarVar("t")], objective=Affine({"t": 1.0}))
    p.add(LmiConstraint(5, scalar_terms=(("t", np.eye(5)),), const=-C))
    sol = solve(p).raise_for_status()
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(C)[0], abs=1e-6)


def test_lmi_with_matrix_term(rng):
    # max Tr(C X) with X <= I (and X >= 0) keeps the positive part of C
    A = crandn(rng, 4, 4)
    C = A + A.conj().T
    p = ConicProblem([HermitianVar("X", 4)], objective=Affine({"X": C}))
    p.add(LmiConstraint(4, matrix_terms=(("X", 1.0),), const=-np.eye(4)))
    sol = solve(p).raise_for_status()
    lam = np.linalg.eigvalsh(C)
    assert sol.objective == pytest.approx(lam[lam > 0].sum(), rel=1e-6)


def test_norm_ball_linear_objective(rng):
    g = crandn(rng, 5)
    p = ConicProblem(vectors=[VectorVar("x", 5)], objective=Affine({"x": g}))
    p.add(QuadConstraint(Affine(const=-1.0), ((1.0, NormSquare("x", np.eye(5))),)))
    sol = solve(p).raise_for_status()
    assert sol.objective == pytest.approx(np.linalg.norm(g), rel=1e-6)
    np.testing.assert_allclose(sol.values["x"], g / np.linalg.norm(g), atol=1e-5)


def test_primal_failure_is_retried_with_looser_tolerances(rng, monkeypatch):
    g = crandn(rng, 5)
    p = ConicProblem(vectors=[VectorVar("x", 5)], objective=Affine({"x": g}))
    p.add(QuadConstraint(Affine(const=-1.0), ((1.0, NormSquare("x", np.eye(5))),)))
    real, seen = conic._solve_primal, []

    def flaky(problem, settings):
        seen.append(settings)
        if len(seen) == 1:
            return Status.NUMERICAL_FAILURE, {}, "NumericalError"
        return real(problem, settings)
    monkeypatch.setattr(conic, "_solve_primal", flaky)
    sol = solve(p, PRIMAL)
    assert sol.ok and len(seen) == 2
    assert seen[1].feastol == pytest.approx(PRIMAL.feastol * conic.RETRY_LOOSENING)
    assert seen[1].gaptol == pytest.approx(PRIMAL.gaptol * conic.RETRY_LOOSENING)
    assert sol.objective == pytest.approx(np.linalg.norm(g), rel=1e-6)


def test_modulus_box(rng):
    g = crandn(rng, 5)
    p = ConicProblem(vectors=[VectorVar("x", 5, max_modulus=1.0)], objective=Affine({"x": g}))
    sol = solve(p).raise_for_status()
    assert sol.objective == pytest.approx(np.abs(g).sum(), rel=1e-6)


def test_scalar_bounds_and_equality():
    p = ConicProblem(scalars=[ScalarVar("a", 0.0, 2.0), ScalarVar("b")],
                     objective=Affine({"a": 1.0, "b": 1.0}))
    p.add(LinearConstraint(Affine({"a": 1.0, "b": -1.0}), "=="))
    sol = solve(p).raise_for_status()
    assert sol.values["a"] == pytest.approx(2.0, abs=1e-6)
    assert sol.values["b"] == pytest.approx(2.0, abs=1e-6)


def test_infeasible_is_reported():
    p = ConicProblem(scalars=[ScalarVar("a", 0.0, 1.0)], objective=Affine({"a": 1.0}))
    p.add(LinearConstraint(Affine({"a": 1.0}, -2.0), ">="))
    sol = solve(p)
    assert sol.status is Status.INFEASIBLE
    assert not sol.ok


def test_dual_route_rejects_quadratic():
    p = ConicProblem(vectors=[VectorVar("x", 2)], objective=Affine({"x": np.ones(2)}))
    p.add(QuadConstraint(Affine(const=-1.0), ((1.0, NormSquare("x", np.eye(2))),)))
    with pytest.raises(ValueError):
        solve(p, DUAL)


def test_negative_quad_weight_rejected():
    with pytest.raises(ValueError):
        QuadConstraint(Affine(), ((-1.0, NormSquare("x", np.eye(2))),))


def test_affine_arithmetic():
    e = 2 * Affine({"x": 1.0}, 1.0) - Affine({"x": 0.5, "y": 1.0}) + 3
    assert e.terms == {"x": 1.5, "y": -1.0}
    assert e.const == 5.0
