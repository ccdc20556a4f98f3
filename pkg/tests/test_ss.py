import numpy as np
import pytest
from hypothesis import given, strategies as st

from irs_sensing.channel import beam_gain
from irs_sensing.ss import (RankError, channel_scale, design_beams, effective_vectors,
                            enforce_feasibility, extract_rank_one, solve_fixed_phase_sdr, solve_ss)
from conftest import crandn, make_scene


def rand_phase(rng, N):
    return np.exp(1j * rng.uniform(0, 2 * np.pi, N))


@given(st.integers(0, 2 ** 20))
def test_extraction_preserves_gain_and_power_bound(seed):
    rng = np.random.default_rng(seed)
    A = crandn(rng, 4, 3)
    W = A @ A.conj().T
    h = crandn(rng, 4)
    w = extract_rank_one(W, h=h)
    assert abs(np.vdot(h, w)) ** 2 == pytest.approx(np.real(h.conj() @ W @ h), rel=1e-10)
    # w w^H <= W, so the power towards any direction cannot grow
    lam = np.linalg.eigvalsh(W - np.outer(w, w.conj()))
    assert lam.min() >= -1e-9 * np.abs(lam).max()
    g = crandn(rng, 4)
    assert abs(np.vdot(g, w)) ** 2 <= np.real(g.conj() @ W @ g) * (1 + 1e-9)


def test_extraction_from_lifted_phases(rng):
    Q = crandn(rng, 5, 3)
    v = rand_phase(rng, 5)
    A = crandn(rng, 3, 3)
    W = A @ A.conj().T
    w1 = extract_rank_one(W, V=np.outer(v, v.conj()), Q=Q)
    w2 = extract_rank_one(W, h=Q.conj().T @ v)
    assert abs(np.vdot(w1, w2)) == pytest.approx(np.linalg.norm(w1) * np.linalg.norm(w2))


def test_extraction_refuses_higher_rank_phases(rng):
    with pytest.raises(RankError):
        extract_rank_one(np.eye(3), V=np.eye(4), Q=crandn(rng, 4, 3))


def test_fixed_phase_sdr_is_certified(scene3, rng):
    Qs = scene3.Qs
    v = rand_phase(rng, scene3.geom.N)
    H = effective_vectors(Qs, v)
    eps = 5e-6
    sdr = solve_fixed_phase_sdr(H, 1.0, eps)
    assert sum(np.trace(W).real for W in sdr.W) <= 1.0 * (1 + 1e-6)
    for k, W in enumerate(sdr.W):
        assert np.real(H[k].conj() @ W @ H[k]) >= sdr.R * (1 - 1e-6)
        leak = sum(np.real(H[j].conj() @ W @ H[j]) for j in range(3) if j != k)
        assert leak <= eps * (1 + 1e-5)


def test_design_beams_match_sdr_value(scene3, rng):
    Qs = scene3.Qs
    v = rand_phase(rng, scene3.geom.N)
    d = design_beams(Qs, v, 1.0, 5e-6)
    assert d.gains.min() == pytest.approx(d.sdr_value, rel=1e-5)
    assert d.leakages.max() <= 5e-6 * (1 + 1e-6)
    assert sum(np.vdot(w, w).real for w in d.ws) <= 1.0 * (1 + 1e-8)


def test_without_cap_sdr_exceeds_capped(scene3, rng):
    v = rand_phase(rng, scene3.geom.N)
    H = effective_vectors(scene3.Qs, v)
    assert solve_fixed_phase_sdr(H, 1.0, np.inf).R >= solve_fixed_phase_sdr(H, 1.0, 5e-6).R


def test_enforce_feasibility_scales_down(rng):
    Qs = crandn(rng, 2, 4, 3)
    v = rand_phase(rng, 4)
    ws = [crandn(rng, 3) * 5, crandn(rng, 3) * 5]
    out, f = enforce_feasibility(ws, Qs, v, 1.0, 0.01)
    assert sum(np.vdot(w, w).real for w in out) <= 1.0
    for k in range(2):
        assert beam_gain(v, Qs[1 - k], out[k]) <= 0.01
    assert np.all(f <= 1)
    same, f1 = enforce_feasibility([w * 1e-6 for w in ws], Qs, v, 1.0, 1.0)
    np.testing.assert_array_equal(f1, 1.0)


def test_channel_scale_is_mean_power(rng):
    Qs = crandn(rng, 2, 3, 3) * 1e-4
    assert channel_scale(Qs) == pytest.approx(np.mean(np.abs(Qs) ** 2))


def test_joint_design_beats_its_start():
    scene = make_scene(K=2, seed=1)
    Qs = scene.Qs
    sol = solve_ss(Qs, 1.0, 5e-6)
    assert sol.min_gain >= sol.initial_min_gain
    np.testing.assert_allclose(np.abs(sol.v.v), 1.0, atol=1e-12)
    assert sum(b.power for b in sol.beams) <= 1.0 + 1e-8
    assert sol.leakages.max() <= 5e-6 * (1 + 1e-6)
    for k in range(2):
        assert sol.gains[k] == pytest.approx(beam_gain(sol.v.v, Qs[k], sol.beams[k].w))


def test_joint_design_rejects_bad_shape():
    with pytest.raises(ValueError):
        solve_ss(np.zeros((3, 3)), 1.0, 1.0)
