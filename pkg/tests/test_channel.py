import numpy as np
import pytest
from hypothesis import given, strategies as st

from irs_sensing.channel import (ArrayGeometry, Beamformer, Direction, PhaseConfig, SceneChannels,
                                 beam_gain, dbm_to_watt, effective_channel, leakage,
                                 radar_beta_magnitude, scene_from_config, steering_vector,
                                 synthesize_channel, watt_to_dbm, DEFAULT_BS_POSITION)
from conftest import crandn, make_scene

angles = st.tuples(st.floats(0, 90), st.floats(0, 360))


@given(st.floats(-150, 60))
def test_dbm_roundtrip(dbm):
    assert watt_to_dbm(dbm_to_watt(dbm)) == pytest.approx(dbm, abs=1e-9)


def test_dbm_reference_values():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(-70.0) == pytest.approx(1e-10)


@given(angles)
def test_steering_unit_modulus(ang):
    geom = ArrayGeometry(M=4, Nx=3, Ny=5)
    a = steering_vector(geom, Direction.from_degrees(*ang))
    assert a.shape == (15,)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)


def test_broadside_steering_is_all_ones():
    geom = ArrayGeometry(M=2, Nx=4, Ny=4)
    np.testing.assert_allclose(steering_vector(geom, Direction(0.0, 0.0)), 1.0)


def test_steering_phase_progression_along_x():
    # half-wavelength spacing: adjacent x-elements differ by pi * cos-component
    geom = ArrayGeometry(M=1, Nx=4, Ny=1)
    d = Direction.from_degrees(30.0, 0.0)
    a = steering_vector(geom, d)
    step = np.angle(a[1] / a[0])
    assert abs(abs(step) - np.pi * np.sin(np.deg2rad(30.0))) < 1e-12


@given(angles, st.integers(0, 2 ** 16))
def test_cascaded_channel_is_row_scaled(ang, seed):
    rng = np.random.default_rng(seed)
    geom = ArrayGeometry(M=3, Nx=2, Ny=3)
    G = crandn(rng, geom.N, geom.M)
    d = Direction.from_degrees(*ang)
    Q = effective_channel(geom, d, G)
    np.testing.assert_allclose(Q, np.diag(steering_vector(geom, d).conj()) @ G)


@given(st.integers(0, 2 ** 16))
def test_beam_gain_matches_direct_form(seed):
    rng = np.random.default_rng(seed)
    Q = crandn(rng, 6, 3)
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, 6))
    w = crandn(rng, 3)
    assert beam_gain(v, Q, w) == pytest.approx(abs(v.conj() @ Q @ w) ** 2, rel=1e-12)
    # gain is invariant to a common phase rotation of v or w
    assert beam_gain(v * 1j, Q, w * np.exp(0.3j)) == pytest.approx(beam_gain(v, Q, w), rel=1e-12)


def test_leakage_sums_other_targets(scene3, rng):
    Qs = scene3.Qs
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, scene3.geom.N))
    w = crandn(rng, scene3.geom.M)
    expected = beam_gain(v, Qs[0], w) + beam_gain(v, Qs[2], w)
    assert leakage(v, Qs, w, 1) == pytest.approx(expected)


def test_phase_config_validation():
    PhaseConfig(np.exp(1j * np.arange(4)))
    with pytest.raises(ValueError):
        PhaseConfig(np.array([1.0, 0.5]))
    PhaseConfig(np.array([1.0, 0.5]), relaxed=True)
    with pytest.raises(ValueError):
        PhaseConfig(np.array([1.5]), relaxed=True)
    p = PhaseConfig.from_angles([0.1, 0.2])
    np.testing.assert_allclose(p.angles, [0.1, 0.2])


def test_beamformer_power():
    assert Beamformer(np.array([3.0, 4.0j])).power == pytest.approx(25.0)


def test_geometry_validation():
    with pytest.raises(ValueError):
        ArrayGeometry(M=0)
    with pytest.raises(ValueError):
        ArrayGeometry(wavelength=-1)
    g = ArrayGeometry(wavelength=0.2)
    assert g.dx == g.dy == g.bs_spacing == 0.1


def test_line_of_sight_channel_is_rank_one():
    geom = ArrayGeometry(M=6, Nx=4, Ny=4)
    s = synthesize_channel(geom, DEFAULT_BS_POSITION, model="los")
    sv = np.linalg.svd(s.G, compute_uv=False)
    assert sv[1] < 1e-10 * sv[0]


def test_rician_infinite_factor_is_line_of_sight():
    geom = ArrayGeometry(M=4, Nx=2, Ny=2)
    a = synthesize_channel(geom, DEFAULT_BS_POSITION, model="los")
    b = synthesize_channel(geom, DEFAULT_BS_POSITION, model="rician", kappa=np.inf)
    np.testing.assert_allclose(a.G, b.G)


def test_channel_amplitude_follows_free_space():
    geom = ArrayGeometry(M=4, Nx=4, Ny=4)
    s = synthesize_channel(geom, DEFAULT_BS_POSITION, model="los")
    d = np.linalg.norm(DEFAULT_BS_POSITION)
    assert d == pytest.approx(20.0)
    np.testing.assert_allclose(np.abs(s.G), geom.wavelength / (4 * np.pi * d))


def test_synthesis_is_seeded():
    a, b = make_scene(seed=5), make_scene(seed=5)
    np.testing.assert_array_equal(a.G, b.G)
    assert not np.allclose(make_scene(seed=6).G, a.G)


def test_unknown_model_rejected():
    with pytest.raises(ValueError):
        synthesize_channel(ArrayGeometry(), DEFAULT_BS_POSITION, model="bogus")


def test_radar_beta_formula():
    lam, rcs, d = 0.1, 1.0, 20.0
    expected = np.sqrt(lam ** 2 * rcs / ((4 * np.pi) ** 3 * d ** 4))
    assert radar_beta_magnitude(lam, rcs, d) == pytest.approx(expected)
    s = make_scene()
    np.testing.assert_allclose(np.abs(s.betas), expected)
    s = make_scene(beta_magnitude=0.5)
    np.testing.assert_allclose(np.abs(s.betas), 0.5)


def test_scene_is_immutable(scene3):
    with pytest.raises(ValueError):
        scene3.G[0, 0] = 1.0


def test_subset_preserves_channels(scene3):
    sub = scene3.subset([2, 0])
    np.testing.assert_allclose(sub.Qs, scene3.Qs[[2, 0]])
    np.testing.assert_allclose(sub.betas, scene3.betas[[2, 0]])


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_scene_roundtrip(tmp_path, scene3, suffix):
    path = tmp_path / f"scene{suffix}"
    scene3.save(path)
    back = SceneChannels.load(path)
    np.testing.assert_allclose(back.G, scene3.G)
    np.testing.assert_allclose(back.Qs, scene3.Qs, rtol=1e-12, atol=0)
    np.testing.assert_allclose(back.betas, scene3.betas)
    assert back.noise_power == scene3.noise_power


def test_scene_shape_check():
    geom = ArrayGeometry(M=2, Nx=2, Ny=2)
    with pytest.raises(ValueError):
        SceneChannels(geom, np.zeros((3, 2)), [])


def test_scene_from_config():
    s = scene_from_config({"geometry": {"M": 4, "Nx": 2, "Ny": 2}, "K": 2, "seed": 3,
                           "noise_power_dbm": -70})
    assert s.K == 2 and s.G.shape == (4, 4)
    assert s.noise_power == pytest.approx(1e-10)
    s = scene_from_config({"geometry": {"M": 4, "Nx": 2, "Ny": 2},
                           "directions_deg": [[30, 40], [60, 200]]})
    assert s.directions[1].degrees() == pytest.approx((60, 200))
