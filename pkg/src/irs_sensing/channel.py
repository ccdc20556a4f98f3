"""Array geometry, IRS steering vectors, channel synthesis and beam-gain evaluation.

Conventions
-----------
The IRS is a uniform planar array with ``Nx`` columns along x and ``Ny`` rows
along y; element ``n = ix * Ny + iy`` (x index outer).  A target direction is
given by azimuth and elevation angles ``(az, el)`` and enters the steering
vector through the direction cosines ``sin(az) cos(el)`` and ``sin(az) sin(el)``.

The BS-IRS channel ``G`` is stored as an ``N x M`` matrix, so ``G @ w`` is the
field impinging on the IRS elements for BS beamformer ``w``.  With phase vector
``v`` (``v_n = exp(-1j * theta_n)``) the cascaded BS-IRS-target gain of beam
``w`` towards target ``k`` is ``|v^H Q_k w|^2`` with ``Q_k = diag(a_k^H) G``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


def dbm_to_watt(dbm):
    """Convert a power in dBm to watts."""
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(watt):
    """Convert a power in watts to dBm."""
    return 10.0 * np.log10(np.asarray(watt, dtype=float)) + 30.0


def _readonly(a, dtype=complex):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ArrayGeometry:
    """BS uniform linear array and IRS uniform planar array.

    Parameters
    ----------
    M : int
        Number of BS antennas.
    Nx, Ny : int
        IRS elements along x and y (``N = Nx * Ny``).
    wavelength : float
        Carrier wavelength in metres.
    dx, dy : float, optional
        IRS element spacing, half a wavelength by default.
    bs_spacing : float, optional
        BS antenna spacing, half a wavelength by default.
    """

    M: int = 8
    Nx: int = 8
    Ny: int = 8
    wavelength: float = 0.1
    dx: float | None = None
    dy: float | None = None
    bs_spacing: float | None = None

    def __post_init__(self):
        for name in ("M", "Nx", "Ny"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        half = self.wavelength / 2.0
        for name in ("dx", "dy", "bs_spacing"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, half)
            elif not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def N(self) -> int:
        return self.Nx * self.Ny

    def to_dict(self) -> dict:
        return {"M": self.M, "Nx": self.Nx, "Ny": self.Ny,
                "wavelength": self.wavelength, "dx": self.dx, "dy": self.dy,
                "bs_spacing": self.bs_spacing}


@dataclass(frozen=True)
class Direction:
    """Target direction seen from the IRS, angles in radians."""

    azimuth: float
    elevation: float

    @classmethod
    def from_degrees(cls, azimuth_deg: float, elevation_deg: float) -> "Direction":
        return cls(np.deg2rad(azimuth_deg), np.deg2rad(elevation_deg))

    @property
    def cosines(self) -> tuple[float, float]:
        """Direction cosines ``(sin(az) cos(el), sin(az) sin(el))``."""
        s = np.sin(self.azimuth)
        return float(s * np.cos(self.elevation)), float(s * np.sin(self.elevation))

    def degrees(self) -> tuple[float, float]:
        return float(np.rad2deg(self.azimuth)), float(np.rad2deg(self.elevation))


def random_directions(K, rng, azimuth_range_deg=(15.0, 75.0)):
    """Draw ``K`` target directions, azimuth uniform in the given range and
    elevation uniform in ``[0, 360)`` degrees."""
    rng = np.random.default_rng(rng)
    az = rng.uniform(*azimuth_range_deg, size=K)
    el = rng.uniform(0.0, 360.0, size=K)
    return tuple(Direction.from_degrees(a, e) for a, e in zip(az, el))


def steering_from_cosines(geom: ArrayGeometry, phi, omega):
    """IRS steering vector for direction cosines ``(phi, omega)``."""
    ax = np.exp(-2j * np.pi * np.arange(geom.Nx) * geom.dx * phi / geom.wavelength)
    ay = np.exp(-2j * np.pi * np.arange(geom.Ny) * geom.dy * omega / geom.wavelength)
    return np.kron(ax, ay)


def steering_vector(geom: ArrayGeometry, direction: Direction):
    """IRS steering vector ``a = kron(a_x, a_y)`` of length ``N``."""
    return steering_from_cosines(geom, *direction.cosines)


def bs_steering_vector(geom: ArrayGeometry, cos_angle):
    """BS ULA response for the cosine of the angle to the array axis."""
    m = np.arange(geom.M)
    return np.exp(-2j * np.pi * m * geom.bs_spacing * cos_angle / geom.wavelength)


def effective_channel(geom: ArrayGeometry, direction: Direction, G):
    """Cascaded channel ``Q = diag(a^H) G`` (``N x M``)."""
    G = np.asarray(G)
    if G.shape != (geom.N, geom.M):
        raise ValueError(f"G must have shape {(geom.N, geom.M)}, got {G.shape}")
    return np.conj(steering_vector(geom, direction))[:, None] * G


def beam_gain(v, Q, w) -> float:
    """Beam gain ``|v^H Q w|^2``."""
    return float(abs(np.vdot(v, np.asarray(Q) @ np.asarray(w))) ** 2)


def leakage(v, Qs, w, k) -> float:
    """Power of beam ``w`` (aimed at target ``k``) reaching all other targets."""
    return float(sum(beam_gain(v, Q, w) for j, Q in enumerate(Qs) if j != k))


@dataclass(frozen=True)
class PhaseConfig:
    """IRS phase vector, unit modulus unless ``relaxed``."""

    v: np.ndarray
    relaxed: bool = False

    def __post_init__(self):
        v = np.asarray(self.v, dtype=complex).ravel()
        if not self.relaxed and not np.allclose(np.abs(v), 1.0, atol=1e-9):
            raise ValueError("phase entries must have unit modulus")
        if self.relaxed and np.any(np.abs(v) > 1.0 + 1e-9):
            raise ValueError("relaxed phase entries must satisfy |v_n| <= 1")
        object.__setattr__(self, "v", _readonly(v))

    @classmethod
    def from_angles(cls, theta):
        return cls(np.exp(-1j * np.asarray(theta, dtype=float)))

    @property
    def angles(self):
        return -np.angle(self.v)

    def __len__(self):
        return self.v.size


@dataclass(frozen=True)
class Beamformer:
    """BS transmit beamformer."""

    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _readonly(np.asarray(self.w, dtype=complex).ravel()))

    @property
    def power(self) -> float:
        return float(np.vdot(self.w, self.w).real)


@dataclass(frozen=True)
class SceneChannels:
    """Geometry, BS-IRS channel, target directions and echo parameters.

    Attributes
    ----------
    geom : ArrayGeometry
    G : ndarray, shape (N, M)
    directions : tuple of Direction
    betas : ndarray, shape (K,)
        Complex round-trip reflection coefficients of the targets.
    noise_power : float
        Receiver noise power in watts.
    """

    geom: ArrayGeometry
    G: np.ndarray
    directions: tuple
    betas: np.ndarray | None = None
    noise_power: float = 1e-10
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        G = np.asarray(self.G, dtype=complex)
        if G.shape != (self.geom.N, self.geom.M):
            raise ValueError(f"G must have shape {(self.geom.N, self.geom.M)}")
        object.__setattr__(self, "G", _readonly(G))
        object.__setattr__(self, "directions", tuple(self.directions))
        betas = np.ones(self.K) if self.betas is None else self.betas
        betas = np.asarray(betas, dtype=complex).ravel()
        if betas.size != self.K:
            raise ValueError("one beta per target is required")
        object.__setattr__(self, "betas", _readonly(betas))

    @property
    def K(self) -> int:
        return len(self.directions)

    @property
    def Qs(self) -> np.ndarray:
        """Stacked cascaded channels, shape ``(K, N, M)``."""
        return np.stack([effective_channel(self.geom, d, self.G) for d in self.directions])

    def steering(self) -> np.ndarray:
        return np.stack([steering_vector(self.geom, d) for d in self.directions])

    def subset(self, indices: Sequence[int]) -> "SceneChannels":
        """Scene restricted to the listed targets, in the given order."""
        idx = list(indices)
        return SceneChannels(self.geom, self.G, [self.directions[i] for i in idx],
                             self.betas[idx], self.noise_power, dict(self.meta))

    def with_betas(self, betas) -> "SceneChannels":
        return SceneChannels(self.geom, self.G, self.directions, betas,
                             self.noise_power, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "geometry": self.geom.to_dict(),
            "G": {"re": self.G.real.tolist(), "im": self.G.imag.tolist()},
            "directions_deg": [list(d.degrees()) for d in self.directions],
            "betas": {"re": self.betas.real.tolist(), "im": self.betas.imag.tolist()},
            "noise_power": self.noise_power,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneChannels":
        geom = ArrayGeometry(**data["geometry"])
        G = np.asarray(data["G"]["re"]) + 1j * np.asarray(data["G"]["im"])
        dirs = [Direction.from_degrees(a, e) for a, e in data["directions_deg"]]
        betas = np.asarray(data["betas"]["re"]) + 1j * np.asarray(data["betas"]["im"])
        return cls(geom, G, dirs, betas, float(data["noise_power"]), data.get("meta", {}))

    def save(self, path):
        """Write the scene as JSON (``.json``) or a numpy archive (``.npz``)."""
        path = Path(path)
        if path.suffix == ".npz":
            d = self.to_dict()
            np.savez(path, G=self.G, betas=self.betas,
                     header=json.dumps({k: d[k] for k in ("geometry", "directions_deg",
                                                          "noise_power", "meta")}))
        else:
            path.write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "SceneChannels":
        path = Path(path)
        if path.suffix == ".npz":
            with np.load(path) as z:
                head = json.loads(str(z["header"]))
                head["G"] = {"re": z["G"].real, "im": z["G"].imag}
                head["betas"] = {"re": z["betas"].real, "im": z["betas"].imag}
            return cls.from_dict(head)
        return cls.from_dict(json.loads(path.read_text()))


def free_space_amplitude(wavelength, distance):
    """Free-space amplitude gain ``lambda / (4 pi d)``."""
    return wavelength / (4.0 * np.pi * distance)


def radar_beta_magnitude(wavelength, rcs, distance):
    """Round-trip IRS-target-IRS amplitude from the radar equation."""
    return np.sqrt(wavelength ** 2 * rcs / ((4.0 * np.pi) ** 3 * distance ** 4))


def synthesize_channel(geom: ArrayGeometry, bs_position, irs_position=(0.0, 0.0, 0.0),
                       directions=(), model="rician", kappa=1.0, seed=0, rcs=1.0,
                       target_distance=20.0, noise_power=1e-10, beta_magnitude=None):
    """Draw a BS-IRS channel and target reflection coefficients.

    Parameters
    ----------
    geom : ArrayGeometry
    bs_position, irs_position : array_like, shape (3,)
        Positions in metres.  The IRS lies in the x-y plane and the BS array
        axis is parallel to x.
    directions : sequence of Direction
    model : {'los', 'rayleigh', 'rician'}
        Far-field line of sight, i.i.d. scattering, or their mix with
        Rician factor ``kappa`` (``kappa = inf`` reproduces line of sight).
    seed : int or Generator
    rcs, target_distance : float
        Radar cross-section (m^2) and IRS-target distance (m) used for the
        magnitude of the reflection coefficients.
    noise_power : float
        Receiver noise power in watts.
    beta_magnitude : float, optional
        Overrides the radar-equation magnitude of every reflection coefficient.

    Returns
    -------
    SceneChannels
    """
    rng = np.random.default_rng(seed)
    offset = np.asarray(bs_position, dtype=float) - np.asarray(irs_position, dtype=float)
    dist = float(np.linalg.norm(offset))
    if dist <= 0:
        raise ValueError("BS and IRS positions coincide")
    u = offset / dist
    amp = free_space_amplitude(geom.wavelength, dist)
    # IRS receives from direction u; the BS transmits along -u.
    irs_resp = np.conj(steering_from_cosines(geom, u[0], u[1]))
    bs_resp = bs_steering_vector(geom, -u[0])
    los = np.exp(-2j * np.pi * dist / geom.wavelength) * np.outer(irs_resp, bs_resp)
    nlos = (rng.standard_normal((geom.N, geom.M))
            + 1j * rng.standard_normal((geom.N, geom.M))) / np.sqrt(2.0)
    if model == "los":
        G = amp * los
    elif model == "rayleigh":
        G = amp * nlos
    elif model == "rician":
        if np.isinf(kappa):
            G = amp * los
        else:
            G = amp * (np.sqrt(kappa / (1 + kappa)) * los + np.sqrt(1 / (1 + kappa)) * nlos)
    else:
        raise ValueError(f"unknown channel model {model!r}")
    K = len(directions)
    mag = (radar_beta_magnitude(geom.wavelength, rcs, target_distance)
           if beta_magnitude is None else float(beta_magnitude))
    betas = mag * np.exp(2j * np.pi * rng.uniform(size=K))
    meta = {"model": model, "kappa": float(kappa), "seed": seed if isinstance(seed, int) else None,
            "bs_distance": dist}
    return SceneChannels(geom, G, directions, betas, float(noise_power), meta)


def scene_from_config(cfg: dict) -> SceneChannels:
    """Build a scene from a plain dictionary (see README for the keys)."""
    geom = ArrayGeometry(**cfg.get("geometry", {}))
    if "directions_deg" in cfg:
        dirs = [Direction.from_degrees(a, e) for a, e in cfg["directions_deg"]]
    else:
        dirs = random_directions(int(cfg.get("K", 2)), np.random.default_rng(
            [int(cfg.get("seed", 0)), 1]))
    noise = cfg.get("noise_power")
    if noise is None:
        noise = float(dbm_to_watt(cfg.get("noise_power_dbm", -70.0)))
    return synthesize_channel(
        geom, cfg.get("bs_position", DEFAULT_BS_POSITION), cfg.get("irs_position", (0.0, 0.0, 0.0)),
        dirs, model=cfg.get("model", "rician"), kappa=float(cfg.get("kappa", 1.0)),
        seed=int(cfg.get("seed", 0)), rcs=float(cfg.get("rcs", 1.0)),
        target_distance=float(cfg.get("target_distance", 20.0)), noise_power=noise,
        beta_magnitude=cfg.get("beta_magnitude"))


# BS 20 m from the IRS centre, in front of the surface.
DEFAULT_BS_POSITION = (10.0, -10.0, 10.0 * np.sqrt(2.0))
