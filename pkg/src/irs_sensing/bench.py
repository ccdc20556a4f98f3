"""Experiment runner: scheme dispatch, certification, beam-pattern grids and suites.

Every scheme returns a :class:`Design`: per-slot phase vectors, one beam per
target, the slot of every target and the leakage cap that applies inside a
slot.  Designs are re-validated directly from these vectors before they are
written anywhere.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import __version__
from .channel import (DEFAULT_BS_POSITION, ArrayGeometry, Direction, SceneChannels, beam_gain,
                      dbm_to_watt, effective_channel, random_directions, synthesize_channel)
from .hybrid import (HybridConfig, TimingConfig, block_tie_matrix, element_blocks,
                     sensing_frequency, solve_divided, solve_hybrid, solve_tied, tradeoff_curve)
from .ss import SsConfig, solve_ss
from .td import PenaltyConfig, td_scheme
from .two_target import TwoTargetConfig, solve_two_target

SCHEMES = ("td", "ss", "two-target", "hybrid", "irsd", "irsb", "nic")


# ---------------------------------------------------------------- configuration

@dataclass
class ExperimentConfig:
    """One experiment: scene, scheme and solver tolerances.

    Defaults follow the reference system parameters (``N = 8 x 8``,
    ``eps = 5e-6``, ``P_max = 1`` W, ``-70`` dBm noise, 20 pulses of 0.1 ms
    with an 8 ms guard period).
    """

    scheme: str = "ss"
    K: int = 3
    L: int = 1
    M: int = 8
    Nx: int = 8
    Ny: int = 8
    eps: float = 5e-6
    P_max: float = 1.0
    delta: float = 1e-4
    n_pulses: int = 20
    guard: float = 8e-3
    noise_power_dbm: float = -70.0
    eps_inner: float = 1e-3
    eps_group: float = 1e-3
    eps_binary: float = 1e-6
    model: str = "rician"
    kappa: float = 1.0
    bs_position: tuple = DEFAULT_BS_POSITION
    directions_deg: list | None = None
    beta_magnitude: float | None = None
    seeds: list = field(default_factory=lambda: [0])
    groups: list | None = None
    name: str = "run"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not 1 <= self.K <= 16:
            raise ValueError("K must lie in [1, 16]")
        if not 1 <= self.L <= self.K:
            raise ValueError("L must lie in [1, K]")
        if self.M < 1 or self.Nx < 1 or self.Ny < 1:
            raise ValueError("array sizes must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive (use inf to drop the cap)")
        if not self.P_max > 0:
            raise ValueError("P_max must be positive")
        if self.scheme == "two-target" and self.K != 2:
            raise ValueError("the two-target scheme needs K = 2")
        if self.scheme == "irsb" and (self.Nx % 2 or self.Ny % 2):
            raise ValueError("the tied-phase scheme needs even Nx and Ny")
        if self.scheme == "irsd" and self.K > self.Nx * self.Ny:
            raise ValueError("more targets than IRS elements")
        if self.directions_deg is not None and len(self.directions_deg) != self.K:
            raise ValueError("one direction per target is required")
        for L in self.groups or ():
            if not 1 <= int(L) <= self.K:
                raise ValueError("every group count must lie in [1, K]")
        TimingConfig(self.delta, self.n_pulses, self.guard)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        d = dict(d)
        if "bs_position" in d:
            d["bs_position"] = tuple(d["bs_position"])
        if "eps" in d:
            d["eps"] = float(d["eps"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bs_position"] = list(self.bs_position)
        return d

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(M=self.M, Nx=self.Nx, Ny=self.Ny)

    @property
    def timing(self) -> TimingConfig:
        return TimingConfig(self.delta, self.n_pulses, self.guard)

    @property
    def penalty(self) -> PenaltyConfig:
        return PenaltyConfig(eps_inner=self.eps_inner)

    def hybrid_config(self, seed) -> HybridConfig:
        pen = self.penalty
        return HybridConfig(eps_inner=self.eps_group, eps_binary=self.eps_binary, seed=seed,
                            penalty=pen, ss=SsConfig(penalty=pen, seed=seed))

    def scene(self, seed) -> SceneChannels:
        """Scene of one seed; directions come from a stream separate from the channel."""
        if self.directions_deg is not None:
            dirs = [Direction.from_degrees(a, e) for a, e in self.directions_deg]
        else:
            dirs = random_directions(self.K, np.random.default_rng([int(seed), 1]))
        return synthesize_channel(self.geometry, self.bs_position, directions=dirs,
                                  model=self.model, kappa=self.kappa, seed=int(seed),
                                  noise_power=float(dbm_to_watt(self.noise_power_dbm)),
                                  beta_magnitude=self.beta_magnitude)


# ---------------------------------------------------------------- designs

@dataclass
class Design:
    """Scheme-independent view of a solution."""

    scheme: str
    vs: list
    beams: list
    labels: np.ndarray
    eps: float
    P_max: float
    frequency: float
    status: str
    extra: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return len(self.vs)

    def members(self, l):
        return [int(k) for k in np.flatnonzero(self.labels == l)]

    def gains(self, Qs) -> np.ndarray:
        return np.array([beam_gain(self.vs[self.labels[k]], Qs[k], w)
                         for k, w in enumerate(self.beams)])

    def leakages(self, Qs) -> np.ndarray:
        out = np.zeros(len(self.beams))
        for k, w in enumerate(self.beams):
            l = self.labels[k]
            out[k] = sum(beam_gain(self.vs[l], Qs[j], w) for j in self.members(l) if j != k)
        return out

    def min_gain(self, Qs) -> float:
        return float(np.min(self.gains(Qs)))

    def to_dict(self, Qs=None) -> dict:
        def cplx(x):
            x = np.asarray(x)
            return {"re": x.real.tolist(), "im": x.imag.tolist()}
        d = {"scheme": self.scheme, "groups": int(self.L), "labels": self.labels.tolist(),
             "phases": [cplx(v) for v in self.vs], "beams": [cplx(w) for w in self.beams],
             "eps": None if not np.isfinite(self.eps) else self.eps, "P_max": self.P_max,
             "sensing_frequency": self.frequency, "status": self.status}
        if Qs is not None:
            d["gains"] = self.gains(Qs).tolist()
            d["leakages"] = self.leakages(Qs).tolist()
            d["min_gain"] = self.min_gain(Qs)
        d.update(self.extra)
        return d


@dataclass
class Certification:
    """Largest relative constraint violations of a design."""

    power_ratio: float
    leakage_ratio: float
    modulus_error: float
    grouping_ok: bool

    def ok(self, power_tol=1e-8, leakage_tol=1e-6, modulus_tol=1e-9) -> bool:
        return (self.power_ratio <= 1 + power_tol and self.leakage_ratio <= 1 + leakage_tol
                and self.modulus_error <= modulus_tol and self.grouping_ok)


def certify(design: Design, Qs) -> Certification:
    """Check power per slot, leakage, unit modulus and grouping by direct evaluation."""
    power = np.zeros(design.L)
    for k, w in enumerate(design.beams):
        power[design.labels[k]] += float(np.vdot(w, w).real)
    leak = design.leakages(Qs)
    leak_ratio = float(np.max(leak) / design.eps) if np.isfinite(design.eps) and leak.size else 0.0
    mod = max(float(np.max(np.abs(np.abs(v) - 1.0))) for v in design.vs)
    c = np.zeros((len(design.beams), design.L), dtype=int)
    c[np.arange(len(design.beams)), design.labels] = 1
    return Certification(float(np.max(power) / design.P_max), leak_ratio, mod,
                         bool(np.all(c.sum(axis=1) == 1)))


def _contiguous_labels(K, L):
    return np.concatenate([np.full(idx.size, l) for l, idx in enumerate(element_blocks(K, L))])


def run_scheme(cfg: ExperimentConfig, seed: int, scene: SceneChannels | None = None) -> Design:
    """Solve one scheme on the scene of ``seed``."""
    scene = cfg.scene(seed) if scene is None else scene
    Qs = scene.Qs
    K = scene.K
    P, eps, timing = cfg.P_max, cfg.eps, cfg.timing
    hc = cfg.hybrid_config(seed)
    if cfg.scheme == "td":
        res = td_scheme(Qs, P, cfg.penalty, seed)
        return Design("td", [r.v.v for r in res], [r.w.w for r in res], np.arange(K), eps, P,
                      sensing_frequency(timing, K), "ok")
    if cfg.scheme == "ss" or (cfg.scheme == "nic" and cfg.L == 1):
        e = np.inf if cfg.scheme == "nic" else eps
        sol = solve_ss(Qs, P, e, SsConfig(penalty=cfg.penalty, seed=seed))
        return Design(cfg.scheme, [sol.v.v], [b.w for b in sol.beams], np.zeros(K, dtype=int),
                      e, P, sensing_frequency(timing, 1), sol.status)
    if cfg.scheme == "two-target":
        sol = solve_two_target(Qs, P, eps, TwoTargetConfig(penalty=cfg.penalty, seed=seed))
        return Design("two-target", [sol.v.v], [b.w for b in sol.beams], np.zeros(2, dtype=int),
                      eps, P, sensing_frequency(timing, 1), sol.status,
                      {"branches": list(sol.branches)})
    if cfg.scheme in ("hybrid", "nic", "irsb"):
        e = np.inf if cfg.scheme == "nic" else eps
        if cfg.scheme == "irsb":
            T = block_tie_matrix(cfg.Nx, cfg.Ny)
            sol = solve_tied(Qs, T, cfg.L, P, e, timing, hc)
        else:
            sol = solve_hybrid(Qs, cfg.L, P, e, timing, hc)
        return Design(cfg.scheme, [v.v for v in sol.vs], [b.w for b in sol.beams],
                      sol.grouping.labels, e, P, sol.frequency, sol.status)
    if cfg.scheme == "irsd":
        labels = _contiguous_labels(K, cfg.L)
        vs, beams = [], [None] * K
        for l in range(cfg.L):
            members = [int(k) for k in np.flatnonzero(labels == l)]
            v, ws, _ = solve_divided(Qs[members], P, eps, replace(hc, seed=seed * 1000 + l))
            vs.append(v)
            for k, w in zip(members, ws):
                beams[k] = w
        return Design("irsd", vs, beams, labels, eps, P, sensing_frequency(timing, cfg.L), "ok")
    raise ValueError(f"unknown scheme {cfg.scheme!r}")


# ---------------------------------------------------------------- beam patterns

def beam_pattern_grid(scene: SceneChannels, design: Design, azimuths_deg, elevations_deg):
    """Rows ``(az_deg, el_deg, beam_index, gain)`` of every beam over a direction grid.

    Each beam is evaluated with the phases of its own slot.
    """
    az = np.atleast_1d(np.asarray(azimuths_deg, dtype=float))
    el = np.atleast_1d(np.asarray(elevations_deg, dtype=float))
    if az.size == 0 or el.size == 0:
        raise ValueError("empty direction grid")
    rows = []
    for a in az:
        for e in el:
            Q = effective_channel(scene.geom, Direction.from_degrees(a, e), scene.G)
            for k, w in enumerate(design.beams):
                rows.append((float(a), float(e), k, beam_gain(design.vs[design.labels[k]], Q, w)))
    return rows


def write_csv(path, header, rows):
    """Write rows atomically (temporary file and rename)."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([_fmt(x) for x in r])
    _atomic_write(path, buf.getvalue())


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x)}")


# ---------------------------------------------------------------- suites

def _job(args):
    cfg_dict, seed, outdir = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    tag = f"{cfg.name}_{cfg.scheme}_K{cfg.K}_L{cfg.L}_seed{seed}"
    try:
        scene = cfg.scene(seed)
        Qs = scene.Qs
        if cfg.groups:
            e = np.inf if cfg.scheme == "nic" else cfg.eps
            pts = tradeoff_curve(Qs, cfg.P_max, e, cfg.timing, cfg.groups,
                                 cfg.hybrid_config(seed))
            rows = [(cfg.name, cfg.scheme, cfg.K, p.L, seed, p.frequency, p.min_gain, p.solution.status)
                    for p in pts]
            write_csv(os.path.join(outdir, f"{tag}_tradeoff.csv"),
                      ("frequency_hz", "min_gain", "L"), [(p.frequency, p.min_gain, p.L) for p in pts])
            for p in pts:
                d = Design("hybrid", [v.v for v in p.solution.vs], [b.w for b in p.solution.beams],
                           p.solution.grouping.labels, e, cfg.P_max, p.frequency,
                           p.solution.status)
                _check_and_write(d, Qs, os.path.join(outdir, f"{tag}_L{p.L}.json"))
            return {"tag": tag, "rows": rows, "error": None}
        d = run_scheme(cfg, seed, scene)
        _check_and_write(d, Qs, os.path.join(outdir, f"{tag}.json"))
        return {"tag": tag, "error": None,
                "rows": [(cfg.name, cfg.scheme, cfg.K, cfg.L, seed, d.frequency, d.min_gain(Qs),
                          d.status)]}
    except Exception as exc:  # recorded per run; the suite continues
        return {"tag": tag, "rows": [], "error": f"{type(exc).__name__}: {exc}"}


class CertificationError(RuntimeError):
    pass


def _check_and_write(design: Design, Qs, path):
    cert = certify(design, Qs)
    if not cert.ok():
        raise CertificationError(f"design violates constraints: {cert}")
    d = design.to_dict(Qs)
    d["certification"] = asdict(cert)
    write_json(path, d)


def _versions():
    import clarabel
    import cvxopt
    import scipy
    return {"irs_sensing": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "cvxopt": cvxopt.__version__, "clarabel": clarabel.__version__}


def run_suite(config, outdir, jobs=1) -> dict:
    """Run every ``(experiment, seed)`` job of a suite and write the result bundle.

    ``config`` is a path to a JSON file or a dictionary with a ``runs`` list
    of :class:`ExperimentConfig` dictionaries.  Writes one JSON per solution,
    ``summary.csv``, trade-off CSVs for runs with ``groups`` and
    ``manifest.json``.  Failed jobs are listed in the manifest.
    """
    if isinstance(config, (str, os.PathLike)):
        with open(config) as fh:
            config = json.load(fh)
    runs = [ExperimentConfig.from_dict(r) for r in config.get("runs", [])]
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    tasks = [(r.to_dict(), int(s), outdir) for r in runs for s in r.seeds]
    os.makedirs(outdir, exist_ok=True)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_job, tasks))
    else:
        results = [_job(t) for t in tasks]
    rows = [row for r in results for row in r["rows"]]
    write_csv(os.path.join(outdir, "summary.csv"),
              ("name", "scheme", "K", "L", "seed", "frequency_hz", "min_gain", "status"), rows)
    manifest = {"config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
                "seeds": sorted({int(s) for r in runs for s in r.seeds}),
                "versions": _versions(),
                "jobs": [r["tag"] for r in results],
                "failures": {r["tag"]: r["error"] for r in results if r["error"]}}
    write_json(os.path.join(outdir, "manifest.json"), manifest)
    return manifest
