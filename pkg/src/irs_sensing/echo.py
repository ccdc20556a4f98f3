"""Signal-level simulation of signature-sequence sensing.

Every beam is modulated by its own orthogonal code.  The echo of target
``k`` reaches the BS along ``h_k = Q_k^H v`` (the reverse of the cascaded
link), scaled by the target's reflection coefficient and by the IRS-side
amplitude ``h_k^H w`` of the beam hitting it.  The receiver combines the
antennas with a matched filter, aligns to the target's delay and correlates
with the target's code.  Under the simplified model only beam ``k`` is
reflected by target ``k``; the full model adds the leakage of every other
beam reflected by target ``k``.  Such an echo carries its own beam's code,
so it interferes with that beam's target whenever the delays coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard

from .channel import SceneChannels


# ---------------------------------------------------------------- codes

@dataclass
class SignatureCodebook:
    """``K`` unit-modulus, mutually orthogonal codes of length ``N_p`` (rows)."""

    codes: np.ndarray
    kind: str = "dft"

    def __post_init__(self):
        self.codes = np.atleast_2d(np.asarray(self.codes, dtype=complex))
        if not np.allclose(np.abs(self.codes), 1.0, atol=1e-12):
            raise ValueError("code entries must have unit modulus")
        gram = self.codes.conj() @ self.codes.T
        if not np.allclose(gram, self.length * np.eye(self.K), atol=1e-9 * self.length):
            raise ValueError("codes are not orthogonal")

    @property
    def K(self) -> int:
        return self.codes.shape[0]

    @property
    def length(self) -> int:
        return self.codes.shape[1]

    def gram(self) -> np.ndarray:
        return self.codes.conj() @ self.codes.T


def make_codebook(K, N_p, kind="dft") -> SignatureCodebook:
    """Orthogonal codebook from DFT rows or Walsh-Hadamard rows.

    Walsh codes need ``N_p`` to be a power of two and are exactly +-1.
    """
    if K < 1 or N_p < 1:
        raise ValueError("K and N_p must be positive")
    if K > N_p:
        raise ValueError(f"only {N_p} orthogonal codes of length {N_p} exist, {K} requested")
    if kind == "dft":
        t = np.arange(N_p)
        codes = np.exp(-2j * np.pi * np.outer(np.arange(K), t) / N_p)
    elif kind == "walsh":
        if N_p & (N_p - 1):
            raise ValueError("Walsh codes need a power-of-two length")
        codes = hadamard(N_p)[:K].astype(complex)
    else:
        raise ValueError(f"unknown code family {kind!r}")
    return SignatureCodebook(codes, kind)


# ---------------------------------------------------------------- echoes

@dataclass
class EchoTrace:
    """Received samples ``y[t]`` (rows) with the delays and noise metadata."""

    y: np.ndarray
    delays: tuple
    seed: int | None
    noise_power: float
    full_model: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.y.shape[0]


def _betas(scene: SceneChannels, betas):
    b = scene.betas if betas is None else np.asarray(betas, dtype=complex)
    if b is None or len(b) != scene.K:
        raise ValueError("one reflection coefficient per target is required")
    return np.asarray(b, dtype=complex)


def _shifted(code, delay, length):
    out = np.zeros(length, dtype=complex)
    out[delay:delay + code.size] = code
    return out


def echo_components(scene: SceneChannels, v, beams, betas=None):
    """Receive directions ``h_k`` and IRS-side amplitudes ``amp[i, k] = h_i^H w_k``."""
    v = np.asarray(v, dtype=complex)
    H = np.einsum("knm,n->km", scene.Qs.conj(), v)  # rows h_k = Q_k^H v
    W = np.stack([np.asarray(w, dtype=complex) for w in beams], axis=1)
    return H, H.conj() @ W, _betas(scene, betas)


def simulate_echo(scene: SceneChannels, beams, v, codebook: SignatureCodebook, delays,
                  seed=None, noise_power=None, full_model=False, betas=None,
                  length=None) -> EchoTrace:
    """Received BS samples for one dwell.

    Parameters
    ----------
    scene : SceneChannels
    beams : sequence of ndarray
        One beam per target, each of length ``M``.
    v : ndarray
        Unit-modulus IRS phases.
    codebook : SignatureCodebook
        Code ``k`` modulates beam ``k``.
    delays : sequence of int
        Round-trip delay of each target in samples.
    seed : int, optional
        Seeds the noise; ``noise_power = 0`` gives a noiseless trace.
    full_model : bool
        Also include every beam's leakage reflected by the other targets.
    betas : array_like, optional
        Override the scene's reflection coefficients.
    length : int, optional
        Trace length; defaults to ``N_p + max(delays)``.
    """
    K = scene.K
    delays = tuple(int(d) for d in delays)
    if len(delays) != K or len(beams) != K or codebook.K < K:
        raise ValueError("delays, beams and codes must cover every target")
    if min(delays) < 0:
        raise ValueError("delays must be non-negative")
    N_p = codebook.length
    T = N_p + max(delays) if length is None else int(length)
    if T < N_p + max(delays):
        raise ValueError("delay exceeds the trace capacity")
    sigma2 = scene.noise_power if noise_power is None else float(noise_power)
    H, amp, b = echo_components(scene, v, beams, betas)
    y = np.zeros((T, scene.geom.M), dtype=complex)
    for k in range(K):  # reflecting target
        for i in range(K):  # beam / code
            if i != k and not full_model:
                continue
            y += np.outer(_shifted(codebook.codes[i], delays[k], T), H[k] * b[k] * amp[k, i])
    if sigma2 > 0:
        rng = np.random.default_rng(seed)
        y += np.sqrt(sigma2 / 2) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return EchoTrace(y, delays, seed, sigma2, full_model)


def signal_vector(scene: SceneChannels, v, w, k, betas=None):
    """Noise-free BS response ``h_k beta_k h_k^H w`` of beam ``w`` off target ``k``."""
    H, amp, b = echo_components(scene, v, [w] * scene.K, betas)
    return H[k] * b[k] * amp[k, 0]


def matched_filter(scene: SceneChannels, v, w, k, betas=None):
    """Unit-norm combiner aligned with target ``k``'s echo of beam ``w``."""
    s = signal_vector(scene, v, w, k, betas)
    nrm = np.linalg.norm(s)
    if nrm == 0:
        raise ValueError("target echo vanishes; matched filter undefined")
    return s / nrm


# ---------------------------------------------------------------- detection

@dataclass
class DetectionResult:
    """Correlator output ``z`` for one target and, once thresholded, the decision."""

    z: complex
    threshold: float | None = None
    misaligned: bool = False

    @property
    def energy(self) -> float:
        return float(abs(self.z) ** 2)

    @property
    def decision(self) -> str | None:
        if self.threshold is None:
            return None
        return "H1" if self.energy > self.threshold else "H0"


def extract(trace: EchoTrace, codebook: SignatureCodebook, f, delay, k) -> DetectionResult:
    """Filter, align and correlate with code ``k``: ``z = s_k^H [f^H y[t + delay]]_t``.

    The result is flagged as misaligned when its energy is below a tenth of
    the noise-only expectation ``N_p sigma^2``.
    """
    N_p = codebook.length
    if delay < 0 or delay + N_p > trace.length:
        raise ValueError("trace too short for this delay")
    combined = trace.y[delay:delay + N_p] @ np.asarray(f).conj()
    z = complex(np.vdot(codebook.codes[k], combined))
    floor = N_p * trace.noise_power
    return DetectionResult(z, misaligned=bool(floor > 0 and abs(z) ** 2 < 0.1 * floor))


def detect(result: DetectionResult, threshold: float) -> str:
    """``'H1'`` iff ``|z|^2 > threshold``."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    result.threshold = float(threshold)
    return result.decision


def threshold_for_pfa(p_fa, noise_power, N_p) -> float:
    """Energy threshold ``-N_p sigma^2 ln(p_fa)`` for circular Gaussian noise."""
    if not 0.0 < p_fa < 1.0:
        raise ValueError("false-alarm probability must lie in (0, 1)")
    return float(-N_p * noise_power * np.log(p_fa))


@dataclass
class MonteCarloResult:
    trials: int
    detections: int
    threshold: float

    @property
    def rate(self) -> float:
        return self.detections / self.trials


def monte_carlo_detection(scene: SceneChannels, v, beams, codebook: SignatureCodebook, delays,
                          k, threshold, trials, seed=0, present=True, full_model=False,
                          betas=None, batch=10_000) -> MonteCarloResult:
    """Fraction of noisy dwells in which target ``k`` is declared present.

    With ``present=False`` every reflection is switched off, giving the
    false-alarm rate.  Trials run in fixed-size batches, each with its own
    stream spawned from ``seed``, so results do not depend on scheduling.
    """
    b = _betas(scene, betas)
    clean = simulate_echo(scene, beams, v, codebook, delays, noise_power=0.0,
                          full_model=full_model, betas=b if present else np.zeros(scene.K))
    f = matched_filter(scene, v, beams[k], k, b)
    N_p = codebook.length
    d = int(delays[k])
    sigma = np.sqrt(scene.noise_power / 2)
    base = clean.y[d:d + N_p] @ f.conj()
    code = codebook.codes[k].conj()
    n_batches = -(-trials // batch)
    hits = 0
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n_batches)):
        n = min(batch, trials - i * batch)
        rng = np.random.default_rng(child)
        noise = sigma * (rng.standard_normal((n, N_p, scene.geom.M))
                         + 1j * rng.standard_normal((n, N_p, scene.geom.M)))
        z = (base[None, :] + noise @ f.conj()) @ code
        hits += int(np.count_nonzero(np.abs(z) ** 2 > threshold))
    return MonteCarloResult(trials, hits, float(threshold))


# ---------------------------------------------------------------- SINR

def sinr(scene: SceneChannels, v, beams, f, k, betas=None, noise_power=None) -> float:
    """Output SINR of target ``k`` in dB.

    The signal is beam ``k`` reflected by target ``k``; the interference is
    beam ``k`` leaking to the other targets and reflected back, which shares
    code and filter with the signal.
    """
    sigma2 = scene.noise_power if noise_power is None else float(noise_power)
    H, amp, b = echo_components(scene, v, beams, betas)
    f = np.asarray(f, dtype=complex)
    sig = abs(b[k]) ** 2 * abs(np.vdot(f, H[k]) * amp[k, k]) ** 2
    interf = sum(abs(b[j]) ** 2 * abs(np.vdot(f, H[j]) * amp[j, k]) ** 2
                 for j in range(scene.K) if j != k)
    den = interf + sigma2 * float(np.vdot(f, f).real)
    if den <= 0:
        raise ValueError("zero interference-plus-noise power")
    return float(10 * np.log10(sig / den))


def scheme_sinr(scene: SceneChannels, v, beams, betas=None, noise_power=None) -> np.ndarray:
    """Per-target SINR in dB with matched filters."""
    out = []
    for k in range(scene.K):
        f = matched_filter(scene, v, beams[k], k, betas)
        out.append(sinr(scene, v, beams, f, k, betas, noise_power))
    return np.array(out)
