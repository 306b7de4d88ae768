"""Channel generation and imperfect-CSIT models.

Conventions used throughout the package: row ``k`` of a channel matrix ``H``
holds the conjugate-transposed user channel ``h_k^H``, so the noiseless
received signal for a transmit vector ``x`` is ``H @ x`` and the effective
gain of a precoder ``p`` at user ``k`` is ``|H[k] @ p|**2``.  Noise power is
normalized to one, hence ``P`` is the transmit SNR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg

from .errors import DegenerateInputError, DimensionError, DomainError, PreconditionError

MAX_RVQ_BITS = 30
# Codebooks are drawn in fixed-size blocks so that a 2**B codebook is always
# a prefix of the 2**(B+1) codebook drawn from the same seed.
_RVQ_BLOCK = 1 << 14


def complex_normal(rng, shape):
    """Standard circularly-symmetric complex Gaussian samples (unit variance)."""
    z = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


@dataclass(frozen=True)
class ChannelRealization:
    """True downlink channel of ``K`` single-antenna users and ``M`` antennas."""

    H: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
            raise DimensionError(f"channel must be a non-empty K x M matrix, got {H.shape}")
        if not np.all(np.isfinite(H)):
            raise DomainError("channel entries must be finite")
        object.__setattr__(self, "H", H)

    @property
    def K(self) -> int:
        return self.H.shape[0]

    @property
    def M(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class CsitQuality:
    """Quality descriptor of a CSIT estimate.

    ``kind`` is ``"exponent"`` (Gaussian error decaying as ``P**-alpha``),
    ``"rvq"`` (``bits`` of random vector quantization feedback) or
    ``"perfect"``.
    """

    kind: str
    alpha: float | None = None
    bits: int | None = None

    def __post_init__(self):
        if self.kind == "exponent":
            if self.alpha is None or not self.alpha >= 0:
                raise DomainError(f"exponent CSIT needs alpha >= 0, got {self.alpha}")
        elif self.kind == "rvq":
            if self.bits is None or int(self.bits) != self.bits:
                raise DomainError(f"rvq CSIT needs an integer bit count, got {self.bits}")
            if not 1 <= self.bits <= MAX_RVQ_BITS:
                raise PreconditionError(f"rvq bits must lie in [1, {MAX_RVQ_BITS}], got {self.bits}")
        elif self.kind != "perfect":
            raise DomainError(f"unknown CSIT kind {self.kind!r}")

    @classmethod
    def exponent(cls, alpha):
        return cls("exponent", alpha=float(alpha))

    @classmethod
    def rvq(cls, bits):
        return cls("rvq", bits=int(bits))

    @classmethod
    def perfect(cls):
        return cls("perfect")

    def error_variance(self, P):
        """Per-entry error variance ``min(1, P**-alpha)`` (exponent kind)."""
        if self.kind == "perfect":
            return 0.0
        if self.kind != "exponent":
            raise DomainError("error variance is only defined for exponent CSIT")
        if not P > 0:
            raise DomainError(f"power must be positive, got {P}")
        return float(min(1.0, P ** (-self.alpha)))


@dataclass(frozen=True)
class CsitEstimate:
    Hhat: np.ndarray
    quality: CsitQuality
    error_var: np.ndarray | None = None
    sin_sq: np.ndarray | None = None


@dataclass(frozen=True)
class SpatialCovariance:
    """Normalized (``trace == M``) transmit correlation matrix of a ULA."""

    R: np.ndarray
    azimuth: float = 0.0
    angular_spread: float = 0.0
    spacing: float = 0.5
    _sqrt: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def M(self) -> int:
        return self.R.shape[0]

    def sqrtm(self):
        """Hermitian square root; rejects matrices that are not PSD."""
        if self._sqrt is None:
            object.__setattr__(self, "_sqrt", psd_sqrt(self.R))
        return self._sqrt

    def dominant_eigvecs(self, r):
        w, U = np.linalg.eigh(self.R)
        return U[:, ::-1][:, :r]

    def effective_rank(self, energy=0.95):
        """Smallest ``r`` whose leading eigenvalues hold ``energy`` of the trace."""
        w = np.clip(np.linalg.eigvalsh(self.R)[::-1], 0.0, None)
        c = np.cumsum(w) / w.sum()
        return int(np.searchsorted(c, energy - 1e-12) + 1)


def psd_sqrt(R, tol=1e-10):
    R = np.asarray(R, dtype=complex)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DimensionError(f"covariance must be square, got {R.shape}")
    if not np.allclose(R, R.conj().T, atol=1e-12, rtol=0):
        raise DomainError("covariance is not Hermitian")
    w, U = np.linalg.eigh(R)
    if w.min() < -tol:
        raise DomainError(f"covariance is not PSD (min eigenvalue {w.min():.3e})")
    # round-off eigenvalues of a singular R would otherwise leak into its null space
    w = np.where(w > tol * max(w.max(), 1.0), w, 0.0)
    return (U * np.sqrt(w)) @ U.conj().T


def draw_channel(K, M, seed=None) -> ChannelRealization:
    """Draw an i.i.d. Rayleigh channel with unit-variance entries."""
    if int(K) != K or int(M) != M or K < 1 or M < 1:
        raise DimensionError(f"need K >= 1 and M >= 1, got K={K}, M={M}")
    rng = np.random.default_rng(seed)
    return ChannelRealization(complex_normal(rng, (int(K), int(M))))


def gaussian_csit(H, alpha, P, seed=None, covariances=None) -> CsitEstimate:
    """Imperfect CSIT with an SNR-dependent Gaussian error.

    Each estimate is ``sqrt(1 - tau2) * h_k + sqrt(tau2) * e_k`` with
    ``tau2 = min(1, P**-alpha)``.  The error ``e_k`` is white unless
    per-user ``covariances`` are given, in which case it is drawn with the
    same spatial correlation as the channel.
    """
    H = H.H if isinstance(H, ChannelRealization) else np.asarray(H, dtype=complex)
    if not P > 0:
        raise DomainError(f"power must be positive, got {P}")
    if not alpha >= 0:
        raise DomainError(f"alpha must be non-negative, got {alpha}")
    quality = CsitQuality.exponent(alpha)
    tau2 = quality.error_variance(P)
    rng = np.random.default_rng(seed)
    E = complex_normal(rng, H.shape)
    if covariances is not None:
        # rows store conjugated vectors, so shape them with R^{1/2} itself
        E = np.stack([E[k] @ covariances[k].sqrtm() for k in range(H.shape[0])])
    Hhat = np.sqrt(1.0 - tau2) * H + np.sqrt(tau2) * E
    return CsitEstimate(Hhat, quality, error_var=np.full(H.shape[0], tau2))


def random_codebook(n, M, rng):
    """``n`` i.i.d. isotropic unit vectors (rows), drawn in prefix-stable blocks."""
    blocks = []
    left = n
    while left > 0:
        m = min(left, _RVQ_BLOCK)
        blocks.append(complex_normal(rng, (m, M)))
        left -= m
    C = blocks[0] if len(blocks) == 1 else np.concatenate(blocks)
    return C / np.linalg.norm(C, axis=1, keepdims=True)


def rvq_quantize(h, B, seed=None, codebook=None):
    """Quantize the direction of ``h`` with a fresh random ``B``-bit codebook.

    Parameters
    ----------
    h : (M,) complex array
        Channel vector to quantize.
    B : int
        Feedback bits; the codebook holds ``2**B`` unit vectors.
    seed : int, Generator or None
        Codebook randomness.
    codebook : (N, M) array, optional
        Use these rows (normalized) instead of drawing a codebook.

    Returns
    -------
    direction : (M,) complex array
        Unit-norm codeword maximizing ``|h^H w| / ||h||``.
    sin_sq : float
        Quantization distortion ``1 - |h^H w|**2 / ||h||**2``.
    """
    h = np.asarray(h, dtype=complex).ravel()
    if int(B) != B or not 1 <= B <= MAX_RVQ_BITS:
        raise PreconditionError(f"B must be an integer in [1, {MAX_RVQ_BITS}], got {B}")
    nrm2 = np.vdot(h, h).real
    if not nrm2 > 0:
        raise DegenerateInputError("cannot quantize a zero channel vector")
    M = h.size
    if codebook is not None:
        C = np.asarray(codebook, dtype=complex)
        C = C / np.linalg.norm(C, axis=1, keepdims=True)
        return _best_codeword(C, h, nrm2)
    rng = np.random.default_rng(seed)
    n = 1 << int(B)
    if n <= 4 * _RVQ_BLOCK:
        return _best_codeword(random_codebook(n, M, rng), h, nrm2)
    # Large codebooks are scanned block by block; the draw order matches
    # random_codebook so the result is the same as materializing it.
    best_w, best_s = None, np.inf
    for _ in range(n // _RVQ_BLOCK):
        w, s = _best_codeword(random_codebook(_RVQ_BLOCK, M, rng), h, nrm2)
        if s < best_s:
            best_w, best_s = w, s
    return best_w, best_s


def _best_codeword(C, h, nrm2):
    corr = np.abs(C.conj() @ h) ** 2
    i = int(np.argmax(corr))
    s = 1.0 - corr[i] / nrm2
    return C[i].copy(), float(min(1.0, max(0.0, s)))


def rvq_csit(H, B, seed=None) -> CsitEstimate:
    """Direction-only RVQ feedback for every user (independent codebooks).

    Row ``k`` of the estimate is the conjugate of user ``k``'s codeword, so it
    has unit norm and follows the row convention of ``H``.
    """
    H = H.H if isinstance(H, ChannelRealization) else np.asarray(H, dtype=complex)
    rng = np.random.default_rng(seed)
    rows, sins = [], []
    for k in range(H.shape[0]):
        w, s = rvq_quantize(H[k].conj(), B, rng)
        rows.append(w.conj())
        sins.append(s)
    return CsitEstimate(np.array(rows), CsitQuality.rvq(B), sin_sq=np.array(sins))


def one_ring_covariance(azimuth, angular_spread, M, spacing=0.5) -> SpatialCovariance:
    """One-ring covariance of an ``M``-element ULA.

    ``R[p, q]`` is the average of ``exp(j 2 pi spacing (p - q) sin(phi))`` over
    ``phi`` uniform in ``[azimuth - spread, azimuth + spread]``.
    """
    if not angular_spread > 0:
        raise DomainError(f"angular spread must be positive, got {angular_spread}")
    if int(M) != M or M < 2:
        raise DimensionError(f"one-ring model needs M >= 2, got {M}")
    M = int(M)
    lo, hi = azimuth - angular_spread, azimuth + angular_spread
    col = np.empty(M, dtype=complex)
    for d in range(M):
        arg = 2.0 * np.pi * spacing * d
        re = integrate.quad(lambda phi: np.cos(arg * np.sin(phi)), lo, hi,
                            epsabs=1e-10, epsrel=1e-10, limit=200)[0]
        im = integrate.quad(lambda phi: np.sin(arg * np.sin(phi)), lo, hi,
                            epsabs=1e-10, epsrel=1e-10, limit=200)[0]
        col[d] = (re + 1j * im) / (2.0 * angular_spread)
    R = linalg.toeplitz(col, col.conj())
    R = 0.5 * (R + R.conj().T)
    R *= M / np.trace(R).real
    return SpatialCovariance(R, float(azimuth), float(angular_spread), float(spacing))


def draw_correlated_channel(R, seed=None, size=None):
    """Draw ``h = R^{1/2} g`` (or ``size`` such vectors stacked along axis 0)."""
    cov = R if isinstance(R, SpatialCovariance) else SpatialCovariance(np.asarray(R, dtype=complex))
    root = cov.sqrtm()
    rng = np.random.default_rng(seed)
    shape = (cov.M,) if size is None else (int(size), cov.M)
    g = complex_normal(rng, shape)
    return g @ root.T
