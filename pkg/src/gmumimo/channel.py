"""Right-unitarily-invariant channel matrices and their spectral transforms.

A channel is A = U diag(e) V with Haar-distributed unitary factors and a
controlled singular spectrum e_1 >= ... >= e_T > 0.  All state-evolution
quantities downstream depend on A only through the spectrum, which is why it
is computed at generation time and persisted next to the entries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError, SingularityError

MAGIC = b"GMUCHAN1"

_SPECTRUM_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SnrPoint:
    """Linear SNR (= 1/noise variance) together with its dB value."""

    snr: float
    snr_db: float

    @classmethod
    def from_db(cls, snr_db: float) -> "SnrPoint":
        return cls(10.0 ** (snr_db / 10.0), float(snr_db))

    @classmethod
    def from_linear(cls, snr: float) -> "SnrPoint":
        if snr <= 0:
            raise ParameterError(f"snr must be positive, got {snr}")
        return cls(float(snr), 10.0 * np.log10(snr))


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex M x N channel with its singular spectrum.

    The trace normalization tr(A^H A) = N holds for every generated or
    loaded instance.  `u` and `v` keep the SVD factors when the matrix was
    produced in-process; they are regenerated on demand after a load.
    """

    entries: np.ndarray
    spectrum: np.ndarray
    m: int
    n: int
    u: np.ndarray | None = field(default=None, repr=False, compare=False)
    v: np.ndarray | None = field(default=None, repr=False, compare=False)
    # receiver-side perturbed estimates are not trace-normalized
    normalized: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.entries.shape != (self.m, self.n):
            raise ParameterError(
                f"entries shape {self.entries.shape} != ({self.m}, {self.n})"
            )
        t = min(self.m, self.n)
        if self.spectrum.shape != (t,):
            raise ParameterError(f"spectrum must have length {t}")
        if np.any(np.diff(self.spectrum) > 0):
            raise ParameterError("spectrum must be sorted non-increasing")
        if self.normalized:
            total = float(np.sum(self.spectrum**2))
            if abs(total - self.n) / self.n >= 1e-9:
                raise ParameterError(
                    f"spectrum violates sum e_i^2 = N: got {total} for N={self.n}"
                )

    @property
    def t(self) -> int:
        return min(self.m, self.n)

    @property
    def beta(self) -> float:
        """Channel load N/M."""
        return self.n / self.m

    def svd_factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (U, e, Vh) with A = U diag(e) Vh; computed lazily if needed."""
        if self.u is not None and self.v is not None:
            return self.u, self.spectrum, self.v
        u, e, vh = np.linalg.svd(self.entries, full_matrices=True)
        return u, e, vh


def _haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    # QR of an IID complex Gaussian matrix; the phase correction on R's
    # diagonal is required for the Haar measure.
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def geometric_spectrum(m: int, n: int, kappa: float) -> np.ndarray:
    """Singular values with e_i/e_{i+1} = kappa^(1/T) and sum e_i^2 = N."""
    if m < 1 or n < 1:
        raise ParameterError(f"dimensions must be >= 1, got ({m}, {n})")
    if kappa < 1.0:
        raise ParameterError(f"kappa must be >= 1, got {kappa}")
    t = min(m, n)
    ratio = kappa ** (1.0 / t)
    e = ratio ** np.arange(t - 1, -1, -1.0)
    e *= np.sqrt(n / np.sum(e**2))
    return e


def _assemble(m, n, spectrum, rng) -> ChannelMatrix:
    u = _haar_unitary(m, rng)
    v = _haar_unitary(n, rng)
    lam = np.zeros((m, n), dtype=complex)
    t = min(m, n)
    lam[np.arange(t), np.arange(t)] = spectrum
    a = u @ lam @ v
    return ChannelMatrix(entries=a, spectrum=spectrum, m=m, n=n, u=u, v=v)


def gen_ill_conditioned(m: int, n: int, kappa: float, seed: int) -> ChannelMatrix:
    """Generate A = U diag(e) V with a geometric spectrum of condition kappa."""
    spectrum = geometric_spectrum(m, n, kappa)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6368616E]))
    return _assemble(m, n, spectrum, rng)


def gen_iid_gaussian(m: int, n: int, seed: int) -> ChannelMatrix:
    """IID complex Gaussian entries, trace-normalized, spectrum attached."""
    if m < 1 or n < 1:
        raise ParameterError(f"dimensions must be >= 1, got ({m}, {n})")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x69696467]))
    a = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2.0)
    u, e, vh = np.linalg.svd(a, full_matrices=True)
    scale = np.sqrt(n / np.sum(e**2))
    e = e * scale
    a = a * scale
    return ChannelMatrix(entries=a, spectrum=e, m=m, n=n, u=u, v=vh)


def omega_L(spectrum: np.ndarray, n: int, snr: float, rho) -> float | np.ndarray:
    """Per-antenna trace of [snr A^H A + rho I]^-1 from the spectrum.

    Accepts scalar or array rho.  rho = 0 is only defined for full column
    rank (T = N), otherwise the inverse does not exist.
    """
    e2 = np.asarray(spectrum) ** 2
    t = e2.size
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ParameterError("rho must be >= 0")
    if np.any(rho == 0) and t < n:
        raise SingularityError("rho = 0 with rank-deficient snr A^H A")
    r = rho[..., None]
    main = np.sum(1.0 / (snr * e2 + r), axis=-1)
    if t < n:
        main = main + (n - t) / rho
    out = main / n
    return float(out) if out.ndim == 0 else out


def save(chan: ChannelMatrix, path) -> None:
    """Write the binary channel format (magic, dims, spectrum, entries)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", chan.m, chan.n))
        fh.write(chan.spectrum.astype("<f8").tobytes())
        inter = np.empty((chan.m * chan.n, 2), dtype="<f8")
        flat = chan.entries.reshape(-1)
        inter[:, 0] = flat.real
        inter[:, 1] = flat.imag
        fh.write(inter.tobytes())


def load(path) -> ChannelMatrix:
    """Read the binary channel format; raises FormatError on any corruption."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 8:
        raise FormatError(f"file too short ({len(data)} bytes) for header")
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"bad magic bytes {data[:len(MAGIC)]!r}")
    m, n = struct.unpack_from("<II", data, len(MAGIC))
    t = min(m, n)
    off = len(MAGIC) + 8
    need = off + 8 * t + 16 * m * n
    if len(data) != need:
        raise FormatError(
            f"truncated or oversized file: expected {need} bytes, got "
            f"{len(data)} (failure at byte {min(len(data), need)})"
        )
    spectrum = np.frombuffer(data, dtype="<f8", count=t, offset=off).copy()
    off += 8 * t
    inter = np.frombuffer(data, dtype="<f8", count=2 * m * n, offset=off)
    entries = (inter[0::2] + 1j * inter[1::2]).reshape(m, n)
    try:
        return ChannelMatrix(entries=entries, spectrum=spectrum, m=m, n=n)
    except ParameterError as exc:
        raise FormatError(f"inconsistent channel file: {exc}") from exc


def save_spectrum_text(chan: ChannelMatrix, path) -> None:
    """Text variant: '# M N' header then one singular value per line."""
    with open(path, "w") as fh:
        fh.write(f"# {chan.m} {chan.n}\n")
        for e in chan.spectrum:
            fh.write(f"{e!r}\n")


def load_spectrum_text(path) -> tuple[np.ndarray, int, int]:
    """Read the text spectrum format; returns (spectrum, m, n)."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "#":
            raise FormatError("spectrum file must start with '# M N'")
        try:
            m, n = int(header[1]), int(header[2])
        except ValueError as exc:
            raise FormatError(f"bad dimensions in header: {header}") from exc
        values = [float(line) for line in fh if line.strip()]
    if len(values) != min(m, n):
        raise FormatError(
            f"expected {min(m, n)} singular values, found {len(values)}"
        )
    return np.asarray(values), m, n
