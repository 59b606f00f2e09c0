"""Baseband generation of the two uplink waveforms, the Rapp amplifier
model, and PAPR measurement.

Conventions used throughout:

- Transforms are unitary (``norm="ortho"``). On top of that, generators
  apply a loading factor ``sqrt(N / N_d)`` so that the mean power of the
  time-domain signal equals the mean power of the data block regardless of
  how many subcarriers are occupied. With a full allocation the factor is
  ~1 and the PAPR statistics are unaffected either way (PAPR is scale
  invariant).
- Subcarrier mapping is contiguous, starting at a configurable offset.
- The cyclic prefix is a fixed N/8-sample tail copy; it is never included
  in PAPR statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Rank-1 two-port uplink codebook; columns are unit-norm precoders.
PRECODER_CODEBOOK = np.array(
    [[1, 1], [1, -1], [1, 1j], [1, -1j]], dtype=complex
).T / np.sqrt(2.0)

_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j], dtype=complex) / np.sqrt(2.0)
_QAM16_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(10.0)


@dataclass
class OfdmGrid:
    """Dimensions of one OFDM symbol.

    ``n_subcarriers`` is the IDFT size N, ``dft_size`` the spreading DFT
    size M (meaningful for DFT-S-OFDM only), ``offset`` the first occupied
    subcarrier and ``n_tx`` the number of antenna ports.
    """

    n_subcarriers: int
    dft_size: int
    offset: int = 0
    n_tx: int = 1

    def __post_init__(self):
        n, m = self.n_subcarriers, self.dft_size
        if n < 1 or (n & (n - 1)) != 0:
            raise ValueError(f"subcarrier count must be a power of two, got {n}")
        if not 1 <= m <= n:
            raise ValueError(f"DFT size {m} outside [1, {n}]")
        if self.offset < 0 or self.offset + m > n:
            raise ValueError("mapped band does not fit inside the grid")
        if self.n_tx < 1:
            raise ValueError("need at least one antenna port")


@dataclass
class RappPa:
    """Memoryless Rapp amplifier: small-signal gain ``v``, limiting output
    amplitude ``a_sat`` and smoothness ``p``. Amplitude distortion only."""

    v: float = 1.0
    a_sat: float = 1.0
    p: float = 2.0

    def __post_init__(self):
        if self.v <= 0 or self.a_sat <= 0 or self.p <= 0:
            raise ValueError("v, a_sat and p must all be positive")


def qpsk_symbols(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` unit-average-power QPSK symbols."""
    return _QPSK[rng.integers(0, 4, size=n)]


def qam16_symbols(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` unit-average-power 16-QAM symbols."""
    re = _QAM16_LEVELS[rng.integers(0, 4, size=n)]
    im = _QAM16_LEVELS[rng.integers(0, 4, size=n)]
    return re + 1j * im


def _map_subcarriers(values: np.ndarray, grid: OfdmGrid) -> np.ndarray:
    """Place ``values`` contiguously at the grid offset of an all-zero grid."""
    x = np.zeros(grid.n_subcarriers, dtype=complex)
    x[grid.offset : grid.offset + values.shape[0]] = values
    return x


def generate_cp_ofdm(d: np.ndarray, w: np.ndarray, grid: OfdmGrid) -> np.ndarray:
    """CP-OFDM symbol: precode ``d`` with the unit-norm column ``w``, map to
    subcarriers and IDFT.

    Returns an (N, n_tx) array, one time-domain port signal per column.
    The summed mean power over ports equals the mean power of ``d``.
    """
    d = np.asarray(d, dtype=complex).reshape(-1)
    w = np.asarray(w, dtype=complex).reshape(-1)
    if d.size < 1:
        raise ValueError("empty data block")
    if d.size > grid.n_subcarriers - grid.offset:
        raise ValueError(f"{d.size} symbols do not fit the mapped band")
    if w.size != grid.n_tx:
        raise ValueError(f"precoder length {w.size} != {grid.n_tx} ports")
    load = np.sqrt(grid.n_subcarriers / d.size)
    out = np.empty((grid.n_subcarriers, grid.n_tx), dtype=complex)
    for port in range(grid.n_tx):
        mapped = _map_subcarriers(w[port] * d, grid)
        out[:, port] = load * np.fft.ifft(mapped, norm="ortho")
    return out


def generate_dft_s_ofdm(d: np.ndarray, grid: OfdmGrid) -> np.ndarray:
    """DFT-S-OFDM symbol: M-point DFT spreading of ``d``, subcarrier mapping,
    then IDFT. Returns an (N,) single-port time signal with the mean power
    of ``d``."""
    d = np.asarray(d, dtype=complex).reshape(-1)
    if d.size < 1:
        raise ValueError("empty data block")
    if d.size > grid.dft_size:
        raise ValueError(f"{d.size} symbols exceed the DFT size {grid.dft_size}")
    spread_in = np.zeros(grid.dft_size, dtype=complex)
    spread_in[: d.size] = d
    spread = np.fft.fft(spread_in, norm="ortho")
    mapped = _map_subcarriers(spread, grid)
    load = np.sqrt(grid.n_subcarriers / d.size)
    return load * np.fft.ifft(mapped, norm="ortho")


def demap_cp_ofdm(x: np.ndarray, grid: OfdmGrid, n_data: int) -> np.ndarray:
    """Invert :func:`generate_cp_ofdm` for a single port signal."""
    spec = np.fft.fft(np.asarray(x, dtype=complex), norm="ortho")
    return spec[grid.offset : grid.offset + n_data] / np.sqrt(grid.n_subcarriers / n_data)


def demap_dft_s_ofdm(x: np.ndarray, grid: OfdmGrid, n_data: int) -> np.ndarray:
    """Invert :func:`generate_dft_s_ofdm`."""
    spec = np.fft.fft(np.asarray(x, dtype=complex), norm="ortho")
    band = spec[grid.offset : grid.offset + grid.dft_size]
    despread = np.fft.ifft(band, norm="ortho")
    return despread[:n_data] / np.sqrt(grid.n_subcarriers / n_data)


def add_cyclic_prefix(x: np.ndarray, cp_len: int | None = None) -> np.ndarray:
    """Prepend the last ``cp_len`` samples (default N/8) along axis 0."""
    x = np.asarray(x)
    if cp_len is None:
        cp_len = x.shape[0] // 8
    if not 0 <= cp_len <= x.shape[0]:
        raise ValueError(f"cyclic prefix length {cp_len} outside [0, {x.shape[0]}]")
    return np.concatenate([x[x.shape[0] - cp_len :], x], axis=0)


def rapp_amplify(pa: RappPa, sample) -> np.ndarray | complex:
    """Apply the Rapp AM/AM curve; the phase is passed through unchanged.

    Output amplitude for input amplitude A is
    ``v*A * (1 + |v*A / a_sat|**(2p))**(-1/(2p))``.
    """
    s = np.asarray(sample, dtype=complex)
    amp = np.abs(s)
    drive = pa.v * amp / pa.a_sat
    gain = pa.v * (1.0 + drive ** (2.0 * pa.p)) ** (-1.0 / (2.0 * pa.p))
    out = s * gain
    return complex(out) if np.isscalar(sample) or out.ndim == 0 else out


def measure_papr(signal: np.ndarray, percentile: float) -> float:
    """Peak-to-average power ratio in dB at the given envelope percentile.

    Returns ``10*log10(Q(|x|^2, percentile) / mean(|x|^2))`` where Q is the
    inverted-CDF sample quantile (smallest sample whose empirical CDF
    reaches the requested level), so the result reads directly as a CCDF
    point: the envelope power exceeds the quantile at most ``1-percentile``
    of the time.
    """
    x = np.asarray(signal, dtype=complex).reshape(-1)
    if x.size == 0:
        raise ValueError("empty signal")
    if not 0.0 < percentile < 1.0:
        raise ValueError(f"percentile must be in (0, 1), got {percentile}")
    power = np.abs(x) ** 2
    mean = power.mean()
    if mean == 0.0:
        raise ValueError("all-zero signal has no defined PAPR")
    peak = np.quantile(power, percentile, method="inverted_cdf")
    return float(10.0 * np.log10(peak / mean))


def papr_ensemble_signal(
    waveform: str,
    modulation: str,
    n_blocks: int,
    rng: np.random.Generator,
    n_subcarriers: int = 256,
    n_data: int = 240,
    oversample: int = 1,
) -> np.ndarray:
    """Concatenated time signal of ``n_blocks`` independent symbols of one
    waveform, for ensemble PAPR statistics.

    Oversampling is realised by enlarging the IDFT while keeping the
    occupied band fixed, i.e. frequency-domain zero padding. Critical
    sampling (the default) understates the analog envelope somewhat.
    """
    grid = OfdmGrid(
        n_subcarriers=n_subcarriers * oversample,
        dft_size=n_data,
        offset=0,
        n_tx=1,
    )
    draw = {"qpsk": qpsk_symbols, "16qam": qam16_symbols}[modulation]
    blocks = np.empty((n_blocks, grid.n_subcarriers), dtype=complex)
    for i in range(n_blocks):
        d = draw(n_data, rng)
        if waveform == "cp-ofdm":
            blocks[i] = generate_cp_ofdm(d, np.ones(1), grid)[:, 0]
        elif waveform == "dft-s-ofdm":
            blocks[i] = generate_dft_s_ofdm(d, grid)
        else:
            raise ValueError(f"unknown waveform {waveform!r}")
    return blocks.reshape(-1)


def papr_ensemble(
    waveform: str,
    modulation: str,
    n_blocks: int,
    percentile: float,
    rng: np.random.Generator,
    n_subcarriers: int = 256,
    n_data: int = 240,
    oversample: int = 1,
) -> float:
    """Ensemble PAPR at one percentile; see :func:`papr_ensemble_signal`."""
    sig = papr_ensemble_signal(
        waveform, modulation, n_blocks, rng, n_subcarriers, n_data, oversample
    )
    return measure_papr(sig, percentile)
