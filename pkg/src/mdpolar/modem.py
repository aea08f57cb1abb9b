"""Gray-mapped M-QAM modulation and per-layer / joint soft demapping.

Gray tables (documented, fixed):

* BPSK (M=2):   bit 0 -> +1, bit 1 -> -1.
* QPSK (M=4):   bits (b1, b2); b1 selects I, b2 selects Q, each
  0 -> +1/sqrt(2), 1 -> -1/sqrt(2).  (0,0) -> (1+1j)/sqrt(2).
* 16QAM (M=16): bits (b1, b2, b3, b4); (b1, b2) select I and (b3, b4)
  select Q from the Gray-coded amplitude ladder
  00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3, scaled by 1/sqrt(10).

All constellations have unit average energy.  LLR sign convention:
positive means bit 0 is more likely.  Natural-log domain, clamped to the
shared +/-40 limit.
"""

from dataclasses import dataclass, field

import numpy as np

from .polar_core import LLR_CLAMP

_GRAY_AMP4 = {(0, 0): -3.0, (0, 1): -1.0, (1, 1): 1.0, (1, 0): 3.0}


@dataclass(frozen=True)
class ModulationScheme:
    """Gray-mapped constellation of order M with unit average energy."""

    order: int
    points: np.ndarray = field(init=False, repr=False, compare=False)
    bit_labels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order not in (2, 4, 16):
            raise ValueError(f"unsupported modulation order {self.order}")
        m = self.bits_per_symbol
        labels = ((np.arange(self.order)[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(
            np.uint8
        )
        points = np.empty(self.order, dtype=np.complex128)
        for idx, bits in enumerate(labels):
            points[idx] = self._map_label(tuple(bits))
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "bit_labels", labels)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    def _map_label(self, bits) -> complex:
        if self.order == 2:
            return 1.0 - 2.0 * bits[0]
        if self.order == 4:
            re = (1.0 - 2.0 * bits[0]) / np.sqrt(2.0)
            im = (1.0 - 2.0 * bits[1]) / np.sqrt(2.0)
            return re + 1j * im
        re = _GRAY_AMP4[(bits[0], bits[1])] / np.sqrt(10.0)
        im = _GRAY_AMP4[(bits[2], bits[3])] / np.sqrt(10.0)
        return re + 1j * im


@dataclass(frozen=True)
class SoftSymbol:
    """Post-detection soft estimate with its effective noise variance."""

    estimate: complex
    effective_noise_var: float

    def __post_init__(self):
        v = self.effective_noise_var
        if not np.isfinite(v) or v <= 0:
            raise ValueError(f"effective noise variance must be finite and > 0, got {v}")


def map_bits(bits, scheme: ModulationScheme) -> np.ndarray:
    """Map consecutive m-bit groups to Gray-labelled symbols."""
    bits = np.asarray(bits, dtype=np.uint8)
    m = scheme.bits_per_symbol
    if bits.shape[0] % m:
        raise ValueError(f"bit count {bits.shape[0]} not divisible by {m}")
    groups = bits.reshape(-1, m)
    idx = groups @ (1 << np.arange(m - 1, -1, -1))
    return scheme.points[idx]


def demap_llr_layer(soft, scheme: ModulationScheme, max_log: bool = False) -> np.ndarray:
    """Per-layer bit LLRs from a soft symbol estimate under a Gaussian model.

    Accepts a single SoftSymbol or arrays (estimates, noise_vars) and
    returns an (n_symbols, m) array in the latter case.
    """
    if isinstance(soft, SoftSymbol):
        return _demap(np.array([soft.estimate]), np.array([soft.effective_noise_var]),
                      scheme, max_log)[0]
    est, var = soft
    return _demap(np.atleast_1d(est), np.atleast_1d(var), scheme, max_log)


def _demap(est, var, scheme, max_log):
    if np.any(var <= 0):
        raise ValueError("effective noise variance must be > 0")
    m = scheme.bits_per_symbol
    # (n, M) squared distances scaled by the noise variance
    d2 = -np.abs(est[:, None] - scheme.points[None, :]) ** 2 / var[:, None]
    llrs = np.empty((est.shape[0], m))
    for j in range(m):
        zero = scheme.bit_labels[:, j] == 0
        if max_log:
            llrs[:, j] = d2[:, zero].max(axis=1) - d2[:, ~zero].max(axis=1)
        else:
            a = _logsumexp(d2[:, zero])
            b = _logsumexp(d2[:, ~zero])
            llrs[:, j] = a - b
    return np.clip(llrs, -LLR_CLAMP, LLR_CLAMP)


def _logsumexp(x):
    mx = x.max(axis=1)
    return mx + np.log(np.exp(x - mx[:, None]).sum(axis=1))


def demap_llr_joint(y, channel, noise_var: float, scheme: ModulationScheme,
                    max_log: bool = False) -> np.ndarray:
    """Exact joint LLRs by marginalizing over all transmit vectors.

    Serves as the oracle for the layered demapper; refuses when M^T_A
    would exceed 65536 candidate vectors.
    """
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    entries = np.asarray(channel, dtype=np.complex128)
    n_rx, t_a = entries.shape
    if y.shape[0] != n_rx:
        raise ValueError(f"received vector length {y.shape[0]} != N_rx={n_rx}")
    if noise_var <= 0:
        raise ValueError("noise variance must be > 0")
    m = scheme.bits_per_symbol
    n_vec = scheme.order ** t_a
    if n_vec > 65536:
        raise ValueError(f"joint demapper guard exceeded: M^T_A = {n_vec} > 65536")

    # enumerate all transmit vectors and their bit labels
    grids = np.indices((scheme.order,) * t_a).reshape(t_a, -1)
    x_all = scheme.points[grids]                       # (t_a, n_vec)
    bits_all = scheme.bit_labels[grids]                # (t_a, n_vec, m)
    metric = -np.sum(np.abs(y[:, None] - entries @ x_all) ** 2, axis=0) / noise_var

    llrs = np.empty(t_a * m)
    for t in range(t_a):
        for j in range(m):
            zero = bits_all[t, :, j] == 0
            if max_log:
                llrs[t * m + j] = metric[zero].max() - metric[~zero].max()
            else:
                llrs[t * m + j] = (_logsumexp(metric[zero][None, :])
                                   - _logsumexp(metric[~zero][None, :]))[0]
    return np.clip(llrs, -LLR_CLAMP, LLR_CLAMP)
