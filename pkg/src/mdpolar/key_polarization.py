"""Gain partitioning, multi-domain reliability evaluation, equivalent-AWGN
matching, GA code construction, and the (detection order, gain intervals)
-> frozen-pattern codebook.

The channel gain mu_t = h_t^H h_t of a transmit antenna under i.i.d.
Rayleigh fading with N_rx unit-variance receive branches follows a
Gamma(N_rx, 1) law; that is the default gain model.  A Gamma(T_A, 2)
variant ("as-printed" scaling) is available through the shape/scale
parameters.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammainc, gammaln

from .mimo_link import DetectionOrder, reference_position_sinrs
from .modem import ModulationScheme
from .polar_core import CodeConstruction

logger = logging.getLogger(__name__)

_LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Gain distribution and equal-probability partition


def gain_pdf(mu, shape: float, scale: float = 1.0):
    """Gamma-family density of the per-antenna channel gain."""
    mu = np.asarray(mu, dtype=np.float64)
    if np.any(mu < 0):
        raise ValueError("gain must be >= 0")
    if shape <= 0 or scale <= 0:
        raise ValueError("shape and scale must be > 0")
    with np.errstate(divide="ignore"):
        logpdf = ((shape - 1) * np.log(mu) - mu / scale
                  - gammaln(shape) - shape * np.log(scale))
    out = np.where(mu > 0, np.exp(logpdf), 1.0 / scale if shape == 1 else 0.0)
    return out if out.ndim else float(out)


def gain_cdf(mu, shape: float, scale: float = 1.0):
    return gammainc(shape, np.asarray(mu, dtype=np.float64) / scale)


@dataclass(frozen=True)
class GainPartition:
    """Equal-probability gain intervals [phi_{p-1}, phi_p), p = 1..P.

    boundaries holds the P-1 interior edges; the implicit outer edges are 0
    and +inf.  Intervals are half-open, so a boundary value belongs to the
    upper interval.
    """

    p_count: int
    boundaries: np.ndarray
    shape: float
    scale: float = 1.0

    def __post_init__(self):
        b = np.ascontiguousarray(self.boundaries, dtype=np.float64)
        if b.shape != (self.p_count - 1,):
            raise ValueError(f"expected {self.p_count - 1} boundaries, got {b.shape}")
        if b.size and (np.any(b <= 0) or np.any(np.diff(b) <= 0)):
            raise ValueError("boundaries must be positive and strictly increasing")
        object.__setattr__(self, "boundaries", b)

    def interval_of(self, mu: float) -> int:
        """1-based index of the interval containing mu."""
        if mu < 0:
            raise ValueError("gain must be >= 0")
        return int(np.searchsorted(self.boundaries, mu, side="right")) + 1

    def interval_bounds(self, p: int):
        if not 1 <= p <= self.p_count:
            raise ValueError(f"interval index {p} out of 1..{self.p_count}")
        lo = 0.0 if p == 1 else float(self.boundaries[p - 2])
        hi = math.inf if p == self.p_count else float(self.boundaries[p - 1])
        return lo, hi

    def representative(self, p: int) -> float:
        """Gain value standing in for interval p in the GA construction.

        Interior intervals use the midpoint (phi_{p-1} + phi_p)/2; the
        unbounded last interval uses the conditional mean of the gamma tail.
        """
        lo, hi = self.interval_bounds(p)
        if math.isinf(hi):
            upper_mass = 1.0 - gammainc(self.shape, lo / self.scale)
            if upper_mass <= 0:
                return lo
            upper_mean_mass = 1.0 - gammainc(self.shape + 1.0, lo / self.scale)
            return self.shape * self.scale * upper_mean_mass / upper_mass
        return 0.5 * (lo + hi)

    def interval_mass(self, p: int) -> float:
        lo, hi = self.interval_bounds(p)
        hi_cdf = 1.0 if math.isinf(hi) else gain_cdf(hi, self.shape, self.scale)
        return float(hi_cdf - gain_cdf(lo, self.shape, self.scale))


def partition_gain(p_count: int, shape: float, scale: float = 1.0) -> GainPartition:
    """Equal-probability boundaries: the k/P quantiles, k = 1..P-1.

    Found by bisection on the regularized incomplete gamma CDF; bisection
    runs until the bracket is below 1e-9.
    """
    if p_count < 1:
        raise ValueError("interval count must be >= 1")
    if p_count == 1:
        return GainPartition(1, np.empty(0), shape, scale)
    targets = np.arange(1, p_count) / p_count
    hi = float(scale)
    while gammainc(shape, hi / scale) < targets[-1]:
        hi *= 2.0
    lo_v = np.zeros_like(targets)
    hi_v = np.full_like(targets, hi)
    while np.max(hi_v - lo_v) > 1e-9:
        mid = 0.5 * (lo_v + hi_v)
        below = gammainc(shape, mid / scale) < targets
        lo_v = np.where(below, mid, lo_v)
        hi_v = np.where(below, hi_v, mid)
    return GainPartition(p_count, 0.5 * (lo_v + hi_v), shape, scale)


def interval_of(mu: float, gp: GainPartition) -> int:
    return gp.interval_of(mu)


# ---------------------------------------------------------------------------
# Bit-lane mutual information (multilevel convention) and AWGN matching


def mlc_lane_amis(scheme: ModulationScheme, noise_var: float,
                  n_samples: int = 200_000, seed=20240902):
    """Monte Carlo bit-lane AMIs of a Gray-mapped constellation over a
    complex AWGN channel, in the multilevel (successive) convention.

    Lane j conditions on bits 0..j-1 and marginalizes bits j+1..m-1, so the
    lane AMIs telescope exactly to the symbol AMI (shared samples).

    Returns (lane_ami[m], lane_err[m], symbol_ami, symbol_err) in bits.
    """
    if noise_var <= 0:
        raise ValueError("noise variance must be > 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = scheme.bits_per_symbol
    big_m = scheme.order
    labels = scheme.bit_labels

    # integer value of the first q label bits, per symbol
    prefixes = np.zeros((m + 1, big_m), dtype=np.int64)
    for q in range(1, m + 1):
        prefixes[q] = prefixes[q - 1] * 2 + labels[:, q - 1]

    s = rng.integers(0, big_m, size=n_samples)
    noise = np.sqrt(noise_var / 2) * (rng.standard_normal(n_samples)
                                      + 1j * rng.standard_normal(n_samples))
    y = scheme.points[s] + noise
    d2 = -np.abs(y[:, None] - scheme.points[None, :]) ** 2 / noise_var

    log_p = np.empty((m + 1, n_samples))
    for q in range(m + 1):
        sample_pref = prefixes[q][s]
        for val in np.unique(prefixes[q]):
            cols = prefixes[q] == val
            rows = sample_pref == val
            if not np.any(rows):
                continue
            sub = d2[rows][:, cols]
            mx = sub.max(axis=1)
            log_p[q, rows] = mx + np.log(np.exp(sub - mx[:, None]).sum(axis=1)) \
                - math.log(int(cols.sum()))

    lane_samples = (log_p[1:] - log_p[:-1]) / _LN2
    lane_ami = lane_samples.mean(axis=1)
    lane_err = lane_samples.std(axis=1, ddof=1) / math.sqrt(n_samples)
    sym_samples = (log_p[m] - log_p[0]) / _LN2
    return lane_ami, lane_err, float(sym_samples.mean()), \
        float(sym_samples.std(ddof=1) / math.sqrt(n_samples))


def bit_subchannel_ami(effective_snr_per_layer, scheme: ModulationScheme,
                       t: int, j: int, n_samples: int = 200_000, seed=20240902):
    """AMI (and standard error) of bit lane j of the layer detected with
    effective SNR effective_snr_per_layer[t]; lane indices are 0-based."""
    snr = float(np.asarray(effective_snr_per_layer, dtype=np.float64)[t])
    if snr <= 0:
        raise ValueError("effective SNR must be > 0")
    lane_ami, lane_err, _, _ = mlc_lane_amis(scheme, 1.0 / snr, n_samples, seed)
    return float(lane_ami[j]), float(lane_err[j])


_GH_NODES = None


def biawgn_capacity(sigma: float) -> float:
    """Capacity (bits) of the binary-input AWGN channel with noise std sigma."""
    global _GH_NODES
    if _GH_NODES is None:
        _GH_NODES = np.polynomial.hermite.hermgauss(128)
    nodes, weights = _GH_NODES
    mean = 2.0 / sigma**2
    std = 2.0 / sigma
    llr = mean + math.sqrt(2.0) * std * nodes
    vals = np.logaddexp(0.0, -llr) / _LN2
    return float(1.0 - (weights * vals).sum() / math.sqrt(math.pi))


_CAP_TABLE = None


def _capacity_table():
    global _CAP_TABLE
    if _CAP_TABLE is None:
        sig = np.logspace(-1.5, 3.5, 2048)
        cap = np.array([biawgn_capacity(s) for s in sig])
        _CAP_TABLE = (sig, cap)
    return _CAP_TABLE


def equivalent_sigma(ami: float) -> float:
    """Noise std of the binary-input AWGN channel with the given AMI.

    AMIs outside (0, 1) are clamped to [1e-6, 1 - 1e-6] with a warning.
    Bisection against the capacity function, seeded from a precomputed
    monotone table, to an absolute bracket of 1e-6.
    """
    if not 0.0 < ami < 1.0:
        logger.warning("AMI %.6g outside (0, 1); clamping", ami)
        ami = min(max(ami, 1e-6), 1.0 - 1e-6)
    sig, cap = _capacity_table()
    # cap decreases with sigma; locate a coarse bracket in the table
    idx = int(np.searchsorted(-cap, -ami))
    lo = sig[max(idx - 1, 0)] * 0.5
    hi = sig[min(idx, sig.size - 1)] * 2.0
    while biawgn_capacity(lo) < ami:
        lo *= 0.5
    while biawgn_capacity(hi) > ami:
        hi *= 2.0
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if biawgn_capacity(mid) > ami:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# GA construction


def _phi(m):
    """Standard GA proxy for E[tanh(l/2)] under LLR ~ N(m, 2m)."""
    m = np.asarray(m, dtype=np.float64)
    small = np.exp(-0.4527 * np.power(np.maximum(m, 0.0), 0.86) + 0.0218)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.sqrt(np.pi / np.maximum(m, 1e-300)) * np.exp(-m / 4.0) \
            * (1.0 - 10.0 / (7.0 * np.maximum(m, 1e-300)))
    return np.where(m < 10.0, small, tail)


_PHI_INV_MAX = 5000.0


def _phi_inv(y):
    """Inverse of _phi by vectorized bisection on [0, 5000]."""
    y = np.asarray(y, dtype=np.float64)
    lo = np.zeros_like(y)
    hi = np.full_like(y, _PHI_INV_MAX)
    for _ in range(52):
        mid = 0.5 * (lo + hi)
        gt = _phi(mid) > y
        lo = np.where(gt, mid, lo)
        hi = np.where(gt, hi, mid)
    return 0.5 * (lo + hi)


def ga_check_update(m):
    """One check-node GA step for equal input means."""
    return ga_check_update2(m, m)


def ga_check_update2(ma, mb):
    return _phi_inv(1.0 - (1.0 - _phi(ma)) * (1.0 - _phi(mb)))


def ga_variable_update(m):
    """One variable-node GA step for equal input means (exact doubling)."""
    return 2.0 * np.asarray(m, dtype=np.float64)


def ga_means_tree(leaf_means) -> np.ndarray:
    """Density-evolution means of all u-domain positions, natural order.

    Level-synchronous form of the polar GA recursion; supports unequal
    leaf means (the equal-means case reduces to the classic pair
    [phi^-1(1-(1-phi(m))^2), 2m]).
    """
    v = np.ascontiguousarray(leaf_means, dtype=np.float64)
    n_block = v.shape[0]
    if n_block & (n_block - 1):
        raise ValueError("leaf count must be a power of two")
    size = n_block
    while size > 1:
        half = size >> 1
        blocks = v.reshape(-1, size)
        a = blocks[:, :half]
        b = blocks[:, half:]
        check = ga_check_update2(a, b)
        var = a + b
        v = np.concatenate([check, var], axis=1).reshape(-1)
        size = half
    return v


@dataclass(frozen=True)
class SubchannelReliability:
    """Equivalent BI-AWGN noise variances per (detection position, bit lane).

    sigma_sq[k, j] refers to the k-th detected layer's j-th bit lane at the
    reference (ensemble-average) channel; realized gains scale the initial
    GA means as m = 2 * gain / sigma_sq.
    """

    sigma_sq: np.ndarray

    def __post_init__(self):
        s = np.ascontiguousarray(self.sigma_sq, dtype=np.float64)
        if s.ndim != 2 or np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError("sigma_sq must be a positive finite (T_A, m) array")
        object.__setattr__(self, "sigma_sq", s)

    def llr_means(self, gain: float, position: int) -> np.ndarray:
        return 2.0 * gain / self.sigma_sq[position]


@lru_cache(maxsize=128)
def reliability_table(n_rx: int, t_a: int, mod_order: int, sigma2: float,
                      ami_samples: int = 200_000, ami_seed: int = 20240902,
                      sinr_draws: int = 10_000, sinr_seed: int = 20240901
                      ) -> SubchannelReliability:
    """Reference per-position, per-lane equivalent noise variances.

    Deterministic for fixed seeds, so both ends of the legitimate link
    derive identical tables without signalling.
    """
    scheme = ModulationScheme(mod_order)
    sinrs = reference_position_sinrs(n_rx, t_a, sigma2, sinr_draws, sinr_seed)
    m = scheme.bits_per_symbol
    sigma_sq = np.empty((t_a, m))
    for k, snr in enumerate(sinrs):
        lane_ami, _, _, _ = mlc_lane_amis(
            scheme, 1.0 / snr, ami_samples,
            seed=np.random.default_rng(np.random.SeedSequence([ami_seed, k])))
        for j in range(m):
            sigma_sq[k, j] = equivalent_sigma(float(lane_ami[j])) ** 2
    return SubchannelReliability(sigma_sq)


@dataclass(frozen=True)
class PhysicalKey:
    """The composite secret: detection order plus per-antenna gain intervals."""

    order: DetectionOrder
    interval_idx: tuple

    def __post_init__(self):
        idx = tuple(int(p) for p in self.interval_idx)
        if len(idx) != len(self.order):
            raise ValueError("need one interval index per transmit antenna")
        if any(p < 1 for p in idx):
            raise ValueError("interval indices are 1-based")
        object.__setattr__(self, "interval_idx", idx)


def default_lane_map(n_block: int, n_lanes: int) -> np.ndarray:
    """Slot-major physical layout: lane of codeword position c is c % n_lanes."""
    if n_block % n_lanes:
        raise ValueError(f"N={n_block} not divisible by T_A*m={n_lanes} lanes")
    return np.arange(n_block) % n_lanes


def ga_construct(rel: SubchannelReliability, gp: GainPartition, key: PhysicalKey,
                 n_block: int, k_info: int, lane_map=None) -> CodeConstruction:
    """GA code construction for one physical key.

    Initial means per lane (t, j): 2 * rep(p_t) / sigma_sq[pos(t), j] with
    rep the interval representative; density evolution over the codeword
    positions carrying the lanes; the N-K smallest means are frozen (ties
    broken toward lower positions).
    """
    t_a, m = rel.sigma_sq.shape
    n_lanes = t_a * m
    if lane_map is None:
        lane_map = default_lane_map(n_block, n_lanes)
    lane_map = np.asarray(lane_map)
    if lane_map.shape != (n_block,):
        raise ValueError("lane map must assign a lane to every codeword position")

    lane_means = np.empty(n_lanes)
    for t in range(t_a):
        pos = key.order.position_of(t)
        rep = gp.representative(key.interval_idx[t])
        lane_means[t * m:(t + 1) * m] = rel.llr_means(rep, pos)

    u_means = ga_means_tree(lane_means[lane_map])
    reliability_order = np.argsort(u_means, kind="stable")
    mask = np.zeros(n_block, dtype=bool)
    mask[reliability_order[: n_block - k_info]] = True
    return CodeConstruction(n_block, k_info, mask)


# ---------------------------------------------------------------------------
# Codebook


@dataclass(frozen=True)
class CodeDesign:
    """Everything that pins the key -> construction map."""

    n_block: int
    k_info: int
    t_a: int
    n_rx: int
    mod_order: int
    sigma2: float
    p_count: int
    gain_shape: float
    gain_scale: float = 1.0
    ami_samples: int = 200_000
    ami_seed: int = 20240902
    sinr_draws: int = 10_000
    sinr_seed: int = 20240901
    lane_map: tuple = None

    @property
    def scheme(self) -> ModulationScheme:
        return ModulationScheme(self.mod_order)


_EAGER_GUARD_TA = 8


class Codebook:
    """Deterministic, lazily populated map from PhysicalKey to construction."""

    def __init__(self, design: CodeDesign):
        self.design = design
        self.partition = partition_gain(design.p_count, design.gain_shape, design.gain_scale)
        self.reliability = reliability_table(
            design.n_rx, design.t_a, design.mod_order, design.sigma2,
            design.ami_samples, design.ami_seed, design.sinr_draws, design.sinr_seed)
        self._cache = {}
        self._lane_map = (np.asarray(design.lane_map) if design.lane_map is not None
                          else default_lane_map(design.n_block, design.t_a
                                                * self.design.scheme.bits_per_symbol))

    def construction_for(self, key: PhysicalKey) -> CodeConstruction:
        if any(p > self.design.p_count for p in key.interval_idx):
            raise ValueError("interval index exceeds the partition size")
        cache_key = (key.order.perm, key.interval_idx)
        hit = self._cache.get(cache_key)
        if hit is None:
            hit = ga_construct(self.reliability, self.partition, key,
                               self.design.n_block, self.design.k_info, self._lane_map)
            self._cache[cache_key] = hit
        return hit

    def digest(self) -> str:
        """Hash of the map-defining inputs, for Alice/Bob agreement checks."""
        h = hashlib.sha256()
        h.update(repr(self.design).encode())
        h.update(self.partition.boundaries.tobytes())
        h.update(self.reliability.sigma_sq.tobytes())
        return h.hexdigest()[:16]

    def enumerate_single_interval(self):
        """All (order, equal-intervals) keys: the T_A! x P tabulated view."""
        if self.design.t_a > _EAGER_GUARD_TA:
            raise ValueError("eager enumeration guarded to T_A <= 8; use lazy lookups")
        from itertools import permutations

        for perm in permutations(range(self.design.t_a)):
            for p in range(1, self.design.p_count + 1):
                yield PhysicalKey(DetectionOrder(perm), (p,) * self.design.t_a)

    def table_rows(self):
        """Table view (ascending order, shared interval): bounds + mask digest."""
        order = DetectionOrder.ascending(self.design.t_a)
        rows = []
        for p in range(1, self.design.p_count + 1):
            lo, hi = self.partition.interval_bounds(p)
            c = self.construction_for(PhysicalKey(order, (p,) * self.design.t_a))
            rows.append((p, lo, hi, c.mask_digest()))
        return rows


def build_codebook(design: CodeDesign, eager: bool = False) -> Codebook:
    """Create the codebook; eager mode pre-builds the T_A! x P table."""
    book = Codebook(design)
    if eager:
        for key in book.enumerate_single_interval():
            book.construction_for(key)
    return book
