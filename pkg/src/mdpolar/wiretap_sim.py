"""Three-party Monte Carlo frame simulation: Alice -> Bob with the keyed
construction, Eve intercepting under a configurable strategy.

Reproducibility: every frame draws from its own stream seeded by
(master seed, SNR-point index, frame index), and reduction follows frame
order, so results are bit-identical for a fixed config and seed regardless
of the worker count.
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import permutations

import numpy as np

from .key_polarization import (CodeDesign, Codebook, GainPartition, PhysicalKey,
                               ga_construct, partition_gain)
from .mimo_link import ChannelMatrix, DetectionOrder, draw_channel, mmse_sic_detect, transmit
from .modem import ModulationScheme, demap_llr_layer, map_bits
from .polar_core import CodeConstruction, CrcSpec, crc_attach, crc_check, polar_encode, \
    sc_decode, scl_crc_decode

CHUNK_FRAMES = 200
WAVE_CHUNKS = 8

# resolution of the gain quantization feeding the shared detection-order
# draw; finer than the interval grid so the order keeps its own entropy
_ORDER_GAIN_QUANT = 2 ** 16
_ORDER_TAG = 0x0D0E
_INTERLEAVER_TAG = 0x1D7E

EVE_STRATEGIES = ("none", "random_key", "mean_mask", "exhaustive", "oracle")


class ConfigError(ValueError):
    """Invalid simulation configuration; message names the offending field."""


@dataclass(frozen=True)
class FrameConfig:
    """Campaign configuration (defaults follow the simulation-table values)."""

    n_block: int = 512
    k_info: int = 256
    mod_order: int = 4
    t_a: int = 4
    n_b: int = 4
    n_e: int = 4
    p_count: int = 8
    snr_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
    decoder: str = "scl"
    list_size: int = 16
    crc_width: int = 24
    eve_strategy: str = "random_key"
    frames: int = 1000
    seed: int = 1
    order_mode: str = "random"
    gain_model: str = "gamma_nb"
    design_snr_db: float = None
    max_frame_errors: int = 100
    clone_channel: bool = False
    workers: int = None

    def __post_init__(self):
        n, k = self.n_block, self.k_info
        if n < 2 or n & (n - 1):
            raise ConfigError(f"n_block: {n} is not a power of two >= 2")
        if self.mod_order not in (2, 4, 16):
            raise ConfigError(f"mod_order: {self.mod_order} not in {{2, 4, 16}}")
        m = int(np.log2(self.mod_order))
        if min(self.t_a, self.n_b, self.n_e) < 1:
            raise ConfigError("t_a/n_b/n_e: antenna counts must be >= 1")
        if n % (self.t_a * m):
            raise ConfigError(
                f"n_block: {n} must be divisible by t_a*log2(M) = {self.t_a * m}")
        if not 1 <= k < n:
            raise ConfigError(f"k_info: need 1 <= K < N, got {k}")
        if self.p_count < 1:
            raise ConfigError(f"p_count: must be >= 1, got {self.p_count}")
        if self.decoder not in ("sc", "scl"):
            raise ConfigError(f"decoder: {self.decoder} not in {{sc, scl}}")
        if self.list_size < 1:
            raise ConfigError("list_size: must be >= 1")
        if self.crc_width not in (0, 24):
            raise ConfigError(f"crc_width: {self.crc_width} not in {{0, 24}}")
        if self.crc_width >= k:
            raise ConfigError("crc_width: must be smaller than k_info")
        if self.eve_strategy not in EVE_STRATEGIES:
            raise ConfigError(f"eve_strategy: {self.eve_strategy} not in {EVE_STRATEGIES}")
        if self.frames < 0:
            raise ConfigError("frames: must be >= 0")
        if self.order_mode not in ("random", "fixed"):
            raise ConfigError(f"order_mode: {self.order_mode} not in {{random, fixed}}")
        if self.gain_model not in ("gamma_nb", "as_printed"):
            raise ConfigError(f"gain_model: {self.gain_model} not in {{gamma_nb, as_printed}}")
        if self.max_frame_errors < 0:
            raise ConfigError("max_frame_errors: must be >= 0 (0 disables early stop)")
        if self.clone_channel and self.n_e != self.n_b:
            raise ConfigError("clone_channel: requires n_e == n_b")
        if self.eve_strategy == "exhaustive" and self.t_a > 5:
            raise ConfigError("eve_strategy: exhaustive order search guarded to t_a <= 5")
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.mod_order))

    @property
    def slots(self) -> int:
        return self.n_block // (self.t_a * self.bits_per_symbol)

    @property
    def payload_len(self) -> int:
        return self.k_info - self.crc_width

    @property
    def crc(self) -> CrcSpec:
        return CrcSpec.crc24() if self.crc_width == 24 else CrcSpec.none()

    def gain_params(self):
        if self.gain_model == "as_printed":
            return float(self.t_a), 2.0
        return float(self.n_b), 1.0


def public_interleaver(n_block: int) -> np.ndarray:
    """Fixed seeded permutation; public, shared by all parties."""
    rng = np.random.default_rng(np.random.SeedSequence([_INTERLEAVER_TAG, n_block]))
    return rng.permutation(n_block)


def shared_detection_order(gains: np.ndarray, t_a: int) -> DetectionOrder:
    """Per-frame order drawn from shared randomness keyed by the channel.

    Both legitimate ends quantize the reciprocal per-antenna gains finely
    and seed a permutation draw; an eavesdropper without the gains sees a
    uniform order.
    """
    q = [int(round(g * _ORDER_GAIN_QUANT)) for g in gains]
    rng = np.random.default_rng(np.random.SeedSequence([_ORDER_TAG] + q))
    return DetectionOrder(tuple(int(v) for v in rng.permutation(t_a)))


@dataclass
class LinkDesign:
    """Per-SNR-point derived state shared by Alice, Bob, and the tests."""

    sigma2: float
    codebook: Codebook
    interleaver: np.ndarray
    scheme: ModulationScheme
    _mean_construction: CodeConstruction = field(default=None, repr=False)

    @classmethod
    def build(cls, cfg: FrameConfig, sigma2: float) -> "LinkDesign":
        design_sigma2 = (10 ** (-cfg.design_snr_db / 10.0)
                         if cfg.design_snr_db is not None else sigma2)
        shape, scale = cfg.gain_params()
        interleaver = public_interleaver(cfg.n_block)
        n_lanes = cfg.t_a * cfg.bits_per_symbol
        lane_map_cw = np.empty(cfg.n_block, dtype=np.int64)
        lane_map_cw[interleaver] = np.arange(cfg.n_block) % n_lanes
        design = CodeDesign(
            n_block=cfg.n_block, k_info=cfg.k_info, t_a=cfg.t_a, n_rx=cfg.n_b,
            mod_order=cfg.mod_order, sigma2=design_sigma2, p_count=cfg.p_count,
            gain_shape=shape, gain_scale=scale, lane_map=tuple(int(v) for v in lane_map_cw))
        return cls(sigma2, Codebook(design), interleaver, ModulationScheme(cfg.mod_order))

    def mean_construction(self) -> CodeConstruction:
        """Construction for the ensemble-average channel (single interval,
        ascending order); the conventional-MIMO baseline mask."""
        if self._mean_construction is None:
            d = self.codebook.design
            gp1 = partition_gain(1, d.gain_shape, d.gain_scale)
            key = PhysicalKey(DetectionOrder.ascending(d.t_a), (1,) * d.t_a)
            self._mean_construction = ga_construct(
                self.codebook.reliability, gp1, key, d.n_block, d.k_info,
                np.asarray(d.lane_map))
        return self._mean_construction


@dataclass
class FrameCounters:
    frames: int = 0
    bob_bit_errors: int = 0
    bob_frame_errors: int = 0
    eve_bit_errors: int = 0
    eve_frame_errors: int = 0

    def add(self, other: "FrameCounters"):
        self.frames += other.frames
        self.bob_bit_errors += other.bob_bit_errors
        self.bob_frame_errors += other.bob_frame_errors
        self.eve_bit_errors += other.eve_bit_errors
        self.eve_frame_errors += other.eve_frame_errors


def _detect_demap_decode(y, channel, sigma2, order, construction, cfg, design):
    """Receiver chain shared by Bob and Eve: SIC, demap, deinterleave, decode."""
    res = mmse_sic_detect(y, channel, sigma2, order, design.scheme)
    m = cfg.bits_per_symbol
    llr_phys = np.empty((cfg.slots, cfg.t_a, m))
    for t in range(cfg.t_a):
        lanes = demap_llr_layer(
            (res.estimates[t], np.full(cfg.slots, res.noise_vars[t])), design.scheme)
        llr_phys[:, t, :] = lanes
    llr_code = np.empty(cfg.n_block)
    llr_code[design.interleaver] = llr_phys.reshape(-1)
    if cfg.decoder == "sc":
        info_hat = sc_decode(llr_code, construction)
        ok = crc_check(info_hat, cfg.crc) if cfg.crc_width else True
    else:
        info_hat, ok = scl_crc_decode(llr_code, construction, cfg.list_size, cfg.crc)
    return info_hat, ok


def run_frame(cfg: FrameConfig, rng, design: LinkDesign = None,
              snr_db: float = None) -> FrameCounters:
    """Simulate one frame; returns per-party error counts."""
    if snr_db is None:
        snr_db = cfg.snr_db[0]
    sigma2 = 10 ** (-float(snr_db) / 10.0)
    if design is None:
        design = LinkDesign.build(cfg, sigma2)

    h = draw_channel(cfg.n_b, cfg.t_a, rng)
    if cfg.clone_channel:
        g = ChannelMatrix(h.entries, "eavesdropper")
    else:
        g = draw_channel(cfg.n_e, cfg.t_a, rng, "eavesdropper")

    gains = h.gains()
    intervals = tuple(design.codebook.partition.interval_of(float(mu)) for mu in gains)
    if cfg.order_mode == "fixed":
        order = DetectionOrder.ascending(cfg.t_a)
    else:
        order = shared_detection_order(gains, cfg.t_a)
    key = PhysicalKey(order, intervals)
    construction = design.codebook.construction_for(key)

    payload = rng.integers(0, 2, cfg.payload_len).astype(np.uint8)
    info = crc_attach(payload, cfg.crc)
    code_bits = polar_encode(info, construction)
    tx_bits = code_bits[design.interleaver]
    symbols = map_bits(tx_bits, design.scheme).reshape(cfg.slots, cfg.t_a).T

    y_bob = transmit(symbols, h, sigma2, rng)
    y_eve = y_bob if cfg.clone_channel else transmit(symbols, g, sigma2, rng)

    out = FrameCounters(frames=1)
    info_hat, _ = _detect_demap_decode(y_bob, h, sigma2, order, construction, cfg, design)
    bob_err = int(np.count_nonzero(info_hat[: cfg.payload_len] != payload))
    out.bob_bit_errors = bob_err
    out.bob_frame_errors = int(bob_err > 0)

    if cfg.eve_strategy != "none":
        eve_hat = _eve_receive(cfg, design, rng, y_eve, g, sigma2, key, construction)
        eve_err = int(np.count_nonzero(eve_hat[: cfg.payload_len] != payload))
        out.eve_bit_errors = eve_err
        out.eve_frame_errors = int(eve_err > 0)
    return out


def _eve_receive(cfg, design, rng, y_eve, g, sigma2, true_key, true_construction):
    if cfg.eve_strategy == "oracle":
        hat, _ = _detect_demap_decode(y_eve, g, sigma2, true_key.order,
                                      true_construction, cfg, design)
        return hat
    if cfg.eve_strategy == "mean_mask":
        order = DetectionOrder.ascending(cfg.t_a)
        hat, _ = _detect_demap_decode(y_eve, g, sigma2, order,
                                      design.mean_construction(), cfg, design)
        return hat
    if cfg.eve_strategy == "random_key":
        order = DetectionOrder(tuple(int(v) for v in rng.permutation(cfg.t_a)))
        intervals = tuple(int(v) for v in rng.integers(1, cfg.p_count + 1, cfg.t_a))
        guess = design.codebook.construction_for(PhysicalKey(order, intervals))
        hat, _ = _detect_demap_decode(y_eve, g, sigma2, order, guess, cfg, design)
        return hat
    # exhaustive: try every detection order with intervals read off her own
    # channel, keep the first CRC pass, else the best available attempt
    own_intervals = tuple(design.codebook.partition.interval_of(float(mu))
                          for mu in g.gains())
    fallback = None
    for perm in permutations(range(cfg.t_a)):
        order = DetectionOrder(perm)
        guess = design.codebook.construction_for(PhysicalKey(order, own_intervals))
        hat, ok = _detect_demap_decode(y_eve, g, sigma2, order, guess, cfg, design)
        if ok and cfg.crc_width:
            return hat
        if fallback is None:
            fallback = hat
    return fallback


# ---------------------------------------------------------------------------
# Campaign driver


def wilson_interval(k: int, n: int, z: float = 1.96):
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class PointResult:
    snr_db: float
    party: str
    frames: int
    bit_errors: int
    frame_errors: int
    payload_bits_per_frame: int
    runtime_s: float = field(default=0.0, compare=False)

    @property
    def ber(self) -> float:
        total = self.frames * self.payload_bits_per_frame
        return self.bit_errors / total if total else 0.0

    @property
    def bler(self) -> float:
        return self.frame_errors / self.frames if self.frames else 0.0

    def bler_interval(self):
        return wilson_interval(self.frame_errors, self.frames)


@dataclass(frozen=True)
class CampaignResult:
    config: FrameConfig
    rows: tuple

    def party_rows(self, party: str):
        return [r for r in self.rows if r.party == party]

    def bler_curve(self, party: str = "bob"):
        rows = self.party_rows(party)
        return np.array([r.snr_db for r in rows]), np.array([r.bler for r in rows])


_WORKER_STATE = {}


def _init_worker(cfg, design, point_idx):
    _WORKER_STATE["args"] = (cfg, design, point_idx)


def _chunk_task(bounds):
    cfg, design, point_idx = _WORKER_STATE["args"]
    lo, hi = bounds
    return _run_chunk(cfg, design, point_idx, lo, hi)


def _run_chunk(cfg, design, point_idx, lo, hi):
    acc = FrameCounters()
    snr = cfg.snr_db[point_idx]
    for fi in range(lo, hi):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, point_idx, fi]))
        acc.add(run_frame(cfg, rng, design, snr))
    return acc


def resolve_workers(cfg: FrameConfig) -> int:
    if cfg.workers:
        return max(1, cfg.workers)
    env = os.environ.get("MDPOLAR_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_campaign(cfg: FrameConfig) -> CampaignResult:
    """Frame loop over all SNR points with per-frame substreams.

    Early stop per point once the legitimate link accumulates
    cfg.max_frame_errors frame errors (0 disables).  Deterministic for a
    fixed (config, seed) independent of the worker count: frames are
    consumed in fixed chunk order and the stop check runs on that order.
    """
    workers = resolve_workers(cfg)
    rows = []
    for point_idx in range(len(cfg.snr_db)):
        if cfg.frames == 0:
            continue
        t0 = time.perf_counter()
        design = LinkDesign.build(cfg, 10 ** (-cfg.snr_db[point_idx] / 10.0))
        acc = FrameCounters()
        chunks = [(lo, min(lo + CHUNK_FRAMES, cfg.frames))
                  for lo in range(0, cfg.frames, CHUNK_FRAMES)]
        use_pool = workers > 1 and len(chunks) > 1
        pool = None
        try:
            if use_pool:
                pool = ProcessPoolExecutor(
                    max_workers=workers, initializer=_init_worker,
                    initargs=(cfg, design, point_idx))
            stop = False
            for wave_start in range(0, len(chunks), WAVE_CHUNKS):
                wave = chunks[wave_start:wave_start + WAVE_CHUNKS]
                if pool is not None:
                    results = list(pool.map(_chunk_task, wave))
                else:
                    results = [_run_chunk(cfg, design, point_idx, lo, hi)
                               for lo, hi in wave]
                for res in results:
                    acc.add(res)
                    if cfg.max_frame_errors and acc.bob_frame_errors >= cfg.max_frame_errors:
                        stop = True
                        break
                if stop:
                    break
        finally:
            if pool is not None:
                pool.shutdown()
        dt = time.perf_counter() - t0
        snr = cfg.snr_db[point_idx]
        rows.append(PointResult(snr, "bob", acc.frames, acc.bob_bit_errors,
                                acc.bob_frame_errors, cfg.payload_len, dt))
        if cfg.eve_strategy != "none":
            rows.append(PointResult(snr, "eve", acc.frames, acc.eve_bit_errors,
                                    acc.eve_frame_errors, cfg.payload_len, dt))
    return CampaignResult(cfg, tuple(rows))


def baseline_conventional(cfg: FrameConfig) -> CampaignResult:
    """Undifferentiated-reliability baseline: single mask built for the
    average channel, fixed ascending detection order, no gain segmentation."""
    return run_campaign(replace(cfg, p_count=1, order_mode="fixed"))
