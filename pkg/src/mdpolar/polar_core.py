"""Binary polar encoding and SC / CRC-aided SCL decoding.

Natural (non-bit-reversed) bit order is used everywhere: encoder, decoder
and construction indices share one convention.  Frozen bits are fixed to 0.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels

# Shared LLR clamp (natural-log domain); keeps min-sum arithmetic and the
# path metrics finite for any demapper output.
LLR_CLAMP = 40.0


@dataclass(frozen=True)
class CrcSpec:
    """Shift-register CRC parameters (polynomial without the implicit top bit)."""

    width: int = 0
    poly: int = 0
    init: int = 0
    final_xor: int = 0

    def __post_init__(self):
        if self.width < 0:
            raise ValueError("CRC width must be >= 0")
        if self.width and not (0 < self.poly < (1 << self.width)):
            raise ValueError("CRC polynomial degree must equal the width")

    @classmethod
    def crc24(cls) -> "CrcSpec":
        return cls(width=24, poly=0x864CFB)

    @classmethod
    def none(cls) -> "CrcSpec":
        return cls(width=0, poly=0)


@dataclass(frozen=True)
class CodeConstruction:
    """Frozen/information split of a length-N polar code (frozen value 0)."""

    n_block: int
    k_info: int
    frozen_mask: np.ndarray
    info_positions: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n, k = self.n_block, self.k_info
        if n < 2 or n & (n - 1):
            raise ValueError(f"block length {n} is not a power of two >= 2")
        if k < 1:
            raise ValueError("need at least one information bit")
        mask = np.ascontiguousarray(self.frozen_mask, dtype=bool)
        if mask.shape != (n,):
            raise ValueError(f"frozen mask length {mask.shape} != N={n}")
        if int(mask.sum()) != n - k:
            raise ValueError(f"frozen mask has {int(mask.sum())} frozen bits, expected {n - k}")
        object.__setattr__(self, "frozen_mask", mask)
        object.__setattr__(self, "info_positions", np.flatnonzero(~mask))

    @property
    def rate(self) -> float:
        return self.k_info / self.n_block

    def mask_digest(self) -> str:
        """Hex digest of the frozen mask (info bit = 1), MSB = position 0."""
        bits = (~self.frozen_mask).astype(np.uint8)
        return np.packbits(bits).tobytes().hex()


def polar_encode(info_bits, c: CodeConstruction) -> np.ndarray:
    """Encode K information bits into the length-N codeword."""
    info_bits = np.asarray(info_bits, dtype=np.uint8)
    if info_bits.shape != (c.k_info,):
        raise ValueError(f"expected {c.k_info} information bits, got {info_bits.shape}")
    u = np.zeros(c.n_block, dtype=np.uint8)
    u[c.info_positions] = info_bits
    return kernels.encode(u)


def clamp_llrs(llrs) -> np.ndarray:
    return np.clip(np.asarray(llrs, dtype=np.float64), -LLR_CLAMP, LLR_CLAMP)


def sc_decode(llrs, c: CodeConstruction) -> np.ndarray:
    """Successive-cancellation decode; returns hard decisions at info positions."""
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.shape != (c.n_block,):
        raise ValueError(f"expected {c.n_block} LLRs, got {llrs.shape}")
    u_hat = kernels.sc_decode(clamp_llrs(llrs), c.frozen_mask.astype(np.uint8))
    return u_hat[c.info_positions]


def scl_crc_decode(llrs, c: CodeConstruction, list_size: int, crc: CrcSpec):
    """List decode with CRC selection.

    Among CRC-passing candidates the best path metric wins; when none pass
    (or the CRC is disabled) the best-metric candidate is returned, with
    the success flag False (respectively True).
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.shape != (c.n_block,):
        raise ValueError(f"expected {c.n_block} LLRs, got {llrs.shape}")
    if list_size < 1:
        raise ValueError("list size must be >= 1")
    if crc.width >= c.k_info:
        raise ValueError("CRC width must be smaller than K")
    cands, _metrics = kernels.scl_decode(
        clamp_llrs(llrs), c.frozen_mask.astype(np.uint8), int(list_size)
    )
    info_cands = cands[:, c.info_positions]
    if crc.width == 0:
        return info_cands[0], True
    ok = crc_check_many(info_cands, crc)
    passing = np.flatnonzero(ok)
    if passing.size:
        return info_cands[passing[0]], True
    return info_cands[0], False


# ---------------------------------------------------------------------------
# CRC


def _crc_register(bits, spec: CrcSpec) -> int:
    """Reference bitwise shift register, MSB first."""
    mask = (1 << spec.width) - 1
    reg = spec.init & mask
    for b in bits:
        fb = ((reg >> (spec.width - 1)) & 1) ^ int(b)
        reg = (reg << 1) & mask
        if fb:
            reg ^= spec.poly
    return reg ^ spec.final_xor


@lru_cache(maxsize=32)
def _crc_rows(length: int, spec: CrcSpec) -> np.ndarray:
    """(length, width) GF(2) matrix mapping a payload to its checksum.

    Valid for init == final_xor == 0 (the CRC is then linear); row i is
    x^(length-1-i+width) mod g(x).
    """
    top = 1 << spec.width
    r = spec.poly  # x^width mod g
    powers = np.empty(length, dtype=np.int64)
    powers[length - 1] = r
    for k in range(1, length):
        r <<= 1
        if r & top:
            r = (r ^ top) ^ spec.poly
        powers[length - 1 - k] = r
    shifts = np.arange(spec.width - 1, -1, -1)
    return ((powers[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def _crc_bits(payload: np.ndarray, spec: CrcSpec) -> np.ndarray:
    payload = np.atleast_2d(np.asarray(payload, dtype=np.uint8))
    if spec.init == 0 and spec.final_xor == 0:
        rows = _crc_rows(payload.shape[1], spec)
        return (payload @ rows) % 2
    out = np.empty((payload.shape[0], spec.width), dtype=np.uint8)
    shifts = np.arange(spec.width - 1, -1, -1)
    for i, row in enumerate(payload):
        out[i] = (_crc_register(row, spec) >> shifts) & 1
    return out


def crc_attach(bits, spec: CrcSpec) -> np.ndarray:
    """Append the checksum; identity when the CRC is disabled."""
    bits = np.asarray(bits, dtype=np.uint8)
    if spec.width == 0:
        return bits.copy()
    return np.concatenate([bits, _crc_bits(bits, spec)[0]])


def crc_check(bits, spec: CrcSpec) -> bool:
    bits = np.asarray(bits, dtype=np.uint8)
    if spec.width == 0:
        return True
    if bits.shape[0] <= spec.width:
        return False
    return bool(np.array_equal(_crc_bits(bits[: -spec.width], spec)[0], bits[-spec.width:]))


def crc_check_many(candidates: np.ndarray, spec: CrcSpec) -> np.ndarray:
    """Vectorized crc_check over rows of a candidate matrix."""
    if spec.width == 0:
        return np.ones(candidates.shape[0], dtype=bool)
    expected = _crc_bits(candidates[:, : -spec.width], spec)
    return np.all(expected == candidates[:, -spec.width:], axis=1)
