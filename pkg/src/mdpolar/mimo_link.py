"""Rayleigh MIMO channel generation, AWGN, and MMSE-SIC detection in an
arbitrary antenna order.

Conventions: channel entries are i.i.d. CN(0,1); transmit symbols have
unit average energy per antenna; sigma2 is the complex noise variance per
receive antenna, so snr_db = -10*log10(sigma2).
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .modem import ModulationScheme

logger = logging.getLogger(__name__)

# effective noise variances below this are floored; the LLR clamp saturates
# long before the floor matters
_VAR_FLOOR = 1e-12

_COND_WARN = 1e12


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex fading matrix (legitimate H or eavesdropper G)."""

    entries: np.ndarray
    role: str = "legitimate"

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 2:
            raise ValueError("channel matrix must be 2-D (N_rx x T_A)")
        if not np.all(np.isfinite(entries.view(np.float64))):
            raise ValueError("channel matrix entries must be finite")
        object.__setattr__(self, "entries", entries)

    @property
    def n_rx(self) -> int:
        return self.entries.shape[0]

    @property
    def t_a(self) -> int:
        return self.entries.shape[1]

    def gains(self) -> np.ndarray:
        """Per-transmit-antenna gain mu_t = h_t^H h_t."""
        return np.sum(np.abs(self.entries) ** 2, axis=0)


@dataclass(frozen=True)
class DetectionOrder:
    """Permutation of transmit-antenna indices (0-based), first = detected first."""

    perm: tuple

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError(f"{perm} is not a permutation of 0..{len(perm) - 1}")
        object.__setattr__(self, "perm", perm)

    def __len__(self):
        return len(self.perm)

    @classmethod
    def ascending(cls, t_a: int) -> "DetectionOrder":
        return cls(tuple(range(t_a)))

    def position_of(self, antenna: int) -> int:
        return self.perm.index(antenna)


def draw_channel(n_rx: int, t_a: int, rng, role: str = "legitimate") -> ChannelMatrix:
    """i.i.d. CN(0,1) entries (variance 0.5 per real component)."""
    if n_rx < 1 or t_a < 1:
        raise ValueError("channel dimensions must be >= 1")
    entries = np.sqrt(0.5) * (rng.standard_normal((n_rx, t_a))
                              + 1j * rng.standard_normal((n_rx, t_a)))
    return ChannelMatrix(entries, role)


def transmit(x, channel: ChannelMatrix, sigma2: float, rng) -> np.ndarray:
    """y = H x + z with z ~ CN(0, sigma2 I); x may be (T_A,) or (T_A, S)."""
    x = np.asarray(x, dtype=np.complex128)
    if x.shape[0] != channel.t_a:
        raise ValueError(f"symbol vector has {x.shape[0]} layers, channel has {channel.t_a}")
    if sigma2 < 0:
        raise ValueError("noise variance must be >= 0")
    y = channel.entries @ x
    if sigma2 > 0:
        noise = np.sqrt(sigma2 / 2) * (rng.standard_normal(y.shape)
                                       + 1j * rng.standard_normal(y.shape))
        y = y + noise
    return y


def mmse_matrix(h_sub: np.ndarray, sigma2: float) -> np.ndarray:
    """Regularized-inverse filter (H^H H + sigma2 I)^-1 H^H.

    The first row is the filter for the current layer (first column of
    h_sub).  With sigma2 == 0 a singular system raises LinAlgError.
    """
    h_sub = np.asarray(h_sub, dtype=np.complex128)
    gram = h_sub.conj().T @ h_sub + sigma2 * np.eye(h_sub.shape[1])
    cond = np.linalg.cond(gram)
    if cond > _COND_WARN:
        logger.warning("MMSE normal matrix condition number %.3e exceeds %.0e", cond, _COND_WARN)
    return np.linalg.solve(gram, h_sub.conj().T)


def layer_filter_stats(channel: ChannelMatrix, sigma2: float, order: DetectionOrder):
    """Per-detection-position MMSE filters and bias factors.

    Returns (filters, betas): filters[k] is the unbiased filter row for the
    antenna detected at position k, betas[k] the raw MMSE bias in (0, 1).
    The per-position unbiased SINR is beta / (1 - beta).
    """
    entries = channel.entries
    t_a = channel.t_a
    perm = list(order.perm)
    filters = np.empty((t_a, channel.n_rx), dtype=np.complex128)
    betas = np.empty(t_a)
    for k in range(t_a):
        rem = perm[k:]
        w = mmse_matrix(entries[:, rem], sigma2)
        w1 = w[0]
        beta = float(np.real(w1 @ entries[:, rem[0]]))
        beta = min(max(beta, 1e-15), 1.0 - 1e-15)
        filters[k] = w1 / beta
        betas[k] = beta
    return filters, betas


@dataclass(frozen=True)
class SicResult:
    """MMSE-SIC output, aligned to antenna indices."""

    estimates: np.ndarray        # (T_A, S) unbiased soft estimates per antenna
    noise_vars: np.ndarray       # (T_A,) effective noise variance per antenna
    hard: np.ndarray             # (T_A, S) sliced constellation points
    order: DetectionOrder

    def position_sinrs(self) -> np.ndarray:
        """Nominal post-detection SINR by detection position."""
        v = self.noise_vars[list(self.order.perm)]
        return 1.0 / v

    def soft_symbols(self, slot: int = 0):
        """Per-layer SoftSymbol list in detection order for one time slot."""
        from .modem import SoftSymbol

        return [
            SoftSymbol(complex(self.estimates[t, slot]), float(self.noise_vars[t]))
            for t in self.order.perm
        ]


def mmse_sic_detect(y, channel: ChannelMatrix, sigma2: float, order: DetectionOrder,
                    scheme: ModulationScheme) -> SicResult:
    """Layered detection: filter, slice, remodulate, subtract, in `order`.

    Cancellation uses hard symbol decisions.  Effective noise variances
    come from the unbiased MMSE statistics, v = (1 - beta)/beta.
    """
    y = np.asarray(y, dtype=np.complex128)
    squeeze = y.ndim == 1
    y = y.reshape(channel.n_rx, -1)
    t_a = channel.t_a
    filters, betas = layer_filter_stats(channel, sigma2, order)

    estimates = np.empty((t_a, y.shape[1]), dtype=np.complex128)
    hard = np.empty((t_a, y.shape[1]), dtype=np.complex128)
    noise_vars = np.empty(t_a)
    residual = y.copy()
    for k, t in enumerate(order.perm):
        gamma = filters[k] @ residual
        estimates[t] = gamma
        noise_vars[t] = max((1.0 - betas[k]) / betas[k], _VAR_FLOOR)
        nearest = np.argmin(np.abs(gamma[:, None] - scheme.points[None, :]) ** 2, axis=1)
        hard[t] = scheme.points[nearest]
        residual = residual - np.outer(channel.entries[:, t], hard[t])
    if squeeze:
        estimates = estimates[:, 0][:, None]
        hard = hard[:, 0][:, None]
    return SicResult(estimates, noise_vars, hard, order)


@lru_cache(maxsize=64)
def reference_position_sinrs(n_rx: int, t_a: int, sigma2: float,
                             draws: int = 10000, seed: int = 20240901) -> tuple:
    """Ensemble-mean unbiased MMSE-SIC SINR per detection position.

    Averaged over seeded i.i.d. Rayleigh draws; deterministic, so Alice and
    Bob derive identical code constructions from it.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, n_rx, t_a, draws]))
    order = DetectionOrder.ascending(t_a)
    acc = np.zeros(t_a)
    for _ in range(draws):
        ch = draw_channel(n_rx, t_a, rng)
        _, betas = layer_filter_stats(ch, sigma2, order)
        acc += betas / (1.0 - betas)
    return tuple(acc / draws)
