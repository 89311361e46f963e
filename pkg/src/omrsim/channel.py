"""Link abstraction: aggregate channel power, detection test, coverage contour."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

SPEED_OF_LIGHT = 2.998e8  # m/s


class DegenerateDistanceError(ValueError):
    """Receiver coincides with a transmitter; path power is undefined."""


class ContourUndefinedError(RuntimeError):
    """No coverage contour ahead of the relay set (aggregate power below threshold)."""


@dataclass(frozen=True)
class PhyConfig:
    """Physical-layer parameters shared by link tests and energy accounting."""

    lambda_c: float = 0.125     # carrier wavelength, m (2.4 GHz band)
    alpha: float = 3.0          # path-loss exponent
    n_s: int = 64               # OFDM subcarriers
    p_n: float = 3.0e-15        # noise-plus-interference power per subcarrier, W
    p_t: float = 2.0            # transmit power over the full band, W (33 dBm)
    gamma_t: float = 10 ** 0.5  # detection SINR threshold, linear (5 dB)
    tau: float = 0.2            # detection reliability bound on outage probability
    n_h: int = 8                # mean multipath tap count (bookkeeping only)
    t_cp: float = 1.0e-5        # cyclic prefix duration, s
    t_p: float = 0.01           # packet duration, s
    t_id: float = 5.0e-4        # packet-ID listening duration, s
    p_rx: float = 0.1           # receive power draw, W
    r: float = 250e3            # PHY data rate, bit/s
    symbol_rate: float = 125e3  # modulation symbols per second over the band
    t_guard: float = 1.2e-4     # inter-transmission guard, s
    delta_r: float = 0.0        # first-echo excess path length, m

    def validate(self) -> None:
        if self.alpha < 2:
            raise ValueError(f"alpha must be >= 2, got {self.alpha}")
        if not (0.0 < self.tau < 1.0):
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.gamma_t <= 0:
            raise ValueError(f"gamma_t must be positive, got {self.gamma_t}")
        if not (0.0 < self.t_id < self.t_p):
            raise ValueError(f"t_id must be in (0, t_p), got {self.t_id}")
        for name in ("lambda_c", "n_s", "p_n", "p_t", "p_rx", "r", "symbol_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def with_tx_power(self, p_t: float) -> "PhyConfig":
        return replace(self, p_t=p_t)


@dataclass(frozen=True)
class DetectionConstant:
    """Threshold U (m^-alpha) for the unscaled aggregate power sum."""

    u: float
    alpha: float = 3.0

    @property
    def single_relay_radius(self) -> float:
        """Reach of a lone transmitter on the axis: U^(-1/alpha)."""
        return self.u ** (-1.0 / self.alpha)


def mean_path_power(d: float, phy: PhyConfig) -> float:
    """Mean channel power over all taps at distance d: (lambda / 4 pi d)^alpha."""
    if d <= 0.0:
        raise DegenerateDistanceError(f"distance must be positive, got {d}")
    return (phy.lambda_c / (4.0 * math.pi * d)) ** phy.alpha


def sigma_s2(rx: tuple[float, float], relays, phy: PhyConfig) -> float:
    """Aggregate mean channel power at rx from a set of concurrent relays."""
    xs = np.asarray([p[0] for p in relays], dtype=float)
    ys = np.asarray([p[1] for p in relays], dtype=float)
    d2 = (rx[0] - xs) ** 2 + (rx[1] - ys) ** 2
    if np.any(d2 <= 0.0):
        raise DegenerateDistanceError("receiver coincides with a relay")
    scale = (phy.lambda_c / (4.0 * math.pi)) ** phy.alpha
    return scale * float(np.sum(d2 ** (-phy.alpha / 2.0)))


def detection_constant(phy: PhyConfig) -> DetectionConstant:
    """Detection threshold on the unscaled power sum H = sum d_k^-alpha."""
    ln_term = math.log(1.0 / (1.0 - phy.tau))
    u = (
        (phy.n_s * phy.p_n / (2.0 * phy.p_t))
        * (4.0 * math.pi / phy.lambda_c) ** phy.alpha
        * phy.gamma_t
        / ln_term
    )
    return DetectionConstant(u=u, alpha=phy.alpha)


def detection_threshold_sigma(phy: PhyConfig) -> float:
    """Right-hand side of the detection condition on sigma_S^2."""
    return phy.n_s * phy.p_n * phy.gamma_t / (2.0 * phy.p_t * math.log(1.0 / (1.0 - phy.tau)))


def power_sum(x: float, y: float, relay_xs: np.ndarray, relay_ys: np.ndarray, alpha: float) -> float:
    """Unscaled aggregate H(x, y) = sum_k d_k^-alpha."""
    d2 = (x - relay_xs) ** 2 + (y - relay_ys) ** 2
    if np.any(d2 <= 0.0):
        return math.inf
    return float(np.sum(d2 ** (-alpha / 2.0)))


def is_detected(rx: tuple[float, float], relays, phy: PhyConfig) -> bool:
    """Mean-SINR reliability test: outage below tau, boundary inclusive."""
    return sigma_s2(rx, relays, phy) >= detection_threshold_sigma(phy)


def outage_probability(rx: tuple[float, float], relays, phy: PhyConfig) -> float:
    """P[instantaneous subcarrier SINR < gamma_t] for Rayleigh-sum fading."""
    gamma_o = 2.0 * phy.p_t * sigma_s2(rx, relays, phy) / (phy.n_s * phy.p_n)
    return 1.0 - math.exp(-phy.gamma_t / gamma_o)


def coverage_contour(relays, y: float, u: float, alpha: float = 3.0) -> float:
    """Largest x with H(x, y) = u, ahead of every relay.

    H is strictly decreasing in x beyond max relay x, so the root is unique.
    Bracket by doubling, then solve to near machine precision.
    """
    relay_xs = np.asarray([p[0] for p in relays], dtype=float)
    relay_ys = np.asarray([p[1] for p in relays], dtype=float)
    if relay_xs.size == 0:
        raise ValueError("coverage_contour needs at least one relay")

    x_lo = float(np.max(relay_xs))

    def h_minus_u(x: float) -> float:
        return power_sum(x, y, relay_xs, relay_ys, alpha) - u

    f_lo = h_minus_u(x_lo)
    if f_lo == 0.0:
        return x_lo
    if f_lo < 0.0:
        raise ContourUndefinedError(
            "aggregate power already below threshold at the relay front"
        )

    step = max(1.0, (relay_xs.size / u) ** (1.0 / alpha))
    x_hi = x_lo + step
    while h_minus_u(x_hi) > 0.0:
        step *= 2.0
        x_hi = x_lo + step
        if step > 1e9:
            raise ContourUndefinedError("no contour crossing found within 1e9 m")

    return float(brentq(h_minus_u, x_lo, x_hi, xtol=1e-12, rtol=8.9e-16))
