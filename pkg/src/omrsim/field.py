"""Node deployment geometry: Poisson field, forwarding strip, sleep schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class Point2D(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class FieldConfig:
    """Deployment parameters. Densities are per m^2, lengths in meters."""

    rho: float = 1.5e-3          # node density (1500 km^-2)
    epsilon: float = 0.25        # sleep duty cycle in (0, 1]
    length: float = 2000.0       # source-destination separation
    w: float = 200.0             # initial forwarding strip width
    field_margin: float = 100.0  # extra field beyond the (widened) strip

    def validate(self) -> None:
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if not (self.length > 0):
            raise ValueError(f"length must be positive, got {self.length}")
        if not (self.w > 0):
            raise ValueError(f"w must be positive, got {self.w}")
        if self.field_margin < 0:
            raise ValueError(f"field_margin must be >= 0, got {self.field_margin}")


@dataclass(frozen=True)
class Strip:
    """Forwarding corridor of a given width around the src->dst axis."""

    width: float
    src: Point2D = Point2D(0.0, 0.0)
    dst: Point2D = Point2D(2000.0, 0.0)

    def axis_frame(self) -> tuple[float, float, float]:
        """Unit axis vector (ux, uy) and axis length."""
        dx = self.dst.x - self.src.x
        dy = self.dst.y - self.src.y
        length = math.hypot(dx, dy)
        return dx / length, dy / length, length


def in_strip(p: Point2D, strip: Strip) -> bool:
    """Closed-set membership: lateral offset from the axis at most width/2."""
    ux, uy, _ = strip.axis_frame()
    lateral = -(p[0] - strip.src.x) * uy + (p[1] - strip.src.y) * ux
    return abs(lateral) <= strip.width / 2.0


def lateral_offsets(xs: np.ndarray, ys: np.ndarray, strip: Strip) -> np.ndarray:
    """Signed lateral offsets of many points from the strip axis."""
    ux, uy, _ = strip.axis_frame()
    return -(xs - strip.src.x) * uy + (ys - strip.src.y) * ux


def dist(a: Point2D, b: Point2D) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def sleep_cycle(epsilon: float, t_p: float) -> float:
    """Length of one sleep/wake cycle: sleep block t_p, awake fraction epsilon."""
    if epsilon >= 1.0:
        return math.inf
    return t_p / (1.0 - epsilon)


def is_awake(sleep_phase: float, t: float, t_p: float, epsilon: float) -> bool:
    """True iff t falls in an awake interval of the phase-shifted schedule.

    The schedule alternates a sleep block of length t_p with an awake block of
    length t_p * epsilon / (1 - epsilon), so the long-run awake fraction is
    exactly epsilon. epsilon = 1 means always awake.
    """
    if epsilon >= 1.0:
        return True
    cycle = t_p / (1.0 - epsilon)
    return (t + sleep_phase) % cycle >= t_p


def awake_mask(sleep_phases: np.ndarray, t: float, t_p: float, epsilon: float) -> np.ndarray:
    """Vectorized is_awake over an array of phases."""
    if epsilon >= 1.0:
        return np.ones(sleep_phases.shape, dtype=bool)
    cycle = t_p / (1.0 - epsilon)
    return (t + sleep_phases) % cycle >= t_p


@dataclass
class Deployment:
    """A realized Poisson field, sorted by x for fast axial windowing."""

    xs: np.ndarray
    ys: np.ndarray
    sleep_phases: np.ndarray
    seed: int
    cfg: FieldConfig
    bounds: tuple[float, float, float, float]  # (x_lo, x_hi, y_lo, y_hi)
    sleep_cycle_s: float = field(default=math.inf)

    @property
    def n(self) -> int:
        return self.xs.size

    @property
    def nodes(self) -> list[tuple[Point2D, float]]:
        return [
            (Point2D(float(x), float(y)), float(ph))
            for x, y, ph in zip(self.xs, self.ys, self.sleep_phases)
        ]

    def window(self, x_lo: float, x_hi: float) -> tuple[int, int]:
        """Index range [i0, i1) of nodes with x in [x_lo, x_hi]."""
        i0 = int(np.searchsorted(self.xs, x_lo, side="left"))
        i1 = int(np.searchsorted(self.xs, x_hi, side="right"))
        return i0, i1


def deploy(
    cfg: FieldConfig,
    seed: int,
    t_p: float = 0.01,
    max_strip_width: float | None = None,
) -> Deployment:
    """Scatter a Poisson field over the strip rectangle plus margin.

    max_strip_width is the widest strip the packet may ever use (after
    retransmission widening); the field is sized so widened strips stay
    populated. Node count ~ Poisson(rho * area), positions i.i.d. uniform,
    sleep phases uniform over one sleep/wake cycle.
    """
    cfg.validate()
    w_max = cfg.w if max_strip_width is None else max(cfg.w, max_strip_width)
    x_lo = -cfg.field_margin
    x_hi = cfg.length + cfg.field_margin
    y_hi = w_max / 2.0 + cfg.field_margin
    area = (x_hi - x_lo) * (2.0 * y_hi)

    rng = np.random.default_rng(seed)
    n = int(rng.poisson(cfg.rho * area))
    xs = rng.uniform(x_lo, x_hi, size=n)
    ys = rng.uniform(-y_hi, y_hi, size=n)
    cycle = sleep_cycle(cfg.epsilon, t_p)
    if math.isinf(cycle):
        phases = np.zeros(n)
    else:
        phases = rng.uniform(0.0, cycle, size=n)

    order = np.argsort(xs, kind="stable")
    return Deployment(
        xs=np.ascontiguousarray(xs[order]),
        ys=np.ascontiguousarray(ys[order]),
        sleep_phases=np.ascontiguousarray(phases[order]),
        seed=seed,
        cfg=cfg,
        bounds=(x_lo, x_hi, -y_hi, y_hi),
        sleep_cycle_s=cycle,
    )
