"""Closed-form hop statistics: resolvability pmfs, progress law, Poisson mixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from scipy.stats import poisson as _poisson

from .field import FieldConfig


class CalibrationError(RuntimeError):
    """Progress fit is degenerate (single relay-count value or too few samples)."""


class TruncationError(RuntimeError):
    """Distribution support exceeded the hard cap before reaching the tail bound."""


S_SUPPORT_CAP = 4096
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(128)


@dataclass
class IntDist:
    """Pmf over non-negative integers with bounded truncation loss."""

    probs: np.ndarray
    tail_tol: float = 1e-9

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)

    @property
    def support(self) -> int:
        return self.probs.size

    def total(self) -> float:
        return float(self.probs.sum())

    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def check_normalized(self) -> None:
        total = self.total()
        if not (1.0 - self.tail_tol <= total <= 1.0 + 1e-12):
            raise TruncationError(f"pmf mass {total} outside [1 - tail_tol, 1]")

    def truncated(self) -> "IntDist":
        """Drop the upper tail beyond tail_tol of mass and renormalize.

        Renormalizing keeps repeated convolution/mixture steps from
        accumulating truncation losses past the tolerance.
        """
        c = np.cumsum(self.probs[::-1])[::-1]
        keep = int(np.argmax(c < self.tail_tol)) if (c < self.tail_tol).any() \
            else self.probs.size
        keep = max(keep, 1)
        if keep > S_SUPPORT_CAP:
            raise TruncationError(f"support {keep} exceeds cap {S_SUPPORT_CAP}")
        kept = self.probs[:keep]
        total = kept.sum()
        if total <= 0.0:
            raise TruncationError("no probability mass left after truncation")
        return IntDist(kept / total, self.tail_tol)

    def convolve(self, other: "IntDist") -> "IntDist":
        return IntDist(np.convolve(self.probs, other.probs),
                       min(self.tail_tol, other.tail_tol)).truncated()

    def zero_truncated(self) -> "IntDist":
        """Condition on the value being at least 1."""
        if self.probs.size < 2:
            raise ValueError("cannot zero-truncate a point mass at 0")
        p = self.probs.copy()
        p0 = p[0]
        if p0 >= 1.0:
            raise ValueError("all mass at zero")
        p[0] = 0.0
        return IntDist(p / (1.0 - p0), self.tail_tol)

    @staticmethod
    def point_mass(value: int, tail_tol: float = 1e-9) -> "IntDist":
        p = np.zeros(value + 1)
        p[value] = 1.0
        return IntDist(p, tail_tol)


def poisson_pmf(n, mean: float) -> np.ndarray | float:
    """Standard Poisson mass; a zero mean collapses to a point mass at 0."""
    if mean < 0:
        raise ValueError("mean must be >= 0")
    return _poisson.pmf(n, mean)


def poisson_dist(mean: float, tail_tol: float = 1e-9) -> IntDist:
    """Poisson pmf truncated where the upper tail drops below tail_tol."""
    if mean <= 0.0:
        return IntDist.point_mass(0, tail_tol)
    hi = int(_poisson.isf(tail_tol * 0.1, mean)) + 2
    probs = _poisson.pmf(np.arange(hi), mean)
    return IntDist(probs, tail_tol).truncated()


def p_z(z: int, k: int, b: int) -> float:
    """Probability weight of z resolvable relays among k over b RACH slots.

    Evaluated by the recursion p_1 = ((b-1)/b)^(k-1),
    p_z = p_{z-1} ((b-z)/(b-z+1))^(k-z) for z = 2..b-2, and 0 for z >= b-1.
    The z = 1 form takes precedence at b = 2. Exactness is approximate by
    construction; the enumeration oracle in the tests quantifies the gap.
    """
    if k < 1 or b < 2 or z < 1:
        raise ValueError("require k >= 1, b >= 2, z >= 1")
    if z == 1:
        return ((b - 1) / b) ** (k - 1)
    if z >= b - 1:
        return 0.0
    val = ((b - 1) / b) ** (k - 1)
    for m in range(2, z + 1):
        val *= ((b - m) / (b - m + 1)) ** (k - m)
    return val


def p_j(j: int, k: int, b: int) -> float:
    """First-resolvable-index weight for k relays over b slots.

    For j >= 1 this is the inclusion-exclusion form
    ((b-1)/b)^(k-1) (1 + sum_z (-1)^z C(j-1, z) p_z) with the conditioned p_z
    re-evaluated at b-1 slots. The all-collided weight (j = 0) is assigned by
    complement, as the printed j = 0 branch is not a probability (it can leave
    [0, 1]); the tests report the residual gap against exhaustive enumeration.
    """
    if k < 1 or b < 3:
        raise ValueError("require k >= 1 and b >= 3")
    if not (0 <= j <= k):
        raise ValueError(f"j must be in [0, {k}], got {j}")
    if j == 0:
        head = sum(p_j(jj, k, b) for jj in range(1, k + 1))
        return max(0.0, 1.0 - head)
    acc = 1.0
    for z in range(1, j):
        acc += (-1) ** z * math.comb(j - 1, z) * p_z(z, k, b - 1)
    return max(0.0, ((b - 1) / b) ** (k - 1) * acc)


@lru_cache(maxsize=4096)
def _p_j_pmf_cached(k: int, b: int) -> tuple:
    vals = np.array([p_j(j, k, b) for j in range(k + 1)])
    s = vals.sum()
    if s <= 0:
        raise ValueError("degenerate resolvability pmf")
    return tuple(vals / s)


def p_j_pmf(k: int, b: int) -> np.ndarray:
    """Vector [p_j(0), .., p_j(k)] normalized to sum exactly to one."""
    return np.array(_p_j_pmf_cached(k, b))


@dataclass(frozen=True)
class ProgressModel:
    """Per-hop contour advance: delta_x = varphi * K + beta * U^(-1/alpha)."""

    varphi: float
    beta: float
    u: float
    alpha: float = 3.0

    @property
    def r1(self) -> float:
        """First-hop contour on the axis."""
        return self.u ** (-1.0 / self.alpha)

    def validate(self) -> None:
        if self.varphi <= 0:
            raise ValueError("varphi must be positive")


def x_h_step(x_prev: float, k_prev: int, model: ProgressModel) -> float:
    """One application of the linear progress recursion."""
    return x_prev + model.varphi * k_prev + model.beta * model.r1


def x_h_closed(i: int, k_history, model: ProgressModel) -> float:
    """Closed form of the recursion: varphi * sum K_n + (i-1) beta r1 + r1."""
    if i < 1:
        raise ValueError("hop index starts at 1")
    s = float(np.sum(np.asarray(k_history, dtype=float)[: i - 1]))
    return model.varphi * s + (i - 1) * model.beta * model.r1 + model.r1


def calibrate_progress(
    k_prev: np.ndarray,
    dx: np.ndarray,
    u: float,
    alpha: float = 3.0,
    min_bin: int = 5,
) -> tuple[ProgressModel, float]:
    """Least-squares fit of per-hop contour advance against relay count.

    Fits dx = varphi * K + beta * U^(-1/alpha) on raw samples. The reported
    MAPE compares fitted against observed total contour offsets (dx + r1,
    binned per relay count), which keeps the relative error well defined at
    K = 1 where the co-located law gives dx = 0.
    """
    k_prev = np.asarray(k_prev, dtype=float)
    dx = np.asarray(dx, dtype=float)
    ok = np.isfinite(k_prev) & np.isfinite(dx)
    k_prev, dx = k_prev[ok], dx[ok]
    if k_prev.size < 100:
        raise CalibrationError(f"need >= 100 samples, got {k_prev.size}")
    if np.unique(k_prev).size < 2:
        raise CalibrationError("samples span a single relay-count value")

    r1 = u ** (-1.0 / alpha)
    design = np.column_stack([k_prev, np.full(k_prev.size, r1)])
    (varphi, beta), *_ = np.linalg.lstsq(design, dx, rcond=None)
    model = ProgressModel(varphi=float(varphi), beta=float(beta), u=u, alpha=alpha)

    errs = []
    for kv in np.unique(k_prev):
        sel = k_prev == kv
        if sel.sum() < min_bin:
            continue
        observed = dx[sel].mean() + r1
        fitted = varphi * kv + beta * r1 + r1
        errs.append(abs(fitted - observed) / observed)
    if not errs:
        raise CalibrationError("no relay-count bin has enough samples")
    return model, float(np.mean(errs))


def x_c(x_h_prev: float, j_prev: int, rho: float, epsilon: float) -> float:
    """Decision-arc position behind the previous coverage contour.

    Uses the sector nearest-neighbor distance for the j-th relay; the radicand
    is clamped at zero (j = 1 keeps the arc on the contour itself).
    """
    if j_prev < 1:
        raise ValueError("j_prev must be >= 1; the all-collided case is the "
                         "caller's fallback")
    radicand = (2.0 / (math.pi * epsilon * rho)) * (j_prev - 1.0 - math.pi / 4.0)
    return x_h_prev - math.sqrt(max(0.0, radicand))


def _arc_positions(x0: float, y: np.ndarray, dst_x: float | None) -> np.ndarray:
    """Contour through (x0, 0) as an arc centered on the destination.

    dst_x = None is the large-radius (flat) limit. An arc that would sit past
    the destination degenerates to the flat line through x0.
    """
    if dst_x is None or dst_x <= x0:
        return np.full(y.shape, x0)
    r = dst_x - x0
    return dst_x - np.sqrt(np.maximum(r * r - y * y, 0.0))


def areas(
    x_c_pos: float,
    x_h_prev: float,
    x_h: float,
    x_h_prev2: float,
    w: float,
    dst_x: float | None = None,
) -> tuple[float, float, float, float]:
    """Areas between decision/coverage contours across the strip.

    Returns (A_D, A_R, A_D_minus, A_R_minus): the fresh decode band, the full
    relay-eligible band (decision arc to the new contour), the previous decode
    band, and the sliver between the decision arc and the previous contour.
    Contours are arcs centered on the destination through their on-axis
    positions (flat lines when dst_x is None), integrated across y.
    """
    eps = 1e-9 * max(1.0, abs(x_h))
    if not (x_h_prev2 <= x_h_prev + eps and x_h_prev <= x_h + eps):
        raise ValueError("contours must satisfy x_h_prev2 <= x_h_prev <= x_h")
    if x_c_pos > x_h_prev + eps:
        raise ValueError("decision arc cannot lie ahead of the previous contour")

    y = 0.5 * w * _GL_NODES
    wt = 0.5 * w * _GL_WEIGHTS
    c_c = _arc_positions(x_c_pos, y, dst_x)
    c_p = _arc_positions(x_h_prev, y, dst_x)
    c_h = _arc_positions(x_h, y, dst_x)
    c_p2 = _arc_positions(x_h_prev2, y, dst_x)
    a_d = float(wt @ np.maximum(c_h - c_p, 0.0))
    a_r_minus = float(wt @ np.maximum(c_p - c_c, 0.0))
    a_d_minus = float(wt @ np.maximum(c_p - c_p2, 0.0))
    return a_d, a_d + a_r_minus, a_d_minus, a_r_minus


def first_hop_areas(r1: float, w: float) -> tuple[float, float]:
    """Decode and relay areas of the source's own transmission.

    The decode region is the full disc; the relay region is the forward half
    clipped to the strip.
    """
    a_decode = math.pi * r1 * r1
    ylim = min(r1, w / 2.0)
    # integral of sqrt(r1^2 - y^2) over [-ylim, ylim]
    a_relay = ylim * math.sqrt(max(r1 * r1 - ylim * ylim, 0.0)) \
        + r1 * r1 * math.asin(min(1.0, ylim / r1))
    return a_decode, a_relay


@dataclass
class HopRecursionState:
    """Carry-over between hops: relay-count pmfs, their running sum, anchors."""

    i: int
    dist_k_prev: IntDist        # relays formed at hop i-1
    dist_k_prev2: IntDist       # relays formed at hop i-2
    dist_s: IntDist             # S_{i-2} = sum of relay counts through hop i-2
    x_anchor_prev: float        # mean on-axis contour of hop i-1
    x_anchor_prev2: float       # mean on-axis contour of hop i-2
    tail_tol: float = 1e-9


@dataclass
class HopRow:
    hop: int
    e_k: float        # E[relays formed at this hop]
    e_l: float        # E[decoding-set size]
    e_nr: float       # E[retransmissions]
    xh0: float        # mean on-axis coverage contour of this hop's transmission


@dataclass
class HopStatistics:
    rows: list[HopRow]
    dists_k: list[IntDist] = dc_field(default_factory=list)
    dists_l: list[IntDist] = dc_field(default_factory=list)

    def as_table(self) -> list[tuple]:
        return [(r.hop, r.e_k, r.e_l, r.e_nr, r.xh0) for r in self.rows]


def _mixture_poisson(means: np.ndarray, weights: np.ndarray,
                     tail_tol: float) -> IntDist:
    """Sum_w Poisson(mean_w), truncated to the tail tolerance."""
    top = float(means.max(initial=0.0))
    hi = int(_poisson.isf(tail_tol * 0.1, top)) + 2 if top > 0 else 1
    ns = np.arange(hi)
    probs = np.zeros(hi)
    for m, wgt in zip(means, weights):
        if wgt <= 0.0:
            continue
        probs += wgt * _poisson.pmf(ns, m)
    return IntDist(probs, tail_tol).truncated()


def init_recursion(
    field_cfg: FieldConfig, model: ProgressModel, tail_tol: float = 1e-9
) -> tuple[HopRecursionState, HopRow, IntDist]:
    """Hop-1 statistics: the source transmits alone from a known position."""
    r1 = model.r1
    a_decode, a_relay = first_hop_areas(r1, field_cfg.w)
    lam_k = field_cfg.epsilon * field_cfg.rho * a_relay
    lam_l = field_cfg.epsilon * field_cfg.rho * a_decode
    dist_k1 = poisson_dist(lam_k, tail_tol).zero_truncated().truncated()
    dist_l1 = poisson_dist(lam_l, tail_tol)
    row = HopRow(
        hop=1,
        e_k=dist_k1.mean(),
        e_l=dist_l1.mean(),
        e_nr=1.0 / math.expm1(lam_k),
        xh0=r1,
    )
    state = HopRecursionState(
        i=2,
        dist_k_prev=dist_k1,
        dist_k_prev2=IntDist.point_mass(1, tail_tol),  # the source itself
        dist_s=IntDist.point_mass(0, tail_tol),        # S_0 = 0
        x_anchor_prev=r1,
        x_anchor_prev2=0.0,
        tail_tol=tail_tol,
    )
    return state, row, dist_l1


def propagate_hop(
    state: HopRecursionState,
    field_cfg: FieldConfig,
    model: ProgressModel,
    b: int,
) -> tuple[HopRecursionState, HopRow, IntDist, IntDist]:
    """Advance the recursion one hop: mixture pmfs for relays and decoders.

    The decode band depends on the previous relay count alone; the eligible
    band adds the decision-arc sliver, whose depth follows the first
    resolvable index. Sleep-staggered members join both with the awake factor
    (1 - epsilon). The relay pmf is conditioned on the hop completing (at
    least one relay), mirroring the retransmission policy; the expected
    retransmission count is taken against the pre-conditioning weights.
    """
    eps = field_cfg.epsilon
    rho = field_cfg.rho
    p_wk = 1.0 - eps
    tol = state.tail_tol
    r1 = model.r1
    dst_x = field_cfg.length

    k_prev = state.dist_k_prev
    k_vals = np.arange(k_prev.support)
    k_mask = k_prev.probs > 0.0

    if state.i == 2:
        # the previous decode band is the source's full disc
        a_decode_prev = np.full(state.dist_k_prev2.support,
                                first_hop_areas(r1, field_cfg.w)[0])
    else:
        a_decode_prev = np.zeros(state.dist_k_prev2.support)
        for k2 in range(state.dist_k_prev2.support):
            if state.dist_k_prev2.probs[k2] <= 0.0 or k2 < 1:
                continue
            x_h = x_h_step(state.x_anchor_prev2, k2, model)
            a_d, *_ = areas(state.x_anchor_prev2, state.x_anchor_prev2, x_h,
                            state.x_anchor_prev2, field_cfg.w, dst_x)
            a_decode_prev[k2] = a_d

    # fresh decode band per previous relay count
    a_decode = np.zeros(k_prev.support)
    a_sliver = {}
    for k in k_vals[k_mask]:
        if k < 1:
            continue
        x_h = x_h_step(state.x_anchor_prev, int(k), model)
        a_d, *_ = areas(state.x_anchor_prev, state.x_anchor_prev, x_h,
                        state.x_anchor_prev, field_cfg.w, dst_x)
        a_decode[k] = a_d

    def sliver(j_eff: int) -> float:
        if j_eff in a_sliver:
            return a_sliver[j_eff]
        xc = x_c(state.x_anchor_prev, j_eff, rho, eps)
        _, _, _, a_rm = areas(xc, state.x_anchor_prev, state.x_anchor_prev,
                              state.x_anchor_prev, field_cfg.w, dst_x)
        a_sliver[j_eff] = a_rm
        return a_rm

    # decoders: Poisson over the fresh band + sleep-staggered previous band
    p_l = _mixture_poisson(eps * rho * a_decode[k_mask],
                           k_prev.probs[k_mask], tol)
    w2 = state.dist_k_prev2.probs
    p_l_minus = _mixture_poisson(eps * rho * p_wk * a_decode_prev,
                                 w2, tol)
    dist_l = p_l.convolve(p_l_minus)

    # relays: mix over (j, previous count); j = 0 falls back to the arc
    # through the farthest relay
    means_r, weights_r = [], []
    means_nr, weights_nr = [], []
    j_marginal: dict[int, float] = {}
    for k in k_vals[k_mask]:
        if k < 1:
            continue
        wk = float(k_prev.probs[k])
        jp = p_j_pmf(int(k), b)
        for j in range(0, int(k) + 1):
            wj = wk * jp[j]
            if wj <= 0.0:
                continue
            j_eff = int(k) if j == 0 else j
            a_r = a_decode[k] + sliver(j_eff)
            means_r.append(eps * rho * (a_decode[k] + sliver(j_eff)))
            weights_r.append(wj)
            means_nr.append(1.0 / math.expm1(eps * rho * a_r))
            weights_nr.append(wj)
            j_marginal[j_eff] = j_marginal.get(j_eff, 0.0) + wj

    p_k = _mixture_poisson(np.asarray(means_r), np.asarray(weights_r), tol)
    e_nr = float(np.dot(means_nr, weights_nr))

    j_effs = np.asarray(sorted(j_marginal))
    p_k_minus = _mixture_poisson(
        eps * rho * p_wk * np.asarray([sliver(int(j)) for j in j_effs]),
        np.asarray([j_marginal[int(j)] for j in j_effs]), tol)
    dist_k_raw = p_k.convolve(p_k_minus)
    dist_k = dist_k_raw.zero_truncated().truncated()

    x_anchor = state.x_anchor_prev + model.varphi * k_prev.mean() \
        + model.beta * r1
    row = HopRow(
        hop=state.i,
        e_k=dist_k.mean(),
        e_l=dist_l.mean(),
        e_nr=e_nr,
        xh0=x_anchor,
    )
    new_state = HopRecursionState(
        i=state.i + 1,
        dist_k_prev=dist_k,
        dist_k_prev2=k_prev,
        dist_s=state.dist_s.convolve(k_prev),
        x_anchor_prev=x_anchor,
        x_anchor_prev2=state.x_anchor_prev,
        tail_tol=tol,
    )
    return new_state, row, dist_l, dist_k_raw


def run_recursion(
    field_cfg: FieldConfig,
    model: ProgressModel,
    b: int,
    tail_tol: float = 1e-9,
    max_hops: int = 512,
) -> HopStatistics:
    """Iterate the hop recursion until the mean contour passes the destination."""
    field_cfg.validate()
    model.validate()
    if model.varphi * 1.0 + model.beta * model.r1 <= 0.0:
        raise ValueError("progress model cannot advance the contour")

    state, row1, dist_l1 = init_recursion(field_cfg, model, tail_tol)
    stats = HopStatistics(rows=[row1], dists_k=[state.dist_k_prev],
                          dists_l=[dist_l1])
    if row1.xh0 >= field_cfg.length:
        return stats
    while state.i <= max_hops:
        state, row, dist_l, _ = propagate_hop(state, field_cfg, model, b)
        stats.rows.append(row)
        stats.dists_k.append(state.dist_k_prev)
        stats.dists_l.append(dist_l)
        if row.xh0 >= field_cfg.length:
            return stats
    raise TruncationError(f"recursion did not reach the destination in "
                          f"{max_hops} hops")
