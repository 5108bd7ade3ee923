"""Inter-spacecraft separation constraints: time-dependent tightening,
isoperimetric slack dynamics and Jacobians, and a dense-sampling violation
scanner used as a test oracle and Monte Carlo metric.

The tightening rate kappa has units of inverse distance (1/DU in canonical
scales); configuration-level values quoted per kilometre must be converted
before reaching these functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .exceptions import DegenerateScheduleError, SingularSeparationError


@dataclass(frozen=True)
class SeparationBounds:
    """Raw separation band plus tightening parameters (canonical DU).

    The tightened band [dr_min + zeta_min(t), dr_max - zeta_max(t)] must be
    non-empty at every horizon time, which the invariant below guarantees
    since zeta(delta, .) < delta.

    slack_scale rescales the residual inside the isoperimetric integrand
    (the slacks accumulate |slack_scale * g|_+^alpha).  With DU-sized
    separations the raw residuals are ~1e-5, whose squares would make any
    fixed continuity relaxation vacuous; the configuration layer sets
    slack_scale = DU in km so the integrand works on kilometre residuals.
    """

    dr_min: float
    dr_max: float
    delta_min: float
    delta_max: float
    kappa: float
    alpha: float = 2.0
    slack_scale: float = 1.0

    def __post_init__(self):
        if self.dr_min <= 0.0:
            raise ValueError(f"dr_min must be positive, got {self.dr_min}")
        if self.delta_min < 0.0 or self.delta_max < 0.0:
            raise ValueError("tightening buffers must be non-negative")
        if self.dr_min + self.delta_min >= self.dr_max - self.delta_max:
            raise ValueError(
                "tightened band empty: dr_min + delta_min = "
                f"{self.dr_min + self.delta_min} >= dr_max - delta_max = "
                f"{self.dr_max - self.delta_max}")
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")
        if self.alpha <= 1.0:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if self.slack_scale <= 0.0:
            raise ValueError(f"slack_scale must be positive, got {self.slack_scale}")


@dataclass(frozen=True)
class PairIndex:
    """Ordered list of unordered vehicle pairs (i, j), i < j."""

    m: int
    pairs: tuple[tuple[int, int], ...] = field(default=None)

    def __post_init__(self):
        if self.pairs is None:
            object.__setattr__(self, "pairs",
                               tuple(combinations(range(self.m), 2)))
        seen = set()
        for i, j in self.pairs:
            if not 0 <= i < j < self.m:
                raise ValueError(f"bad pair ({i}, {j}) for m={self.m}")
            if (i, j) in seen:
                raise ValueError(f"duplicate pair ({i}, {j})")
            seen.add((i, j))

    @property
    def q(self) -> int:
        return len(self.pairs)


def _horizon(schedule) -> tuple[float, float]:
    """Extract (t_first, t_last) from a NodeSchedule or a 2-tuple."""
    times = getattr(schedule, "times", None)
    if times is not None:
        t0, t1 = float(times[0]), float(times[-1])
    else:
        t0, t1 = float(schedule[0]), float(schedule[1])
    if t1 <= t0:
        raise DegenerateScheduleError(f"zero-length horizon [{t0}, {t1}]")
    return t0, t1


def zeta(delta_r: float, t: float, schedule, kappa: float) -> float:
    """Tightening margin delta_r - 1/(kappa*tau + 1/delta_r).

    tau is the normalized horizon time; the margin is 0 at the horizon
    start, strictly increasing in tau for kappa > 0, with supremum delta_r.
    """
    t0, t1 = _horizon(schedule)
    if delta_r == 0.0:
        return 0.0
    tau = (t - t0) / (t1 - t0)
    return delta_r - 1.0 / (kappa * tau + 1.0 / delta_r)


def separation(X: np.ndarray, pair: tuple[int, int]) -> float:
    """| r_i - r_j | from a stacked state."""
    X = np.asarray(X, dtype=float)
    i, j = pair
    d = X[6 * i:6 * i + 3] - X[6 * j:6 * j + 3]
    return float(np.linalg.norm(d))


def g_min(X: np.ndarray, t: float, pair: tuple[int, int],
          bounds: SeparationBounds, schedule) -> float:
    """Tightened minimum-separation residual; negative iff satisfied."""
    z = zeta(bounds.delta_min, t, schedule, bounds.kappa)
    return bounds.dr_min + z - separation(X, pair)


def g_max(X: np.ndarray, t: float, pair: tuple[int, int],
          bounds: SeparationBounds, schedule) -> float:
    """Tightened maximum-separation residual; negative iff satisfied."""
    z = zeta(bounds.delta_max, t, schedule, bounds.kappa)
    return -bounds.dr_max + z + separation(X, pair)


def slack_rhs(X: np.ndarray, t: float, bounds: SeparationBounds,
              pairs: PairIndex, schedule) -> np.ndarray:
    """Derivatives of the 2q slack states: max(0, slack_scale * g)^alpha per
    pair, minimum-bound block first."""
    out = np.empty(2 * pairs.q)
    s = bounds.slack_scale
    for p, pair in enumerate(pairs.pairs):
        out[p] = max(0.0, s * g_min(X, t, pair, bounds, schedule)) ** bounds.alpha
        out[pairs.q + p] = max(
            0.0, s * g_max(X, t, pair, bounds, schedule)) ** bounds.alpha
    return out


def slack_jacobian(X: np.ndarray, t: float, bounds: SeparationBounds,
                   pairs: PairIndex, schedule) -> np.ndarray:
    """(2q, 6M) Jacobian of :func:`slack_rhs` with respect to the stack.

    Rows are zero where the residual is inactive; active rows touch only the
    position sub-blocks of the two paired vehicles.  A pair at coincident
    positions with an active residual has no defined direction.
    """
    X = np.asarray(X, dtype=float)
    m = X.size // 6
    q = pairs.q
    out = np.zeros((2 * q, 6 * m))
    a = bounds.alpha
    s_pow = bounds.slack_scale ** bounds.alpha
    for p, (i, j) in enumerate(pairs.pairs):
        d = X[6 * i:6 * i + 3] - X[6 * j:6 * j + 3]
        dn = float(np.linalg.norm(d))
        gmin = g_min(X, t, (i, j), bounds, schedule)
        gmax = g_max(X, t, (i, j), bounds, schedule)
        if gmin > 0.0 or gmax > 0.0:
            if dn == 0.0:
                raise SingularSeparationError(
                    f"pair ({i}, {j}) coincident with active separation residual")
            nhat = d / dn
        if gmin > 0.0:
            coeff = s_pow * a * gmin ** (a - 1.0)
            out[p, 6 * i:6 * i + 3] = -coeff * nhat
            out[p, 6 * j:6 * j + 3] = coeff * nhat
        if gmax > 0.0:
            coeff = s_pow * a * gmax ** (a - 1.0)
            out[q + p, 6 * i:6 * i + 3] = coeff * nhat
            out[q + p, 6 * j:6 * j + 3] = -coeff * nhat
    return out


@dataclass
class ViolationInterval:
    pair: tuple[int, int]
    bound: str           # "min" or "max"
    t_enter: float
    t_exit: float
    worst: float         # largest violation depth inside the interval, DU

    def to_dict(self):
        return {"pair": list(self.pair), "bound": self.bound,
                "t_enter": self.t_enter, "t_exit": self.t_exit,
                "worst": self.worst}


@dataclass
class ViolationReport:
    max_violation: float
    intervals: list[ViolationInterval]
    samples: int

    @property
    def violated(self) -> bool:
        return self.max_violation > 0.0

    def to_dict(self):
        return {"max_violation": self.max_violation,
                "samples": self.samples,
                "intervals": [iv.to_dict() for iv in self.intervals]}


def dense_violation_scan(trajectory, segments, bounds: SeparationBounds,
                         pairs: PairIndex, samples_per_segment: int = 64,
                         *, tightened: bool = False,
                         horizon=None) -> ViolationReport:
    """Scan separations against the bounds on a dense time grid.

    trajectory: callable t -> stacked state, or a (times, states) sample set
    that is interpolated linearly.  segments: breakpoint times; each segment
    is sampled at `samples_per_segment` points including both endpoints.
    By default the raw band [dr_min, dr_max] is checked; with tightened=True
    the zeta-tightened band over `horizon` (defaults to the scan span).
    """
    if samples_per_segment < 2:
        raise ValueError("samples_per_segment must be >= 2")
    segments = np.asarray(segments, dtype=float)
    if segments.size < 2:
        raise ValueError("need at least one segment")

    if callable(trajectory):
        traj = trajectory
    else:
        times, states = trajectory
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)

        def traj(t):
            out = np.empty(states.shape[1])
            for c in range(states.shape[1]):
                out[c] = np.interp(t, times, states[:, c])
            return out

    if tightened and horizon is None:
        horizon = (segments[0], segments[-1])

    grids = []
    for k in range(segments.size - 1):
        g = np.linspace(segments[k], segments[k + 1], samples_per_segment)
        grids.append(g if k == 0 else g[1:])
    tgrid = np.concatenate(grids)

    nq = pairs.q
    dep = np.zeros((tgrid.size, 2 * nq))
    for it, t in enumerate(tgrid):
        X = traj(t)
        if tightened:
            zmin = zeta(bounds.delta_min, t, horizon, bounds.kappa)
            zmax = zeta(bounds.delta_max, t, horizon, bounds.kappa)
        else:
            zmin = zmax = 0.0
        lower = bounds.dr_min + zmin
        upper = bounds.dr_max - zmax
        for p, pair in enumerate(pairs.pairs):
            s = separation(X, pair)
            dep[it, p] = max(0.0, lower - s)
            dep[it, nq + p] = max(0.0, s - upper)

    intervals: list[ViolationInterval] = []
    for col in range(2 * nq):
        v = dep[:, col]
        bad = v > 0.0
        if not bad.any():
            continue
        pair = pairs.pairs[col % nq]
        bound = "min" if col < nq else "max"
        start = None
        for it in range(tgrid.size):
            if bad[it] and start is None:
                start = it
            if start is not None and (not bad[it] or it == tgrid.size - 1):
                stop = it if bad[it] else it - 1
                intervals.append(ViolationInterval(
                    pair=pair, bound=bound,
                    t_enter=float(tgrid[start]), t_exit=float(tgrid[stop]),
                    worst=float(v[start:stop + 1].max())))
                start = None

    return ViolationReport(max_violation=float(dep.max()),
                           intervals=intervals, samples=int(tgrid.size))


def tightened_band(bounds: SeparationBounds, t: float, schedule) -> tuple[float, float]:
    """Lower and upper tightened separation bounds at time t."""
    lo = bounds.dr_min + zeta(bounds.delta_min, t, schedule, bounds.kappa)
    hi = bounds.dr_max - zeta(bounds.delta_max, t, schedule, bounds.kappa)
    return lo, hi


def violation_threshold(bounds: SeparationBounds, eps_licq: float,
                        segment_length: float) -> float:
    """Violation depth (DU) associated with slack growth eps_licq over a
    segment: the worst-case depth whose alpha-power integral stays at the
    relaxation level."""
    return ((eps_licq * segment_length) ** (1.0 / bounds.alpha)
            / bounds.slack_scale)
