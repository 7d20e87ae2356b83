"""Metrics on time, state and time x state space, covering numbers and box dimension.

Points are stored as 2-d float arrays of shape ``(n, k)``.  Time metrics use a
single column, Euclidean metrics use ``k`` columns and a product metric uses
column 0 for time and the remaining columns for the state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .svf import RegVarSpec, SlowVarySpec, check_concavity_window

__all__ = [
    "MetricDescriptor",
    "PointCloud",
    "CoveringStats",
    "MetricDomainError",
    "eval_metric",
    "pairwise",
    "covering_number",
    "packing_number",
    "box_dimension",
    "product_cloud",
]

KINDS = ("euclidean", "power_time", "regvar_time", "product_max")

# relative slack used when comparing a distance with a radius, so that a grid
# spacing of 0.01 computed as 0.010000000000000009 still counts as 0.01
_SLACK = 1e-12
_DENSE_LIMIT = 4096


class MetricDomainError(ValueError):
    """A pair of points lies outside the domain where the metric is certified."""


@dataclass(frozen=True)
class MetricDescriptor:
    """A named metric.

    Parameters
    ----------
    kind : {"euclidean", "power_time", "regvar_time", "product_max"}
    H : float
        Index for ``power_time`` (|t-s|^H) and ``regvar_time``
        (|t-s|^H ell_theta(|t-s|)).
    slow : SlowVarySpec
        Slowly varying family for ``regvar_time``.
    time, state : MetricDescriptor
        Components of ``product_max``.
    """

    kind: str = "euclidean"
    H: float = 0.5
    slow: SlowVarySpec = field(default_factory=SlowVarySpec)
    time: "MetricDescriptor | None" = None
    state: "MetricDescriptor | None" = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind in ("power_time", "regvar_time") and not 0 < self.H < 1:
            raise ValueError("time metrics need H in (0, 1)")
        if self.kind == "product_max":
            if self.time is None or self.state is None:
                raise ValueError("product_max needs a time and a state metric")
            if self.time.kind == "product_max" or self.state.kind != "euclidean":
                raise ValueError("product_max pairs a one-column time metric with the Euclidean state metric")

    # -- constructors -------------------------------------------------------
    @classmethod
    def euclidean(cls) -> "MetricDescriptor":
        return cls("euclidean")

    @classmethod
    def power_time(cls, H: float) -> "MetricDescriptor":
        return cls("power_time", H=H)

    @classmethod
    def regvar_time(cls, H: float, slow: SlowVarySpec) -> "MetricDescriptor":
        return cls("regvar_time", H=H, slow=slow)

    @classmethod
    def product(cls, time: "MetricDescriptor", state: "MetricDescriptor | None" = None) -> "MetricDescriptor":
        return cls("product_max", time=time, state=state or cls.euclidean())

    # -- properties ---------------------------------------------------------
    @property
    def is_time(self) -> bool:
        return self.kind in ("power_time", "regvar_time")

    @cached_property
    def window(self) -> float:
        """Largest lag on which ``regvar_time`` is certified to be a metric."""
        if self.kind != "regvar_time":
            return math.inf
        x2, _ = check_concavity_window(RegVarSpec(self.H, self.slow, "at_zero"))
        return x2

    def lag_transform(self, lag: np.ndarray) -> np.ndarray:
        """Map absolute time lags to distances for a time metric."""
        lag = np.abs(np.asarray(lag, dtype=float))
        if self.kind == "power_time":
            return lag**self.H
        if self.kind == "regvar_time":
            if np.any(lag > self.window * (1 + _SLACK)):
                raise MetricDomainError(
                    f"time lag {float(lag.max()):.4g} exceeds the certified concavity window "
                    f"x2={self.window:.4g}; the regularly varying distance is not certified as a metric there"
                )
            return np.asarray(RegVarSpec(self.H, self.slow, "at_zero")(lag))
        if self.kind == "euclidean":
            return lag
        raise TypeError("product metric has no lag transform")

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.is_time:
            d["H"] = self.H
        if self.kind == "regvar_time":
            d["slow"] = self.slow.to_dict()
        if self.kind == "product_max":
            d["time"] = self.time.to_dict()
            d["state"] = self.state.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricDescriptor":
        kind = d.get("kind")
        if kind == "euclidean":
            return cls.euclidean()
        if kind == "power_time":
            return cls.power_time(float(d["H"]))
        if kind == "regvar_time":
            return cls.regvar_time(float(d["H"]), SlowVarySpec.from_dict(d.get("slow", {})))
        if kind == "product_max":
            return cls.product(cls.from_dict(d["time"]), cls.from_dict(d.get("state", {"kind": "euclidean"})))
        raise ValueError(f"unknown metric kind {kind!r}")


def _as_points(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("points must be a 1-d or 2-d array")
    return a


def pairwise(m: MetricDescriptor, X, Y=None) -> np.ndarray:
    """Distance matrix between the rows of X and Y (Y defaults to X)."""
    X = _as_points(X)
    Y = X if Y is None else _as_points(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]} columns")
    if m.kind == "euclidean":
        diff = X[:, None, :] - Y[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if m.is_time:
        if X.shape[1] != 1:
            raise ValueError("time metrics act on a single column")
        return m.lag_transform(X[:, 0][:, None] - Y[:, 0][None, :])
    if X.shape[1] < 2:
        raise ValueError("product points need a time column and at least one state column")
    dt = m.time.lag_transform(X[:, 0][:, None] - Y[:, 0][None, :])
    return np.maximum(dt, pairwise(m.state, X[:, 1:], Y[:, 1:]))


def eval_metric(m: MetricDescriptor, u, v) -> float:
    """Distance between two single points."""
    u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    v = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(pairwise(m, u[None, :], v[None, :])[0, 0])


def _nested_point(p) -> np.ndarray:
    """Flatten ``(t, (x1, x2))`` style product points into one row."""
    if isinstance(p, (tuple, list)) and any(isinstance(q, (tuple, list, np.ndarray)) for q in p):
        return np.concatenate([np.atleast_1d(np.asarray(q, dtype=float)).ravel() for q in p])
    return np.atleast_1d(np.asarray(p, dtype=float)).ravel()


def eval_metric_nested(m: MetricDescriptor, u, v) -> float:
    """``eval_metric`` accepting product points written as ``(t, state)`` tuples."""
    return eval_metric(m, _nested_point(u), _nested_point(v))


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------

@dataclass
class PointCloud:
    """Finite point set with the scale at which it represents a continuum set."""

    points: np.ndarray
    resolution: float
    metric: MetricDescriptor = field(default_factory=MetricDescriptor.euclidean)
    validate: bool = True

    def __post_init__(self) -> None:
        self.points = _as_points(self.points)
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.points.shape[0] == 0:
            raise ValueError("a point cloud needs at least one point")
        if self.validate:
            sep = self.min_separation()
            if sep <= 0:
                raise ValueError("point cloud contains duplicate points")
            if sep < self.resolution / 4 * (1 - 1e-9):
                raise ValueError(
                    f"minimum separation {sep:.3g} is below resolution/4 = {self.resolution / 4:.3g}"
                )

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def is_line(self) -> bool:
        """True when distances are an increasing function of |t - s| on one column."""
        return self.points.shape[1] == 1 and self.metric.kind != "product_max"

    def distances(self, rows=None) -> np.ndarray:
        X = self.points if rows is None else self.points[rows]
        return pairwise(self.metric, X, self.points)

    def iter_rows(self, chunk: int = 1024) -> Iterator[tuple[slice, np.ndarray]]:
        for i in range(0, len(self), chunk):
            sl = slice(i, min(i + chunk, len(self)))
            yield sl, pairwise(self.metric, self.points[sl], self.points)

    def min_separation(self) -> float:
        if len(self) == 1:
            return math.inf
        if self.is_line:
            t = np.sort(self.points[:, 0])
            return float(np.min(self.metric.lag_transform(np.diff(t)))) if self.metric.is_time else float(np.min(np.diff(t)))
        best = math.inf
        for sl, D in self.iter_rows():
            idx = np.arange(sl.start, sl.stop)
            D[np.arange(D.shape[0]), idx] = np.inf
            best = min(best, float(D.min()))
        return best

    def diameter(self) -> float:
        if self.is_line:
            t = self.points[:, 0]
            lag = float(t.max() - t.min())
            return float(self.metric.lag_transform(np.array([lag]))[0]) if self.metric.is_time else lag
        return max(float(D.max()) for _, D in self.iter_rows())

    def subset(self, mask) -> "PointCloud":
        return PointCloud(self.points[mask], self.resolution, self.metric, validate=False)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.points.shape[1])])
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path, resolution: float, metric: MetricDescriptor) -> "PointCloud":
        pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(pts, resolution, metric)


def product_cloud(a: PointCloud, b: PointCloud, time_metric: MetricDescriptor | None = None) -> PointCloud:
    """Cartesian product of a time cloud and a state cloud under the max metric."""
    tm = time_metric or a.metric
    pts = np.hstack([np.repeat(a.points, len(b), axis=0), np.tile(b.points, (len(a), 1))])
    return PointCloud(pts, max(a.resolution, b.resolution), MetricDescriptor.product(tm), validate=False)


# ---------------------------------------------------------------------------
# covering and packing
# ---------------------------------------------------------------------------

def _check_radius(cloud: PointCloud, r: float) -> None:
    if not r >= cloud.resolution * (1 - 1e-12):
        raise ValueError(f"radius {r:.4g} is below the cloud resolution {cloud.resolution:.4g}")


def _radius_to_lag(m: MetricDescriptor, r: float) -> float:
    """Largest time lag whose distance is at most r (time metrics are increasing in the lag)."""
    if m.kind == "euclidean":
        return r
    if m.kind == "power_time":
        return r ** (1.0 / m.H)
    lo, hi = 0.0, m.window
    if float(m.lag_transform(np.array([hi]))[0]) <= r:
        return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(m.lag_transform(np.array([mid]))[0]) <= r:
            lo = mid
        else:
            hi = mid
    return lo


def _line_cover(cloud: PointCloud, r: float) -> int:
    # interval sweep, optimal for centres restricted to the cloud
    t = np.sort(cloud.points[:, 0])
    lag = _radius_to_lag(cloud.metric, r * (1 + _SLACK))
    lag *= 1 + _SLACK
    n, i, count = len(t), 0, 0
    while i < n:
        # farthest point to the right that still covers t[i] becomes the centre
        j = int(np.searchsorted(t, t[i] + lag, side="right")) - 1
        i = int(np.searchsorted(t, t[j] + lag, side="right"))
        count += 1
    return count


def _line_pack(cloud: PointCloud, r: float) -> int:
    t = np.sort(cloud.points[:, 0])
    # the next chosen point is the first one at distance >= 2r
    lag = _radius_to_lag(cloud.metric, 2 * r * (1 - _SLACK))
    lag *= 1 - _SLACK
    if cloud.metric.kind == "regvar_time" and not math.isfinite(lag):
        return 1
    n, i, count = len(t), 0, 0
    while i < n:
        count += 1
        i = int(np.searchsorted(t, t[i] + lag, side="left"))
    return count


def _ball_masks(cloud: PointCloud, r: float) -> np.ndarray:
    return cloud.distances() <= r * (1 + _SLACK)


def _greedy_cover(cloud: PointCloud, r: float) -> int:
    n = len(cloud)
    if n > _DENSE_LIMIT:
        # sequential greedy: first uncovered point becomes a centre
        uncovered = np.ones(n, dtype=bool)
        count = 0
        while uncovered.any():
            c = int(np.argmax(uncovered))
            d = pairwise(cloud.metric, cloud.points[c : c + 1], cloud.points)[0]
            uncovered &= d > r * (1 + _SLACK)
            count += 1
        return count
    A = _ball_masks(cloud, r)
    gain = A.sum(axis=1).astype(np.int64)
    uncovered = np.ones(n, dtype=bool)
    count = 0
    while uncovered.any():
        c = int(np.argmax(gain))
        new = A[c] & uncovered
        gain -= A[:, new].sum(axis=1)
        uncovered &= ~new
        count += 1
    return count


def _greedy_pack(cloud: PointCloud, r: float) -> int:
    n = len(cloud)
    alive = np.ones(n, dtype=bool)
    count = 0
    lim = 2 * r * (1 - _SLACK)
    while alive.any():
        c = int(np.argmax(alive))
        d = pairwise(cloud.metric, cloud.points[c : c + 1], cloud.points)[0]
        alive &= d >= lim
        count += 1
    return count


def packing_number(cloud: PointCloud, r: float) -> int:
    """Size of a greedy maximal set of points with pairwise distance >= 2r.

    Equivalently the number of disjoint open r-balls centred in the cloud.
    For one-dimensional clouds the left-to-right sweep is exact.
    """
    _check_radius(cloud, r)
    if len(cloud) == 1:
        return 1
    return _line_pack(cloud, r) if cloud.is_line else _greedy_pack(cloud, r)


def covering_number(cloud: PointCloud, r: float) -> int:
    """Number of closed r-balls, centred at cloud points, in a greedy cover.

    One-dimensional clouds use an exact interval sweep. Otherwise a
    max-coverage greedy is used, which overestimates the minimum by at most
    a logarithmic factor. The result is additionally capped by the packing
    number at r/2 (a maximal r-separated set is itself an r-cover), which
    makes N(2r) <= P(r) <= N(r/2) hold for every cloud.
    """
    _check_radius(cloud, r)
    if len(cloud) == 1:
        return 1
    n = _line_cover(cloud, r) if cloud.is_line else _greedy_cover(cloud, r)
    if r / 2 >= cloud.resolution:
        n = min(n, packing_number(cloud, r / 2))
    return n


@dataclass
class CoveringStats:
    """Covering numbers over a radius ladder and the log-log regression."""

    radii: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    used: np.ndarray
    residuals: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "N", "used", "residual"])
            for r, n, u, e in zip(self.radii, self.counts, self.used, self.residuals):
                w.writerow([repr(float(r)), int(n), int(u), repr(float(e))])

    def to_dict(self) -> dict:
        return {
            "radii": [float(r) for r in self.radii],
            "counts": [int(n) for n in self.counts],
            "slope": float(self.slope),
            "intercept": float(self.intercept),
            "used": [bool(u) for u in self.used],
            "residuals": [float(e) for e in self.residuals],
        }


def box_dimension(cloud: PointCloud, radii: Sequence[float]) -> CoveringStats:
    """Least-squares slope of log N(E, r) against log(1/r).

    Only radii at which the covering number changed from the previous (larger)
    radius enter the fit, so saturation plateaus near the cloud resolution do
    not bias the slope.
    """
    r = np.sort(np.asarray(radii, dtype=float))[::-1]
    if r.size < 4:
        raise ValueError("box dimension needs at least 4 radii")
    if np.any(r < cloud.resolution * (1 - 1e-12)):
        raise ValueError("all radii must be at least the cloud resolution")
    if math.log10(r[0] / r[-1]) < 1.5 - 1e-9:
        raise ValueError("radii must span at least 1.5 decades")
    counts = np.array([covering_number(cloud, float(x)) for x in r])
    used = np.ones(r.size, dtype=bool)
    used[1:] = counts[1:] != counts[:-1]
    if used.sum() < 2:
        raise ValueError("covering numbers did not change across the radius ladder")
    x, y = np.log(1.0 / r), np.log(counts)
    slope, intercept = np.polyfit(x[used], y[used], 1)
    resid = y - (slope * x + intercept)
    return CoveringStats(r, counts, float(slope), float(intercept), used, resid)
