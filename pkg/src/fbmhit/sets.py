"""Example sets and measures: intervals, Cantor sets, phi-scaled Cantor trees and graphs.

The phi-scaled construction starts from one interval of length l0 and keeps,
inside every level-k interval, the two extreme subintervals of length

    l_{k+1} = phi^{-1}(phi(l0) 2^{-(k+1)}),

giving each level-k interval mass 2^{-k}.  The resulting measure satisfies
phi(r) / (2 phi(l0)) <= nu([a - r, a + r]) <= 6 phi(r) / phi(l0) for a in the
limit set and r in [l_K, l0].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .metric import MetricDescriptor, PointCloud
from .svf import SlowVarySpec, ell_theta

__all__ = [
    "ConstructionError",
    "ScalingProfile",
    "CantorTree",
    "AhlforsReport",
    "build_cantor_lambda",
    "build_e_phi",
    "build_nu_pair",
    "graph_cloud",
    "interval_cloud",
    "planar_cantor_cloud",
    "ball_masses",
    "certify_ahlfors",
]

PROFILE_KINDS = ("power", "power_log_plus", "power_log_minus", "regvar_power")


class ConstructionError(RuntimeError):
    """A set construction failed (root bracket, overlap, doubling)."""


@dataclass(frozen=True)
class ScalingProfile:
    """Gauge function phi used to size the Cantor levels.

    Kinds
    -----
    power            r^alpha
    power_log_plus   r^alpha log(e/r)^beta
    power_log_minus  r^alpha log(e/r)^(-beta)
    regvar_power     (r^H ell_theta(r))^m with ell_theta from ``slow``
    """

    kind: str = "power"
    alpha: float = 0.5
    beta: float = 1.0
    slow: SlowVarySpec = field(default_factory=SlowVarySpec)
    m: float = 1.0
    x0: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("profile index alpha must lie in (0, 1)")
        if self.kind in ("power_log_plus", "power_log_minus") and not self.beta > 0:
            raise ValueError("log profiles need beta > 0")
        if self.kind == "regvar_power" and not self.m > 0:
            raise ValueError("regvar_power needs an exponent m > 0")

    @classmethod
    def power(cls, alpha: float) -> "ScalingProfile":
        return cls("power", alpha)

    @classmethod
    def log_plus(cls, alpha: float, beta: float) -> "ScalingProfile":
        return cls("power_log_plus", alpha, beta)

    @classmethod
    def log_minus(cls, alpha: float, beta: float) -> "ScalingProfile":
        return cls("power_log_minus", alpha, beta)

    @classmethod
    def regvar(cls, H: float, slow: SlowVarySpec, m: float = 1.0) -> "ScalingProfile":
        """phi(r) = (r^H ell_theta(r))^m."""
        return cls("regvar_power", H, slow=slow, m=m)

    @property
    def cutoff(self) -> float:
        """Right end of the range on which phi is increasing."""
        if self.x0 is not None:
            return self.x0
        if self.kind == "power_log_plus":
            # d/dr log phi = (alpha - beta / log(e/r)) / r vanishes at r = e^{1 - beta/alpha}
            return math.exp(1.0 - self.beta / self.alpha)
        if self.kind == "regvar_power":
            return 1.0 / self.slow.x0
        return 1.0

    def __call__(self, r):
        ra = np.asarray(r, dtype=float)
        out = np.zeros_like(ra)
        pos = ra > 0
        x = ra[pos]
        if self.kind == "power":
            out[pos] = x**self.alpha
        elif self.kind == "power_log_plus":
            out[pos] = x**self.alpha * np.log(math.e / x) ** self.beta
        elif self.kind == "power_log_minus":
            out[pos] = x**self.alpha * np.log(math.e / x) ** (-self.beta)
        else:
            out[pos] = (x**self.alpha * ell_theta(self.slow, self.alpha, np.minimum(x, 1.0))) ** self.m
        return out if out.ndim else float(out)

    def inverse(self, y: float, upper: float) -> float:
        """Solve phi(r) = y on (0, upper] by bracketed root finding."""
        if not y > 0:
            raise ConstructionError("phi^{-1} needs a positive target")
        f = lambda r: float(self(r)) - y  # noqa: E731
        if f(upper) < 0:
            raise ConstructionError(f"root bracket failure: phi({upper:.4g}) < {y:.4g}")
        lo = upper
        while f(lo) > 0:
            lo *= 1e-3
            if lo < 1e-300:
                raise ConstructionError("root bracket failure near zero")
        return brentq(f, lo, upper, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)

    def doubling_ok(self, upper: float, n_grid: int = 400) -> tuple[bool, float]:
        """Check phi(2x) < 2 phi(x) on a geometric grid in (0, upper/2].

        Returns the verdict and the largest ratio phi(2x) / (2 phi(x)).
        """
        x = np.geomspace(upper * 1e-12, upper / 2, n_grid)
        ratio = np.asarray(self(2 * x)) / (2 * np.asarray(self(x)))
        return bool(np.all(ratio < 1)), float(ratio.max())

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "alpha": self.alpha}
        if self.kind in ("power_log_plus", "power_log_minus"):
            d["beta"] = self.beta
        if self.kind == "regvar_power":
            d["slow"] = self.slow.to_dict()
            d["m"] = self.m
        if self.x0 is not None:
            d["x0"] = self.x0
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingProfile":
        return cls(
            kind=d.get("kind", "power"),
            alpha=float(d.get("alpha", 0.5)),
            beta=float(d.get("beta", 1.0)),
            slow=SlowVarySpec.from_dict(d.get("slow", {})),
            m=float(d.get("m", 1.0)),
            x0=d.get("x0"),
        )


@dataclass
class CantorTree:
    """Nested two-branch interval construction.

    Attributes
    ----------
    lengths : array of shape (K + 1,)
        Interval length at every level.
    lefts : list of arrays
        ``lefts[k]`` holds the 2^k left endpoints at level k, sorted.
    profile : ScalingProfile or None
        Gauge used for the construction, if any.
    """

    lengths: np.ndarray
    lefts: list[np.ndarray]
    profile: ScalingProfile | None = None

    @property
    def depth(self) -> int:
        return len(self.lengths) - 1

    @property
    def l0(self) -> float:
        return float(self.lengths[0])

    def weights(self, k: int) -> np.ndarray:
        """Mass of every level-k interval, exactly 2^-k."""
        return np.full(2**k, math.ldexp(1.0, -k))

    @property
    def leaf_lefts(self) -> np.ndarray:
        return self.lefts[-1]

    @property
    def leaf_length(self) -> float:
        return float(self.lengths[-1])

    def leaf_midpoints(self) -> np.ndarray:
        return self.leaf_lefts + 0.5 * self.leaf_length

    def endpoints(self, k: int | None = None) -> np.ndarray:
        """Sorted endpoints of all intervals at levels <= k (default: all levels)."""
        k = self.depth if k is None else k
        pts = [self.lefts[j] for j in range(k + 1)] + [self.lefts[j] + self.lengths[j] for j in range(k + 1)]
        return np.unique(np.concatenate(pts))

    def leaf_cloud(self, metric: MetricDescriptor | None = None) -> PointCloud:
        """Leaf midpoints at resolution l_K (mapped through a time metric if given)."""
        metric = metric or MetricDescriptor.euclidean()
        res = self.leaf_length
        if metric.is_time:
            res = float(metric.lag_transform(np.array([res]))[0])
        return PointCloud(self.leaf_midpoints(), res, metric)

    def shifted(self, offset: float) -> "CantorTree":
        return CantorTree(self.lengths.copy(), [a + offset for a in self.lefts], self.profile)

    def truncated(self, k: int) -> "CantorTree":
        return CantorTree(self.lengths[: k + 1].copy(), [a.copy() for a in self.lefts[: k + 1]], self.profile)

    def check(self) -> None:
        """Nesting, disjointness and child count at every level."""
        for k in range(self.depth):
            parent, child, lk, lc = self.lefts[k], self.lefts[k + 1], self.lengths[k], self.lengths[k + 1]
            if child.size != 2 * parent.size:
                raise ConstructionError(f"level {k + 1} does not have two children per parent")
            idx = np.searchsorted(parent, child, side="right") - 1
            if np.any(np.bincount(idx, minlength=parent.size) != 2):
                raise ConstructionError(f"level {k + 1} children are not nested two per parent")
            tol = 1e-12 * max(1.0, abs(float(parent.max())))
            if np.any(child < parent[idx] - tol) or np.any(child + lc > parent[idx] + lk + tol):
                raise ConstructionError(f"level {k + 1} intervals are not nested")
            if np.any(np.diff(child) < lc - tol):
                raise ConstructionError(f"level {k + 1} intervals overlap")

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "lengths": [float(x) for x in self.lengths],
            "levels": [
                {"k": k, "lefts": [float(a) for a in self.lefts[k]], "weight": math.ldexp(1.0, -k)}
                for k in range(self.depth + 1)
            ],
            "profile": None if self.profile is None else self.profile.to_dict(),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def _grow(lengths: Sequence[float], origin: float) -> list[np.ndarray]:
    lefts = [np.array([origin], dtype=float)]
    for k in range(1, len(lengths)):
        a = lefts[-1]
        shift = lengths[k - 1] - lengths[k]
        lefts.append(np.sort(np.concatenate([a, a + shift])))
    return lefts


def build_cantor_lambda(lam: float, depth: int, l0: float = 1.0, origin: float = 0.0) -> CantorTree:
    """Middle-(1 - 2 lambda) Cantor set C(lambda) with l_k = lambda^k l0."""
    if not 0 < lam < 0.5:
        raise ConstructionError("lambda must lie in (0, 1/2); lambda >= 1/2 makes the children overlap")
    if not 0 <= depth <= 24:
        raise ValueError("depth must lie in [0, 24]")
    lengths = l0 * lam ** np.arange(depth + 1, dtype=float)
    alpha = math.log(2) / math.log(1 / lam)
    prof = ScalingProfile.power(alpha) if alpha < 1 else None
    return CantorTree(lengths, _grow(lengths, origin), prof)


def build_e_phi(profile: ScalingProfile, l0: float, K: int, origin: float = 0.0) -> CantorTree:
    """phi-scaled Cantor tree with the two children at the ends of every parent."""
    if not 0 <= K <= 24:
        raise ValueError("depth must lie in [0, 24]")
    if not 0 < l0 < profile.cutoff:
        raise ConstructionError(f"l0={l0} must lie in (0, {profile.cutoff:.4g}) where phi is increasing")
    ok, worst = profile.doubling_ok(l0)
    if not ok:
        raise ConstructionError(f"doubling condition phi(2x) < 2 phi(x) fails on (0, l0/2] (max ratio {worst:.4f})")
    top = float(profile(l0))
    lengths = [l0]
    for k in range(1, K + 1):
        lk = profile.inverse(top * math.ldexp(1.0, -k), lengths[-1])
        if lk < 64 * np.spacing(abs(origin) + l0):
            raise ConstructionError(f"l_{k} = {lk:.3g} is below the floating-point resolution of positions near {origin}")
        if 2 * lk > lengths[-1]:
            raise ConstructionError(f"overlap at level {k}: 2 l_{k} = {2 * lk:.4g} > l_{k - 1} = {lengths[-1]:.4g}")
        lengths.append(lk)
    return CantorTree(np.array(lengths), _grow(lengths, origin), profile)


def build_nu_pair(alpha: float, beta: float, l0: float = 0.04, K: int = 10, origin: float = 0.0) -> tuple[CantorTree, CantorTree]:
    """Trees for the gauges r^alpha log^beta(e/r) (E1) and r^alpha log^-beta(e/r) (E2).

    Both sets have dimension alpha; E1 carries zero alpha-Hausdorff measure
    while E2 has positive alpha-capacity.
    """
    if not beta > 1:
        raise ValueError("the pair construction needs beta > 1")
    e1 = build_e_phi(ScalingProfile.log_plus(alpha, beta), l0, K, origin)
    e2 = build_e_phi(ScalingProfile.log_minus(alpha, beta), l0, K, origin)
    return e1, e2


def interval_cloud(a: float = 0.0, b: float = 1.0, n: int = 1001, metric: MetricDescriptor | None = None) -> PointCloud:
    """Uniform grid on [a, b] at resolution equal to the grid step (in the chosen metric)."""
    metric = metric or MetricDescriptor.euclidean()
    t = np.linspace(a, b, n)
    res = (b - a) / (n - 1) if n > 1 else 1.0
    if metric.is_time:
        res = float(metric.lag_transform(np.array([res]))[0])
    return PointCloud(t, res, metric)


def planar_cantor_cloud(lam: float, depth: int, l0: float = 1.0, center: Sequence[float] = (0.0, 0.0)) -> PointCloud:
    """Product C(lambda) x C(lambda) in the plane, an Ahlfors regular set of dimension 2 log2/log(1/lambda)."""
    tree = build_cantor_lambda(lam, depth, l0)
    m = tree.leaf_midpoints() - 0.5 * l0
    x, y = np.meshgrid(m + center[0], m + center[1], indexing="ij")
    return PointCloud(np.column_stack([x.ravel(), y.ravel()]), tree.leaf_length, MetricDescriptor.euclidean())


def graph_cloud(time_grid, f_values, H: float) -> PointCloud:
    """Graph {(t, f(t))} under max(|t-s|^H, |f(t) - f(s)|).

    The resolution is max(dt^H, median one-step oscillation of f).
    """
    t = np.asarray(time_grid, dtype=float).ravel()
    f = np.asarray(f_values, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if f.shape[0] != t.size:
        raise ValueError(f"length mismatch: {t.size} times vs {f.shape[0]} values")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if t.size > 1:
        dt = float(np.min(np.diff(t)))
        osc = float(np.median(np.linalg.norm(np.diff(f, axis=0), axis=1)))
        res = max(dt**H, osc)
    else:
        res = 1.0
    return PointCloud(np.column_stack([t, f]), res, MetricDescriptor.product(MetricDescriptor.power_time(H)))


# ---------------------------------------------------------------------------
# ball masses and Ahlfors regularity
# ---------------------------------------------------------------------------

def ball_masses(lefts: np.ndarray, length: float, weights: np.ndarray, centers: np.ndarray, r: float) -> np.ndarray:
    """Total weight of the intervals [a_i, a_i + length] meeting [c - r, c + r].

    ``lefts`` must be sorted; points are handled with ``length = 0``.
    """
    cum = np.concatenate([[0.0], np.cumsum(weights)])
    lo = np.searchsorted(lefts + length, centers - r, side="left")
    hi = np.searchsorted(lefts, centers + r, side="right")
    return cum[hi] - cum[lo]


@dataclass
class AhlforsReport:
    gamma: float
    gamma_est: float
    ratio_band: tuple[float, float]
    band_limit: float
    passed: bool
    radii: list[float]
    mean_ratio: list[float]

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "gamma_est": self.gamma_est,
            "ratio_band": list(self.ratio_band),
            "band_limit": self.band_limit,
            "pass": self.passed,
            "radii": self.radii,
            "mean_ratio": self.mean_ratio,
        }


def certify_ahlfors(
    tree,
    gamma: float,
    radii: Sequence[float],
    n_centers: int = 200,
    band_limit: float = 10.0,
    gamma_tol: float = 0.1,
    seed: int = 0,
) -> AhlforsReport:
    """Sample nu(B(a, r)) / r^gamma at points a of the support.

    ``tree`` is a CantorTree or any object with 1-d ``points`` (sorted) and
    ``weights`` attributes. The set passes when the ratio band max/min stays
    below ``band_limit`` and the fitted exponent is within ``gamma_tol`` of
    ``gamma``.
    """
    if isinstance(tree, CantorTree):
        lefts, length = tree.leaf_lefts, tree.leaf_length
        weights = tree.weights(tree.depth)
        support = tree.leaf_midpoints()
    else:
        pts = np.asarray(tree.points, dtype=float).ravel()
        order = np.argsort(pts)
        lefts, length = pts[order], 0.0
        weights = np.asarray(tree.weights, dtype=float)[order]
        support = lefts
    radii = np.asarray(radii, dtype=float)
    if support.size == 0 or radii.size == 0:
        raise ValueError("empty sample")
    rng = np.random.default_rng(seed)
    centers = support if support.size <= n_centers else rng.choice(support, n_centers, replace=False)
    ratios = np.array([ball_masses(lefts, length, weights, centers, float(r)) / r**gamma for r in radii])
    mean_mass = ratios.mean(axis=1) * radii**gamma
    gamma_est = float(np.polyfit(np.log(radii), np.log(mean_mass), 1)[0]) if radii.size > 1 else float("nan")
    lo, hi = float(ratios.min()), float(ratios.max())
    passed = lo > 0 and hi / lo < band_limit and abs(gamma_est - gamma) <= gamma_tol
    return AhlforsReport(gamma, gamma_est, (lo, hi), band_limit, bool(passed), radii.tolist(), ratios.mean(axis=1).tolist())
