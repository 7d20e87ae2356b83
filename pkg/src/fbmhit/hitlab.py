"""Monte Carlo hitting probabilities and the experiment suites built on them.

Hit test
--------
A path of X = B + f restricted to a time set E hits the target F at tolerance
eps when some monitored value lies within eps of F.  For d = 1 point targets a
sign change of X - x between two consecutive monitored times inside E is also
a hit (the path is continuous).  When B is a Brownian motion, d = 1 and F is a
point, the probability that the path enters the band [x - eps, x + eps]
between two monitored values a, b (same side, gap dt) is the Brownian-bridge
crossing probability

    exp(-2 (|a - x| - eps) (|b - x| - eps) / dt),

and the estimator averages the conditional hit probability
1 - prod(1 - q) over paths.  This removes the discrete-monitoring bias; the
drift is taken linear between monitored times.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.spatial import cKDTree

from .gauss import Drift, ProcessSpec, freeze_drift, normals, sample_at_times, simulate
from .metric import MetricDescriptor, PointCloud
from .potential import (
    RadialKernel,
    capacity,
    eval_phi_Hl,
    hausdorff_upper,
)
from .sets import CantorTree, ScalingProfile, build_e_phi, build_nu_pair, graph_cloud, planar_cantor_cloud
from .svf import IncrementVariance, SlowVarySpec, compute_c_alpha

__all__ = [
    "Thresholds",
    "TimeSet",
    "Target",
    "HittingExperiment",
    "HitEstimate",
    "grid_floor",
    "estimate_hitting",
    "point_hitting_via_graph",
    "polarity_dichotomy",
    "sharpness_experiment",
    "kernel_expectation_check",
    "image_measure_estimate",
    "sandwich_check",
    "ladder_change",
    "ladder_ratios",
    "critical_potential_evidence",
]

PATH_CHUNK = 1024


@dataclass(frozen=True)
class Thresholds:
    """Experiment decision thresholds (configuration defaults, not theorem constants)."""

    stability: float = 0.10
    decay_ratio: float = 0.7
    separation: float = 5.0
    hausdorff_decay: float = 0.20
    capacity_stability: float = 0.15
    critical_capacity_stability: float = 0.10
    critical_hausdorff_decay: float = 0.25

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def grid_floor(n: int, H: float) -> float:
    """Smallest meaningful hit tolerance 3 dt^H sqrt(log(1/dt)) on a grid of step 1/n."""
    dt = 1.0 / n
    return 3.0 * dt**H * math.sqrt(math.log(1.0 / dt))


# ---------------------------------------------------------------------------
# time sets and targets
# ---------------------------------------------------------------------------

@dataclass
class TimeSet:
    """Interval [a, b] or the limit set of a Cantor tree (placed inside (0, 1])."""

    a: float = 0.25
    b: float = 1.0
    tree: CantorTree | None = None

    def __post_init__(self) -> None:
        if self.tree is not None:
            self.a = float(self.tree.lefts[0][0])
            self.b = self.a + self.tree.l0
        if not 0 < self.a < self.b <= 1:
            raise ValueError("time set must satisfy 0 < a < b <= 1")

    @property
    def is_interval(self) -> bool:
        return self.tree is None

    def to_dict(self) -> dict:
        if self.tree is None:
            return {"kind": "interval", "a": self.a, "b": self.b}
        return {"kind": "cantor", "origin": self.a, "depth": self.tree.depth, "l0": self.tree.l0,
                "profile": None if self.tree.profile is None else self.tree.profile.to_dict()}


@dataclass
class Target:
    """Point, Euclidean ball or finite cloud in R^d."""

    kind: str = "point"
    center: np.ndarray = field(default_factory=lambda: np.zeros(1))
    radius: float = 0.0
    cloud: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("point", "ball", "cloud"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if self.kind == "cloud":
            if self.cloud is None:
                raise ValueError("cloud target needs points")
            self.cloud = np.asarray(self.cloud, dtype=float)
            if self.cloud.ndim == 1:
                self.cloud = self.cloud[:, None]
            self._tree = cKDTree(self.cloud)
        if self.kind == "ball" and not self.radius > 0:
            raise ValueError("ball target needs a positive radius")

    @property
    def d(self) -> int:
        return self.cloud.shape[1] if self.kind == "cloud" else self.center.size

    @property
    def bound(self) -> float:
        if self.kind == "cloud":
            return float(np.abs(self.cloud).max())
        return float(np.abs(self.center).max() + self.radius)

    def distance(self, X: np.ndarray) -> np.ndarray:
        """Distance from points X (..., d) to the target."""
        if self.kind == "cloud":
            flat = X.reshape(-1, X.shape[-1])
            dist, _ = self._tree.query(flat)
            return dist.reshape(X.shape[:-1])
        r = np.linalg.norm(X - self.center, axis=-1)
        return np.maximum(r - self.radius, 0.0) if self.kind == "ball" else r

    def to_dict(self) -> dict:
        if self.kind == "cloud":
            return {"kind": "cloud", "n_points": int(self.cloud.shape[0])}
        d = {"kind": self.kind, "center": [float(c) for c in self.center]}
        if self.kind == "ball":
            d["radius"] = self.radius
        return d


@dataclass
class HittingExperiment:
    """A process, a drift, a time set, a target and a refinement ladder.

    ``rungs`` lists (n, eps) pairs for interval time sets and (level, eps)
    pairs for Cantor time sets; the last rung is the finest.
    """

    process: ProcessSpec
    E: TimeSet
    F: Target
    rungs: list[tuple[int, float]]
    n_paths: int = 10_000
    seed: int = 0
    drift: Drift | None = None
    bridge: bool = True
    allow_subfloor: bool = False
    threads: int = 1

    def __post_init__(self) -> None:
        if self.F.d != self.process.d:
            raise ValueError("target dimension does not match the process dimension")
        if not self.rungs:
            raise ValueError("at least one ladder rung is required")
        for _, eps in self.rungs:
            if not eps > 0:
                raise ValueError("hit tolerance eps must be positive")
        if self.drift is None:
            self.drift = Drift.zero(self.process.d)

    @property
    def exact_bridge(self) -> bool:
        p = self.process
        return self.bridge and p.kind == "fbm" and p.H == 0.5 and p.d == 1 and self.F.kind == "point"

    @property
    def point_line(self) -> bool:
        return self.process.d == 1 and self.F.kind == "point"


@dataclass
class HitEstimate:
    p_hat: float
    ci: tuple[float, float]
    eps: float
    n: int
    ladder: list[dict]
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"p_hat": self.p_hat, "ci": list(self.ci), "eps": self.eps, "n": self.n,
                "ladder": self.ladder, "flags": self.flags}

    def values(self) -> list[float]:
        return [r["p_hat"] for r in self.ladder]


def _wilson(k: float, n: int, z: float = 1.96) -> tuple[float, float]:
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, min(mid - half, p)), min(1.0, max(mid + half, p))


def _summarise(sum_p: float, sum_p2: float, n: int, indicator: bool) -> tuple[float, tuple[float, float], float]:
    p = sum_p / n
    if indicator:
        ci = _wilson(sum_p, n)
    else:
        var = max(sum_p2 / n - p * p, 0.0) * n / max(n - 1, 1)
        half = 1.96 * math.sqrt(var / n)
        ci = (max(0.0, p - half), min(1.0, p + half))
    se = math.sqrt(max(p * (1 - p), 0.0) / n) if indicator else (ci[1] - ci[0]) / (2 * 1.96)
    return p, ci, se


# ---------------------------------------------------------------------------
# per-segment hit probabilities
# ---------------------------------------------------------------------------

def _segment_logmiss(vals: np.ndarray, x: float, eps: float, dtau: np.ndarray, bridge: bool) -> np.ndarray:
    """log P(no hit on each segment | endpoint values), d = 1 point target.

    ``vals`` has shape (paths, m); the result has shape (paths, m - 1).
    """
    a = vals[:, :-1] - x
    b = vals[:, 1:] - x
    sure = (a * b <= 0) | (np.abs(a) <= eps) | (np.abs(b) <= eps)
    out = np.zeros(a.shape)
    if bridge:
        with np.errstate(over="ignore", under="ignore"):
            q = np.exp(-2.0 * (np.abs(a) - eps) * (np.abs(b) - eps) / dtau)
        out = np.log1p(-np.minimum(q, 1.0))
    out[sure] = -np.inf
    return out


def _point_miss(vals: np.ndarray, dist: np.ndarray, eps: float) -> np.ndarray:
    """log P(miss) per monitored point: -inf where within eps."""
    return np.where(dist <= eps, -np.inf, 0.0)


# ---------------------------------------------------------------------------
# estimate_hitting
# ---------------------------------------------------------------------------

def _rung_probability(log_miss: np.ndarray) -> np.ndarray:
    return -np.expm1(log_miss)


def _interval_chunk(exp: HittingExperiment, lo: int, hi: int, n_max: int) -> np.ndarray:
    """Per-path hit probabilities for every rung, shape (len(rungs), hi - lo)."""
    ens = simulate(exp.process, n_max, hi - lo, exp.seed, label="hit", path_offset=lo)
    t = ens.t
    f = exp.drift(t)
    X = ens.paths + f[None, :, :]
    out = np.empty((len(exp.rungs), hi - lo))
    for r, (n, eps) in enumerate(exp.rungs):
        step = n_max // n
        idx = np.arange(0, n_max + 1, step)
        ti = t[idx]
        keep = idx[(ti >= exp.E.a - 1e-12) & (ti <= exp.E.b + 1e-12)]
        Xi = X[:, keep, :]
        if exp.point_line:
            x = float(exp.F.center[0])
            v = Xi[:, :, 0]
            lm = _segment_logmiss(v, x, eps, np.diff(t[keep]), exp.exact_bridge).sum(axis=1)
            lm += np.where((np.abs(v - x) <= eps).any(axis=1), -np.inf, 0.0)
            out[r] = _rung_probability(lm)
        else:
            dist = exp.F.distance(Xi)
            out[r] = (dist.min(axis=1) <= eps).astype(float)
    return out


def _cantor_segments(tree: CantorTree) -> tuple[np.ndarray, np.ndarray]:
    """Sorted monitored times (leaf endpoints) and, per segment, the deepest level containing it."""
    K = tree.depth
    lefts = tree.leaf_lefts
    times = np.empty(2 * lefts.size)
    times[0::2] = lefts
    times[1::2] = lefts + tree.leaf_length
    level = np.empty(times.size - 1, dtype=int)
    level[0::2] = K  # inside a leaf
    j = np.arange(lefts.size - 1)
    # gap between leaf j and j + 1 lies in the level of their lowest common ancestor
    split = np.array([int(v).bit_length() for v in (j ^ (j + 1))])
    level[1::2] = K - split
    return times, level


def _cantor_chunk(exp: HittingExperiment, lo: int, hi: int, times: np.ndarray, seg_level: np.ndarray,
                  fvals: np.ndarray) -> np.ndarray:
    tree = exp.E.tree
    p = exp.process
    if p.kind == "fbm" and p.H == 0.5:
        # independent Gaussian increments, one stream per (path, component)
        sd = np.sqrt(np.diff(np.concatenate([[0.0], times])))
        z = normals(exp.seed, "hit/cantor", range(lo, hi), p.d, times.size)
        B = np.cumsum(z * sd, axis=-1).transpose(0, 2, 1)
    else:
        B = sample_at_times(p, times, hi - lo, exp.seed, label="hit/cantor", path_offset=lo)
    X = B + fvals[None, :, :]
    out = np.empty((len(exp.rungs), hi - lo))
    if exp.point_line:
        x = float(exp.F.center[0])
        v = X[:, :, 0]
        seg_lm_by_eps = {}
        for r, (k, eps) in enumerate(exp.rungs):
            if eps not in seg_lm_by_eps:
                seg = _segment_logmiss(v, x, eps, np.diff(times), exp.exact_bridge)
                pt = np.where(np.abs(v - x) <= eps, -np.inf, 0.0)
                seg_lm_by_eps[eps] = (seg, pt)
            seg, pt = seg_lm_by_eps[eps]
            lm = seg[:, seg_level >= k].sum(axis=1)
            # every monitored time belongs to every level-k interval set
            lm += pt.sum(axis=1)
            out[r] = _rung_probability(lm)
    else:
        dist = exp.F.distance(X)
        for r, (k, eps) in enumerate(exp.rungs):
            out[r] = (dist.min(axis=1) <= eps).astype(float)
    return out


def estimate_hitting(exp: HittingExperiment) -> HitEstimate:
    """Monte Carlo estimate of P{(B + f)(E) meets F} on a refinement ladder."""
    flags: dict = {"exact_bridge": exp.exact_bridge}
    if exp.E.is_interval:
        ns = [int(n) for n, _ in exp.rungs]
        n_max = max(ns)
        if any(n_max % n for n in ns):
            raise ValueError("ladder grid sizes must divide the finest grid size")
        for n, eps in exp.rungs:
            t = np.arange(n + 1) / n
            if not np.any((t >= exp.E.a) & (t <= exp.E.b)):
                raise ValueError("time set is empty after masking to the grid")
            floor = grid_floor(n, exp.process.H if exp.process.kind != "delta_theta" else exp.process.alpha)
            if eps < floor and not exp.exact_bridge:
                if exp.allow_subfloor and exp.point_line:
                    flags.setdefault("subfloor_rungs", []).append([n, eps])
                else:
                    raise ValueError(
                        f"eps={eps:.4g} is below the grid floor 3 (1/n)^H sqrt(log n) = {floor:.4g} at n={n}; "
                        "grid monitoring cannot resolve the path below this scale"
                    )
        worker: Callable[[int, int], np.ndarray] = lambda lo, hi: _interval_chunk(exp, lo, hi, n_max)  # noqa: E731
    else:
        tree = exp.E.tree
        if exp.E.a <= 0:
            raise ValueError("Cantor time set must lie in (0, 1]")
        if any(not 0 <= int(k) <= tree.depth for k, _ in exp.rungs):
            raise ValueError("Cantor ladder levels must lie in [0, depth]")
        times, seg_level = _cantor_segments(tree)
        fvals = exp.drift(times)
        worker = lambda lo, hi: _cantor_chunk(exp, lo, hi, times, seg_level, fvals)  # noqa: E731
    bounds = [(lo, min(lo + PATH_CHUNK, exp.n_paths)) for lo in range(0, exp.n_paths, PATH_CHUNK)]
    if exp.threads > 1:
        with ThreadPoolExecutor(exp.threads) as ex:
            parts = list(ex.map(lambda b: worker(*b), bounds))
    else:
        parts = [worker(*b) for b in bounds]
    sums = np.zeros(len(exp.rungs))
    sums2 = np.zeros(len(exp.rungs))
    for part in parts:  # fixed chunk order keeps the reduction reproducible
        sums += part.sum(axis=1)
        sums2 += (part**2).sum(axis=1)
    indicator = not exp.point_line
    ladder = []
    for r, (n, eps) in enumerate(exp.rungs):
        p, ci, se = _summarise(float(sums[r]), float(sums2[r]), exp.n_paths, indicator)
        ladder.append({"n" if exp.E.is_interval else "level": int(n), "eps": float(eps),
                       "p_hat": p, "ci": [ci[0], ci[1]], "se": se})
    last = ladder[-1]
    return HitEstimate(last["p_hat"], tuple(last["ci"]), float(exp.rungs[-1][1]), int(exp.rungs[-1][0]), ladder, flags)


def ladder_change(values: Sequence[float]) -> float:
    """Relative change between the last two rungs."""
    a, b = values[-2], values[-1]
    return abs(b - a) / max(abs(a), 1e-300)


def ladder_ratios(values: Sequence[float]) -> list[float]:
    return [float(values[i + 1] / values[i]) if values[i] > 0 else float("nan") for i in range(len(values) - 1)]


# ---------------------------------------------------------------------------
# graph capacity and point hitting
# ---------------------------------------------------------------------------

def point_hitting_via_graph(exp: HittingExperiment, n_graph: int | None = None, scales: Sequence[float] | None = None,
                            tol: float = 1e-5) -> dict:
    """Hitting estimate together with capacity and Hausdorff evidence for Gr_E(f)."""
    if exp.F.kind != "point":
        raise ValueError("graph criterion is for point targets")
    est = estimate_hitting(exp)
    H = exp.process.H
    d = exp.process.d
    if exp.E.is_interval:
        n = n_graph or max(int(n) for n, _ in exp.rungs)
        t = np.arange(n + 1) / n
        t = t[(t >= exp.E.a - 1e-12) & (t <= exp.E.b + 1e-12)]
    else:
        t = exp.E.tree.leaf_midpoints()
    f = exp.drift(t)
    cloud = graph_cloud(t, f - exp.F.center[None, :] * 0.0, H)
    cap = capacity(cloud, RadialKernel.riesz(d, r0=cloud.resolution), tol)
    if scales is None:
        scales = [cloud.resolution * 2**j for j in (3, 2, 1, 0)]
    haus = [hausdorff_upper(cloud, d, s) for s in scales]
    return {
        "hitting": est.to_dict(),
        "graph_capacity": cap.to_dict(),
        "graph_hausdorff": {"order": d, "scales": list(map(float, scales)), "values": haus,
                            "ratios": ladder_ratios(haus)},
        "graph_points": len(cloud),
        "graph_resolution": cloud.resolution,
    }


# ---------------------------------------------------------------------------
# critical dimension dichotomy
# ---------------------------------------------------------------------------

def polarity_dichotomy(
    H: float,
    d: int,
    beta: float = 2.0,
    K: int = 10,
    n_paths: int = 20_000,
    drift: Drift | None = None,
    x: Sequence[float] | None = None,
    eps: float = 1e-12,
    l0: float = 0.04,
    origin: float = 0.5,
    levels: Sequence[int] | None = None,
    seed: int = 0,
    thresholds: Thresholds = Thresholds(),
    potential_evidence: bool = True,
    threads: int = 1,
) -> dict:
    """Hitting ladders for the two critical sets E1 (H^alpha-null) and E2 (positive capacity), alpha = H d."""
    alpha = H * d
    if not alpha < 1:
        raise ValueError("the dichotomy needs H d < 1")
    E1, E2 = build_nu_pair(alpha, beta, l0, K, origin)
    x = np.zeros(d) if x is None else np.asarray(x, dtype=float)
    levels = list(levels) if levels is not None else list(range(max(0, K - 4), K + 1, 2))
    proc = ProcessSpec.fbm(H, d)
    est = {}
    for name, tree in (("E1", E1), ("E2", E2)):
        exp = HittingExperiment(proc, TimeSet(tree=tree), Target("point", x), [(k, eps) for k in levels],
                                n_paths, seed, drift, threads=threads)
        est[name] = estimate_hitting(exp)
    p1, p2 = est["E1"].p_hat, est["E2"].p_hat
    report: dict = {
        "alpha": alpha,
        "beta": beta,
        "K": K,
        "l0": l0,
        "origin": origin,
        "levels": levels,
        "E1": est["E1"].to_dict(),
        "E2": est["E2"].to_dict(),
        "separation": p2 / p1 if p1 > 0 else float("inf"),
        "separated": bool(p2 >= thresholds.separation * p1 and p2 > 0),
    }
    if potential_evidence:
        report["potential"] = critical_potential_evidence(E1, E2, alpha, thresholds)
    shallow = K < 6
    report["diagnostics"] = {
        "insufficient_depth": bool(shallow or not report["separated"]),
        "reason": "depth below 6 levels" if shallow else ("ladders not separated" if not report["separated"] else ""),
    }
    return report


def critical_potential_evidence(E1: CantorTree, E2: CantorTree, alpha: float, thresholds: Thresholds = Thresholds(),
                                tol: float = 1e-6) -> dict:
    """Capacity of E2 and level-K Hausdorff sums of E1 at depths K - 2 and K."""
    K = E1.depth
    out: dict = {"capacity_E2": {}, "hausdorff_E1": {}}
    for k in (K - 2, K):
        c2 = E2.truncated(k).leaf_cloud()
        out["capacity_E2"][str(k)] = capacity(c2, RadialKernel.riesz(alpha, r0=c2.resolution), tol).capacity
        c1 = E1.truncated(k).leaf_cloud()
        out["hausdorff_E1"][str(k)] = hausdorff_upper(c1, alpha, c1.resolution)
    cap = out["capacity_E2"]
    hs = out["hausdorff_E1"]
    out["capacity_change"] = abs(cap[str(K)] - cap[str(K - 2)]) / cap[str(K - 2)]
    out["hausdorff_shrink"] = 1.0 - hs[str(K)] / hs[str(K - 2)]
    out["capacity_stable"] = bool(out["capacity_change"] <= thresholds.critical_capacity_stability)
    out["hausdorff_decays"] = bool(out["hausdorff_shrink"] >= thresholds.critical_hausdorff_decay)
    return out


# ---------------------------------------------------------------------------
# sharpness of the drift regularity
# ---------------------------------------------------------------------------

def _sharpness_target(d: int, gamma: float, x: np.ndarray, depth: int = 5) -> Target:
    if gamma == 0:
        return Target("point", x)
    if d == 2:
        lam = 2.0 ** (-2.0 / gamma)
        if not 0 < lam < 0.5:
            raise ValueError("planar Cantor target needs 0 < gamma < 2")
        cl = planar_cantor_cloud(lam, depth, l0=0.5, center=tuple(x))
        return Target("cloud", x, cloud=cl.points)
    raise ValueError("Ahlfors targets are provided for gamma = 0 or d = 2")


def sharpness_experiment(
    H: float = 0.5,
    d: int = 1,
    gamma: float = 0.0,
    slow: SlowVarySpec = SlowVarySpec.log_power(1.0),
    K: int = 10,
    n_paths: int = 20_000,
    drift_seeds: Sequence[int] = (0, 1, 2),
    l0: float | None = None,
    origin: float = 0.5,
    eps: float = 1e-12,
    x: Sequence[float] | None = None,
    seed: int = 0,
    thresholds: Thresholds = Thresholds(),
    control: bool = True,
    threads: int = 1,
    tol: float = 1e-6,
) -> dict:
    """Hausdorff, capacity and hitting ladders for the set built from phi = (r^H ell_theta)^(d - gamma)."""
    if not 0 <= gamma < d:
        raise ValueError("gamma must lie in [0, d)")
    x = np.zeros(d) if x is None else np.asarray(x, dtype=float)
    main = _sharpness_run(H, d, gamma, slow, K, n_paths, drift_seeds, l0, origin, eps, x, seed, thresholds, threads, tol)
    report = {"H": H, "d": d, "gamma": gamma, "slow": slow.to_dict(), "K": K, "main": main}
    if control:
        report["control"] = _sharpness_run(H, d, gamma, SlowVarySpec.constant(compute_c_alpha(H)), K, n_paths,
                                           drift_seeds, l0, origin, eps, x, seed, thresholds, threads, tol)
        c = report["control"]["checks"]
        report["control_separated"] = bool(c["hausdorff_decays"] and c["capacity_stable"])
    return report


def _sharpness_run(H, d, gamma, slow, K, n_paths, drift_seeds, l0, origin, eps, x, seed, thresholds, threads, tol):
    m = d - gamma
    profile = ScalingProfile.regvar(H, slow, m)
    metric = MetricDescriptor.regvar_time(H, slow)
    if l0 is None:
        l0 = min(0.5 * metric.window, 0.5 * profile.cutoff, 0.05)
    tree = build_e_phi(profile, l0, K, origin)
    levels = list(range(max(0, K - 4), K + 1, 2))
    haus, caps = [], []
    for k in levels:
        sub = tree.truncated(k)
        eu = sub.leaf_cloud()
        haus.append(hausdorff_upper(eu, H * m, eu.resolution))
        cl = sub.leaf_cloud(metric)
        caps.append(capacity(cl, RadialKernel.riesz(m, r0=cl.resolution), tol).capacity)
    target = _sharpness_target(d, gamma, x)
    dspec = ProcessSpec.delta_theta(H, slow, d)
    times, _ = _cantor_segments(tree)
    hits = []
    for s in drift_seeds:
        f = freeze_drift(dspec, 0, int(s), times=times)
        exp = HittingExperiment(ProcessSpec.fbm(H, d), TimeSet(tree=tree), target, [(k, eps) for k in levels],
                                n_paths, seed, f, threads=threads)
        est = estimate_hitting(exp)
        vals = est.values()
        hits.append({
            "drift_seed": int(s),
            "ladder": est.ladder,
            "positive": bool(vals[-1] > 0),
            "stable": bool(vals[-1] > 0 and ladder_change(vals) <= thresholds.stability),
        })
    h_shrink = 1.0 - haus[-1] / haus[-2]
    c_change = abs(caps[-1] - caps[-2]) / caps[-2]
    frac = float(np.mean([h["stable"] for h in hits]))
    return {
        "profile": profile.to_dict(),
        "l0": l0,
        "levels": levels,
        "lengths": [float(v) for v in tree.lengths],
        "hausdorff": {"order": H * m, "values": haus, "shrink_last": h_shrink},
        "capacity": {"order": m, "values": caps, "change_last": c_change},
        "hitting": hits,
        "fraction_drifts_stable": frac,
        "checks": {
            "hausdorff_decays": bool(h_shrink >= thresholds.hausdorff_decay),
            "capacity_stable": bool(c_change <= thresholds.capacity_stability),
            "hitting_positive_stable": bool(frac > 0),
        },
    }


# ---------------------------------------------------------------------------
# kernel expectation
# ---------------------------------------------------------------------------

def _chi_expectation(d: int, ell: float) -> float:
    """E[max(1, ell ||N||)^-d] for N standard normal in R^d."""
    chi = stats.chi(d)
    cut = 1.0 / ell
    a = chi.cdf(cut)
    b, _ = integrate.quad(lambda r: (ell * r) ** (-d) * chi.pdf(r), cut, np.inf, limit=200, epsabs=0, epsrel=1e-11)
    return float(a + b)


def kernel_expectation_check(
    alpha: float,
    spec: SlowVarySpec,
    d: int,
    t_ladder: Sequence[float],
    n_paths: int = 200_000,
    seed: int = 0,
    band: float = 3.0,
) -> dict:
    """Monte Carlo of E[max(t^H, ||B^delta(t)||)^-d] against its chi_d reduction and Phi_{H,ell}(t).

    B^delta(t) ~ N(0, delta^2(t) I_d), so the expectation equals
    t^(-H d) E[max(1, (delta(t)/t^H) ||N||)^-d], evaluated by quadrature.
    """
    iv = IncrementVariance(alpha, spec)
    rows = []
    for i, t in enumerate(t_ladder):
        t = float(t)
        sd = math.sqrt(float(iv(t)))
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(i,))))
        N = rng.standard_normal((n_paths, d))
        vals = np.maximum(t**alpha, sd * np.linalg.norm(N, axis=1)) ** (-d)
        mc = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n_paths))
        exact = t ** (-alpha * d) * _chi_expectation(d, sd / t**alpha)
        phi = float(eval_phi_Hl(alpha, d, spec, t))
        rows.append({"t": t, "mc": mc, "se": se, "quadrature": exact, "z": (mc - exact) / se if se > 0 else 0.0,
                     "phi": phi, "ratio": mc / phi})
    ratios = [r["ratio"] for r in rows]
    c3 = max(ratios)
    return {
        "alpha": alpha,
        "d": d,
        "slow": spec.to_dict(),
        "rows": rows,
        "c3": c3,
        "band": max(ratios) / min(ratios),
        "agree_3sigma": bool(all(abs(r["z"]) <= 3 for r in rows)),
        "bounded": bool(max(ratios) / min(ratios) < band),
    }


# ---------------------------------------------------------------------------
# image measure
# ---------------------------------------------------------------------------

def _voxel_volume(X: np.ndarray, w: float, fill: bool, budget: int) -> float:
    """Volume of the union of voxels of width w met by the sampled image X (m, d)."""
    d = X.shape[1]
    if d == 1 and fill:
        idx = np.floor(X[:, 0] / w).astype(np.int64)
        lo = np.minimum(idx[:-1], idx[1:])
        hi = np.maximum(idx[:-1], idx[1:])
        # union of integer ranges [lo, hi]
        order = np.argsort(lo, kind="stable")
        lo, hi = lo[order], hi[order]
        total, cur_lo, cur_hi = 0, lo[0], hi[0]
        for a, b in zip(lo[1:], hi[1:]):
            if a > cur_hi + 1:
                total += cur_hi - cur_lo + 1
                cur_lo, cur_hi = a, b
            else:
                cur_hi = max(cur_hi, b)
        total += cur_hi - cur_lo + 1
        if total > budget:
            raise ValueError("voxel budget exceeded")
        return float(total) * w
    keys = np.floor(X / w).astype(np.int64)
    count = np.unique(keys, axis=0).shape[0]
    if count > budget:
        raise ValueError("voxel budget exceeded")
    return float(count) * w**d


def image_measure_estimate(
    process: ProcessSpec,
    E: TimeSet,
    n: int,
    widths: Sequence[float],
    n_paths: int = 200,
    seed: int = 0,
    drift: Drift | None = None,
    budget: int = 10_000_000,
    thresholds: Thresholds = Thresholds(),
) -> dict:
    """Voxel-count volume of the image (B + f)(E) over a decreasing width ladder."""
    d = process.d
    if d > 2:
        raise ValueError("voxel counting is supported for d <= 2")
    if not E.is_interval:
        raise ValueError("image measure uses interval time sets")
    drift = drift or Drift.zero(d)
    ens = simulate(process, n, n_paths, seed, label="image")
    mask = (ens.t >= E.a - 1e-12) & (ens.t <= E.b + 1e-12)
    f = drift(ens.t[mask])
    widths = sorted((float(w) for w in widths), reverse=True)
    vols = np.zeros((n_paths, len(widths)))
    for p in range(n_paths):
        X = ens.paths[p, mask, :] + f
        for j, w in enumerate(widths):
            vols[p, j] = _voxel_volume(X, w, fill=True, budget=budget)
    mean = vols.mean(axis=0)
    ratios = ladder_ratios(list(mean))
    positive_stable = np.all(vols[:, -1] > 0) and ladder_change(list(mean)) <= thresholds.stability
    per_path_stable = (vols[:, -1] > 0) & (np.abs(vols[:, -1] - vols[:, -2]) <= thresholds.stability * vols[:, -2])
    return {
        "widths": widths,
        "mean_volume": mean.tolist(),
        "quantiles": {str(q): np.quantile(vols, q / 100, axis=0).tolist() for q in (10, 50, 90)},
        "ratios": ratios,
        "decays": bool(all(r < thresholds.decay_ratio for r in ratios[-2:])),
        "positive_stable": bool(positive_stable),
        "fraction_paths_stable": float(per_path_stable.mean()),
        "n": n,
        "n_paths": n_paths,
    }


# ---------------------------------------------------------------------------
# two-sided bound diagnostics
# ---------------------------------------------------------------------------

def sandwich_check(
    fixtures: Sequence[dict],
    H: float,
    d: int,
    n_paths: int = 4000,
    seed: int = 0,
    cap_floor: float = 1e-3,
    thresholds: Thresholds = Thresholds(),
    tol: float = 1e-5,
) -> list[dict]:
    """Sign and decay diagnostics of capacity, Hausdorff and hitting ladders on (E, F) fixtures.

    Each fixture is ``{"E": TimeSet, "F_cloud": PointCloud, "F": Target, "rungs": [...], "drift": Drift}``;
    the capacity is computed on E x F under max(|t - s|^H, ||x - y||) with
    kernel phi_d, and the Hausdorff ladder at order d over the product cloud.
    """
    out = []
    tm = MetricDescriptor.power_time(H)
    for fx in fixtures:
        E: TimeSet = fx["E"]
        te = np.linspace(E.a, E.b, fx.get("n_time", 17))
        Fc: PointCloud = fx["F_cloud"]
        pts = np.hstack([np.repeat(te[:, None], len(Fc), axis=0), np.tile(Fc.points, (te.size, 1))])
        res = max(((E.b - E.a) / (te.size - 1)) ** H, Fc.resolution)
        prod = PointCloud(pts, res, MetricDescriptor.product(tm), validate=False)
        cap = capacity(prod, RadialKernel.riesz(d, r0=res), tol).capacity
        scales = [res * 2**j for j in (2, 1, 0)]
        haus = [hausdorff_upper(prod, d, s) for s in scales]
        exp = HittingExperiment(ProcessSpec.fbm(H, d), E, fx["F"], fx["rungs"], n_paths, seed, fx.get("drift"))
        est = estimate_hitting(exp)
        vals = est.values()
        row = {
            "name": fx.get("name", ""),
            "capacity": cap,
            "hausdorff": haus,
            "p_ladder": vals,
            "capacity_positive": bool(cap > cap_floor),
            "hausdorff_decays": bool(haus[-1] < thresholds.decay_ratio * haus[0]),
            "p_positive": bool(vals[-1] > 0),
            "p_decays": bool(all(r < 1 for r in ladder_ratios(vals) if not math.isnan(r))),
        }
        row["consistent"] = bool((not row["capacity_positive"] or row["p_positive"])
                                 and (not row["hausdorff_decays"] or row["p_decays"] or vals[-1] < 0.05))
        out.append(row)
    return out
