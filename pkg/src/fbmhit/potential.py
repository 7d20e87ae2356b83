"""Radial kernels, energies, discretized capacities and Hausdorff-measure upper estimates.

The Bessel-Riesz kernel of order alpha is

    phi_alpha(r) = r^-alpha          alpha > 0
                 = log(e / (r ^ 1))  alpha = 0
                 = 1                 alpha < 0

and every kernel is truncated at r0: distances below r0 are replaced by r0.
Capacities are computed as 1 / min energy over probability vectors on a
finite cloud, with the minimum found by Frank-Wolfe with away steps.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .metric import MetricDescriptor, PointCloud, covering_number, pairwise
from .svf import SlowVarySpec, compute_c_alpha, ell_theta

__all__ = [
    "RadialKernel",
    "WeightedMeasure",
    "CapacityResult",
    "eval_kernel",
    "eval_phi_Hl",
    "energy_of_measure",
    "capacity",
    "hausdorff_upper",
    "hausdorff_ladder",
    "frostman_integral",
    "verify_product_capacity",
    "product_measure",
]

CHUNK = 512
DENSE_LIMIT = 4096


def eval_phi_Hl(H: float, d: int, spec: SlowVarySpec, r):
    """Phi(r) = r^(-H d) ell(r)^(-d) (1 + log(1 v ell(r))), ell = ell_theta(spec, H, .)."""
    ra = np.asarray(r, dtype=float)
    if np.any(~((ra > 0) & (ra < 1))):
        raise ValueError("Phi_{H,ell} is defined for r in (0, 1)")
    return _phi_hl(H, d, spec, ra)


def _phi_hl(H: float, d: int, spec: SlowVarySpec, r: np.ndarray):
    ell = np.asarray(ell_theta(spec, H, r, compute_c_alpha(H)))
    out = r ** (-H * d) * ell ** (-d) * (1.0 + np.log(np.maximum(1.0, ell)))
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class RadialKernel:
    """Nonincreasing positive kernel of the distance, truncated at r0.

    ``bessel_riesz`` uses ``alpha``; ``phi_hl`` uses ``H``, ``d`` and ``slow``
    and is evaluated at min(distance, 1) because ell_theta lives on (0, 1].
    """

    kind: str = "bessel_riesz"
    alpha: float = 1.0
    r0: float = 0.0
    H: float = 0.5
    d: int = 1
    slow: SlowVarySpec = field(default_factory=SlowVarySpec)

    def __post_init__(self) -> None:
        if self.kind not in ("bessel_riesz", "phi_hl"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.r0 < 0:
            raise ValueError("truncation r0 must be nonnegative")
        if self.kind == "phi_hl" and not (0 < self.H < 1 and self.d >= 1):
            raise ValueError("phi_hl needs H in (0, 1) and d >= 1")

    @classmethod
    def riesz(cls, alpha: float, r0: float = 0.0) -> "RadialKernel":
        return cls("bessel_riesz", alpha=alpha, r0=r0)

    @classmethod
    def phi(cls, H: float, d: int, slow: SlowVarySpec, r0: float = 0.0) -> "RadialKernel":
        return cls("phi_hl", H=H, d=d, slow=slow, r0=r0)

    def with_r0(self, r0: float) -> "RadialKernel":
        return RadialKernel(self.kind, self.alpha, r0, self.H, self.d, self.slow)

    def __call__(self, rho):
        x = np.maximum(np.asarray(rho, dtype=float), self.r0)
        if self.kind == "phi_hl":
            out = _phi_hl(self.H, self.d, self.slow, np.clip(x, 1e-300, 1.0))
        elif self.alpha > 0:
            with np.errstate(divide="ignore"):
                out = x ** (-self.alpha)
        elif self.alpha == 0:
            with np.errstate(divide="ignore"):
                out = np.log(math.e / np.minimum(x, 1.0))
        else:
            out = np.ones_like(x)
        return out if np.ndim(out) else float(out)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "r0": self.r0}
        if self.kind == "bessel_riesz":
            d["alpha"] = self.alpha
        else:
            d.update(H=self.H, d=self.d, slow=self.slow.to_dict())
        return d


def eval_kernel(k: RadialKernel, rho) -> float:
    return k(rho)


@dataclass
class WeightedMeasure:
    """Probability vector on a point cloud."""

    cloud: PointCloud
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.weights.size != len(self.cloud):
            raise ValueError("one weight per cloud point is required")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum():.15g}, not 1")

    @classmethod
    def uniform(cls, cloud: PointCloud) -> "WeightedMeasure":
        return cls(cloud, np.full(len(cloud), 1.0 / len(cloud)))

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points


def product_measure(mu: WeightedMeasure, m: WeightedMeasure, time_metric: MetricDescriptor | None = None) -> WeightedMeasure:
    """mu (x) m on the product cloud under the max metric."""
    tm = time_metric or mu.cloud.metric
    pts = np.hstack([np.repeat(mu.points, len(m.cloud), axis=0), np.tile(m.points, (len(mu.cloud), 1))])
    cloud = PointCloud(pts, max(mu.cloud.resolution, m.cloud.resolution), MetricDescriptor.product(tm), validate=False)
    w = np.outer(mu.weights, m.weights).ravel()
    return WeightedMeasure(cloud, w / w.sum())


# ---------------------------------------------------------------------------
# kernel matrix access
# ---------------------------------------------------------------------------

class _KernelOperator:
    """Dense kernel matrix for small clouds, row recomputation above DENSE_LIMIT."""

    def __init__(self, cloud: PointCloud, k: RadialKernel, threads: int = 1):
        self.cloud, self.k, self.threads = cloud, k, max(1, int(threads))
        self.n = len(cloud)
        self.dense = None
        if self.n <= DENSE_LIMIT:
            self.dense = np.vstack(self._map(lambda sl: k(pairwise(cloud.metric, cloud.points[sl], cloud.points))))

    def _slices(self):
        return [slice(i, min(i + CHUNK, self.n)) for i in range(0, self.n, CHUNK)]

    def _map(self, fn):
        sls = self._slices()
        if self.threads == 1:
            return [fn(sl) for sl in sls]
        with ThreadPoolExecutor(self.threads) as ex:
            return list(ex.map(fn, sls))

    def column(self, j: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[:, j]
        return self.k(pairwise(self.cloud.metric, self.cloud.points, self.cloud.points[j : j + 1]))[:, 0]

    def matvec(self, w: np.ndarray) -> np.ndarray:
        if self.dense is not None:
            # fixed chunk order keeps the sum bitwise reproducible
            return np.concatenate(self._map(lambda sl: self.dense[sl] @ w))
        return np.concatenate(
            self._map(lambda sl: self.k(pairwise(self.cloud.metric, self.cloud.points[sl], self.cloud.points)) @ w)
        )


def _check_r0(cloud: PointCloud, k: RadialKernel) -> None:
    if k.r0 < cloud.resolution * (1 - 1e-12):
        raise ValueError(f"kernel truncation r0={k.r0:.4g} is below the cloud resolution {cloud.resolution:.4g}")


def energy_of_measure(mu: WeightedMeasure, k: RadialKernel, threads: int = 1) -> float:
    """sum_ij w_i w_j k(rho(p_i, p_j)), diagonal terms evaluated at r0."""
    _check_r0(mu.cloud, k)
    op = _KernelOperator(mu.cloud, k, threads)
    return float(mu.weights @ op.matvec(mu.weights))


# ---------------------------------------------------------------------------
# capacity by Frank-Wolfe with away steps
# ---------------------------------------------------------------------------

@dataclass
class CapacityResult:
    capacity: float
    energy: float
    weights: np.ndarray
    iterations: int
    duality_gap: float
    converged: bool
    energy_trace: list[float] = field(default_factory=list)

    def to_dict(self, with_weights: bool = False) -> dict:
        d = {
            "capacity": self.capacity,
            "energy": self.energy,
            "iterations": self.iterations,
            "duality_gap": self.duality_gap,
            "converged": self.converged,
        }
        if with_weights:
            d["weights"] = [float(w) for w in self.weights]
        return d


def capacity(
    cloud: PointCloud,
    k: RadialKernel,
    tol: float = 1e-6,
    max_iter: int = 200_000,
    threads: int = 1,
    w0: np.ndarray | None = None,
) -> CapacityResult:
    """Minimise w^T K w over the probability simplex and return 1 / energy.

    Frank-Wolfe with away steps and exact line search, started from the
    uniform vector. Stops when the Frank-Wolfe gap is at most
    ``tol * energy``; the result is flagged non-converged otherwise.
    """
    _check_r0(cloud, k)
    op = _KernelOperator(cloud, k, threads)
    n = op.n
    w = np.full(n, 1.0 / n) if w0 is None else np.asarray(w0, dtype=float).copy()
    Kw = op.matvec(w)
    energy = float(w @ Kw)
    trace = [energy]
    gap = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        s = int(np.argmin(Kw))
        gap = 2.0 * (energy - Kw[s])
        if gap <= tol * energy:
            break
        support = np.flatnonzero(w > 0)
        v = int(support[np.argmax(Kw[support])])
        away_gap = 2.0 * (Kw[v] - energy)
        if gap >= away_gap:
            # toward vertex s: d = e_s - w
            Ks = op.column(s)
            gd = 2.0 * (Kw[s] - energy)
            dKd = Ks[s] - 2.0 * Kw[s] + energy
            gmax = 1.0
            step = gmax if dKd <= 0 else min(gmax, -gd / (2.0 * dKd))
            w *= 1.0 - step
            w[s] += step
            Kw = (1.0 - step) * Kw + step * Ks
        else:
            # away from vertex v: d = w - e_v
            Kv = op.column(v)
            gd = 2.0 * (energy - Kw[v])
            dKd = energy - 2.0 * Kw[v] + Kv[v]
            gmax = w[v] / (1.0 - w[v]) if w[v] < 1.0 else 0.0
            step = gmax if dKd <= 0 else min(gmax, -gd / (2.0 * dKd))
            w *= 1.0 + step
            w[v] -= step
            if step == gmax:
                w[v] = 0.0
            Kw = (1.0 + step) * Kw - step * Kv
        w = np.maximum(w, 0.0)
        new_energy = float(w @ Kw)
        if new_energy > energy:
            # rounding drift: refresh the cached product
            Kw = op.matvec(w)
            new_energy = float(w @ Kw)
        energy = min(energy, new_energy)
        trace.append(energy)
        if it % 1000 == 0:
            w /= w.sum()
            Kw = op.matvec(w)
            energy = float(w @ Kw)
    w /= w.sum()
    energy = float(w @ op.matvec(w))
    Kw = op.matvec(w)
    gap = max(0.0, 2.0 * (energy - float(Kw.min())))
    return CapacityResult(1.0 / energy, energy, w, it, gap, gap <= tol * energy * (1 + 1e-9), trace)


# ---------------------------------------------------------------------------
# Hausdorff-measure upper estimates
# ---------------------------------------------------------------------------

def hausdorff_upper(cloud: PointCloud, beta: float, delta: float) -> float:
    """Sum of (2 r)^beta over a greedy cover with radii in {delta, delta/2, delta/4}.

    Radii below the cloud resolution are dropped. Each step picks the ball
    with the best ratio of newly covered points to cost (2 r)^beta, which is
    the classical greedy for weighted set cover. The value is an upper
    estimate of the delta-approximate Hausdorff measure of the cloud.
    """
    if delta < cloud.resolution * (1 - 1e-12):
        raise ValueError(f"scale {delta:.4g} is below the cloud resolution {cloud.resolution:.4g}")
    radii = [r for r in (delta, delta / 2, delta / 4) if r >= cloud.resolution * (1 - 1e-12)]
    n = len(cloud)
    if n == 1:
        return (2 * radii[-1]) ** beta
    if n > DENSE_LIMIT:
        raise ValueError(f"hausdorff_upper supports clouds of at most {DENSE_LIMIT} points")
    D = cloud.distances()
    masks = [D <= r * (1 + 1e-12) for r in radii]
    del D
    costs = np.array([(2 * r) ** beta for r in radii])
    gains = np.array([m.sum(axis=1) for m in masks], dtype=np.int64)
    uncovered = np.ones(n, dtype=bool)
    total = 0.0
    while uncovered.any():
        eff = gains / costs[:, None]
        j, c = np.unravel_index(int(np.argmax(eff)), eff.shape)
        new = masks[j][c] & uncovered
        for i, m in enumerate(masks):
            gains[i] -= m[:, new].sum(axis=1)
        uncovered &= ~new
        total += costs[j]
    return float(total)


def hausdorff_ladder(cloud: PointCloud, beta: float, scales: Sequence[float]) -> dict:
    """hausdorff_upper over a decreasing scale schedule, with the ratio trend."""
    sc = sorted((float(s) for s in scales), reverse=True)
    vals = [hausdorff_upper(cloud, beta, s) for s in sc]
    ratios = [vals[i + 1] / vals[i] for i in range(len(vals) - 1)]
    return {"beta": beta, "scales": sc, "values": vals, "ratios": ratios}


# ---------------------------------------------------------------------------
# Frostman integral and product capacity
# ---------------------------------------------------------------------------

def frostman_integral(mu: WeightedMeasure, theta: float, r: float, threads: int = 1) -> float:
    """sup_v sum_u w_u / max(rho(u, v), r)^theta over cloud points v."""
    if r < mu.cloud.resolution * (1 - 1e-12):
        raise ValueError("scale below the cloud resolution")
    op = _KernelOperator(mu.cloud, RadialKernel.riesz(theta, r0=r), threads) if len(mu.cloud) <= DENSE_LIMIT else None
    if op is not None:
        return float(op.matvec(mu.weights).max())
    best = 0.0
    for sl, D in mu.cloud.iter_rows():
        best = max(best, float((np.maximum(D, r) ** (-theta) @ mu.weights).max()))
    return best


def verify_product_capacity(
    mu1: WeightedMeasure,
    gamma: float,
    g2: PointCloud,
    alpha: float,
    r_ladder: Sequence[float] | None = None,
    tol: float = 1e-6,
) -> dict:
    """Product-capacity lower bound for G1 x G2 under the max metric.

    Builds the optimal measure m of G2 for kernel phi_(alpha - gamma), forms
    mu1 (x) m on G1 x G2 and compares its alpha-energy with C2 E(m), where C2
    bounds the Frostman integral I(r) r^(alpha - gamma) of mu1 over the r
    ladder. Also computes the Frank-Wolfe alpha-capacity of the product.
    """
    r0 = max(mu1.cloud.resolution, g2.resolution)
    k2 = RadialKernel.riesz(alpha - gamma, r0=r0)
    c2 = capacity(g2, k2, tol)
    m = WeightedMeasure(g2, c2.weights / c2.weights.sum())
    prod = product_measure(mu1, m)
    kp = RadialKernel.riesz(alpha, r0=r0)
    e_feasible = energy_of_measure(prod, kp)
    if r_ladder is None:
        diam = max(mu1.cloud.diameter(), g2.diameter(), r0)
        r_ladder = np.geomspace(r0, diam, 12)
    if alpha - gamma > 0:
        scale = lambda r: r ** (alpha - gamma)  # noqa: E731
    elif alpha - gamma == 0:
        scale = lambda r: 1.0 / math.log(math.e / min(r, 1.0))  # noqa: E731
    else:
        scale = lambda r: 1.0  # noqa: E731
    C2 = max(frostman_integral(mu1, alpha, float(r)) * scale(float(r)) for r in r_ladder)
    cp = capacity(prod.cloud, kp, tol)
    return {
        "capacity_g2": c2.capacity,
        "energy_g2": c2.energy,
        "C2": C2,
        "feasible_energy": e_feasible,
        "feasible_bound": C2 * c2.energy,
        "feasible_bound_holds": bool(e_feasible <= C2 * c2.energy * (1 + 1e-9)),
        "capacity_product": cp.capacity,
        "capacity_product_feasible": 1.0 / e_feasible,
        "ratio": c2.capacity / cp.capacity,
        "converged": bool(c2.converged and cp.converged),
    }
