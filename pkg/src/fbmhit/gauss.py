"""Simulation of fBm, of the stationary-increment process B^delta and of their sum.

* fBm on a uniform power-of-two grid by circulant embedding of fractional
  Gaussian noise (exact in distribution).
* B^delta, the centred process with X(0) = 0 and E(X(t) - X(s))^2 =
  delta^2(|t - s|), by Cholesky factorisation of
  R(s, t) = (delta^2(s) + delta^2(t) - delta^2(|t - s|)) / 2.
* Mixed = independent sum of the two.

Every (path, component) pair draws from its own Philox stream keyed by the
master seed, a stream label and the indices, so an ensemble does not depend on
how paths are split into chunks or threads.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .svf import IncrementVariance, SlowVarySpec, compute_c_alpha, drift_modulus

__all__ = [
    "SimulationError",
    "ProcessSpec",
    "PathEnsemble",
    "Drift",
    "stream",
    "normals",
    "simulate",
    "sample_at_times",
    "freeze_drift",
    "validate_modulus",
    "empirical_covariance",
    "spectral_oracle",
    "fbm_covariance",
    "write_cache",
    "read_cache",
]

CACHE_MAGIC = b"FBMHITPE"
CACHE_VERSION = 1
PATH_CHUNK = 1024


class SimulationError(RuntimeError):
    """Covariance factorisation or embedding failed."""


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

def _label_key(label: str) -> int:
    return zlib.crc32(label.encode())


def stream(seed: int, label: str, *index: int) -> np.random.Generator:
    """Independent generator for (seed, label, index...)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(_label_key(label), *map(int, index)))
    return np.random.Generator(np.random.Philox(ss))


def normals(seed: int, label: str, paths: range, d: int, size: int) -> np.ndarray:
    """Array (len(paths), d, size) of standard normals, one stream per (path, component)."""
    out = np.empty((len(paths), d, size))
    for i, p in enumerate(paths):
        for c in range(d):
            out[i, c] = stream(seed, label, p, c).standard_normal(size)
    return out


# ---------------------------------------------------------------------------
# process specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProcessSpec:
    """fBm(H), B^delta(alpha, slow) or their independent sum, in dimension d."""

    kind: str = "fbm"
    H: float = 0.5
    alpha: float = 0.5
    slow: SlowVarySpec = field(default_factory=SlowVarySpec)
    d: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("fbm", "delta_theta", "mixed"):
            raise ValueError(f"unknown process kind {self.kind!r}")
        if not 0 < self.H < 1:
            raise ValueError("H must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("dimension d must be a positive integer")

    @classmethod
    def fbm(cls, H: float, d: int = 1) -> "ProcessSpec":
        return cls("fbm", H=H, d=d)

    @classmethod
    def delta_theta(cls, alpha: float, slow: SlowVarySpec, d: int = 1) -> "ProcessSpec":
        return cls("delta_theta", alpha=alpha, slow=slow, d=d)

    @classmethod
    def mixed(cls, H: float, alpha: float, slow: SlowVarySpec, d: int = 1) -> "ProcessSpec":
        return cls("mixed", H=H, alpha=alpha, slow=slow, d=d)

    def increment_variance(self):
        """Callable h -> E(X(t + h) - X(t))^2 for one component."""
        parts = []
        if self.kind in ("fbm", "mixed"):
            H = self.H
            parts.append(lambda h: np.abs(np.asarray(h, dtype=float)) ** (2 * H))
        if self.kind in ("delta_theta", "mixed"):
            parts.append(IncrementVariance(self.alpha, self.slow))
        return lambda h: sum(np.asarray(p(h)) for p in parts)

    def variance(self, t):
        return self.increment_variance()(t)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "d": self.d}
        if self.kind in ("fbm", "mixed"):
            d["H"] = self.H
        if self.kind in ("delta_theta", "mixed"):
            d["alpha"] = self.alpha
            d["slow"] = self.slow.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessSpec":
        unknown = set(d) - {"kind", "d", "H", "alpha", "slow"}
        if unknown:
            raise ValueError(f"unknown process fields {sorted(unknown)}")
        return cls(
            kind=d.get("kind", "fbm"),
            H=float(d.get("H", 0.5)),
            alpha=float(d.get("alpha", 0.5)),
            slow=SlowVarySpec.from_dict(d.get("slow", {})),
            d=int(d.get("d", 1)),
        )

    def digest(self) -> bytes:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()[:8]


@dataclass
class PathEnsemble:
    spec: ProcessSpec
    t: np.ndarray
    paths: np.ndarray  # (n_paths, n + 1, d)
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "t", "component", "value"])
            for p in range(self.n_paths):
                for i, ti in enumerate(self.t):
                    for c in range(self.paths.shape[2]):
                        w.writerow([p, repr(float(ti)), c, repr(float(self.paths[p, i, c]))])


# ---------------------------------------------------------------------------
# fBm by circulant embedding
# ---------------------------------------------------------------------------

def fgn_eigenvalues(H: float, n: int) -> np.ndarray:
    """Eigenvalues of the 2n circulant embedding of unit-step fGn covariances."""
    k = np.arange(n + 1, dtype=float)
    g = 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    row = np.concatenate([g, g[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise SimulationError(f"circulant embedding is not nonnegative: min eigenvalue {lam.min():.3e}")
    return np.maximum(lam, 0.0)


def _fbm_block(H: float, n: int, seed: int, label: str, paths: range, d: int, lam: np.ndarray) -> np.ndarray:
    m = 2 * n
    z = normals(seed, label, paths, d, 2 * m)
    zc = z[..., :m] + 1j * z[..., m:]
    y = np.fft.fft(np.sqrt(lam / m) * zc, axis=-1)
    incr = y[..., :n].real * float(n) ** (-H)
    out = np.zeros((len(paths), n + 1, d))
    out[:, 1:, :] = np.cumsum(incr, axis=-1).transpose(0, 2, 1)
    return out


# ---------------------------------------------------------------------------
# Gaussian processes on arbitrary times by Cholesky
# ---------------------------------------------------------------------------

def fbm_covariance(H: float, s, t) -> np.ndarray:
    s = np.asarray(s, dtype=float)[:, None]
    t = np.asarray(t, dtype=float)[None, :]
    return 0.5 * (np.abs(s) ** (2 * H) + np.abs(t) ** (2 * H) - np.abs(t - s) ** (2 * H))


def _cholesky_with_jitter(R: np.ndarray) -> tuple[np.ndarray, float]:
    scale = float(np.max(np.diag(R)))
    for jit in (0.0, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10):
        try:
            A = R + jit * scale * np.eye(R.shape[0]) if jit else R
            return linalg.cholesky(A, lower=True, check_finite=False), jit
        except linalg.LinAlgError:
            continue
    ev = float(linalg.eigvalsh(R, subset_by_index=[0, 0])[0])
    raise SimulationError(
        f"covariance is not positive definite within the jitter budget 1e-10 * max diag; minimum eigenvalue {ev:.3e}"
    )


def _increment_cov(var, times: np.ndarray) -> np.ndarray:
    s, t = times[:, None], times[None, :]
    return 0.5 * (var(s) + var(t) - var(np.abs(t - s)))


def sample_at_times(spec: ProcessSpec, times, n_paths: int, seed: int, label: str = "process", path_offset: int = 0) -> np.ndarray:
    """Exact Gaussian samples at arbitrary positive times, shape (n_paths, len(times), d).

    Brownian motion uses independent increments; everything else uses the
    Cholesky factor of the covariance implied by stationary increments and
    X(0) = 0.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] <= 0 or times[-1] > 1:
        raise ValueError("times must be increasing in (0, 1]")
    d = spec.d
    out = np.zeros((n_paths, times.size, d))
    comps = []
    if spec.kind in ("fbm", "mixed"):
        comps.append(("fbm", spec.H))
    if spec.kind in ("delta_theta", "mixed"):
        comps.append(("delta", None))
    for name, H in comps:
        lab = f"{label}/{name}"
        if name == "fbm" and H == 0.5:
            sd = np.sqrt(np.diff(np.concatenate([[0.0], times])))
            for lo in range(0, n_paths, PATH_CHUNK):
                rng = range(path_offset + lo, path_offset + min(lo + PATH_CHUNK, n_paths))
                z = normals(seed, lab, rng, d, times.size)
                out[lo : lo + len(rng)] += np.cumsum(z * sd, axis=-1).transpose(0, 2, 1)
            continue
        if name == "fbm":
            R = fbm_covariance(H, times, times)
        else:
            R = _increment_cov(IncrementVariance(spec.alpha, spec.slow), times)
        L, _ = _cholesky_with_jitter(R)
        for lo in range(0, n_paths, PATH_CHUNK):
            rng = range(path_offset + lo, path_offset + min(lo + PATH_CHUNK, n_paths))
            z = normals(seed, lab, rng, d, times.size)
            out[lo : lo + len(rng)] += (z @ L.T).transpose(0, 2, 1)
    return out


def simulate(spec: ProcessSpec, n: int, n_paths: int, seed: int, label: str = "process", path_offset: int = 0) -> PathEnsemble:
    """Paths on the grid t_i = i / n, i = 0..n."""
    if n < 1 or n_paths < 1:
        raise ValueError("need n >= 1 and n_paths >= 1")
    if spec.kind in ("fbm", "mixed") and n & (n - 1):
        raise ValueError("circulant embedding needs n to be a power of two")
    if spec.kind in ("delta_theta", "mixed") and n > 4096:
        raise ValueError("dense factorisation supports n <= 4096")
    t = np.arange(n + 1) / n
    paths = np.zeros((n_paths, n + 1, spec.d))
    info: dict = {"n": n, "n_paths": n_paths, "rng": "philox per (path, component)"}
    if spec.kind in ("fbm", "mixed"):
        lam = fgn_eigenvalues(spec.H, n)
        for lo in range(0, n_paths, PATH_CHUNK):
            rng = range(path_offset + lo, path_offset + min(lo + PATH_CHUNK, n_paths))
            paths[lo : lo + len(rng)] += _fbm_block(spec.H, n, seed, f"{label}/fbm", rng, spec.d, lam)
        info["fbm_method"] = "circulant embedding"
    if spec.kind in ("delta_theta", "mixed"):
        R = _increment_cov(IncrementVariance(spec.alpha, spec.slow), t[1:])
        L, jit = _cholesky_with_jitter(R)
        for lo in range(0, n_paths, PATH_CHUNK):
            rng = range(path_offset + lo, path_offset + min(lo + PATH_CHUNK, n_paths))
            z = normals(seed, f"{label}/delta", rng, spec.d, n)
            paths[lo : lo + len(rng), 1:, :] += (z @ L.T).transpose(0, 2, 1)
        info["delta_method"] = "cholesky"
        info["jitter"] = jit
    return PathEnsemble(spec, t, paths, seed, info)


# ---------------------------------------------------------------------------
# frozen drifts
# ---------------------------------------------------------------------------

@dataclass
class Drift:
    """Deterministic function f on [0, 1] given by samples, linear in between."""

    t: np.ndarray
    values: np.ndarray  # (len(t), d)
    source: dict = field(default_factory=dict)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.stack([np.interp(s, self.t, self.values[:, c]) for c in range(self.values.shape[1])], axis=-1)

    @classmethod
    def zero(cls, d: int = 1) -> "Drift":
        return cls(np.array([0.0, 1.0]), np.zeros((2, d)), {"kind": "zero"})

    @classmethod
    def power(cls, a: float, H: float, d: int = 1, n: int = 4096) -> "Drift":
        """f(t) = a t^H in every component, an H-Hoelder fixture."""
        t = np.linspace(0.0, 1.0, n + 1)
        v = a * t**H
        return cls(t, np.repeat(v[:, None], d, axis=1), {"kind": "power", "a": a, "H": H})


def freeze_drift(spec: ProcessSpec, n: int, seed: int, times=None) -> Drift:
    """One B^delta trajectory, either on the grid i / n or at given times."""
    if spec.kind != "delta_theta":
        raise ValueError("frozen drifts are trajectories of the delta_theta process")
    if times is None:
        ens = simulate(spec, n, 1, seed, label="drift")
        return Drift(ens.t, ens.paths[0], {"kind": "frozen", "seed": seed, "n": n, "spec": spec.to_dict()})
    times = np.asarray(times, dtype=float)
    vals = sample_at_times(spec, times, 1, seed, label="drift")[0]
    t = np.concatenate([[0.0], times])
    v = np.vstack([np.zeros((1, spec.d)), vals])
    return Drift(t, v, {"kind": "frozen", "seed": seed, "times": int(times.size), "spec": spec.to_dict()})


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _window_range(x: np.ndarray, m: int) -> float:
    """max over windows of m + 1 consecutive samples of (max - min)."""
    if m >= x.size - 1:
        return float(x.max() - x.min())
    size = m + 1
    origin = -(size // 2) + (0 if size % 2 else 1)
    hi = maximum_filter1d(x, size, origin=origin, mode="nearest")[: x.size - m]
    lo = minimum_filter1d(x, size, origin=origin, mode="nearest")[: x.size - m]
    return float(np.max(hi - lo))


def path_oscillation(x: np.ndarray, m: int) -> float:
    """sup over |i - j| <= m of ||x_i - x_j|| for samples x of shape (n + 1, d)."""
    if x.shape[1] == 1:
        return _window_range(x[:, 0], m)
    best = 0.0
    for lag in range(1, min(m, x.shape[0] - 1) + 1):
        best = max(best, float(np.max(np.linalg.norm(x[lag:] - x[:-lag], axis=1))))
    return best


def validate_modulus(ens: PathEnsemble, alpha: float, spec: SlowVarySpec, c: float = 2.0, r_max: float = 0.25) -> dict:
    """Distribution over paths of sup_r M(r) / w(r) on dyadic r in [dt, r_max].

    Also reports the same statistic for the smaller modulus r^alpha.
    """
    n = ens.t.size - 1
    dt = float(ens.t[1] - ens.t[0])
    ms = []
    m = 1
    while m * dt <= r_max * (1 + 1e-12) or not ms:
        ms.append(m)
        m *= 2
    r = np.array(ms) * dt
    r_eval = np.minimum(r, 1 - 1e-12)
    w = np.asarray(drift_modulus(alpha, spec, r_eval)) if np.all(r_eval < 1) else None
    w_pow = r**alpha * np.sqrt(compute_c_alpha(alpha))
    sup_w, sup_p = [], []
    for p in range(ens.n_paths):
        M = np.array([path_oscillation(ens.paths[p], mm) for mm in ms])
        sup_w.append(float(np.max(M / w)))
        sup_p.append(float(np.max(M / w_pow)))
    sup_w, sup_p = np.array(sup_w), np.array(sup_p)
    q = lambda a: {str(k): float(np.quantile(a, k / 100)) for k in (50, 90, 99)}  # noqa: E731
    return {
        "n": n,
        "radii": r.tolist(),
        "quantiles": q(sup_w),
        "fraction_above_c": float(np.mean(sup_w > c)),
        "c": c,
        "power_modulus_quantiles": q(sup_p),
    }


def empirical_covariance(ens: PathEnsemble, s: float, t: float, component: int = 0) -> tuple[float, float]:
    """Monte Carlo E[X(s) X(t)] for one component, with its standard error."""
    idx = []
    for x in (s, t):
        i = int(round(x * (ens.t.size - 1)))
        if not (0 <= i < ens.t.size) or abs(ens.t[i] - x) > 1e-12:
            raise ValueError(f"time {x} is not on the simulation grid")
        idx.append(i)
    prod = ens.paths[:, idx[0], component] * ens.paths[:, idx[1], component]
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(prod.size))


def spectral_oracle(alpha: float, slow: SlowVarySpec, times, n_paths: int, seed: int,
                    n_freq: int = 4000, x_min: float = 1e-4, x_max: float = 1e7) -> np.ndarray:
    """Truncated spectral-sum sampler of B^delta (cross-validation only).

    X(t) = pi^(-1/2) sum_j (dx_j / theta(x_j))^(1/2) ((1 - cos x_j t) Z_j + sin(x_j t) Z'_j)
    over a log-spaced frequency grid; frequencies outside [x_min, x_max] are
    dropped, which biases the variance downward.
    """
    times = np.asarray(times, dtype=float)
    edges = np.geomspace(x_min, x_max, n_freq + 1)
    x = np.sqrt(edges[1:] * edges[:-1])
    dx = np.diff(edges)
    amp = np.sqrt(dx / (math.pi * x ** (2 * alpha + 1) * slow.L(x)))
    C = (1 - np.cos(np.outer(times, x))) * amp
    S = np.sin(np.outer(times, x)) * amp
    rng = stream(seed, "spectral-oracle")
    Z1 = rng.standard_normal((n_paths, n_freq))
    Z2 = rng.standard_normal((n_paths, n_freq))
    return Z1 @ C.T + Z2 @ S.T


# ---------------------------------------------------------------------------
# binary cache
# ---------------------------------------------------------------------------
# Layout (little endian):
#   8s  magic "FBMHITPE"
#   u32 format version
#   8s  first 8 bytes of sha256 of the canonical spec JSON
#   u64 seed
#   u32 n_paths, u32 n_times, u32 d
#   f64[n_times] time grid
#   f64[n_paths * n_times * d] values, C order (path, time, component)
_HEADER = struct.Struct("<8sI8sQIII")


def write_cache(ens: PathEnsemble, path: str | Path) -> None:
    n_paths, n_times, d = ens.paths.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, ens.spec.digest(), int(ens.seed), n_paths, n_times, d))
        fh.write(np.ascontiguousarray(ens.t, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ens.paths, dtype="<f8").tobytes())


def read_cache(path: str | Path, spec: ProcessSpec) -> PathEnsemble:
    raw = Path(path).read_bytes()
    magic, version, digest, seed, n_paths, n_times, d = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise ValueError("not a path cache file")
    if version != CACHE_VERSION:
        raise ValueError(f"unsupported cache version {version}")
    if digest != spec.digest():
        raise ValueError("cache was written for a different process spec")
    off = _HEADER.size
    t = np.frombuffer(raw, "<f8", n_times, off).copy()
    off += 8 * n_times
    vals = np.frombuffer(raw, "<f8", n_paths * n_times * d, off).reshape(n_paths, n_times, d).copy()
    return PathEnsemble(spec, t, vals, seed, {"source": str(path)})
