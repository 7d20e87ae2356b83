"""Slowly and regularly varying functions, spectral quadrature and drift moduli.

The three parametric families of slowly varying functions at infinity are

* ``constant``      L(x) = c
* ``log_power``     L(x) = log(x)^(-beta)
* ``exp_log_power`` L(x) = exp(-log(x)^gamma),  0 < gamma < 1

Below the representation cutoff ``x0`` every family is frozen at ``L(x0)``.
The spectral density is theta(x) = x^(2 alpha + 1) L(x) and the increment
variance of the associated stationary-increment process is

    delta^2(h) = (2/pi) * int_0^inf (1 - cos(x h)) / theta(x) dx.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

__all__ = [
    "QuadratureError",
    "SlowVarySpec",
    "RegVarSpec",
    "IncrementVariance",
    "eval_slowly_varying",
    "ell_theta",
    "compute_c_alpha",
    "delta_sq_quadrature",
    "drift_modulus",
    "check_concavity_window",
    "lemma41_check",
    "regularity_conditions",
]

FAMILIES = ("constant", "log_power", "exp_log_power")


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class SlowVarySpec:
    """Parametric slowly varying function L at infinity.

    Only the parameter relevant to ``family`` is used: ``c`` for
    ``constant``, ``beta`` for ``log_power``, ``gamma`` for ``exp_log_power``.
    """

    family: str = "constant"
    c: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    x0: float = math.e

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown slowly varying family {self.family!r}; expected one of {FAMILIES}")
        if not self.x0 > 0:
            raise ValueError("x0 must be positive")
        if self.family == "constant" and not self.c > 0:
            raise ValueError("constant family needs c > 0")
        if self.family == "log_power":
            if not self.beta > 0:
                raise ValueError("log_power family needs beta > 0")
            if self.x0 <= 1.0:
                raise ValueError("log_power family needs x0 > 1 so that log(x) > 0")
        if self.family == "exp_log_power":
            if not 0 < self.gamma < 1:
                raise ValueError("exp_log_power family needs 0 < gamma < 1")
            if self.x0 < 1.0:
                raise ValueError("exp_log_power family needs x0 >= 1")

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, c: float = 1.0) -> "SlowVarySpec":
        return cls("constant", c=c)

    @classmethod
    def log_power(cls, beta: float, x0: float = math.e) -> "SlowVarySpec":
        return cls("log_power", beta=beta, x0=x0)

    @classmethod
    def exp_log_power(cls, gamma: float, x0: float = math.e) -> "SlowVarySpec":
        return cls("exp_log_power", gamma=gamma, x0=x0)

    @property
    def is_trivial(self) -> bool:
        return self.family == "constant"

    # -- evaluation ---------------------------------------------------------
    def _raw(self, x: np.ndarray) -> np.ndarray:
        if self.family == "constant":
            return np.full_like(x, self.c, dtype=float)
        lx = np.log(x)
        if self.family == "log_power":
            return lx ** (-self.beta)
        return np.exp(-(lx**self.gamma))

    def L(self, x):
        """L(x), clamped to L(x0) for x < x0."""
        xa = np.asarray(x, dtype=float)
        out = self._raw(np.maximum(xa, self.x0))
        return out if out.ndim else float(out)

    def log_L_at_log(self, lx: float) -> float:
        """log L(e^lx), overflow-free for large lx."""
        lx = max(lx, math.log(self.x0))
        if self.family == "constant":
            return math.log(self.c)
        if self.family == "log_power":
            return -self.beta * math.log(lx)
        return -(lx**self.gamma)

    def epsilon(self, x):
        """x L'(x) / L(x) (zero on the frozen region x < x0)."""
        xa = np.asarray(x, dtype=float)
        xs = np.maximum(xa, self.x0)
        if self.family == "constant":
            out = np.zeros_like(xs)
        elif self.family == "log_power":
            out = -self.beta / np.log(xs)
        else:
            out = -self.gamma * np.log(xs) ** (self.gamma - 1.0)
        out = np.where(xa < self.x0, 0.0, out)
        return out if out.ndim else float(out)

    def x_epsilon_prime(self, x):
        """x * d/dx epsilon(x) on the smooth region."""
        xs = np.maximum(np.asarray(x, dtype=float), self.x0)
        lx = np.log(xs)
        if self.family == "constant":
            out = np.zeros_like(xs)
        elif self.family == "log_power":
            out = self.beta / lx**2
        else:
            out = self.gamma * (1.0 - self.gamma) * lx ** (self.gamma - 2.0)
        return out if out.ndim else float(out)

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"family": self.family, "x0": self.x0}
        if self.family == "constant":
            d["c"] = self.c
        elif self.family == "log_power":
            d["beta"] = self.beta
        else:
            d["gamma"] = self.gamma
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SlowVarySpec":
        allowed = {"family", "c", "beta", "gamma", "x0"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown slowly varying keys: {sorted(extra)}")
        return cls(**d)


def eval_slowly_varying(spec: SlowVarySpec, x):
    """Evaluate L(x) for x > 0."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise ValueError("slowly varying function is defined for x > 0 only")
    return spec.L(x)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _one_minus_cos_over_sq(s):
    # (1 - cos s) / s^2 without cancellation
    h = np.sin(0.5 * s)
    return 2.0 * h * h / (s * s) if s != 0 else 0.5


def _check(err: float, value: float, tol: float, what: str) -> None:
    if not np.isfinite(value) or err > tol * abs(value):
        raise QuadratureError(f"{what}: achieved error bound {err:.3e} exceeds tol*value = {tol * abs(value):.3e}")


@lru_cache(maxsize=256)
def compute_c_alpha(alpha: float, tol: float = 1e-10) -> float:
    """c_alpha = (4/pi) int_0^inf sin^2(s/2) / s^(2 alpha + 1) ds.

    The integral is split at s = 1. On [0, 1] the integrand is written as an
    algebraic weight s^(1 - 2 alpha) times the smooth (1 - cos s)/s^2; the tail
    is the absolutely convergent power part minus a Fourier integral handled by
    QUADPACK's QAWF.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not tol > 0:
        raise ValueError("tol must be positive")
    p = 2.0 * alpha + 1.0
    head, e1 = integrate.quad(_one_minus_cos_over_sq, 0.0, 1.0, weight="alg", wvar=(1.0 - 2.0 * alpha, 0.0),
                              epsabs=0.0, epsrel=tol / 10, limit=200)
    osc, e2 = integrate.quad(lambda s: s ** (-p), 1.0, np.inf, weight="cos", wvar=1.0, epsabs=tol / 100, limit=200)
    total = head + 1.0 / (2.0 * alpha) - osc
    value = 2.0 / math.pi * total
    _check(2.0 / math.pi * (e1 + e2), value, tol, f"c_alpha(alpha={alpha})")
    return value


def delta_sq_quadrature(alpha: float, theta: SlowVarySpec, h: float, tol: float = 1e-8) -> float:
    """Increment variance delta^2(h) of the spectral density x^(2a+1) L(x).

    After the substitution s = x h,

        delta^2(h) = (2/pi) h^(2a) int_0^inf (1 - cos s) s^(-2a-1) / L(s/h) ds.

    On s < x0 h the factor 1/L is constant; the smooth remainder is integrated
    up to max(1, x0 h) and the tail splits into a monotone part and a QAWF
    cosine transform.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    p = 2.0 * alpha + 1.0
    x0 = theta.x0
    g0 = 1.0 / theta.L(x0)

    def g(s):
        return 1.0 / theta.L(s / h)

    opts = dict(epsabs=0.0, epsrel=tol / 10, limit=400)
    b = x0 * h if not theta.is_trivial else 1.0
    split = max(1.0, b)
    parts, errs = [], []
    # singular head, constant 1/L
    v, e = integrate.quad(_one_minus_cos_over_sq, 0.0, min(b, 1.0), weight="alg", wvar=(1.0 - 2.0 * alpha, 0.0), **opts)
    parts.append(g0 * v)
    errs.append(g0 * e)
    if b < 1.0:
        v, e = integrate.quad(lambda s: (1.0 - math.cos(s)) * s ** (-p) * g(s), b, 1.0, **opts)
        parts.append(v)
        errs.append(e)
    elif b > 1.0:
        v, e = integrate.quad(lambda s: (1.0 - math.cos(s)) * s ** (-p), 1.0, b, **opts)
        parts.append(g0 * v)
        errs.append(g0 * e)
    # tail: int_split^inf s^-p g(s) ds - int_split^inf cos(s) s^-p g(s) ds
    # log substitution keeps the slowly decaying monotone part well scaled
    log_h = math.log(h)

    def tail(u):
        w = (p - 1.0) * u + theta.log_L_at_log(u - log_h)
        return 0.0 if w > 700.0 else math.exp(-w)

    v, e = integrate.quad(tail, math.log(split), np.inf, **opts)
    parts.append(v)
    errs.append(e)
    v, e = integrate.quad(lambda s: s ** (-p) * g(s), split, np.inf, weight="cos", wvar=1.0,
                          epsabs=tol * 1e-3 * abs(parts[0] + v), limit=400)
    parts.append(-v)
    errs.append(e)
    scale = 2.0 / math.pi * h ** (2.0 * alpha)
    value = scale * math.fsum(parts)
    _check(scale * sum(errs), value, tol, f"delta^2(h={h})")
    return value


def ell_theta(spec: SlowVarySpec, alpha: float, h, c_alpha: float | None = None):
    """Slowly varying part at zero: c_alpha^(1/2) L(1/h)^(-1/2), h in (0, 1]."""
    ha = np.asarray(h, dtype=float)
    if np.any(~((ha > 0) & (ha <= 1))):
        raise ValueError("ell_theta is defined for h in (0, 1]")
    c = compute_c_alpha(alpha) if c_alpha is None else c_alpha
    out = np.sqrt(c / np.asarray(spec.L(1.0 / ha)))
    return out if out.ndim else float(out)


def drift_modulus(alpha: float, spec: SlowVarySpec, r):
    """w(r) = r^alpha ell_theta(r) log^(1/2)(1/r) for r in (0, 1)."""
    ra = np.asarray(r, dtype=float)
    if np.any(~((ra > 0) & (ra < 1))):
        raise ValueError("drift modulus is defined for r in (0, 1)")
    out = ra**alpha * ell_theta(spec, alpha, ra) * np.sqrt(np.log(1.0 / ra))
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# tabulated increment variance
# ---------------------------------------------------------------------------

@dataclass
class IncrementVariance:
    """delta^2 tabulated on a log grid with monotone cubic interpolation.

    Interpolation is done in (log h, log delta^2); below the smallest node the
    table is extended by the regular-variation asymptotics
    delta^2(h) ~ h^(2 alpha) ell_theta(h)^2.
    """

    alpha: float
    theta: SlowVarySpec = field(default_factory=SlowVarySpec)
    quadrature_tol: float = 1e-8
    n_nodes: int = 512
    h_min: float = 1e-6

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        self.h = np.geomspace(self.h_min, 1.0, self.n_nodes)
        self.table = _delta_table(self.alpha, self.theta, self.quadrature_tol, self.h_min, self.n_nodes)
        self._interp = PchipInterpolator(np.log(self.h), np.log(self.table))
        self._c_alpha = compute_c_alpha(self.alpha)

    def __call__(self, h):
        ha = np.abs(np.asarray(h, dtype=float))
        if np.any(ha > 1.0 + 1e-12):
            raise ValueError("increment variance table covers lags in [0, 1]")
        out = np.zeros_like(ha)
        mid = ha >= self.h_min
        out[mid] = np.exp(self._interp(np.log(np.minimum(ha[mid], 1.0))))
        low = (ha > 0) & ~mid
        if np.any(low):
            ratio = (ell_theta(self.theta, self.alpha, ha[low], self._c_alpha)
                     / ell_theta(self.theta, self.alpha, self.h_min, self._c_alpha)) ** 2
            out[low] = self.table[0] * (ha[low] / self.h_min) ** (2 * self.alpha) * ratio
        return out if out.ndim else float(out)

    def asymptotic_ratio(self, k: int = 3) -> np.ndarray:
        """delta^2(h) / (h^(2 alpha) ell_theta(h)^2) at the k smallest nodes."""
        h = self.h[:k]
        return self.table[:k] / (h ** (2 * self.alpha) * ell_theta(self.theta, self.alpha, h, self._c_alpha) ** 2)


@lru_cache(maxsize=32)
def _delta_table(alpha: float, theta: SlowVarySpec, tol: float, h_min: float, n: int) -> np.ndarray:
    hs = np.geomspace(h_min, 1.0, n)
    if theta.is_trivial:
        # exact scaling: delta^2(h) = c_alpha h^(2 alpha) / c
        return compute_c_alpha(alpha, min(tol, 1e-10)) / theta.c * hs ** (2 * alpha)
    tab = np.array([delta_sq_quadrature(alpha, theta, float(h), tol) for h in hs])
    tab.setflags(write=False)
    return tab


# ---------------------------------------------------------------------------
# regularly varying functions at zero
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegVarSpec:
    """v(x) = x^alpha * ell(x), with ell built from a slowly varying family.

    ``at_zero``: ell(x) = ell_theta(slow, alpha, x), the slowly varying part at
    zero induced by the spectral density. ``at_infinity``: ell = L itself.
    """

    alpha: float
    slow: SlowVarySpec = field(default_factory=SlowVarySpec)
    direction: str = "at_zero"

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.direction not in ("at_zero", "at_infinity"):
            raise ValueError("direction must be 'at_zero' or 'at_infinity'")

    def ell(self, x):
        if self.direction == "at_infinity":
            return self.slow.L(x)
        return ell_theta(self.slow, self.alpha, x)

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.where(xa > 0, np.maximum(xa, 1e-300) ** self.alpha * self.ell(np.clip(xa, 1e-300, 1.0)), 0.0)
        return out if out.ndim else float(out)

    def epsilon(self, x):
        """-x ell'(x)/ell(x) for the at-zero slowly varying part.

        From ell(x) = c^(1/2) L(1/x)^(-1/2) one gets -x ell'/ell = -eps_L(1/x)/2.
        """
        return -0.5 * np.asarray(self.slow.epsilon(1.0 / np.asarray(x, dtype=float)))

    def derivative(self, x):
        """v'(x) = x^(alpha-1) ell(x) (alpha - epsilon(x))."""
        xa = np.asarray(x, dtype=float)
        return xa ** (self.alpha - 1) * self.ell(xa) * (self.alpha - self.epsilon(xa))


def check_concavity_window(v: RegVarSpec, x_min: float = 1e-12, n_grid: int = 800) -> tuple[float, dict]:
    """Largest grid point x2 such that v is increasing and concave on (0, x2].

    Monotonicity and concavity are certified with first differences and the
    decrease of consecutive secant slopes on a geometric grid. An empty window
    is reported as x2 = 0.
    """
    if v.direction != "at_zero":
        raise ValueError("concavity window is defined for regular variation at zero")
    x = np.geomspace(x_min, 1.0, n_grid)
    vals = v(x)
    dv = np.diff(vals)
    slopes = dv / np.diff(x)
    ok_inc = dv > 0
    ok_conc = np.diff(slopes) < 0
    # condition for the window ending at x[j]: increments up to j and slope drops up to j-1
    good = np.ones(n_grid, dtype=bool)
    good[0] = True
    good[1:] = ok_inc
    good[2:] &= ok_conc
    bad = np.flatnonzero(~good)
    j = (bad[0] - 1) if bad.size else n_grid - 1
    x2 = float(x[j]) if j >= 2 else 0.0
    eps_grid = np.geomspace(x_min, 1.0, 25)
    report = {
        "x2": x2,
        "n_grid": n_grid,
        "first_violation": None if not bad.size else float(x[bad[0]]),
        "epsilon_samples": {"x": eps_grid.tolist(), "epsilon": np.asarray(v.epsilon(eps_grid)).tolist()},
        "empty": x2 == 0.0,
    }
    return x2, report


def lemma41_check(v: RegVarSpec, x2: float, x3: float, c: float = 0.5, n_grid: int = 300) -> dict:
    """Check v(t) - v(s) <= c v(t - s) for x3 <= s < t <= x2, t - s < r0.

    r0 is the largest r < x3 with v'(x3)/v'(r) <= c, found on a geometric grid.
    """
    if not 0 < x3 < x2:
        raise ValueError("need 0 < x3 < x2")
    rs = np.geomspace(x3 * 1e-12, x3, 2000)[:-1]
    ratio = v.derivative(x3) / v.derivative(rs)
    ok = np.flatnonzero(ratio <= c)
    if not ok.size:
        return {"x3": x3, "c": c, "r0": None, "passed": False, "max_ratio": None}
    r0 = float(rs[ok[-1]])
    grid = np.linspace(x3, x2, n_grid)
    s, t = np.meshgrid(grid, grid, indexing="ij")
    mask = (t > s) & (t - s < r0)
    lhs = v(t[mask]) - v(s[mask])
    rhs = c * v(t[mask] - s[mask])
    worst = float(np.max(lhs / rhs)) if mask.any() else 0.0
    return {"x3": x3, "c": c, "r0": r0, "n_pairs": int(mask.sum()), "max_ratio": worst, "passed": worst <= 1.0}


def regularity_conditions(spec: SlowVarySpec) -> dict:
    """Numerical samples of the two regularity conditions on L.

    ``at_infinity`` samples x eps'(x) for large x (limsup should be 0);
    ``at_zero`` samples the induced x eps_ell'(x) for small x (liminf should be 0).
    Both are reported, neither is asserted here.
    """
    big = spec.x0 * np.geomspace(1.0, 1e300, 30)
    small = 1.0 / big
    # eps_ell(x) = -eps_L(1/x)/2, so x d/dx eps_ell(x) = (1/2) y eps_L'(y) at y = 1/x
    return {
        "liminf_L_at_infinity": float(np.min(spec.L(big[-5:]))),
        "x_eps_prime_at_infinity": {"x": big.tolist(), "value": np.asarray(spec.x_epsilon_prime(big)).tolist()},
        "x_eps_prime_at_zero": {"x": small.tolist(), "value": (0.5 * np.asarray(spec.x_epsilon_prime(big))).tolist()},
        "epsilon_at_infinity": {"x": big.tolist(), "value": np.asarray(spec.epsilon(big)).tolist()},
    }
