"""Quadrature for the stopping-kernel and its lag integral.

The kernel

    K(t, x, s, z-, z+) = E[ H(t+s, x + B_s) 1{z- < x + B_s < z+} ]
                       = int_{z-}^{z+} H(t+s, y) phi((y - x - mu s)/sqrt(s)) / sqrt(s) dy

is the building block of the value formula V(t,x) = int_0^{T-t} K ds and of
the boundary equations.  Two evaluation paths are provided:

* ``kernel_K`` -- scalar, adaptive: Gauss-Legendre panels split at the
  derivative kink of H (y = 0) and at the zero-level curves of H, with the
  panel order doubled until the requested absolute accuracy is met.

* ``integrate_K_over_lag`` -- the full lag integral with a fixed, fully
  vectorized composite rule.  The lag endpoints are tamed by the
  substitutions s = u^2 (near s = 0, where the transition density
  concentrates) and T - t - s = v^2 (near the horizon, where H has a
  square-root derivative blow-up), restoring smooth integrands.

Inner integrals are computed in the standardized variable
xi = (y - x - mu s)/sqrt(s) so that narrow transition densities at small
lags are always resolved; panels are split at the image of y = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .closed_forms import ProblemSpec, _gain_H_raw, _h_root, std_normal_cdf

# Standardized tail cutoff: mass beyond is ~1.5e-23, far below any eps_K used.
_CLIP = 10.0


@dataclass(frozen=True)
class KernelQuery:
    """Arguments of one kernel evaluation: K(t, x, s, z_minus, z_plus)."""

    t: float
    x: float
    s: float
    z_minus: float
    z_plus: float

    def __post_init__(self):
        if self.z_minus > self.z_plus:
            raise ValueError("window requires z_minus <= z_plus")


@dataclass(frozen=True)
class LagRule:
    """Composite quadrature rule for integrals over the lag s in (0, L]."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.nodes.size


@lru_cache(maxsize=32)
def _gauss_unit(n: int):
    """Gauss-Legendre nodes/weights on [0, 1], symmetrized exactly."""
    r, w = np.polynomial.legendre.leggauss(n)
    r = 0.5 * (r - r[::-1])          # enforce exact +- symmetry
    w = 0.5 * (w + w[::-1])
    return 0.5 * (r + 1.0), 0.5 * w


def lag_rule(L: float, n_nodes: int = 128) -> LagRule:
    """Build the doubly-substituted rule for int_0^L K(s) ds.

    Half the nodes live in u = sqrt(s) on [0, sqrt(L/2)], the other half in
    v = sqrt(L - s) on the upper half; both substitutions carry Jacobian 2u
    (resp. 2v).  Nodes are returned ascending in s and never touch 0 or L.
    """
    if L < 0.0:
        raise ValueError("lag length must be >= 0")
    if L == 0.0:
        return LagRule(nodes=np.empty(0), weights=np.empty(0))
    n_half = max(n_nodes // 2, 4)
    r, w = _gauss_unit(n_half)
    half = np.sqrt(L / 2.0)
    u = half * r
    s_lo = u * u
    w_lo = 2.0 * u * (half * w)
    v = half * r
    s_hi = L - v * v
    w_hi = 2.0 * v * (half * w)
    order = np.argsort(s_hi)
    return LagRule(nodes=np.concatenate([s_lo, s_hi[order]]),
                   weights=np.concatenate([w_lo, w_hi[order]]))


def _inner_kernel_panels(spec: ProblemSpec, t_plus_s: float, x: float, s: float,
                         z_minus: float, z_plus: float, n_gl: int,
                         extra_breaks=()) -> float:
    """One inner integral in xi-space with panels split at breakpoints."""
    sq = np.sqrt(s)
    center = x + spec.mu * s
    a = max((z_minus - center) / sq, -_CLIP)
    c = min((z_plus - center) / sq, _CLIP)
    if c <= a:
        return 0.0
    breaks = [a, c]
    for y_brk in (0.0, *extra_breaks):
        xi = (y_brk - center) / sq
        if a < xi < c:
            breaks.append(xi)
    breaks = np.sort(np.array(breaks))
    r, w = _gauss_unit(n_gl)
    total = 0.0
    s_rem = spec.T - t_plus_s
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        xi = lo + (hi - lo) * r
        y = center + sq * xi
        h = _gain_H_raw(spec.mu, s_rem, y)
        phi = np.exp(-0.5 * xi * xi) / np.sqrt(2.0 * np.pi)
        total += (hi - lo) * np.dot(w, h * phi)
    return float(total)


def kernel_K(spec: ProblemSpec, q: KernelQuery, eps_k: float = 1e-9) -> float:
    """Evaluate the kernel to absolute accuracy eps_k (default 1e-9).

    Accepts s = T - t, where H degenerates to its terminal limit 1 away
    from zero and the kernel reduces to the window probability.
    """
    if q.s <= 0.0:
        raise ValueError("kernel_K requires s > 0")
    if q.t + q.s > spec.T * (1.0 + 1e-12):
        raise ValueError("kernel_K requires t + s <= T")
    if q.z_minus == q.z_plus:
        return 0.0
    sq = np.sqrt(q.s)
    center = q.x + spec.mu * q.s
    if spec.T - (q.t + q.s) <= 1e-14 * spec.T:
        # terminal limit: H(T, y) = 1 a.e.
        return float(std_normal_cdf((q.z_plus - center) / sq)
                     - std_normal_cdf((q.z_minus - center) / sq))
    t_plus_s = q.t + q.s
    extra = (_h_root(spec, t_plus_s, -1), _h_root(spec, t_plus_s, +1))
    n = 32
    prev = _inner_kernel_panels(spec, t_plus_s, q.x, q.s,
                                q.z_minus, q.z_plus, n, extra)
    while n <= 1024:
        n *= 2
        cur = _inner_kernel_panels(spec, t_plus_s, q.x, q.s,
                                   q.z_minus, q.z_plus, n, extra)
        if abs(cur - prev) <= eps_k:
            return cur
        prev = cur
    raise RuntimeError(f"kernel quadrature did not reach eps_k={eps_k}")


def lag_integral_batch(spec: ProblemSpec, t: float, xs, z_minus, z_plus,
                       rule: LagRule, n_gl: int = 64) -> np.ndarray:
    """Vectorized int_0^{L} K(t, x, s, z-(s), z+(s)) ds for a batch of x.

    Parameters
    ----------
    xs : array (B,)
        Evaluation points.
    z_minus, z_plus : arrays (n_s,) or (B, n_s)
        Window edges at each lag node (optionally per evaluation point).
    rule : LagRule
        Lag nodes/weights from ``lag_rule(T - t, .)``.

    The inner integral per (x, s-node) uses two Gauss-Legendre panels in the
    standardized variable, split at the image of the kink y = 0; empty or
    clipped-away windows contribute exactly 0.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if rule.n == 0:
        return np.zeros(xs.shape)
    s = rule.nodes[np.newaxis, :]                      # (1, n_s)
    sq = np.sqrt(s)
    zm = np.asarray(z_minus, dtype=float)
    zp = np.asarray(z_plus, dtype=float)
    if zm.ndim == 1:
        zm = zm[np.newaxis, :]
    if zp.ndim == 1:
        zp = zp[np.newaxis, :]
    center = xs[:, np.newaxis] + spec.mu * s           # (B, n_s)
    a = np.maximum((zm - center) / sq, -_CLIP)
    c = np.minimum((zp - center) / sq, _CLIP)
    c = np.maximum(c, a)
    mid = np.clip(-center / sq, a, c)
    s_rem = spec.T - t - s                             # (1, n_s), > 0 by rule
    r, w = _gauss_unit(n_gl)
    out = np.zeros((xs.size, rule.n))
    for lo, hi in ((a, mid), (mid, c)):
        width = hi - lo                                # (B, n_s)
        xi = lo[..., np.newaxis] + width[..., np.newaxis] * r   # (B, n_s, n_gl)
        y = center[..., np.newaxis] + sq[..., np.newaxis] * xi
        h = _gain_H_raw(spec.mu, s_rem[..., np.newaxis], y)
        phi = np.exp(-0.5 * xi * xi) * (1.0 / np.sqrt(2.0 * np.pi))
        out += width * np.einsum("bsg,g->bs", h * phi, w)
    return out @ rule.weights


def integrate_K_over_lag(spec: ProblemSpec, t: float, x: float, window,
                         rule: LagRule | None = None, n_nodes: int = 128,
                         n_gl: int = 64) -> float:
    """int_0^{T-t} K(t, x, s, z-(s), z+(s)) ds for a lag-dependent window.

    ``window`` maps an array of lags s to a pair of arrays (z-(s), z+(s)).
    Deterministic for fixed inputs; the rule defaults to
    ``lag_rule(T - t, n_nodes)``.
    """
    if not 0.0 <= t <= spec.T:
        raise ValueError("integrate_K_over_lag requires t in [0, T]")
    if rule is None:
        rule = lag_rule(spec.T - t, n_nodes)
    if rule.n == 0:
        return 0.0
    zm, zp = window(rule.nodes)
    zm = np.asarray(zm, dtype=float)
    zp = np.asarray(zp, dtype=float)
    if np.any(zm > zp):
        raise ValueError("window must satisfy z_minus <= z_plus at every node")
    return float(lag_integral_batch(spec, t, np.array([x]), zm, zp, rule,
                                    n_gl=n_gl)[0])
