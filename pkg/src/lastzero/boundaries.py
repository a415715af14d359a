"""Backward solve of the coupled Volterra system for the stopping boundaries.

The optimal boundaries (b-, b+) are the unique pair, within the class
b- <= h- and b+ >= h+, solving

    int_0^{T-t} K(t, b±(t), s, b-(t+s), b+(t+s)) ds = 0,   b±(T) = 0,

where K is the stopping kernel (see :mod:`~lastzero.kernel`).  The sweep
runs backward from T on a grid uniform in v = sqrt(T - t), which matches the
square-root shape of the boundaries near the horizon; each step solves the
2-d nonlinear system with a damped Newton iteration safeguarded by
bracketing bisection.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .closed_forms import ProblemSpec, h_curves
from .kernel import lag_rule, lag_integral_batch

JSON_SCHEMA = "lastzero.boundaries.v1"


class NonConvergenceError(RuntimeError):
    """Raised when a per-step solve exhausts its iteration budget."""

    def __init__(self, step: int, t: float, residual: float):
        self.step = step
        self.t = t
        self.residual = residual
        super().__init__(
            f"boundary solve stalled at step {step} (t={t:.6g}), "
            f"residual {residual:.3e}")


class InvariantViolationError(RuntimeError):
    """Raised when enforcing a structural invariant needs a large clamp."""


@dataclass(frozen=True)
class SolverConfig:
    n_steps: int = 400
    max_iter: int = 200
    tol_b: float = 1e-7
    tol_res: float = 1e-6
    damping: float = 0.8

    def __post_init__(self):
        if self.n_steps < 1 or self.max_iter < 1:
            raise ValueError("n_steps and max_iter must be positive")
        if min(self.tol_b, self.tol_res, self.damping) <= 0.0:
            raise ValueError("tolerances and damping must be positive")
        if self.damping > 1.0:
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class BoundaryPair:
    """Solved stopping boundaries on an ascending time grid 0 = t0 < ... = T.

    ``residuals`` holds the achieved equation residual per grid point, one
    column per boundary (NaN where no equation was solved, e.g. lattice
    extractions and the terminal point).
    """

    spec: ProblemSpec
    grid: np.ndarray
    b_minus: np.ndarray
    b_plus: np.ndarray
    residuals: np.ndarray = field(default=None)  # (n+1, 2): [res-, res+]

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        bm = np.asarray(self.b_minus, dtype=float)
        bp = np.asarray(self.b_plus, dtype=float)
        res = self.residuals
        if res is None:
            res = np.full((grid.size, 2), np.nan)
        res = np.asarray(res, dtype=float)
        if not (grid.shape == bm.shape == bp.shape) or grid.ndim != 1:
            raise ValueError("grid and boundary arrays must share one shape")
        if res.shape != (grid.size, 2):
            raise ValueError("residuals must have shape (len(grid), 2)")
        if grid.size < 2 or np.any(np.diff(grid) <= 0.0):
            raise ValueError("grid must be ascending with >= 2 points")
        if abs(grid[0]) > 1e-12 or abs(grid[-1] - self.spec.T) > 1e-12:
            raise ValueError("grid must span [0, T]")
        if bm[-1] != 0.0 or bp[-1] != 0.0:
            raise ValueError("terminal condition b±(T) = 0 violated")
        if np.any(np.diff(bm) < -1e-12) or np.any(np.diff(bp) > 1e-12):
            raise ValueError("monotonicity of b± violated")
        if np.any(bm > 0.0) or np.any(bp < 0.0):
            raise ValueError("sign pattern b- <= 0 <= b+ violated")
        for name, arr in (("grid", grid), ("b_minus", bm), ("b_plus", bp),
                          ("residuals", res)):
            object.__setattr__(self, name, arr)
            arr.setflags(write=False)

    def interpolate(self, t):
        """Monotone piecewise-linear (b-(t), b+(t)); exact at grid nodes."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.spec.T * (1 + 1e-12)):
            raise ValueError("t outside [0, T]")
        tc = np.clip(t, 0.0, self.spec.T)
        return (np.interp(tc, self.grid, self.b_minus),
                np.interp(tc, self.grid, self.b_plus))

    # -- serialization ----------------------------------------------------

    def to_json_dict(self, config: SolverConfig | None = None) -> dict:
        out = {
            "schema": JSON_SCHEMA,
            "spec": {"mu": self.spec.mu, "T": self.spec.T},
            "grid": self.grid.tolist(),
            "b_minus": self.b_minus.tolist(),
            "b_plus": self.b_plus.tolist(),
            "residual_minus": self.residuals[:, 0].tolist(),
            "residual_plus": self.residuals[:, 1].tolist(),
        }
        if config is not None:
            out["config"] = {
                "n_steps": config.n_steps, "max_iter": config.max_iter,
                "tol_b": config.tol_b, "tol_res": config.tol_res,
                "damping": config.damping,
            }
        return out

    def save_json(self, path, config: SolverConfig | None = None,
                  manifest_hash: str | None = None) -> None:
        doc = self.to_json_dict(config)
        if manifest_hash is not None:
            doc["manifest_hash"] = manifest_hash
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "BoundaryPair":
        if doc.get("schema") != JSON_SCHEMA:
            raise SchemaError(
                f"unknown boundary schema {doc.get('schema')!r}; "
                f"expected {JSON_SCHEMA!r}")
        spec = ProblemSpec(mu=float(doc["spec"]["mu"]),
                           T=float(doc["spec"]["T"]))
        res = np.column_stack([doc["residual_minus"], doc["residual_plus"]])
        return cls(spec=spec, grid=np.array(doc["grid"]),
                   b_minus=np.array(doc["b_minus"]),
                   b_plus=np.array(doc["b_plus"]), residuals=res)

    @classmethod
    def load_json(cls, path) -> "BoundaryPair":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"not a boundary JSON file: {exc}") from exc
        if not isinstance(doc, dict):
            raise SchemaError("boundary JSON must be an object")
        return cls.from_json_dict(doc)

    def save_csv(self, path, manifest_hash: str | None = None) -> None:
        hc = h_curves(self.spec, self.grid)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if manifest_hash is not None:
                fh.write(f"# manifest_hash={manifest_hash}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "b_minus", "b_plus", "h_minus", "h_plus",
                             "residual_minus", "residual_plus"])
            for k in range(self.grid.size):
                writer.writerow([f"{v:.17g}" for v in
                                 (self.grid[k], self.b_minus[k],
                                  self.b_plus[k], hc.h_minus[k],
                                  hc.h_plus[k], self.residuals[k, 0],
                                  self.residuals[k, 1])])


class SchemaError(ValueError):
    """Unrecognized or malformed serialized artifact."""


def interpolate_boundary(bp: BoundaryPair, t):
    """(b-(t), b+(t)) by monotone piecewise-linear interpolation."""
    return bp.interpolate(t)


def sqrt_time_grid(T: float, n_steps: int) -> np.ndarray:
    """Grid uniform in v = sqrt(T - t): t_k = T(1 - ((n-k)/n)^2)."""
    k = np.arange(n_steps + 1)
    return T * (1.0 - ((n_steps - k) / n_steps) ** 2)


def _window_arrays(t_k, beta_m, beta_p, grid, bm, bp, k, s_nodes):
    """Boundary values at absolute times t_k + s, self-consistent at t_k.

    Future values come from the solved tail of the grid; inside the first
    cell the current iterate at t_k is a knot, so the step's equations see
    exactly the interpolant later used by ``interpolate_boundary``.
    """
    knots_t = np.concatenate([[t_k], grid[k + 1:]])
    u = t_k + s_nodes
    zm = np.interp(u, knots_t, np.concatenate([[beta_m], bm[k + 1:]]))
    zp = np.interp(u, knots_t, np.concatenate([[beta_p], bp[k + 1:]]))
    return zm, zp


def _bracket_root(f, start, direction, scale, tol, max_expand=60,
                  max_bisect=80):
    """Find a root of f by expanding outward from `start`, then bisecting.

    `direction` is +-1; the bracket grows geometrically from a width
    proportional to `scale`.  Returns the midpoint once the bracket is
    narrower than `tol`; raises if no sign change is found.
    """
    a = start
    fa = f(a)
    if fa == 0.0:
        return a
    width = max(0.05 * scale, 4.0 * tol)
    b = a
    for _ in range(max_expand):
        b = b + direction * width
        fb = f(b)
        if fa * fb <= 0.0:
            break
        width *= 2.0
    else:
        raise RuntimeError("no sign change while bracketing boundary root")
    for _ in range(max_bisect):
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fa * fm <= 0.0:
            b, fb = mid, fm
        else:
            a, fa = mid, fm
        if abs(b - a) <= tol:
            break
    return 0.5 * (a + b)


def solve_boundaries(spec: ProblemSpec, cfg: SolverConfig = SolverConfig(),
                     n_lag: int = 128, n_gl: int = 64) -> BoundaryPair:
    """Sweep k = n-1 .. 0 solving the two coupled equations at each node.

    Per step: warm start from the previous node clipped outward to the
    h±-class, damped Newton with a finite-difference 2x2 Jacobian, and a
    bracketing bisection fallback whenever a Newton update misbehaves.
    Raises :class:`NonConvergenceError` on iteration exhaustion and
    :class:`InvariantViolationError` if the final monotonicity clamp moves
    any value by more than 10*tol_b.
    """
    T = spec.T
    n = cfg.n_steps
    grid = sqrt_time_grid(T, n)
    hc = h_curves(spec, grid)
    bm = np.zeros(n + 1)
    bp = np.zeros(n + 1)
    res = np.full((n + 1, 2), np.nan)
    res[n] = 0.0
    fd_h = 1e-7 * max(1.0, np.sqrt(T))

    for k in range(n - 1, -1, -1):
        t_k = grid[k]
        rule = lag_rule(T - t_k, n_lag)
        beta_m = min(bm[k + 1], hc.h_minus[k])
        beta_p = max(bp[k + 1], hc.h_plus[k])

        def residuals(b_m, b_p):
            zm, zp = _window_arrays(t_k, b_m, b_p, grid, bm, bp, k,
                                    rule.nodes)
            return lag_integral_batch(spec, t_k, np.array([b_m, b_p]),
                                      zm, zp, rule, n_gl=n_gl)

        def res_one(side, val):
            if side == 0:
                return residuals(val, beta_p)[0]
            return residuals(beta_m, val)[1]

        converged = False
        r = residuals(beta_m, beta_p)
        for _ in range(cfg.max_iter):
            if max(abs(r[0]), abs(r[1])) <= cfg.tol_res:
                converged = True
                break
            # one-sided outward FD Jacobian (stays inside the h±-class)
            r_m = residuals(beta_m - fd_h, beta_p)
            r_p = residuals(beta_m, beta_p + fd_h)
            jac = np.column_stack([(r - r_m) / fd_h, (r_p - r) / fd_h])
            try:
                step = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                step = np.array([np.inf, np.inf])
            limit = 0.25 * np.sqrt(T)
            if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > limit:
                # Newton unusable: bisect each coordinate outward from the
                # h±-class edge, where the admissible root must lie.
                scale = np.sqrt(T - t_k)
                try:
                    beta_m = _bracket_root(lambda v: res_one(0, v),
                                           hc.h_minus[k], -1.0, scale,
                                           cfg.tol_b)
                    beta_p = _bracket_root(lambda v: res_one(1, v),
                                           hc.h_plus[k], +1.0, scale,
                                           cfg.tol_b)
                except RuntimeError:
                    raise NonConvergenceError(k, t_k,
                                              float(np.max(np.abs(r))))
                r = residuals(beta_m, beta_p)
                continue
            beta_m_new = beta_m + cfg.damping * step[0]
            beta_p_new = beta_p + cfg.damping * step[1]
            # stay in the uniqueness class
            beta_m_new = min(beta_m_new, hc.h_minus[k])
            beta_p_new = max(beta_p_new, hc.h_plus[k])
            moved = max(abs(beta_m_new - beta_m), abs(beta_p_new - beta_p))
            beta_m, beta_p = beta_m_new, beta_p_new
            r = residuals(beta_m, beta_p)
            if moved <= cfg.tol_b and max(abs(r[0]), abs(r[1])) <= cfg.tol_res:
                converged = True
                break
        if not converged:
            raise NonConvergenceError(k, t_k, float(np.max(np.abs(r))))
        bm[k], bp[k] = beta_m, beta_p
        res[k] = r

    # enforce monotonicity exactly; large clamps signal a grid problem
    clamp = 0.0
    for k in range(n - 1, -1, -1):
        bm_c = min(bm[k], bm[k + 1])
        bp_c = max(bp[k], bp[k + 1])
        clamp = max(clamp, abs(bm_c - bm[k]), abs(bp_c - bp[k]))
        bm[k], bp[k] = bm_c, bp_c
    if clamp > 10.0 * cfg.tol_b:
        raise InvariantViolationError(
            f"monotonicity clamp of {clamp:.3e} exceeds 10*tol_b="
            f"{10 * cfg.tol_b:.3e}; refine the time grid")
    if np.any(bm > hc.h_minus + 1e-9) or np.any(bp < hc.h_plus - 1e-9):
        raise InvariantViolationError("solution left the h±(t) class")
    return BoundaryPair(spec=spec, grid=grid, b_minus=bm, b_plus=bp,
                        residuals=res)


def boundary_residuals(spec: ProblemSpec, bp: BoundaryPair, times,
                       n_lag: int = 256, n_gl: int = 128) -> np.ndarray:
    """Re-evaluate both Volterra equations at given times, shape (m, 2).

    Uses an independent quadrature (by default 2x the solver's node counts)
    and the solved pair's own interpolant for the windows, so the result
    certifies the returned object rather than the solver's internals.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.empty((times.size, 2))
    for i, t in enumerate(times):
        if t >= spec.T:
            out[i] = 0.0
            continue
        rule = lag_rule(spec.T - t, n_lag)
        zm, zp = bp.interpolate(t + rule.nodes)
        xm, xp = bp.interpolate(t)
        out[i] = lag_integral_batch(spec, t, np.array([xm, xp]), zm, zp,
                                    rule, n_gl=n_gl)
    return out
