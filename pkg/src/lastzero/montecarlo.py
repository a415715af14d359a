"""Seeded Monte Carlo for E|g - tau| under grid stopping policies.

Paths of B^mu on a uniform grid come from exact Gaussian increments (the
process is Gaussian; there is no Euler error).  The last zero g of each
path is detected per grid interval: a sign change is a sure crossing placed
by linear interpolation; two same-sign endpoints hide a crossing with the
Brownian-bridge probability exp(-2 x_k x_{k+1} / dt), resolved by a
Bernoulli draw and placed uniformly.  Policies stop at the first grid time
in their stopping set; estimates across policies share paths (common
random numbers).

Randomness is counter-based and splittable: path i of a run seeded s draws
from Philox keyed (s, i), so results are independent of chunking and of
any parallel schedule, and bit-reproducible on one platform.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .closed_forms import ProblemSpec
from .boundaries import BoundaryPair

MAX_STORED_PATHS = 10_000


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    n_steps: int
    seed: int
    bridge_correction: bool = True

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.n_steps < 2:
            raise ValueError("n_steps must be >= 2")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class PathEnsemble:
    spec: ProblemSpec
    cfg: SimConfig
    times: np.ndarray              # (n_steps + 1,)
    paths: np.ndarray              # (n_paths, n_steps + 1)


@dataclass(frozen=True)
class PolicyReport:
    policy_name: str
    estimate: float
    std_error: float
    n_paths: int
    seed: int
    spec: ProblemSpec

    def __post_init__(self):
        if self.std_error < 0.0:
            raise ValueError("standard error must be >= 0")
        if not -1e-12 <= self.estimate <= self.spec.T * (1 + 1e-12):
            raise ValueError("estimate of E|g - tau| must lie in [0, T]")

    def to_json_dict(self) -> dict:
        return {"policy": self.policy_name, "estimate": self.estimate,
                "std_error": self.std_error, "n_paths": self.n_paths,
                "seed": self.seed,
                "spec": {"mu": self.spec.mu, "T": self.spec.T}}

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_dict())


def _path_generator(seed: int, path_index: int) -> np.random.Generator:
    key = np.array([seed, path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_chunk(spec: ProblemSpec, cfg: SimConfig, start: int, n: int):
    """Paths, bridge uniforms, and placement uniforms for paths [start, start+n).

    Every path consumes a fixed number of draws from its own substream, so
    ensembles are identical however the work is chunked.
    """
    dt = spec.T / cfg.n_steps
    z = np.empty((n, cfg.n_steps))
    u_bridge = np.empty((n, cfg.n_steps))
    u_place = np.empty(n)
    for i in range(n):
        rng = _path_generator(cfg.seed, start + i)
        z[i] = rng.standard_normal(cfg.n_steps)
        u_bridge[i] = rng.random(cfg.n_steps)
        u_place[i] = rng.random()
    w = np.empty((n, cfg.n_steps + 1))
    w[:, 0] = 0.0
    np.cumsum(spec.mu * dt + np.sqrt(dt) * z, axis=1, out=w[:, 1:])
    return w, u_bridge, u_place


def simulate_paths(spec: ProblemSpec, cfg: SimConfig) -> PathEnsemble:
    """Materialize an ensemble (small runs only; see MAX_STORED_PATHS)."""
    if cfg.n_paths > MAX_STORED_PATHS:
        raise ValueError(
            f"n_paths={cfg.n_paths} exceeds the {MAX_STORED_PATHS}-path "
            "storage guard; use evaluate_policy / evaluate_policies, "
            "which stream")
    times = np.linspace(0.0, spec.T, cfg.n_steps + 1)
    w, _, _ = _draw_chunk(spec, cfg, 0, cfg.n_paths)
    return PathEnsemble(spec=spec, cfg=cfg, times=times, paths=w)


def _last_zeros(times, w, u_bridge, u_place, bridge_on: bool) -> np.ndarray:
    """Vectorized last-zero detection for a chunk of paths."""
    dt = times[1] - times[0]
    a = w[:, :-1]
    b = w[:, 1:]
    prod = a * b
    crossing = prod < 0.0
    crossing |= b == 0.0
    if bridge_on:
        same = prod > 0.0
        with np.errstate(over="ignore", under="ignore"):
            p = np.exp(-2.0 * np.clip(prod, 0.0, None) / dt)
        crossing |= same & (u_bridge < p)
    has = crossing.any(axis=1)
    n_int = crossing.shape[1]
    last = n_int - 1 - np.argmax(crossing[:, ::-1], axis=1)
    rows = np.arange(w.shape[0])
    a_k = a[rows, last]
    b_k = b[rows, last]
    t_k = times[last]
    sign_change = a_k * b_k < 0.0
    denom = np.where(sign_change, a_k - b_k, 1.0)  # avoid 0/0 off-branch
    g = np.where(sign_change, t_k + dt * a_k / denom,
                 np.where(b_k == 0.0, t_k + dt, t_k + dt * u_place))
    return np.where(has, g, 0.0)


def last_zero_of_path(path, spec: ProblemSpec, cfg: SimConfig,
                      rng: np.random.Generator | None = None) -> float:
    """Last detected zero of one discretized path (grid of cfg.n_steps).

    Bridge Bernoullis (if enabled) come from `rng`; the default is a fixed
    side-channel substream of cfg.seed, kept away from path substreams.
    """
    path = np.asarray(path, dtype=float)
    if path.shape != (cfg.n_steps + 1,):
        raise ValueError("path length must equal cfg.n_steps + 1")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(
            key=np.array([cfg.seed, 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)))
    times = np.linspace(0.0, spec.T, cfg.n_steps + 1)
    u_bridge = rng.random((1, cfg.n_steps))
    u_place = rng.random(1)
    return float(_last_zeros(times, path[np.newaxis, :], u_bridge, u_place,
                             cfg.bridge_correction)[0])


def collect_last_zeros(spec: ProblemSpec, cfg: SimConfig,
                       chunk: int = 1000) -> np.ndarray:
    """Stream the ensemble and return the n_paths last-zero times."""
    chunk = max(1, min(chunk, int(8_000_000 // (cfg.n_steps + 1))))
    times = np.linspace(0.0, spec.T, cfg.n_steps + 1)
    out = np.empty(cfg.n_paths)
    done = 0
    while done < cfg.n_paths:
        n = min(chunk, cfg.n_paths - done)
        w, u_bridge, u_place = _draw_chunk(spec, cfg, done, n)
        out[done:done + n] = _last_zeros(times, w, u_bridge, u_place,
                                         cfg.bridge_correction)
        done += n
    return out


# -- stopping rules -------------------------------------------------------


class StoppingRule:
    """Grid policy: stop at the first time the path enters the rule's set."""

    name = "abstract"

    def stop_mask(self, times: np.ndarray, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def taus(self, times: np.ndarray, w: np.ndarray) -> np.ndarray:
        mask = self.stop_mask(times, w)
        # the terminal column is all-True for every rule below, so argmax
        # always lands on a genuine stopping index
        return times[np.argmax(mask, axis=1)]


class OptimalRule(StoppingRule):
    def __init__(self, bp: BoundaryPair, factor: float = 1.0):
        self.bp = bp
        self.factor = factor
        self.name = ("optimal" if factor == 1.0
                     else f"scaled_optimal:{factor:g}")

    def stop_mask(self, times, w):
        zm, zp = self.bp.interpolate(times)
        return (w <= self.factor * zm) | (w >= self.factor * zp)


def ScaledOptimalRule(bp: BoundaryPair, factor: float) -> OptimalRule:
    return OptimalRule(bp, factor=factor)


class SqrtRule(StoppingRule):
    """Stop when |B_t| >= z sqrt(T - t)."""

    def __init__(self, z: float, T: float):
        self.z = z
        self.T = T
        self.name = f"sqrt_rule:{z:g}"

    def stop_mask(self, times, w):
        return np.abs(w) >= self.z * np.sqrt(np.maximum(self.T - times, 0.0))


class FixedTimeRule(StoppingRule):
    """tau identically equal to a constant time (clipped to [0, T])."""

    def __init__(self, c: float, T: float):
        self.c = float(np.clip(c, 0.0, T))
        self.name = f"fixed_time:{c:g}"

    def stop_mask(self, times, w):
        return np.broadcast_to(times >= self.c, w.shape)

    def taus(self, times, w):
        return np.full(w.shape[0], self.c)


def parse_policy(text: str, spec: ProblemSpec,
                 bp: BoundaryPair | None = None) -> StoppingRule:
    """Parse CLI policy strings: optimal | fixed_time:C | sqrt_rule:Z |
    scaled_optimal:F."""
    kind, _, arg = text.partition(":")
    if kind == "optimal":
        if bp is None:
            raise ValueError("policy 'optimal' needs boundaries")
        return OptimalRule(bp)
    if kind == "scaled_optimal":
        if bp is None:
            raise ValueError("policy 'scaled_optimal' needs boundaries")
        return OptimalRule(bp, factor=float(arg))
    if kind == "sqrt_rule":
        return SqrtRule(float(arg), spec.T)
    if kind == "fixed_time":
        return FixedTimeRule(float(arg), spec.T)
    raise ValueError(f"unknown policy name {text!r}")


def evaluate_policies(spec: ProblemSpec, rules, cfg: SimConfig,
                      chunk: int = 1000) -> list[PolicyReport]:
    """One streamed ensemble pass scoring every rule on the same paths."""
    rules = list(rules)
    # keep the per-chunk working set around ~10^7 floats
    chunk = max(1, min(chunk, int(8_000_000 // (cfg.n_steps + 1))))
    times = np.linspace(0.0, spec.T, cfg.n_steps + 1)
    sums = np.zeros(len(rules))
    sq = np.zeros(len(rules))
    done = 0
    while done < cfg.n_paths:
        n = min(chunk, cfg.n_paths - done)
        w, u_bridge, u_place = _draw_chunk(spec, cfg, done, n)
        g = _last_zeros(times, w, u_bridge, u_place, cfg.bridge_correction)
        for j, rule in enumerate(rules):
            err = np.abs(g - rule.taus(times, w))
            sums[j] += err.sum()
            sq[j] += (err * err).sum()
        done += n
    n = cfg.n_paths
    out = []
    for j, rule in enumerate(rules):
        mean = sums[j] / n
        var = max(sq[j] / n - mean * mean, 0.0) * (n / max(n - 1, 1))
        out.append(PolicyReport(policy_name=rule.name, estimate=float(mean),
                                std_error=float(np.sqrt(var / n)),
                                n_paths=n, seed=cfg.seed, spec=spec))
    return out


def evaluate_policy(spec: ProblemSpec, rule: StoppingRule,
                    cfg: SimConfig, chunk: int = 1000) -> PolicyReport:
    return evaluate_policies(spec, [rule], cfg, chunk=chunk)[0]


PER_PATH_DTYPE = np.dtype([("path_id", np.int64), ("g", float),
                           ("tau", float), ("abs_error", float)])


def per_path_records(spec: ProblemSpec, rule: StoppingRule,
                     cfg: SimConfig, chunk: int = 1000) -> np.ndarray:
    """Per-path (path_id, g, tau, |g - tau|) table for small runs.

    The same substream design as the estimators applies, so the rows here
    are exactly the paths a PolicyReport with the same cfg averaged over.
    Guarded by MAX_STORED_PATHS: the dump is a diagnostic artifact, not a
    bulk format; large runs go through the streaming estimators.
    """
    if cfg.n_paths > MAX_STORED_PATHS:
        raise ValueError(
            f"n_paths={cfg.n_paths} exceeds the {MAX_STORED_PATHS}-path "
            "per-path dump guard; dumps are for small runs")
    chunk = max(1, min(chunk, int(8_000_000 // (cfg.n_steps + 1))))
    times = np.linspace(0.0, spec.T, cfg.n_steps + 1)
    out = np.empty(cfg.n_paths, dtype=PER_PATH_DTYPE)
    out["path_id"] = np.arange(cfg.n_paths)
    done = 0
    while done < cfg.n_paths:
        n = min(chunk, cfg.n_paths - done)
        w, u_bridge, u_place = _draw_chunk(spec, cfg, done, n)
        g = _last_zeros(times, w, u_bridge, u_place, cfg.bridge_correction)
        tau = rule.taus(times, w)
        out["g"][done:done + n] = g
        out["tau"][done:done + n] = tau
        out["abs_error"][done:done + n] = np.abs(g - tau)
        done += n
    return out


def save_per_path_csv(path, records: np.ndarray,
                      manifest_hash: str | None = None) -> None:
    """Write a per_path_records table as CSV (path_id, g, tau, abs_error)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if manifest_hash is not None:
            fh.write(f"# manifest_hash={manifest_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path_id", "g", "tau", "abs_error"])
        for rec in records:
            writer.writerow([int(rec["path_id"])]
                            + [f"{float(rec[k]):.17g}"
                               for k in ("g", "tau", "abs_error")])
