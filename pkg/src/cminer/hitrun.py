"""Generic hit-and-run chain over a membership-defined set.

Used both for lower-cost trajectory sampling (over control/waypoint vectors)
and for sampling feasible constraint parameters.  The target set may be
nonconvex: along each sampled direction the feasible chord is bracketed
inside an ambient box and points on it are rejection-sampled against the
membership predicate.  Convergence to the uniform distribution holds in the
limit; no finite-time coverage guarantee is made.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ChainStats:
    steps: int = 0
    accepted: int = 0
    membership_calls: int = 0


def hit_and_run_chain(x0: np.ndarray, box_lo: np.ndarray, box_hi: np.ndarray,
                      member, n_samples: int, burn_in: int,
                      max_line_trials: int, rng: np.random.Generator,
                      stats: ChainStats | None = None) -> np.ndarray:
    """Run a hit-and-run chain started at member point ``x0``.

    Returns an (n_samples, dim) array of post-burn-in chain states.  The
    chain state is recorded every step, including steps where every line
    trial was rejected (the chain stays put); this keeps the kernel's
    stationary distribution uniform on the member set.
    """
    x = np.asarray(x0, dtype=float).copy()
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    if x.shape != lo.shape or x.shape != hi.shape:
        raise ValueError("x0 and ambient box must have equal shapes")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if max_line_trials < 1:
        raise ValueError("max_line_trials must be >= 1")
    stats = stats if stats is not None else ChainStats()

    free = hi - lo > 0
    if not np.any(free):
        return np.tile(x, (n_samples, 1))

    out = np.empty((n_samples, x.size))
    kept = 0
    step = 0
    while kept < n_samples:
        d = np.zeros_like(x)
        d[free] = rng.standard_normal(int(np.sum(free)))
        norm = np.linalg.norm(d)
        if norm == 0.0:
            continue
        d /= norm
        # Bracket the chord of the ambient box through x along d.
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = np.where(d != 0, (lo - x) / d, -np.inf)
            t_hi = np.where(d != 0, (hi - x) / d, np.inf)
        t_min = float(np.max(np.minimum(t_lo, t_hi)))
        t_max = float(np.min(np.maximum(t_lo, t_hi)))
        if not np.isfinite(t_min) or not np.isfinite(t_max) or t_max <= t_min:
            t_min, t_max = 0.0, 0.0
        for _ in range(max_line_trials):
            t = rng.uniform(t_min, t_max)
            y = x + t * d
            stats.membership_calls += 1
            if member(y):
                x = y
                stats.accepted += 1
                break
        step += 1
        stats.steps += 1
        if step > burn_in:
            out[kept] = x
            kept += 1
    return out
