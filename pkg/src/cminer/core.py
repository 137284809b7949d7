"""Shared domain types: trajectories, tasks, box-union constraint models.

Conventions used throughout the package:

* A *constraint state* is a point in an n-dimensional constraint space,
  obtained from a trajectory through a configured mapping.
* The unsafe set is **closed** (points on a box face count as unsafe) and
  the safe set is open.  Strict inequalities are realized numerically with
  a margin ``STRICT_MARGIN``; floating point cannot represent open sets.
* Boxes with ``lo > hi`` in some coordinate are legal and denote the empty
  box.  This representation is required so that over-parameterized models
  (more boxes than needed) stay expressible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

# Margin used to encode strict inequalities ("outside the box") in solvers
# and membership tests.  See module docstring.
STRICT_MARGIN = 1e-6

# Relative tolerance for the stored-cost-vs-recomputed-cost invariant.
COST_RTOL = 1e-9


class DimensionMismatch(ValueError):
    """Inputs disagree on constraint-space or state-space dimension."""


def _vec(x, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must have finite entries")
    return v


@dataclass(frozen=True)
class Box:
    """Axis-aligned hyper-rectangle ``[lo, hi]``; ``lo > hi`` means empty."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise DimensionMismatch("box lo/hi length mismatch")
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def is_empty(self) -> bool:
        return any(l > h for l, h in zip(self.lo, self.hi))

    def contains(self, point) -> bool:
        """Closed-face containment test."""
        p = np.asarray(point, dtype=float)
        if p.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"point dim {p.shape[-1]} != box dim {self.dim}")
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized closed containment for an (m, n) array of points."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"points dim {pts.shape[-1]} != box dim {self.dim}")
        return np.all(pts >= self.lo, axis=-1) & np.all(pts <= self.hi, axis=-1)

    def volume(self) -> float:
        if self.is_empty:
            return 0.0
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def intersect(self, other: "Box") -> "Box":
        return Box(tuple(np.maximum(self.lo, other.lo)),
                   tuple(np.minimum(self.hi, other.hi)))


@dataclass(frozen=True)
class BoxUnionParam:
    """Constraint hypothesis: the unsafe set as a union of axis-aligned boxes.

    ``bounds`` is the per-box parameter search region, a 2n-dimensional box
    over ``(lo_1..lo_n, hi_1..hi_n)``; every box's corner parameters must be
    searched inside it.  ``min_side`` optionally forces each nonempty box to
    have at least that side length in every dimension.

    With ``complement=True`` the model is inverted: the *safe* set is the
    single box and everything on or outside its faces is unsafe.  This is
    the natural parameterization when a quantity must be kept inside an
    (unknown) band, e.g. a velocity envelope.  Requires exactly one box.
    """

    boxes: tuple[Box, ...]
    bounds: Box
    min_side: float | None = None
    complement: bool = False

    def __post_init__(self):
        if not self.boxes:
            raise ValueError("need at least one box")
        object.__setattr__(self, "boxes", tuple(self.boxes))
        n = self.boxes[0].dim
        if any(b.dim != n for b in self.boxes):
            raise DimensionMismatch("boxes of differing dimensions")
        if self.bounds.dim != 2 * n:
            raise DimensionMismatch(
                f"bounds must be {2 * n}-dimensional (lo then hi parts), "
                f"got {self.bounds.dim}")
        if self.complement and len(self.boxes) != 1:
            raise ValueError("complement mode requires exactly one box")
        if self.min_side is not None and self.min_side < 0:
            raise ValueError("min_side must be nonnegative")

    @property
    def dim(self) -> int:
        return self.boxes[0].dim

    @property
    def n_boxes(self) -> int:
        return len(self.boxes)

    def with_boxes(self, boxes: Sequence[Box]) -> "BoxUnionParam":
        return replace(self, boxes=tuple(boxes))


def eval_membership(k, param: BoxUnionParam) -> bool:
    """True iff constraint state ``k`` is unsafe under ``param``.

    Standard mode: ``k`` lies inside at least one nonempty box (closed
    faces).  Complement mode: ``k`` is *not strictly inside* the safe box.
    """
    p = _vec(k, "constraint state")
    if p.shape[0] != param.dim:
        raise DimensionMismatch(
            f"state dim {p.shape[0]} != parameter dim {param.dim}")
    if param.complement:
        box = param.boxes[0]
        if box.is_empty:
            return True
        return bool(np.any(p <= box.lo) or np.any(p >= box.hi))
    return any(not b.is_empty and b.contains(p) for b in param.boxes)


def eval_membership_many(points: np.ndarray, param: BoxUnionParam) -> np.ndarray:
    """Vectorized :func:`eval_membership` over an (m, n) array."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != param.dim:
        raise DimensionMismatch(
            f"points dim {pts.shape[-1]} != parameter dim {param.dim}")
    if param.complement:
        box = param.boxes[0]
        if box.is_empty:
            return np.ones(pts.shape[0], dtype=bool)
        inside_open = np.all(pts > box.lo, axis=-1) & np.all(pts < box.hi, axis=-1)
        return ~inside_open
    out = np.zeros(pts.shape[0], dtype=bool)
    for b in param.boxes:
        if not b.is_empty:
            out |= b.contains_many(pts)
    return out


# ---------------------------------------------------------------------------
# Trajectories, tasks, demonstrations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostSpec:
    """Per-step trajectory cost.

    ``kind="sq_step"``: sum of squared step norms over all state coordinates.
    ``kind="step_norm"``: sum of (non-squared) step norms over the coordinates
    selected by ``coords`` (all coordinates when None).  The selected-
    coordinate variant covers costs that penalize path length jointly with a
    subset of velocity components.
    """

    kind: str = "sq_step"
    coords: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("sq_step", "step_norm"):
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.coords is not None:
            object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))


def trajectory_cost(states, controls, cost_spec: CostSpec) -> float:
    """Evaluate the task cost on a discrete state/control sequence.

    Nonnegative; exactly zero iff all selected steps are identical.
    ``controls`` is accepted for signature uniformity; the built-in costs
    depend on states only.
    """
    del controls
    xs = np.asarray(states, dtype=float)
    if xs.ndim != 2:
        raise ValueError("states must be a (T, n) array")
    if xs.shape[0] < 1:
        raise ValueError("states must be non-empty")
    if xs.shape[0] == 1:
        return 0.0
    if cost_spec.coords is not None:
        xs = xs[:, list(cost_spec.coords)]
    steps = np.diff(xs, axis=0)
    if cost_spec.kind == "sq_step":
        return float(np.sum(steps * steps))
    return float(np.sum(np.linalg.norm(steps, axis=1)))


@dataclass(frozen=True)
class Trajectory:
    """A discrete state/control trajectory with its task cost.

    ``len(controls) == len(states) - 1`` and ``cost`` must equal the task
    cost recomputed from the states/controls to within 1e-9 relative.
    """

    states: tuple[tuple[float, ...], ...]
    controls: tuple[tuple[float, ...], ...]
    cost: float

    def __post_init__(self):
        states = tuple(tuple(float(v) for v in s) for s in self.states)
        controls = tuple(tuple(float(v) for v in u) for u in self.controls)
        if not states:
            raise ValueError("trajectory needs at least one state")
        if len(controls) != len(states) - 1:
            raise ValueError(
                f"controls length {len(controls)} != states length - 1 "
                f"({len(states) - 1})")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "cost", float(self.cost))

    @classmethod
    def from_arrays(cls, states, controls, cost_spec: CostSpec) -> "Trajectory":
        states = np.atleast_2d(np.asarray(states, dtype=float))
        controls = np.asarray(controls, dtype=float).reshape(len(states) - 1, -1)
        cost = trajectory_cost(states, controls, cost_spec)
        return cls(tuple(map(tuple, states)), tuple(map(tuple, controls)), cost)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def state_array(self) -> np.ndarray:
        return np.asarray(self.states, dtype=float)

    def control_array(self) -> np.ndarray:
        if not self.controls:
            w = len(self.states[0])
            return np.zeros((0, w))
        return np.asarray(self.controls, dtype=float)

    def check_cost(self, cost_spec: CostSpec) -> None:
        expected = trajectory_cost(self.state_array(), self.control_array(),
                                   cost_spec)
        scale = max(abs(expected), 1.0)
        if abs(expected - self.cost) > COST_RTOL * scale:
            raise ValueError(
                f"stored cost {self.cost} does not match recomputed cost "
                f"{expected}")


@dataclass(frozen=True)
class Task:
    """Start/goal reaching task over a fixed horizon."""

    start: tuple[float, ...]
    goal: tuple[float, ...]
    goal_tolerance: float
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(float(v) for v in self.goal))
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2 states")
        if self.goal_tolerance < 0:
            raise ValueError("goal_tolerance must be >= 0")


@dataclass(frozen=True)
class Demonstration:
    """A safe trajectory solving its task within suboptimality ``suboptimality``.

    ``suboptimality`` is the factor by which the demonstration's cost may
    exceed the optimum; lower-cost trajectory sampling thresholds at
    ``cost / (1 + suboptimality)``.
    """

    trajectory: Trajectory
    suboptimality: float = 0.0

    def __post_init__(self):
        if self.suboptimality < 0:
            raise ValueError("suboptimality must be >= 0")

    def check_task(self, task: Task) -> None:
        xs = self.trajectory.state_array()
        if not np.allclose(xs[0], task.start, atol=1e-12):
            raise ValueError("demonstration does not start at task start")
        gap = float(np.linalg.norm(xs[-1] - np.asarray(task.goal)))
        if gap > task.goal_tolerance + 1e-12:
            raise ValueError(
                f"demonstration ends {gap:.6g} from goal, tolerance "
                f"{task.goal_tolerance:.6g}")


@dataclass(frozen=True)
class ConstraintMapping:
    """Deterministic state-indexed map from trajectories to constraint states.

    ``map_states`` takes a (T, state_dim) array and returns a (T, n) array:
    one constraint state per trajectory state.
    """

    map_states: Callable[[np.ndarray], np.ndarray]
    out_dim: int
    name: str = "custom"

    def apply(self, states: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(states, dtype=float))
        out = np.asarray(self.map_states(xs), dtype=float)
        if out.ndim != 2 or out.shape[0] != xs.shape[0] or out.shape[1] != self.out_dim:
            raise DimensionMismatch(
                f"mapping produced shape {out.shape}, expected "
                f"({xs.shape[0]}, {self.out_dim})")
        return out


def coordinate_mapping(coords: Sequence[int], name: str | None = None) -> ConstraintMapping:
    """Constraint mapping that selects a subset of state coordinates."""
    idx = tuple(int(c) for c in coords)
    return ConstraintMapping(
        map_states=lambda xs: xs[:, list(idx)],
        out_dim=len(idx),
        name=name or f"coords{idx}",
    )


def identity_mapping(dim: int) -> ConstraintMapping:
    return ConstraintMapping(map_states=lambda xs: xs, out_dim=dim,
                             name="identity")


@dataclass(frozen=True)
class SafetyVerdict:
    """Answer of the guaranteed-safety oracle for one constraint state."""

    GUARANTEED_SAFE = "GuaranteedSafe"
    GUARANTEED_UNSAFE = "GuaranteedUnsafe"
    UNKNOWN = "Unknown"

    tag: str
    budget_hit: bool = False

    def __post_init__(self):
        if self.tag not in (self.GUARANTEED_SAFE, self.GUARANTEED_UNSAFE,
                            self.UNKNOWN):
            raise ValueError(f"bad verdict tag {self.tag!r}")

    @property
    def is_safe(self) -> bool:
        return self.tag == self.GUARANTEED_SAFE

    @property
    def is_unsafe(self) -> bool:
        return self.tag == self.GUARANTEED_UNSAFE


def concat_trajectories(first: Trajectory, second: Trajectory,
                        cost_spec: CostSpec) -> Trajectory:
    """Join two trajectories sharing an endpoint state."""
    if first.states[-1] != second.states[0]:
        raise ValueError("trajectories do not share an endpoint")
    states = first.states + second.states[1:]
    controls = first.controls + second.controls
    return Trajectory.from_arrays(states, controls, cost_spec)
