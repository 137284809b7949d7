"""Discrete-time dynamics, control bounds, and built-in environments.

All models are stateless: ``step`` is a pure function of (state, control,
time index), so rollouts are deterministic and thread-safe.  Black-box
simulators plug in through the same ``step`` interface; nothing in the
package ever assumes closed-form access to the dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (Box, CostSpec, DimensionMismatch, Trajectory,
                   coordinate_mapping, identity_mapping, ConstraintMapping)


class ControlBoundViolation(ValueError):
    """A control vector falls outside the environment's admissible set."""


@dataclass(frozen=True)
class ControlBounds:
    """Either a 2-norm ball (``norm_max``) or a per-dimension box."""

    kind: str  # "norm2" | "box"
    norm_max: float | None = None
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None

    def admissible(self, u: np.ndarray) -> bool:
        if self.kind == "norm2":
            return float(np.linalg.norm(u)) <= self.norm_max + 1e-12
        return bool(np.all(u >= np.asarray(self.lo) - 1e-12)
                    and np.all(u <= np.asarray(self.hi) + 1e-12))

    def check(self, u: np.ndarray) -> None:
        if not self.admissible(u):
            raise ControlBoundViolation(f"control {u} outside bounds {self}")

    def ambient_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Smallest axis-aligned box containing the admissible set."""
        if self.kind == "norm2":
            return (np.full_like(np.atleast_1d(0.0), -self.norm_max),
                    np.full_like(np.atleast_1d(0.0), self.norm_max))
        return np.asarray(self.lo, float), np.asarray(self.hi, float)


def norm_bounds(norm_max: float) -> ControlBounds:
    return ControlBounds(kind="norm2", norm_max=float(norm_max))


def box_bounds(lo, hi) -> ControlBounds:
    return ControlBounds(kind="box", lo=tuple(map(float, lo)),
                         hi=tuple(map(float, hi)))


@dataclass(frozen=True)
class DynamicsModel:
    """Deterministic discrete-time model with control admissibility."""

    name: str
    state_dim: int
    control_dim: int
    step: Callable[[np.ndarray, np.ndarray, int], np.ndarray]
    control_bounds: ControlBounds
    dt: float = 1.0
    # States every trajectory must satisfy regardless of the unknown
    # constraint (e.g. an a-priori-known obstacle).  None = no state checks.
    known_state_ok: Callable[[np.ndarray], bool] | None = None

    def states_ok(self, states: np.ndarray) -> bool:
        if self.known_state_ok is None:
            return True
        return all(self.known_state_ok(np.asarray(x, float)) for x in states)


# ---------------------------------------------------------------------------
# Kinematic integrator
# ---------------------------------------------------------------------------

def kinematic_step(x: np.ndarray, u: np.ndarray, bounds: ControlBounds) -> np.ndarray:
    """Single integrator: next state is ``x + u``; rejects out-of-bound u."""
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    if x.shape != u.shape:
        raise DimensionMismatch(f"state {x.shape} vs control {u.shape}")
    bounds.check(u)
    return x + u


def kinematic_model(dim: int, norm_max: float,
                    known_state_ok=None) -> DynamicsModel:
    bounds = norm_bounds(norm_max)
    return DynamicsModel(
        name=f"kinematic{dim}d",
        state_dim=dim,
        control_dim=dim,
        step=lambda x, u, t: kinematic_step(x, u, bounds),
        control_bounds=bounds,
        known_state_ok=known_state_ok,
    )


# ---------------------------------------------------------------------------
# 12D quadrotor, forward Euler
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadrotorConfig:
    """Physical constants; all positive.

    Gravity is stored as a magnitude.  Vertical acceleration follows the
    z-down convention ``z_acc = g_mag - (cos g * cos b) * u1 / m`` so that the
    thrust bound ``u1 in [0, m*g_mag]`` is non-degenerate and hover sits at
    ``u1 = m*g_mag``.
    """

    m: float = 1.0
    ix: float = 0.5
    iy: float = 0.1
    iz: float = 0.3
    g_mag: float = 9.81
    dt: float = 0.4

    def __post_init__(self):
        for name in ("m", "ix", "iy", "iz", "g_mag", "dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def control_bounds(self) -> ControlBounds:
        return box_bounds((0.0, -0.02, -0.02, -0.02),
                          (self.m * self.g_mag, 0.02, 0.02, 0.02))


def quadrotor_deriv(x: np.ndarray, u: np.ndarray, cfg: QuadrotorConfig) -> np.ndarray:
    """Continuous-time vector field of the 12D model.

    State layout: [px, py, pz, a, b, g, vx, vy, vz, wa, wb, wg] where
    (a, b, g) are the attitude angles and (wa, wb, wg) the rate states the
    angular-velocity constraint acts on.
    """
    _, _, _, a, b, g, vx, vy, vz, wa, wb, wg = x
    u1, u2, u3, u4 = u
    cfgm, ix, iy, iz = cfg.m, cfg.ix, cfg.iy, cfg.iz
    sa, ca = np.sin(a), np.cos(a)
    sb, cb = np.sin(b), np.cos(b)
    sg, cg = np.sin(g), np.cos(g)
    return np.array([
        vx,
        vy,
        vz,
        wb * sg / cb + wg * cg / cb,
        wb * cg - wg * sg,
        wa + wb * sg * np.tan(b) + wg * cg * np.tan(b),
        -(sg * sa + cg * ca * sb) * u1 / cfgm,
        -(ca * sg - cg * sa * sb) * u1 / cfgm,
        cfg.g_mag - (cg * cb) * u1 / cfgm,
        (iy - iz) / ix * wb * wg + u2 / ix,
        (iz - ix) / iy * wa * wg + u3 / iy,
        (ix - iy) / iz * wa * wb + u4 / iz,
    ])


def quadrotor_step(x: np.ndarray, u: np.ndarray, cfg: QuadrotorConfig) -> np.ndarray:
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    if x.shape != (12,) or u.shape != (4,):
        raise DimensionMismatch("quadrotor expects 12D state, 4D control")
    cfg.control_bounds().check(u)
    return x + cfg.dt * quadrotor_deriv(x, u, cfg)


def quadrotor_model(cfg: QuadrotorConfig | None = None,
                    known_state_ok=None) -> DynamicsModel:
    cfg = cfg or QuadrotorConfig()
    return DynamicsModel(
        name="quadrotor12d",
        state_dim=12,
        control_dim=4,
        step=lambda x, u, t: quadrotor_step(x, u, cfg),
        control_bounds=cfg.control_bounds(),
        dt=cfg.dt,
        known_state_ok=known_state_ok,
    )


# ---------------------------------------------------------------------------
# Generic serial chain forward kinematics
# ---------------------------------------------------------------------------

_AXES = {
    "x": np.array([1.0, 0.0, 0.0]),
    "y": np.array([0.0, 1.0, 0.0]),
    "z": np.array([0.0, 0.0, 1.0]),
}


def _axis_rotation(axis: str, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def rotation_to_euler(R: np.ndarray) -> tuple[float, float, float]:
    """Angles (rx, ry, rz) such that R = Rz(rz) @ Ry(ry) @ Rx(rx)."""
    ry = float(np.arcsin(np.clip(-R[2, 0], -1.0, 1.0)))
    if abs(np.cos(ry)) < 1e-9:  # gimbal lock: fold rx into rz
        rx = 0.0
        rz = float(np.arctan2(-R[0, 1], R[1, 1]))
    else:
        rx = float(np.arctan2(R[2, 1], R[2, 2]))
        rz = float(np.arctan2(R[1, 0], R[0, 0]))
    return rx, ry, rz


def serial_chain_fk(joint_angles: Sequence[float],
                    link_params: Sequence[dict]) -> np.ndarray:
    """End-effector pose (x, y, z, rx, ry, rz) of a rotary serial chain.

    Each link is ``{"axis": "x"|"y"|"z", "length": float}``: rotate about
    the joint axis, then translate ``length`` along the rotated local
    x-axis.  The returned Euler angles satisfy R = Rz(rz) @ Ry(ry) @ Rx(rx).
    """
    if len(joint_angles) != len(link_params):
        raise DimensionMismatch("one joint angle per link required")
    R = np.eye(3)
    p = np.zeros(3)
    for angle, link in zip(joint_angles, link_params):
        R = R @ _axis_rotation(link["axis"], float(angle))
        p = p + R @ (float(link["length"]) * np.array([1.0, 0.0, 0.0]))
    rx, ry, rz = rotation_to_euler(R)
    return np.array([p[0], p[1], p[2], rx, ry, rz])


def chain_model(link_params: Sequence[dict], step_max: float,
                known_state_ok=None) -> DynamicsModel:
    """Kinematic joint-space chain: state = joint angles, u = joint steps."""
    dim = len(link_params)
    bounds = box_bounds([-step_max] * dim, [step_max] * dim)
    return DynamicsModel(
        name=f"chain{dim}",
        state_dim=dim,
        control_dim=dim,
        step=lambda x, u, t: (bounds.check(np.asarray(u, float)),
                              np.asarray(x, float) + np.asarray(u, float))[1],
        control_bounds=bounds,
        known_state_ok=known_state_ok,
    )


def chain_pose_mapping(link_params: Sequence[dict]) -> ConstraintMapping:
    params = [dict(axis=l["axis"], length=float(l["length"])) for l in link_params]
    return ConstraintMapping(
        map_states=lambda xs: np.array([serial_chain_fk(x, params) for x in xs]),
        out_dim=6,
        name="chain_pose",
    )


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------

def rollout(u_seq, x0, model: DynamicsModel, cost_spec: CostSpec) -> Trajectory:
    """Roll a control sequence through the dynamics; propagates step errors."""
    x = np.asarray(x0, dtype=float)
    if x.shape != (model.state_dim,):
        raise DimensionMismatch(
            f"x0 has shape {x.shape}, model expects ({model.state_dim},)")
    states = [x]
    u_seq = np.asarray(u_seq, dtype=float).reshape(-1, model.control_dim) \
        if len(u_seq) else np.zeros((0, model.control_dim))
    for t, u in enumerate(u_seq):
        x = np.asarray(model.step(states[-1], u, t), dtype=float)
        states.append(x)
    return Trajectory.from_arrays(np.array(states), u_seq, cost_spec)


def rollout_states(u_seq: np.ndarray, x0: np.ndarray,
                   model: DynamicsModel) -> np.ndarray:
    """States only, without cost bookkeeping (hot path for samplers)."""
    states = np.empty((len(u_seq) + 1, model.state_dim))
    states[0] = x0
    for t in range(len(u_seq)):
        states[t + 1] = model.step(states[t], u_seq[t], t)
    return states


# ---------------------------------------------------------------------------
# Environment configuration (External interface)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Environment:
    """A dynamics model plus cost and constraint mapping, as one bundle."""

    model: DynamicsModel
    cost_spec: CostSpec
    mapping: ConstraintMapping
    # State-space box used to bracket sampling chords in waypoint mode.
    region: Box | None = None


def avoid_boxes_predicate(boxes: Sequence[Box], coords: Sequence[int]):
    idx = list(coords)

    def ok(x: np.ndarray) -> bool:
        p = np.asarray(x, float)[idx]
        return not any((not b.is_empty) and b.contains(p) for b in boxes)

    return ok


def env_from_config(doc: dict) -> Environment:
    """Build an environment from its JSON description.

    Required keys: ``dynamics`` (name), plus per-dynamics parameters.
    Optional: ``known_unsafe_boxes`` ([{lo, hi}] with ``known_unsafe_coords``),
    ``cost`` ({kind, coords}), ``constraint_coords``, ``region`` ({lo, hi}).
    """
    from .serialize import box_from_json  # local import to avoid cycle

    name = doc.get("dynamics")
    known_ok = None
    if doc.get("known_unsafe_boxes"):
        boxes = [box_from_json(b, "known_unsafe_boxes") for b in doc["known_unsafe_boxes"]]
        coords = doc.get("known_unsafe_coords")
        if coords is None:
            coords = list(range(len(boxes[0].lo)))
        known_ok = avoid_boxes_predicate(boxes, coords)

    if name == "kinematic":
        dim = int(doc["dim"])
        model = kinematic_model(dim, float(doc["control_norm_max"]), known_ok)
        default_cost = CostSpec(kind="sq_step")
        default_map = identity_mapping(dim)
    elif name == "quadrotor":
        cfg = QuadrotorConfig(**doc.get("quadrotor", {}))
        model = quadrotor_model(cfg, known_ok)
        default_cost = CostSpec(kind="step_norm", coords=(0, 1, 2, 9, 10, 11))
        default_map = coordinate_mapping((9, 10, 11), name="angular_rates")
    elif name == "chain":
        links = doc["link_params"]
        model = chain_model(links, float(doc["joint_step_max"]), known_ok)
        default_cost = CostSpec(kind="sq_step")
        default_map = chain_pose_mapping(links)
    else:
        raise ValueError(f"unknown dynamics {name!r}")

    cost_spec = default_cost
    if "cost" in doc:
        cdoc = doc["cost"]
        cost_spec = CostSpec(kind=cdoc["kind"],
                             coords=tuple(cdoc["coords"]) if cdoc.get("coords") else None)
    mapping = default_map
    if "constraint_coords" in doc:
        mapping = coordinate_mapping(tuple(doc["constraint_coords"]))
    region = None
    if "region" in doc:
        region = box_from_json(doc["region"], "region")
    return Environment(model=model, cost_spec=cost_spec, mapping=mapping,
                       region=region)
