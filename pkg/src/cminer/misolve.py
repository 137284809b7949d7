"""Exact mixed-boolean feasibility engine for disjunctive box constraints.

A problem is a conjunction of *groups*; each group is a disjunction of
*literals* ("at least one boolean in the group is on"); an active literal
imposes a conjunction of affine inequality rows on the continuous variables
(constraint-model parameters plus optional auxiliary witness coordinates).
Problems of this shape arise when compiling safe states and lower-cost
trajectories against a union-of-boxes (or complement-of-box) constraint
model.

The solver is a depth-first branch-and-bound over groups:

* unit propagation on the at-least-one cardinality constraints,
* interval-domain propagation on the continuous variables after every
  commit (the axis-aligned structure decouples dimensions, so interval
  reasoning at a fixed boolean assignment is exact),
* most-constrained-first group ordering,
* groups whose literals are all single-variable caps are never branched
  on: they are viability-pruned during search and discharged at the leaf
  against a polarity-extreme witness, which is exact for this row class.

Completeness contract: with rows limited to single-variable caps and
unit-coefficient difference rows (everything this package compiles,
including minimum-side-length and lexicographic symmetry rows), an
``INFEASIBLE`` answer is a proof; exceeding the node or time budget raises
:class:`BudgetExceeded` instead, never a wrong answer.

The optional big-M mode keeps every literal's rows in the problem, relaxed
by ``+M`` when the literal is off.  For ``M >= compute_big_M(...)`` it
agrees with the exact interval path; an undersized ``M`` visibly changes
answers, which is what the bound-matters regression checks.
"""

from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .core import Box, BoxUnionParam
from .hitrun import hit_and_run_chain

log = logging.getLogger(__name__)

_TOL = 1e-9          # slack for floating-point row checks
_MIN_TIGHTEN = 1e-12  # ignore bound updates smaller than this


class Infeasible:
    """Singleton marker: exhaustive search proved no solution exists."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFEASIBLE"

    def __bool__(self):
        return False


INFEASIBLE = Infeasible()


class BudgetExceeded(RuntimeError):
    """Search budget ran out before an answer was proven."""

    def __init__(self, msg: str, nodes: int = 0, seconds: float = 0.0):
        super().__init__(msg)
        self.nodes = nodes
        self.seconds = seconds


@dataclass(frozen=True)
class Row:
    """Sparse affine inequality  sum_i coef_i * x_{vars_i} <= rhs."""

    vars: tuple[int, ...]
    coefs: tuple[float, ...]
    rhs: float

    def __post_init__(self):
        if len(self.vars) != len(self.coefs):
            raise ValueError("vars/coefs length mismatch")
        object.__setattr__(self, "vars", tuple(int(v) for v in self.vars))
        object.__setattr__(self, "coefs", tuple(float(c) for c in self.coefs))
        object.__setattr__(self, "rhs", float(self.rhs))

    def relaxed(self, m: float) -> "Row":
        return Row(self.vars, self.coefs, self.rhs + m)

    def value(self, x: np.ndarray) -> float:
        return float(sum(c * x[v] for c, v in zip(self.coefs, self.vars)))

    def holds(self, x: np.ndarray, tol: float = _TOL) -> bool:
        return self.value(x) <= self.rhs + tol


def upper_cap(var: int, rhs: float) -> Row:
    """x_var <= rhs."""
    return Row((var,), (1.0,), rhs)


def lower_cap(var: int, rhs: float) -> Row:
    """x_var >= rhs, stored as -x_var <= -rhs."""
    return Row((var,), (-1.0,), -rhs)


@dataclass(frozen=True)
class Literal:
    """A boolean whose activation imposes ``rows`` jointly."""

    rows: tuple[Row, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    @property
    def single_var_only(self) -> bool:
        return all(len(r.vars) == 1 for r in self.rows)


@dataclass(frozen=True)
class Group:
    """At-least-one disjunction over literal ids.

    ``relaxable`` groups may be skipped by the max-consistency solve.
    ``defer_hint`` marks groups the search should not branch on: their
    literals are single-variable caps that all pull the parameters the same
    way (exclusion-style rows), so they can be viability-pruned during
    search and discharged exactly at the leaf.  The engine validates the
    hint and silently demotes groups that do not qualify.  ``box_scope``
    names the box whose parameters the group's rows touch; the leaf repair
    for minimum-side-length models uses it.
    """

    literal_ids: tuple[int, ...]
    relaxable: bool = False
    label: str = ""
    box_scope: int | None = None
    defer_hint: bool = False

    def __post_init__(self):
        if not self.literal_ids:
            raise ValueError("group needs at least one literal")
        object.__setattr__(self, "literal_ids",
                           tuple(int(i) for i in self.literal_ids))


@dataclass(frozen=True)
class BoxLayout:
    """Variable layout of a union-of-boxes model over the solver vector.

    Box ``b``'s lower corner coordinate ``d`` lives at variable
    ``b * 2n + d`` and its upper corner at ``b * 2n + n + d``; auxiliary
    variables follow all box parameters.
    """

    n_boxes: int
    n_dims: int

    @property
    def theta_dim(self) -> int:
        return 2 * self.n_boxes * self.n_dims

    def lo_var(self, box: int, dim: int) -> int:
        return box * 2 * self.n_dims + dim

    def hi_var(self, box: int, dim: int) -> int:
        return box * 2 * self.n_dims + self.n_dims + dim


@dataclass(frozen=True)
class MIProblem:
    """Immutable disjunctive feasibility problem.

    ``var_lo``/``var_hi`` bound every continuous variable (parameters
    first, then auxiliaries); ``global_rows`` always apply; ``big_m`` is
    the relaxation constant used by the big-M solve path.
    """

    theta_dim: int
    aux_dim: int
    var_lo: tuple[float, ...]
    var_hi: tuple[float, ...]
    literals: tuple[Literal, ...]
    groups: tuple[Group, ...]
    global_rows: tuple[Row, ...] = ()
    big_m: float = 1e6
    layout: BoxLayout | None = None
    min_side: float | None = None

    def __post_init__(self):
        nv = self.theta_dim + self.aux_dim
        if len(self.var_lo) != nv or len(self.var_hi) != nv:
            raise ValueError("variable bounds must cover theta + aux")
        if self.big_m <= 0:
            raise ValueError("big_m must be positive")
        object.__setattr__(self, "var_lo", tuple(map(float, self.var_lo)))
        object.__setattr__(self, "var_hi", tuple(map(float, self.var_hi)))
        object.__setattr__(self, "literals", tuple(self.literals))
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "global_rows", tuple(self.global_rows))
        for g in self.groups:
            for lid in g.literal_ids:
                if not 0 <= lid < len(self.literals):
                    raise ValueError(f"group {g.label!r}: literal id {lid} out of range")
        for row in self._all_rows():
            for v in row.vars:
                if not 0 <= v < nv:
                    raise ValueError(f"row references variable {v} out of range")

    def _all_rows(self) -> Iterable[Row]:
        yield from self.global_rows
        for lit in self.literals:
            yield from lit.rows

    @property
    def n_vars(self) -> int:
        return self.theta_dim + self.aux_dim

    def extended(self, extra_groups: Sequence[tuple[Group, Sequence[Literal]]] = (),
                 extra_global_rows: Sequence[Row] = (),
                 extra_aux_bounds: Sequence[tuple[float, float]] = ()) -> "MIProblem":
        """New problem with additional aux variables, groups, and rows.

        ``extra_groups`` pairs each new group with its literals; literal ids
        inside the supplied groups index the *new* literals (0-based) and
        are re-based onto the combined literal table.
        """
        literals = list(self.literals)
        groups = list(self.groups)
        for grp, lits in extra_groups:
            base = len(literals)
            literals.extend(lits)
            groups.append(replace(
                grp, literal_ids=tuple(base + i for i in grp.literal_ids)))
        return replace(
            self,
            aux_dim=self.aux_dim + len(extra_aux_bounds),
            var_lo=self.var_lo + tuple(b[0] for b in extra_aux_bounds),
            var_hi=self.var_hi + tuple(b[1] for b in extra_aux_bounds),
            literals=tuple(literals),
            groups=tuple(groups),
            global_rows=self.global_rows + tuple(extra_global_rows),
        )

    # -- JSON debugging dump (external interface) ---------------------------

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "miproblem",
            "theta_dim": self.theta_dim,
            "aux_dim": self.aux_dim,
            "var_lo": list(self.var_lo),
            "var_hi": list(self.var_hi),
            "big_m": self.big_m,
            "min_side": self.min_side,
            "layout": None if self.layout is None else
                {"n_boxes": self.layout.n_boxes, "n_dims": self.layout.n_dims},
            "global_rows": [_row_json(r) for r in self.global_rows],
            "literals": [[_row_json(r) for r in lit.rows] for lit in self.literals],
            "groups": [{
                "literal_ids": list(g.literal_ids),
                "relaxable": g.relaxable,
                "label": g.label,
                "box_scope": g.box_scope,
            } for g in self.groups],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MIProblem":
        layout = doc.get("layout")
        return cls(
            theta_dim=int(doc["theta_dim"]),
            aux_dim=int(doc["aux_dim"]),
            var_lo=tuple(doc["var_lo"]),
            var_hi=tuple(doc["var_hi"]),
            literals=tuple(Literal(tuple(_row_from_json(r) for r in rows))
                           for rows in doc["literals"]),
            groups=tuple(Group(literal_ids=tuple(g["literal_ids"]),
                               relaxable=bool(g["relaxable"]),
                               label=g.get("label", ""),
                               box_scope=g.get("box_scope"))
                         for g in doc["groups"]),
            global_rows=tuple(_row_from_json(r) for r in doc["global_rows"]),
            big_m=float(doc["big_m"]),
            layout=None if layout is None else BoxLayout(**layout),
            min_side=doc.get("min_side"),
        )


def _row_json(r: Row) -> dict:
    return {"vars": list(r.vars), "coefs": list(r.coefs), "rhs": r.rhs}


def _row_from_json(doc: dict) -> Row:
    return Row(tuple(doc["vars"]), tuple(doc["coefs"]), float(doc["rhs"]))


@dataclass
class SolveStats:
    nodes: int = 0
    propagations: int = 0
    conflicts: int = 0
    seconds: float = 0.0


@dataclass
class MISolution:
    """Verified witness: parameters, aux point, and boolean assignment."""

    theta: np.ndarray
    aux: np.ndarray
    booleans: np.ndarray
    satisfied_groups: np.ndarray
    stats: SolveStats

    @property
    def point(self) -> np.ndarray:
        return np.concatenate([self.theta, self.aux])


@dataclass(frozen=True)
class SolveBudget:
    max_nodes: int = 10_000_000
    max_seconds: float | None = None


DEFAULT_BUDGET = SolveBudget()


# ---------------------------------------------------------------------------
# Engine internals
# ---------------------------------------------------------------------------

class _Engine:
    def __init__(self, problem: MIProblem, budget: SolveBudget,
                 use_big_m: bool, maximize_relaxed: bool):
        self.p = problem
        self.budget = budget
        self.maximize_relaxed = maximize_relaxed
        self.stats = SolveStats()
        self.t0 = time.monotonic()

        self.lo = np.asarray(problem.var_lo, dtype=float).copy()
        self.hi = np.asarray(problem.var_hi, dtype=float).copy()
        if np.any(~np.isfinite(self.lo)) or np.any(~np.isfinite(self.hi)):
            raise ValueError("variable bounds must be finite")

        self.active_rows: list[Row] = list(problem.global_rows)
        if use_big_m:
            # Every literal's rows hold with +M slack whether or not the
            # boolean is on; activation then tightens them to the exact rhs.
            m = problem.big_m
            for lit in problem.literals:
                self.active_rows.extend(r.relaxed(m) for r in lit.rows)
        self.adj: dict[int, list[int]] = {}
        for ridx, row in enumerate(self.active_rows):
            for v in row.vars:
                self.adj.setdefault(v, []).append(ridx)

        # Group bookkeeping.
        self.n_groups = len(problem.groups)
        self.satisfied = np.zeros(self.n_groups, dtype=bool)
        self.skipped = np.zeros(self.n_groups, dtype=bool)
        self.chosen_literal = np.full(self.n_groups, -1, dtype=int)
        self.deferred = np.zeros(self.n_groups, dtype=bool)
        for gi, g in enumerate(problem.groups):
            lits = [problem.literals[l] for l in g.literal_ids]
            # Relaxable groups stay committed so skips can be counted.
            self.deferred[gi] = (not g.relaxable
                                 and all(l.single_var_only for l in lits))
        self.var_groups: dict[int, list[int]] = {}
        for gi, g in enumerate(problem.groups):
            seen = set()
            for lid in g.literal_ids:
                for row in problem.literals[lid].rows:
                    seen.update(row.vars)
            for v in seen:
                self.var_groups.setdefault(v, []).append(gi)
        self.cache_valid = np.zeros(self.n_groups, dtype=bool)
        self.cache_viable: list[tuple[int, ...]] = [()] * self.n_groups
        self.cache_entailed = np.zeros(self.n_groups, dtype=bool)

        # Polarity-extreme witness direction per variable: +1 -> take upper
        # bound, -1 -> take lower bound, 0 -> midpoint.  Derived from the
        # rows of deferred groups, which are satisfied at extremes if at all.
        self.polarity = np.zeros(problem.n_vars, dtype=int)
        demote = set()
        for gi, g in enumerate(problem.groups):
            if not self.deferred[gi]:
                continue
            for lid in g.literal_ids:
                for row in problem.literals[lid].rows:
                    v, c = row.vars[0], row.coefs[0]
                    want = -1 if c > 0 else 1  # x <= r likes small x
                    if self.polarity[v] == 0:
                        self.polarity[v] = want
                    elif self.polarity[v] != want:
                        demote.add(v)
        if demote:
            for gi, g in enumerate(problem.groups):
                if not self.deferred[gi]:
                    continue
                touches = any(v in demote
                              for lid in g.literal_ids
                              for row in problem.literals[lid].rows
                              for v in row.vars)
                if touches:
                    self.deferred[gi] = False

        self.trail: list[tuple] = []

    # -- budget --------------------------------------------------------------

    def _tick(self):
        self.stats.nodes += 1
        if self.stats.nodes > self.budget.max_nodes:
            raise BudgetExceeded(
                f"node budget {self.budget.max_nodes} exceeded",
                nodes=self.stats.nodes, seconds=time.monotonic() - self.t0)
        if self.budget.max_seconds is not None and \
                (self.stats.nodes & 0xFF) == 0 and \
                time.monotonic() - self.t0 > self.budget.max_seconds:
            raise BudgetExceeded(
                f"time budget {self.budget.max_seconds}s exceeded",
                nodes=self.stats.nodes, seconds=time.monotonic() - self.t0)

    # -- trail / undo ---------------------------------------------------------

    def _mark(self) -> int:
        return len(self.trail)

    def _undo_to(self, mark: int):
        while len(self.trail) > mark:
            kind, a, b = self.trail.pop()
            if kind == 0:    # lo change
                self.lo[a] = b
                self._dirty_var(a)
            elif kind == 1:  # hi change
                self.hi[a] = b
                self._dirty_var(a)
            elif kind == 2:  # group satisfied flag
                self.satisfied[a] = False
                self.chosen_literal[a] = -1
            elif kind == 3:  # rows appended
                del self.active_rows[a:]
                for v, ridx_list in b:
                    del self.adj[v][-ridx_list:]
            elif kind == 4:  # group skipped
                self.skipped[a] = False

    def _dirty_var(self, v: int):
        for gi in self.var_groups.get(v, ()):
            self.cache_valid[gi] = False

    # -- interval propagation --------------------------------------------------

    def _set_lo(self, v: int, val: float) -> bool:
        if val > self.lo[v] + _MIN_TIGHTEN:
            self.trail.append((0, v, self.lo[v]))
            self.lo[v] = val
            self._dirty_var(v)
            return True
        return False

    def _set_hi(self, v: int, val: float) -> bool:
        if val < self.hi[v] - _MIN_TIGHTEN:
            self.trail.append((1, v, self.hi[v]))
            self.hi[v] = val
            self._dirty_var(v)
            return True
        return False

    def _row_min(self, row: Row) -> float:
        return sum(c * (self.lo[v] if c > 0 else self.hi[v])
                   for v, c in zip(row.vars, row.coefs))

    def _row_max(self, row: Row) -> float:
        return sum(c * (self.hi[v] if c > 0 else self.lo[v])
                   for v, c in zip(row.vars, row.coefs))

    def _propagate(self, seed_rows: Iterable[int]) -> bool:
        """Worklist bound tightening; False on domain wipeout."""
        queue = list(seed_rows)
        qi = 0
        while qi < len(queue):
            ridx = queue[qi]
            qi += 1
            row = self.active_rows[ridx]
            self.stats.propagations += 1
            minsum = self._row_min(row)
            if minsum > row.rhs + _TOL:
                self.stats.conflicts += 1
                return False
            for v, c in zip(row.vars, row.coefs):
                other = minsum - (c * (self.lo[v] if c > 0 else self.hi[v]))
                bound = (row.rhs - other) / c
                changed = self._set_hi(v, bound) if c > 0 else self._set_lo(v, bound)
                if changed:
                    if self.lo[v] > self.hi[v] + _TOL:
                        self.stats.conflicts += 1
                        return False
                    queue.extend(self.adj.get(v, ()))
                    if len(queue) > 4_000_000:
                        raise BudgetExceeded("propagation runaway",
                                             nodes=self.stats.nodes)
        return True

    def _activate_rows(self, rows: Sequence[Row]) -> bool:
        base = len(self.active_rows)
        per_var: dict[int, int] = {}
        for i, row in enumerate(rows):
            self.active_rows.append(row)
            for v in row.vars:
                self.adj.setdefault(v, []).append(base + i)
                per_var[v] = per_var.get(v, 0) + 1
        self.trail.append((3, base, tuple(per_var.items())))
        return self._propagate(range(base, base + len(rows)))

    # -- literal / group state ---------------------------------------------------

    def _literal_viable(self, lid: int) -> bool:
        return all(self._row_min(r) <= r.rhs + _TOL
                   for r in self.p.literals[lid].rows)

    def _literal_entailed(self, lid: int) -> bool:
        return all(self._row_max(r) <= r.rhs + _TOL
                   for r in self.p.literals[lid].rows)

    def _group_info(self, gi: int) -> tuple[tuple[int, ...], bool]:
        if not self.cache_valid[gi]:
            g = self.p.groups[gi]
            viable = tuple(l for l in g.literal_ids if self._literal_viable(l))
            entailed = any(self._literal_entailed(l) for l in viable)
            self.cache_viable[gi] = viable
            self.cache_entailed[gi] = entailed
            self.cache_valid[gi] = True
        return self.cache_viable[gi], self.cache_entailed[gi]

    def _scan(self):
        """Classify open groups.

        Returns ``(conflict_group | None, best_group | None)``; best_group
        is the most-constrained open committed group, None when only
        deferred groups remain open (leaf).
        """
        best = None
        best_key = None
        for gi in range(self.n_groups):
            if self.satisfied[gi] or self.skipped[gi]:
                continue
            viable, entailed = self._group_info(gi)
            if entailed:
                # Satisfied for free under current domains.
                ent = next(l for l in viable if self._literal_entailed(l))
                self.trail.append((2, gi, None))
                self.satisfied[gi] = True
                self.chosen_literal[gi] = ent
                continue
            if not viable:
                return gi, None
            if self.deferred[gi]:
                continue
            key = (len(viable), gi)
            if best_key is None or key < best_key:
                best_key = key
                best = gi
        return None, best

    # -- leaf ---------------------------------------------------------------------

    def _leaf_witness(self) -> np.ndarray | None:
        """Construct and verify a point for the current boolean assignment."""
        point = np.empty(self.p.n_vars)
        mark = self._mark()
        ok = True
        for v in range(self.p.n_vars):
            for target in self._witness_targets(v):
                sub = self._mark()
                changed = self._set_lo(v, target) | self._set_hi(v, target)
                if self.lo[v] > self.hi[v] + _TOL:
                    self._undo_to(sub)
                    continue
                if changed and not self._propagate(
                        [r for r in self.adj.get(v, ())]):
                    self._undo_to(sub)
                    continue
                point[v] = target
                break
            else:
                ok = False
                break
        if ok:
            ok = self._check_deferred_at(point)
            if not ok and self.p.min_side is not None and self.p.layout:
                repaired = self._min_side_repair(point)
                if repaired is not None:
                    point, ok = repaired, True
        self._undo_to(mark)
        return point if ok else None

    def _witness_targets(self, v: int):
        lo, hi = self.lo[v], self.hi[v]
        mid = 0.5 * (lo + hi)
        if self.polarity[v] > 0:
            return (hi, lo, mid)
        if self.polarity[v] < 0:
            return (lo, hi, mid)
        return (mid, lo, hi)

    def _check_deferred_at(self, point: np.ndarray) -> bool:
        for gi in range(self.n_groups):
            if self.satisfied[gi] or self.skipped[gi]:
                continue
            g = self.p.groups[gi]
            sat = -1
            for lid in g.literal_ids:
                if all(r.holds(point) for r in self.p.literals[lid].rows):
                    sat = lid
                    break
            if sat < 0:
                return False
            self.chosen_literal[gi] = sat
        return True

    def _min_side_repair(self, point: np.ndarray) -> np.ndarray | None:
        """Re-place boxes that must grow to the minimum side length.

        With every deferred row preferring a smaller box, a feasible box of
        side >= min_side exists iff one of side exactly min_side (clamped to
        the domain rectangle) does; candidate positions per dimension come
        from the row thresholds inside the growth window.
        """
        layout = self.p.layout
        s = float(self.p.min_side)
        n = layout.n_dims
        out = point.copy()
        for b in range(layout.n_boxes):
            lo_v = [layout.lo_var(b, d) for d in range(n)]
            hi_v = [layout.hi_var(b, d) for d in range(n)]
            # Empty boxes (inverted first coordinate) need no repair.
            if out[lo_v[0]] > out[hi_v[0]]:
                continue
            deficit = [d for d in range(n)
                       if out[hi_v[d]] - out[lo_v[d]] < s - _TOL]
            if not deficit:
                if not self._box_groups_ok(b, out):
                    return None
                continue
            cand_per_dim = []
            for d in deficit:
                vl, vh = lo_v[d], hi_v[d]
                base_lo, base_hi = self.hi[vl], self.lo[vh]  # tightest box
                lo_min = max(self.lo[vl], base_hi - s)
                lo_max = min(base_lo, self.hi[vh] - s)
                if lo_max < lo_min - _TOL:
                    return None
                cands = {lo_min, lo_max}
                for gi in self.var_groups.get(vl, []):
                    for lid in self.p.groups[gi].literal_ids:
                        for row in self.p.literals[lid].rows:
                            if row.vars == (vl,) and row.coefs[0] < 0:
                                c = -row.rhs  # lo >= c
                                if lo_min - _TOL <= c <= lo_max + _TOL:
                                    cands.add(min(max(c, lo_min), lo_max))
                for gi in self.var_groups.get(vh, []):
                    for lid in self.p.groups[gi].literal_ids:
                        for row in self.p.literals[lid].rows:
                            if row.vars == (vh,) and row.coefs[0] > 0:
                                c = row.rhs - s  # hi <= c  ->  lo <= c - s
                                if lo_min - _TOL <= c <= lo_max + _TOL:
                                    cands.add(min(max(c, lo_min), lo_max))
                cand_per_dim.append((d, sorted(cands)))
            combos = itertools.product(*[c for _, c in cand_per_dim])
            for combo in itertools.islice(combos, 20000):
                trial = out.copy()
                for (d, _), v in zip(cand_per_dim, combo):
                    trial[lo_v[d]] = v
                    trial[hi_v[d]] = v + s
                if self._box_groups_ok(b, trial):
                    out = trial
                    break
            else:
                return None
        if not self._check_deferred_at(out):
            return None
        for row in self.active_rows:
            if not row.holds(out):
                return None
        return out

    def _box_groups_ok(self, b: int, point: np.ndarray) -> bool:
        for gi in range(self.n_groups):
            g = self.p.groups[gi]
            if g.box_scope != b or self.satisfied[gi] or self.skipped[gi]:
                continue
            if not any(all(r.holds(point) for r in self.p.literals[lid].rows)
                       for lid in g.literal_ids):
                return False
        return True

    # -- search ---------------------------------------------------------------

    def search(self):
        """DFS; returns (best_solution | None, best_skips) for maximize mode,
        or the first solution for pure feasibility."""
        best_solution = None
        best_skips = None

        # Iterative DFS stack: (group, viable literals, next index, mark,
        # tried_skip)
        if not self._propagate(range(len(self.active_rows))):
            return None, None
        stack = []

        def snapshot():
            booleans = np.zeros(len(self.p.literals), dtype=int)
            for gi in range(self.n_groups):
                if self.chosen_literal[gi] >= 0:
                    booleans[self.chosen_literal[gi]] = 1
            return booleans

        while True:
            self._tick()
            conflict, best = self._scan()
            if conflict is not None:
                g = self.p.groups[conflict]
                if self.maximize_relaxed and g.relaxable \
                        and not self.skipped[conflict]:
                    # No viable literal: forced skip, charged below via the
                    # normal skip bookkeeping.
                    self.trail.append((4, conflict, None))
                    self.skipped[conflict] = True
                    n_skips = int(np.sum(self.skipped))
                    if best_skips is not None and n_skips >= best_skips:
                        if not self._backtrack(stack):
                            break
                    continue
                if not self._backtrack(stack):
                    break
                continue
            if best is None:
                point = self._leaf_witness()
                if point is None:
                    if not self._backtrack(stack):
                        break
                    continue
                n_skips = int(np.sum(self.skipped))
                sol = MISolution(
                    theta=point[:self.p.theta_dim].copy(),
                    aux=point[self.p.theta_dim:].copy(),
                    booleans=snapshot(),
                    satisfied_groups=~self.skipped.copy(),
                    stats=self.stats,
                )
                if not self.maximize_relaxed:
                    return sol, 0
                if best_skips is None or n_skips < best_skips:
                    best_solution, best_skips = sol, n_skips
                    if best_skips == 0:
                        return best_solution, 0
                if not self._backtrack(stack):
                    break
                continue
            viable, _ = self._group_info(best)
            if self.maximize_relaxed and best_skips is not None:
                if int(np.sum(self.skipped)) >= best_skips:
                    if not self._backtrack(stack):
                        break
                    continue
            stack.append([best, viable, 0, self._mark(), False])
            if not self._descend(stack):
                break

        return best_solution, best_skips

    def _descend(self, stack) -> bool:
        """Try the next option of the top frame; pops exhausted frames."""
        while stack:
            frame = stack[-1]
            gi, viable, idx, mark, tried_skip = frame
            self._undo_to(mark)
            if idx < len(viable):
                frame[2] += 1
                lid = viable[idx]
                self.trail.append((2, gi, None))
                self.satisfied[gi] = True
                self.chosen_literal[gi] = lid
                if self._activate_rows(self.p.literals[lid].rows):
                    return True
                continue
            if self.maximize_relaxed and self.p.groups[gi].relaxable \
                    and not tried_skip:
                frame[4] = True
                self.trail.append((4, gi, None))
                self.skipped[gi] = True
                return True
            stack.pop()
        return False

    def _backtrack(self, stack) -> bool:
        return self._descend(stack)


def _finish_stats(engine: _Engine):
    engine.stats.seconds = time.monotonic() - engine.t0
    log.debug("misolve stats", extra={"solver_stats": {
        "nodes": engine.stats.nodes,
        "propagations": engine.stats.propagations,
        "conflicts": engine.stats.conflicts,
        "seconds": engine.stats.seconds,
        "groups": engine.n_groups,
    }})


def solve_feasible(problem: MIProblem, budget: SolveBudget | None = None,
                   use_big_m: bool = False):
    """Find a verified solution or prove none exists.

    Returns an :class:`MISolution` or :data:`INFEASIBLE`.  Raises
    :class:`BudgetExceeded` when the search budget runs out; a budget stop
    is never reported as infeasibility.
    """
    engine = _Engine(problem, budget or DEFAULT_BUDGET, use_big_m,
                     maximize_relaxed=False)
    try:
        sol, _ = engine.search()
    finally:
        _finish_stats(engine)
    if sol is None:
        return INFEASIBLE
    verify_solution(problem, sol, use_big_m=use_big_m)
    return sol


def solve_max_consistency(problem: MIProblem, budget: SolveBudget | None = None,
                          use_big_m: bool = False):
    """Satisfy all hard groups and as many relaxable groups as possible.

    Returns ``(solution_or_INFEASIBLE, satisfied_relaxable_count)``.
    Optimality is proven by the same exhaustive search (branch-and-bound on
    the skip count).
    """
    engine = _Engine(problem, budget or DEFAULT_BUDGET, use_big_m,
                     maximize_relaxed=True)
    try:
        sol, skips = engine.search()
    finally:
        _finish_stats(engine)
    n_relax = sum(1 for g in problem.groups if g.relaxable)
    if sol is None:
        return INFEASIBLE, 0
    verify_solution(problem, sol, allow_skipped=True, use_big_m=use_big_m)
    return sol, n_relax - int(skips)


def verify_solution(problem: MIProblem, sol: MISolution,
                    allow_skipped: bool = False, use_big_m: bool = False,
                    tol: float = 1e-7) -> None:
    """Independent replay of every constraint; raises on any violation."""
    x = sol.point
    lo = np.asarray(problem.var_lo)
    hi = np.asarray(problem.var_hi)
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        raise AssertionError("solution violates variable bounds")
    for row in problem.global_rows:
        if not row.holds(x, tol):
            raise AssertionError(f"solution violates global row {row}")
    for gi, g in enumerate(problem.groups):
        on = [lid for lid in g.literal_ids if sol.booleans[lid] == 1]
        if not on:
            if allow_skipped and g.relaxable and not sol.satisfied_groups[gi]:
                continue
            raise AssertionError(f"group {gi} ({g.label}) has no active literal")
        for lid in on:
            for row in problem.literals[lid].rows:
                if not row.holds(x, tol):
                    raise AssertionError(
                        f"active literal {lid} of group {gi} violated: {row}")
    if use_big_m:
        m = problem.big_m
        for lid, lit in enumerate(problem.literals):
            if sol.booleans[lid] == 0:
                for row in lit.rows:
                    if not row.holds(x, tol + m):
                        raise AssertionError(
                            f"big-M relaxed row violated for literal {lid}")


def check_point_feasible(problem: MIProblem, theta: np.ndarray,
                         tol: float = _TOL) -> bool:
    """Is a fixed parameter vector consistent with every group?

    Only valid for problems without auxiliary variables.
    """
    if problem.aux_dim:
        raise ValueError("point feasibility needs an aux-free problem")
    x = np.asarray(theta, dtype=float)
    lo = np.asarray(problem.var_lo)
    hi = np.asarray(problem.var_hi)
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        return False
    if not all(r.holds(x, tol) for r in problem.global_rows):
        return False
    for g in problem.groups:
        if not any(all(r.holds(x, tol) for r in problem.literals[lid].rows)
                   for lid in g.literal_ids):
            return False
    return True


def sample_feasible_thetas(problem: MIProblem, n: int, seed: int,
                           burn_in: int = 50, max_line_trials: int = 40,
                           budget: SolveBudget | None = None) -> np.ndarray:
    """Hit-and-run samples from the feasible parameter set.

    Starts at a ``solve_feasible`` witness; every emitted sample is
    re-verified by constraint replay.  Deterministic given ``seed``.
    """
    start = solve_feasible(problem, budget)
    if start is INFEASIBLE:
        return INFEASIBLE
    if n == 1:
        return np.asarray([start.theta])
    rng = np.random.default_rng(seed)
    samples = hit_and_run_chain(
        start.theta,
        np.asarray(problem.var_lo), np.asarray(problem.var_hi),
        lambda th: check_point_feasible(problem, th),
        n_samples=n, burn_in=burn_in, max_line_trials=max_line_trials,
        rng=rng)
    for s in samples:
        if not check_point_feasible(problem, s, tol=1e-7):
            raise AssertionError("sampled parameter failed feasibility replay")
    return samples


def compute_big_M(safe_states, unsafe_states, param: BoxUnionParam) -> float:
    """Sufficient big-M constant for the box encodings, plus a unit margin.

    For axis-aligned boxes the face functions are affine in the corner
    parameters, so maximizing the face violation over the parameter bounds
    reduces to corner enumeration: per dimension, the largest gap between a
    data coordinate and the most-adverse corner bound.
    """
    pts = [np.atleast_2d(np.asarray(s, float)) for s in (safe_states, unsafe_states)
           if s is not None and len(s)]
    if not pts:
        raise ValueError("compute_big_M needs at least one data point")
    data = np.vstack(pts)
    n = param.dim
    if data.shape[1] != n:
        raise ValueError("data dimension does not match parameterization")
    blo = np.asarray(param.bounds.lo, float)
    bhi = np.asarray(param.bounds.hi, float)
    if not (np.all(np.isfinite(blo)) and np.all(np.isfinite(bhi))):
        raise ValueError("parameter bounds must be finite for big-M")
    lo_max = bhi[:n]        # largest allowed lower corner
    hi_min = blo[n:]        # smallest allowed upper corner
    gap_upper = np.max(data - hi_min[None, :])   # (k_d - hi_d) worst case
    gap_lower = np.max(lo_max[None, :] - data)   # (lo_d - k_d) worst case
    return 1.0 + float(max(gap_upper, gap_lower))
