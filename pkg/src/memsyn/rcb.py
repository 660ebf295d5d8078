"""Random circuit breaker (RCB) lattice.

A ``rows x cols`` lattice sits between two electrode rails. Node layers are
numbered 0..rows; layer 0 is the top-electrode (TE) rail and layer ``rows``
the bottom-electrode (BE) rail, both collapsed to a single node. Layers
1..rows-1 hold ``cols`` nodes each.

Branches:

* vertical ``(i, j)`` joins layer ``i`` column ``j`` to layer ``i+1``
  column ``j`` (``rows x cols`` of them);
* horizontal ``(l, j)`` joins columns ``j`` and ``j+1`` inside internal
  layer ``l+1`` (``(rows-1) x (cols-1)`` of them).

Each branch is either ON (``r_on``) or OFF (``r_off``). A 1x1 lattice is a
single branch; a 1xN lattice is N branches in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

R_ON = 100.0
R_OFF = 1e6


class SingularLatticeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class RcbLattice:
    vertical: np.ndarray      # bool, (rows, cols)
    horizontal: np.ndarray    # bool, (rows - 1, cols - 1)
    r_on: float = R_ON
    r_off: float = R_OFF

    def __post_init__(self):
        v = np.asarray(self.vertical, dtype=bool)
        rows, cols = v.shape
        h = np.asarray(self.horizontal, dtype=bool).reshape(max(rows - 1, 0), max(cols - 1, 0))
        if rows < 1 or cols < 1:
            raise ValueError("lattice needs at least one row and one column")
        if not self.r_off > self.r_on > 0:
            raise ValueError(f"need r_off > r_on > 0, got r_on={self.r_on}, r_off={self.r_off}")
        v.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "vertical", v)
        object.__setattr__(self, "horizontal", h)

    @property
    def rows(self) -> int:
        return self.vertical.shape[0]

    @property
    def cols(self) -> int:
        return self.vertical.shape[1]

    @property
    def n_branches(self) -> int:
        return self.vertical.size + self.horizontal.size

    @classmethod
    def uniform(cls, rows: int, cols: int, on: bool = False, r_on: float = R_ON,
                r_off: float = R_OFF) -> "RcbLattice":
        return cls(np.full((rows, cols), on), np.full((rows - 1, cols - 1), on), r_on, r_off)

    @classmethod
    def from_states(cls, rows: int, cols: int, states: Sequence[bool], r_on: float = R_ON,
                    r_off: float = R_OFF) -> "RcbLattice":
        """Build from a flat branch-state vector (vertical first, row-major)."""
        states = np.asarray(states, dtype=bool)
        nv = rows * cols
        return cls(states[:nv].reshape(rows, cols), states[nv:].reshape(rows - 1, cols - 1),
                   r_on, r_off)

    def states(self) -> np.ndarray:
        return np.concatenate([self.vertical.ravel(), self.horizontal.ravel()])

    def resistances(self) -> np.ndarray:
        return np.where(self.states(), self.r_on, self.r_off)

    def with_states(self, states: Sequence[bool]) -> "RcbLattice":
        return RcbLattice.from_states(self.rows, self.cols, states, self.r_on, self.r_off)

    def __eq__(self, other):
        if not isinstance(other, RcbLattice):
            return NotImplemented
        return (self.vertical.shape == other.vertical.shape
                and np.array_equal(self.states(), other.states())
                and self.r_on == other.r_on and self.r_off == other.r_off)

    def __hash__(self):
        return hash((self.vertical.shape, self.states().tobytes(), self.r_on, self.r_off))

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "r_on": self.r_on, "r_off": self.r_off,
                "vertical": self.vertical.astype(int).tolist(),
                "horizontal": self.horizontal.astype(int).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RcbLattice":
        rows, cols = int(d["rows"]), int(d["cols"])
        v = np.array(d["vertical"], dtype=bool).reshape(rows, cols)
        h = np.array(d.get("horizontal", []), dtype=bool).reshape(rows - 1, cols - 1)
        return cls(v, h, float(d.get("r_on", R_ON)), float(d.get("r_off", R_OFF)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def branch_endpoints(rows: int, cols: int) -> list[tuple[int, int]]:
    """Node pairs ``(a, b)`` per branch in flat order; node 0 is TE, node 1 is BE.

    Internal node ``(layer l, col j)`` has index ``2 + (l - 1) * cols + j``.
    Drops are measured from ``a`` to ``b`` (top to bottom, left to right).
    """
    def node(layer, j):
        if layer == 0:
            return 0
        if layer == rows:
            return 1
        return 2 + (layer - 1) * cols + j

    ends = [(node(i, j), node(i + 1, j)) for i in range(rows) for j in range(cols)]
    ends += [(node(l, j), node(l, j + 1)) for l in range(1, rows) for j in range(cols - 1)]
    return ends


def node_potentials(lattice: RcbLattice, v_applied: float = 1.0) -> np.ndarray:
    """Potentials of all nodes with TE at ``v_applied`` and BE grounded."""
    rows, cols = lattice.rows, lattice.cols
    n = 2 + (rows - 1) * cols
    ends = np.array(branch_endpoints(rows, cols), dtype=int)
    g = 1.0 / lattice.resistances()
    lap = np.zeros((n, n))
    a, b = ends[:, 0], ends[:, 1]
    np.add.at(lap, (a, a), g)
    np.add.at(lap, (b, b), g)
    np.add.at(lap, (a, b), -g)
    np.add.at(lap, (b, a), -g)
    phi = np.zeros(n)
    phi[0] = v_applied
    if n > 2:
        inner = slice(2, n)
        rhs = -lap[inner, 0] * v_applied
        try:
            phi[inner] = np.linalg.solve(lap[inner, inner], rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularLatticeError("rails are not connected through the lattice") from exc
    return phi


def equivalent_resistance(lattice: RcbLattice, v_applied: float = 1.0
                          ) -> tuple[float, np.ndarray]:
    """Rail-to-rail resistance and the voltage drop on every branch.

    The resistance does not depend on the bias; drops are returned for
    ``v_applied`` (all zero when it is 0).
    """
    phi = node_potentials(lattice, 1.0)
    ends = np.array(branch_endpoints(lattice.rows, lattice.cols), dtype=int)
    drops = phi[ends[:, 0]] - phi[ends[:, 1]]
    g = 1.0 / lattice.resistances()
    # current leaving TE through the top-row branches
    top = ends[:, 0] == 0
    current = float(np.sum(g[top] * drops[top]))
    if not current > 0 or not np.isfinite(current):
        raise SingularLatticeError("no current flows between the rails")
    return 1.0 / current, drops * v_applied


@dataclass(frozen=True)
class RcbDynamicsParams:
    v_set_branch: float = 0.5
    p_crit: float = 1e-3
    p_set: float = 0.5
    p_reset: float = 0.5
    seed: int = 42

    def __post_init__(self):
        if not (self.v_set_branch > 0 and self.p_crit > 0):
            raise ValueError("switching thresholds must be positive")
        for name in ("p_set", "p_reset"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")


def apply_bias_step(lattice: RcbLattice, v_applied: float, dyn: RcbDynamicsParams,
                    rng: np.random.Generator) -> RcbLattice:
    """One switching step evaluated against a snapshot of the branch drops.

    OFF branches whose |drop| exceeds ``v_set_branch`` turn ON with
    probability ``p_set``; ON branches dissipating more than ``p_crit`` turn
    OFF with probability ``p_reset``. One uniform draw is consumed per
    branch every step, so trajectories depend only on the seed.
    """
    draws = rng.random(lattice.n_branches)
    if v_applied == 0:
        return lattice
    _, drops = equivalent_resistance(lattice, v_applied)
    on = lattice.states()
    power = drops ** 2 / lattice.r_on
    set_ = ~on & (np.abs(drops) > dyn.v_set_branch) & (draws < dyn.p_set)
    reset = on & (power > dyn.p_crit) & (draws < dyn.p_reset)
    new = on.copy()
    new[set_] = True
    new[reset] = False
    return lattice.with_states(new)


def filament_lattice(rows: int, cols: int, columns: Iterable[int], r_on: float = R_ON,
                     r_off: float = R_OFF) -> RcbLattice:
    """All-OFF lattice with complete ON vertical paths in the given columns."""
    lat = RcbLattice.uniform(rows, cols, False, r_on, r_off)
    v = lat.vertical.copy()
    for j in columns:
        v[:, j] = True
    return RcbLattice(v, lat.horizontal, r_on, r_off)


def snake_lattice(rows: int, cols: int, detour: int, r_on: float = R_ON,
                  r_off: float = R_OFF) -> RcbLattice:
    """All-OFF lattice with one ON path that takes ``detour`` horizontal steps.

    The path enters column 0 from the top rail and, on each internal layer,
    walks sideways (alternating direction) until the detour is used up, so
    its resistance is about ``(rows + detour) * r_on``.
    """
    v = np.zeros((rows, cols), dtype=bool)
    h = np.zeros((max(rows - 1, 0), max(cols - 1, 0)), dtype=bool)
    col, left = 0, detour
    for layer in range(rows):
        v[layer, col] = True
        if layer == rows - 1 or left == 0:
            continue
        step = min(left, cols - 1)
        if col == 0:
            h[layer, 0:step] = True
            col = step
        else:
            h[layer, col - step:col] = True
            col -= step
        left -= step
    return RcbLattice(v, h, r_on, r_off)


def synthesize_state(target_r: float, rows: int, cols: int, r_on: float = R_ON,
                     r_off: float = R_OFF) -> RcbLattice:
    """Greedy search for a lattice whose resistance is close to ``target_r``.

    Seeds are the all-OFF lattice, the all-ON lattice, 1..cols straight
    filaments and single filaments lengthened by sideways detours. The best
    seed is then refined one branch flip at a time while the mismatch
    ``|log(R / target)|`` keeps shrinking.
    """
    r_lo = equivalent_resistance(RcbLattice.uniform(rows, cols, True, r_on, r_off))[0]
    r_hi = equivalent_resistance(RcbLattice.uniform(rows, cols, False, r_on, r_off))[0]
    if not r_lo * (1 - 1e-12) <= target_r <= r_hi * (1 + 1e-12):
        raise ValueError(f"target {target_r:g} ohm outside reachable range [{r_lo:g}, {r_hi:g}]")

    def mismatch(lat):
        return abs(np.log(equivalent_resistance(lat)[0] / target_r))

    seeds = [RcbLattice.uniform(rows, cols, False, r_on, r_off),
             RcbLattice.uniform(rows, cols, True, r_on, r_off)]
    seeds += [filament_lattice(rows, cols, range(k), r_on, r_off) for k in range(1, cols + 1)]
    seeds += [snake_lattice(rows, cols, k, r_on, r_off)
              for k in range(1, (rows - 1) * (cols - 1) + 1)]
    best = min(seeds, key=mismatch)
    best_err = mismatch(best)
    while best_err > 0:
        states = best.states()
        cand_err, cand = best_err, None
        for k in range(states.size):
            trial = states.copy()
            trial[k] = not trial[k]
            lat = best.with_states(trial)
            err = mismatch(lat)
            if err < cand_err:
                cand_err, cand = err, lat
        if cand is None:
            break
        best, best_err = cand, cand_err
    return best


def cycle_states(configs: Sequence[RcbLattice], n_cycles: int) -> list[tuple[int, int, float]]:
    """Reinstate each configuration in turn for ``n_cycles`` cycles.

    Returns rows of ``(cycle, state_index, resistance_ohm)``.
    """
    if not configs:
        raise ValueError("need at least one configuration to cycle")
    if n_cycles < 0:
        raise ValueError("n_cycles must be non-negative")
    log = []
    for c in range(n_cycles):
        for k, lat in enumerate(configs):
            log.append((c, k, equivalent_resistance(lat)[0]))
    return log
