"""Average-cost solver: relative value iteration and threshold extraction.

The optimality equation for the long-run average cost is solved by value
iteration with re-anchoring at a reference state. Each sweep applies the
Bellman operator synchronously over the whole grid, measures the span of the
raw difference T(V) - V (whose min and max bracket the optimal gain), and
subtracts the reference entry so the iterates stay bounded. Convergence is
declared when the span drops to ``epsilon``; the returned gain is the
midpoint of the final difference's extremes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .model import State, SystemParams
from .policies import PolicyTable, ThresholdPolicy

__all__ = [
    "SolverConfig",
    "ValueTable",
    "QTable",
    "ThresholdPolicy",
    "PolicyTable",
    "ConvergenceError",
    "ThresholdStructureError",
    "solve",
    "bellman_qvalues",
    "greedy_policy",
    "greedy_policy_shortcircuit",
    "extract_thresholds",
    "check_truncation_adequacy",
    "write_value_csv",
    "read_value_csv",
]


class ConvergenceError(RuntimeError):
    """Value iteration ran out of sweeps before the span closed."""

    def __init__(self, message: str, span: float, iterations: int):
        super().__init__(message)
        self.span = span
        self.iterations = iterations


class ThresholdStructureError(RuntimeError):
    """A policy claimed to be threshold-shaped is not."""

    def __init__(self, message: str, witnesses: list[State]):
        super().__init__(message)
        self.witnesses = witnesses


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the relative value iteration.

    ``reference_state`` defaults to (1, battery_cap), the cheapest corner.
    ``init_value`` fills the starting table uniformly.
    """

    epsilon: float = 1e-9
    max_iters: int = 500_000
    reference_state: State | None = None
    init_value: float = 0.0

    def __post_init__(self) -> None:
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if not (isinstance(self.max_iters, int) and self.max_iters >= 1):
            raise ValueError(f"max_iters must be an integer >= 1, got {self.max_iters!r}")


@dataclass(frozen=True)
class ValueTable:
    """Converged relative values (reference entry pinned to zero) and gain."""

    values: np.ndarray
    gain: float
    iterations: int
    final_span: float


@dataclass(frozen=True)
class QTable:
    """State-action values consistent with the converged table.

    ``values[d - 1, q, a]`` estimates stage cost plus expected next value;
    min over actions recovers gain + V up to epsilon-scale error.
    """

    values: np.ndarray


def _resolve_reference(cfg: SolverConfig, params: SystemParams) -> State:
    ref = cfg.reference_state if cfg.reference_state is not None else State(1, params.battery_cap)
    if not (1 <= ref.aoi <= params.aoi_cap and 0 <= ref.battery <= params.battery_cap):
        raise ValueError(f"reference state {ref} outside the grid")
    return ref


def bellman_qvalues(values: np.ndarray, params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """One synchronous backup: (idle, transmit) state-action values.

    Vectorized over the whole (aoi, battery) grid; age increments saturate at
    the top row, harvest credit lands after the transmit spend.
    """
    cap, width = params.aoi_cap, params.battery_cap + 1
    if values.shape != (cap, width):
        raise ValueError(f"value table shape {values.shape}, expected {(cap, width)}")
    lam = params.harvest_prob
    p = params.erasure_prob
    q_levels = np.arange(width)
    charged = np.minimum(q_levels + 1, params.battery_cap)
    spent = np.maximum(q_levels - 1, 0)
    ages = np.arange(1, cap + 1, dtype=float)[:, None]

    aged = np.empty_like(values)
    aged[:-1] = values[1:]
    aged[-1] = values[-1]
    fresh = values[0]

    q_idle = ages + lam * aged[:, charged] + (1.0 - lam) * aged
    backup_penalty = params.energy_weight * params.backup_cost * (q_levels == 0)
    q_tx = (
        ages
        + backup_penalty
        + p * (lam * aged[:, spent + 1] + (1.0 - lam) * aged[:, spent])
        + (1.0 - p) * (lam * fresh[spent + 1] + (1.0 - lam) * fresh[spent])
    )
    return q_idle, q_tx


def solve(params: SystemParams, cfg: SolverConfig | None = None) -> tuple[ValueTable, QTable]:
    """Relative value iteration to a span of ``cfg.epsilon``.

    Returns the anchored value table (with the gain estimate) and the
    state-action table recomputed from the converged values. Raises
    :class:`ConvergenceError` carrying the last span when ``max_iters``
    sweeps do not suffice.
    """
    cfg = cfg if cfg is not None else SolverConfig()
    params.validate_for_solve()
    ref = _resolve_reference(cfg, params)
    ref_idx = (ref.aoi - 1, ref.battery)

    values = np.full(params.grid_shape, float(cfg.init_value))
    values -= values[ref_idx]
    gain = np.nan
    span = np.inf
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        q_idle, q_tx = bellman_qvalues(values, params)
        updated = np.minimum(q_idle, q_tx)
        diff = updated - values
        high = float(diff.max())
        low = float(diff.min())
        span = high - low
        gain = 0.5 * (high + low)
        values = updated - updated[ref_idx]
        if span <= cfg.epsilon:
            break
    else:
        raise ConvergenceError(
            f"span {span:.3e} > epsilon {cfg.epsilon:.3e} after {cfg.max_iters} sweeps",
            span=span,
            iterations=cfg.max_iters,
        )

    q_idle, q_tx = bellman_qvalues(values, params)
    q_values = np.stack([q_idle, q_tx], axis=-1)
    return (
        ValueTable(values=values, gain=float(gain), iterations=iterations, final_span=float(span)),
        QTable(values=q_values),
    )


def greedy_policy(v: ValueTable, q: QTable, params: SystemParams) -> PolicyTable:
    """Argmin-over-actions policy; exact ties resolve to Idle."""
    if q.values.shape[:2] != v.values.shape or v.values.shape != params.grid_shape:
        raise ValueError("value, q and params grids disagree")
    return PolicyTable((q.values[:, :, 1] < q.values[:, :, 0]).astype(np.int8))


def greedy_policy_shortcircuit(q: QTable, params: SystemParams) -> PolicyTable:
    """Policy extraction that inherits Transmit from the next-younger age.

    Scans ages upward per battery level and skips the argmin once a Transmit
    has appeared below; under a submodular action advantage this agrees with
    the full argmin, and the test suite verifies that it does.
    """
    cap, width = params.grid_shape
    if q.values.shape != (cap, width, 2):
        raise ValueError(f"q table shape {q.values.shape}, expected {(cap, width, 2)}")
    actions = np.zeros((cap, width), dtype=np.int8)
    for battery in range(width):
        transmitting = False
        for row in range(cap):
            if not transmitting:
                transmitting = bool(q.values[row, battery, 1] < q.values[row, battery, 0])
            actions[row, battery] = 1 if transmitting else 0
    return PolicyTable(actions)


def extract_thresholds(policy: PolicyTable, params: SystemParams) -> ThresholdPolicy:
    """Read per-battery age thresholds off a policy table.

    Fails with :class:`ThresholdStructureError` when any battery column is
    not of the form idle-below / transmit-at-and-above a single age, which
    makes a successful extraction an executable certificate of threshold
    structure.
    """
    if policy.actions.shape != params.grid_shape:
        raise ValueError(f"policy shape {policy.actions.shape}, expected {params.grid_shape}")
    thresholds: list[int | None] = []
    for battery in range(params.battery_cap + 1):
        column = policy.actions[:, battery]
        transmit_rows = np.flatnonzero(column)
        if transmit_rows.size == 0:
            thresholds.append(None)
            continue
        first = int(transmit_rows[0])
        gaps = np.flatnonzero(column[first:] == 0)
        if gaps.size:
            witnesses = [State(first + 1, battery), State(first + int(gaps[0]) + 1, battery)]
            raise ThresholdStructureError(
                f"battery {battery}: transmit at age {first + 1} but idle again at "
                f"age {first + int(gaps[0]) + 1}; column is not threshold-shaped",
                witnesses=witnesses,
            )
        thresholds.append(first + 1)
    return ThresholdPolicy(thresholds=tuple(thresholds))


def check_truncation_adequacy(
    tp: ThresholdPolicy, params: SystemParams, cfg: SolverConfig | None = None
) -> bool:
    """True when doubling ``aoi_cap`` reproduces the same thresholds.

    Also requires every finite threshold to sit strictly below the original
    cap; a threshold pinned at the boundary is a truncation artifact.
    """
    doubled = replace(params, aoi_cap=2 * params.aoi_cap)
    v2, q2 = solve(doubled, cfg)
    tp2 = extract_thresholds(greedy_policy(v2, q2, doubled), doubled)
    if tp2.thresholds != tp.thresholds:
        return False
    return all(t < params.aoi_cap for t in tp.thresholds if t is not None)


def write_value_csv(path: str, v: ValueTable) -> None:
    """Dump values as (delta, q, value) rows, age-major, full float precision."""
    cap, width = v.values.shape
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["delta", "q", "value"])
        for row in range(cap):
            for battery in range(width):
                writer.writerow([row + 1, battery, repr(float(v.values[row, battery]))])


def read_value_csv(path: str) -> np.ndarray:
    """Rebuild the dense value grid from (delta, q, value) rows."""
    entries: dict[tuple[int, int], float] = {}
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != ["delta", "q", "value"]:
            raise ValueError(f"unexpected value CSV header {reader.fieldnames}")
        for row in reader:
            entries[(int(row["delta"]), int(row["q"]))] = float(row["value"])
    if not entries:
        raise ValueError("value CSV has no rows")
    cap = max(d for d, _ in entries)
    width = max(q for _, q in entries) + 1
    if len(entries) != cap * width:
        raise ValueError(f"value CSV covers {len(entries)} cells, expected {cap * width}")
    values = np.empty((cap, width))
    for (delta, battery), value in entries.items():
        if not (1 <= delta and 0 <= battery):
            raise ValueError(f"bad cell ({delta}, {battery})")
        values[delta - 1, battery] = value
    return values
