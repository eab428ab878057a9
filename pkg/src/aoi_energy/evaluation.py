"""Policy evaluation three ways.

Seeded Monte Carlo simulates the real chain (age unbounded, battery finite)
and reports replication means with a 95% confidence halfwidth. Exact
evaluation builds the policy-induced kernel on the truncated grid, finds the
stationary distribution of the recurrent class reachable from the start
state by an iterative fixed point, and integrates the stage cost; it refuses
when the truncation boundary carries visible mass. Exhaustive enumeration
scores every deterministic stationary policy on desk-size instances, which
serves as a ground-truth oracle for the solver.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import stats
from scipy.sparse import csgraph

from .model import (
    Action,
    RandomStream,
    State,
    SystemParams,
    _successors,
    state_index,
    states,
)
from .policies import (
    EnergyFirst,
    Periodic,
    PolicySpec,
    PolicyTable,
    Randomized,
    ThresholdPolicy,
    ZeroWait,
)
from .solver import ConvergenceError

__all__ = [
    "SimConfig",
    "EvalReport",
    "BoundaryMassError",
    "ReducibilityError",
    "simulate",
    "evaluate_exact",
    "enumerate_optimal",
    "stationary_distribution",
    "append_report_row",
    "CSV_COLUMNS",
    "METHOD_MONTE_CARLO",
    "METHOD_EXACT",
]

METHOD_MONTE_CARLO = "monte_carlo"
METHOD_EXACT = "exact_stationary"

CSV_COLUMNS = [
    "policy",
    "p",
    "lambda",
    "omega",
    "c_r",
    "B",
    "method",
    "avg_total",
    "avg_aoi",
    "avg_energy",
    "ci95",
    "seed",
    "note",
]


class BoundaryMassError(RuntimeError):
    """Stationary mass at the age cap is too large for the answer to be exact."""

    def __init__(self, message: str, mass: float):
        super().__init__(message)
        self.mass = mass


class ReducibilityError(RuntimeError):
    """More than one closed recurrent class is reachable from the start state."""

    def __init__(self, message: str, offending: list[int]):
        super().__init__(message)
        self.offending = offending


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run shape; warmup defaults to a tenth of the horizon."""

    horizon: int
    replications: int = 1
    warmup: int | None = None
    seed: int = 0
    initial_state: State = State(1, 0)

    def __post_init__(self) -> None:
        if not (isinstance(self.horizon, int) and self.horizon >= 1):
            raise ValueError(f"horizon must be an integer >= 1, got {self.horizon!r}")
        if not (isinstance(self.replications, int) and self.replications >= 1):
            raise ValueError(f"replications must be an integer >= 1, got {self.replications!r}")
        warm = self.resolved_warmup
        if not 0 <= warm < self.horizon:
            raise ValueError(f"warmup {warm} must satisfy 0 <= warmup < horizon {self.horizon}")

    @property
    def resolved_warmup(self) -> int:
        return self.horizon // 10 if self.warmup is None else self.warmup


@dataclass(frozen=True)
class EvalReport:
    """Average cost split into its age and weighted-energy components."""

    avg_total_cost: float
    avg_aoi: float
    avg_weighted_energy: float
    ci_halfwidth_95: float
    method: str

    def __post_init__(self) -> None:
        if self.method not in (METHOD_MONTE_CARLO, METHOD_EXACT):
            raise ValueError(f"unknown method {self.method!r}")
        parts = self.avg_aoi + self.avg_weighted_energy
        if abs(self.avg_total_cost - parts) > 1e-9:
            raise ValueError(
                f"total {self.avg_total_cost!r} != aoi {self.avg_aoi!r} + "
                f"energy {self.avg_weighted_energy!r}"
            )


def _as_thresholds(spec: PolicySpec, params: SystemParams) -> ThresholdPolicy | None:
    """Threshold form of a policy, when it has one.

    ZeroWait transmits from age 1 at every charge; EnergyFirst transmits from
    age 1 whenever the battery is nonempty and never on backup.
    """
    width = params.battery_cap + 1
    if isinstance(spec, ZeroWait):
        return ThresholdPolicy(thresholds=(1,) * width)
    if isinstance(spec, EnergyFirst):
        return ThresholdPolicy(thresholds=(None,) + (1,) * params.battery_cap)
    if isinstance(spec, ThresholdPolicy):
        if spec.battery_cap != params.battery_cap:
            raise ValueError(
                f"threshold policy covers battery 0..{spec.battery_cap}, "
                f"params expect 0..{params.battery_cap}"
            )
        return spec
    return None


def _check_initial(state: State, params: SystemParams) -> None:
    if state.aoi < 1 or not 0 <= state.battery <= params.battery_cap:
        raise ValueError(f"invalid initial state {state}")


def _simulate_rep(
    spec: PolicySpec, params: SystemParams, cfg: SimConfig, rng: RandomStream
) -> tuple[float, float]:
    """One replication; returns (mean age, mean weighted backup cost).

    Pre-draws the harvest and erasure Bernoullis (and the transmit coin for
    Randomized) for the whole horizon, then steps the chain in a tight loop.
    The age is never truncated here.
    """
    horizon = cfg.horizon
    warm = cfg.resolved_warmup
    lam = params.harvest_prob
    cap_b = params.battery_cap
    harvest = (rng.random(horizon) < lam).tolist()
    erase = (rng.random(horizon) < params.erasure_prob).tolist()

    age, battery = cfg.initial_state
    age_sum = 0
    pay_count = 0

    thresholds = _as_thresholds(spec, params)
    if thresholds is not None:
        bound = [math.inf if t is None else t for t in thresholds.thresholds]
        for t in range(horizon):
            transmit = age >= bound[battery]
            counted = t >= warm
            if counted:
                age_sum += age
            if transmit:
                if battery:
                    battery -= 1
                elif counted:
                    pay_count += 1
                age = 1 if not erase[t] else age + 1
            else:
                age += 1
            if harvest[t] and battery < cap_b:
                battery += 1
    elif isinstance(spec, Periodic):
        period, phase = spec.period, spec.phase
        for t in range(horizon):
            transmit = t % period == phase
            counted = t >= warm
            if counted:
                age_sum += age
            if transmit:
                if battery:
                    battery -= 1
                elif counted:
                    pay_count += 1
                age = 1 if not erase[t] else age + 1
            else:
                age += 1
            if harvest[t] and battery < cap_b:
                battery += 1
    elif isinstance(spec, Randomized):
        coins = (rng.random(horizon) < spec.p_tx).tolist()
        for t in range(horizon):
            transmit = coins[t]
            counted = t >= warm
            if counted:
                age_sum += age
            if transmit:
                if battery:
                    battery -= 1
                elif counted:
                    pay_count += 1
                age = 1 if not erase[t] else age + 1
            else:
                age += 1
            if harvest[t] and battery < cap_b:
                battery += 1
    elif isinstance(spec, PolicyTable):
        grid = spec.actions.tolist()
        top = spec.aoi_cap - 1
        for t in range(horizon):
            row = age - 1 if age <= top else top
            transmit = grid[row][battery]
            counted = t >= warm
            if counted:
                age_sum += age
            if transmit:
                if battery:
                    battery -= 1
                elif counted:
                    pay_count += 1
                age = 1 if not erase[t] else age + 1
            else:
                age += 1
            if harvest[t] and battery < cap_b:
                battery += 1
    else:
        raise TypeError(f"unknown policy spec {spec!r}")

    slots = horizon - warm
    backup_rate = params.energy_weight * params.backup_cost * pay_count / slots
    return age_sum / slots, backup_rate


def simulate(spec: PolicySpec, params: SystemParams, cfg: SimConfig) -> EvalReport:
    """Monte Carlo average cost over seeded independent replications.

    Replication seeds are spawned deterministically from ``cfg.seed``, so a
    repeated call reproduces the report bit for bit.
    """
    _check_initial(cfg.initial_state, params)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.replications)
    age_means = np.empty(cfg.replications)
    energy_means = np.empty(cfg.replications)
    for i, child in enumerate(children):
        age_means[i], energy_means[i] = _simulate_rep(
            spec, params, cfg, np.random.default_rng(child)
        )
    avg_aoi = float(age_means.mean())
    avg_energy = float(energy_means.mean())
    totals = age_means + energy_means
    if cfg.replications > 1:
        spread = float(np.std(totals, ddof=1))
        ci = float(
            stats.t.ppf(0.975, cfg.replications - 1) * spread / math.sqrt(cfg.replications)
        )
    else:
        ci = math.nan
    return EvalReport(
        avg_total_cost=avg_aoi + avg_energy,
        avg_aoi=avg_aoi,
        avg_weighted_energy=avg_energy,
        ci_halfwidth_95=ci,
        method=METHOD_MONTE_CARLO,
    )


def stationary_distribution(
    kernel: sp.spmatrix,
    start: int,
    residual_tol: float = 1e-12,
    max_iters: int = 1_000_000,
) -> np.ndarray:
    """Stationary vector of the closed class reachable from ``start``.

    Exactly one closed communicating class must be reachable, else
    :class:`ReducibilityError` names one state per competing class. The fixed
    point is found by iterating the half-lazy map mu <- (mu + mu P)/2, which
    shares P's stationary vector but is immune to periodic cycling; the
    reported residual ||mu P - mu||_1 is measured against P itself. Small
    classes are driven by repeated squaring of the lazy map, large ones by
    vector iteration.
    """
    kernel = sp.csr_matrix(kernel)
    n = kernel.shape[0]
    if kernel.shape != (n, n):
        raise ValueError(f"kernel must be square, got {kernel.shape}")
    if not 0 <= start < n:
        raise ValueError(f"start index {start} outside [0, {n})")

    order = csgraph.breadth_first_order(kernel, start, directed=True, return_predecessors=False)
    reachable = np.zeros(n, dtype=bool)
    reachable[order] = True
    n_comp, labels = csgraph.connected_components(kernel, directed=True, connection="strong")
    coo = kernel.tocoo()
    crossing = labels[coo.row] != labels[coo.col]
    closed = np.ones(n_comp, dtype=bool)
    closed[np.unique(labels[coo.row[crossing]])] = False
    reachable_closed = [int(c) for c in np.unique(labels[reachable]) if closed[c]]
    if len(reachable_closed) != 1:
        offending = [int(np.flatnonzero(labels == c)[0]) for c in reachable_closed]
        raise ReducibilityError(
            f"{len(reachable_closed)} closed recurrent classes reachable from state "
            f"{start}; representatives {offending}",
            offending=offending,
        )

    member = np.flatnonzero(labels == reachable_closed[0])
    sub = kernel[member][:, member].tocsr()
    m = member.size
    mu = np.full(m, 1.0 / m)
    transpose = sub.T.tocsr()

    if m <= 64:
        lazy = 0.5 * (np.eye(m) + sub.toarray())
        for _ in range(200):
            mu = lazy[0] / lazy[0].sum()
            residual = float(np.abs(transpose @ mu - mu).sum())
            if residual < residual_tol:
                break
            lazy = lazy @ lazy
            lazy /= lazy.sum(axis=1, keepdims=True)
        else:
            raise ConvergenceError(
                f"stationary fixed point stuck at residual {residual:.3e}",
                span=residual,
                iterations=200,
            )
    else:
        for iteration in range(max_iters):
            pushed = transpose @ mu
            residual = float(np.abs(pushed - mu).sum())
            if residual < residual_tol:
                break
            mu = 0.5 * (mu + pushed)
            mu /= mu.sum()
        else:
            raise ConvergenceError(
                f"stationary fixed point at residual {residual:.3e} after {max_iters} "
                "iterations",
                span=residual,
                iterations=max_iters,
            )

    full = np.zeros(n)
    full[member] = mu / mu.sum()
    return full


def _policy_kernel(
    spec: PolicySpec, params: SystemParams, initial_state: State
) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray, np.ndarray, int]:
    """Kernel, per-state age and weighted-energy costs, boundary mask, start.

    Periodic policies get a slot-phase coordinate so the chain is honestly
    time-homogeneous; Randomized policies mix the two action kernels.
    """
    n_base = params.n_states
    width = params.battery_cap + 1
    backup = params.energy_weight * params.backup_cost
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []

    if isinstance(spec, Periodic):
        n = n_base * spec.period
        aoi_vec = np.empty(n)
        energy_vec = np.zeros(n)
        boundary = np.zeros(n, dtype=bool)
        for ph in range(spec.period):
            action = Action.TRANSMIT if ph == spec.phase else Action.IDLE
            nxt_ph = (ph + 1) % spec.period
            base, nxt_base = ph * n_base, nxt_ph * n_base
            for s in states(params):
                i = base + state_index(s, params)
                aoi_vec[i] = s.aoi
                boundary[i] = s.aoi == params.aoi_cap
                if action == Action.TRANSMIT and s.battery == 0:
                    energy_vec[i] = backup
                for nxt, prob in _successors(s, action, params):
                    rows.append(i)
                    cols.append(nxt_base + state_index(nxt, params))
                    vals.append(prob)
        start = state_index(initial_state, params)
    elif isinstance(spec, Randomized):
        n = n_base
        aoi_vec = np.empty(n)
        energy_vec = np.zeros(n)
        boundary = np.zeros(n, dtype=bool)
        branches = [(1.0 - spec.p_tx, Action.IDLE), (spec.p_tx, Action.TRANSMIT)]
        for s in states(params):
            i = state_index(s, params)
            aoi_vec[i] = s.aoi
            boundary[i] = s.aoi == params.aoi_cap
            if s.battery == 0:
                energy_vec[i] = spec.p_tx * backup
            for weight, action in branches:
                if weight == 0.0:
                    continue
                for nxt, prob in _successors(s, action, params):
                    rows.append(i)
                    cols.append(state_index(nxt, params))
                    vals.append(weight * prob)
        start = state_index(initial_state, params)
    else:
        thresholds = _as_thresholds(spec, params)
        if thresholds is not None:
            table = thresholds.to_table(params)
        elif isinstance(spec, PolicyTable):
            if spec.actions.shape != params.grid_shape:
                raise ValueError(
                    f"policy table shape {spec.actions.shape}, expected {params.grid_shape}"
                )
            table = spec
        else:
            raise TypeError(f"unknown policy spec {spec!r}")
        n = n_base
        aoi_vec = np.empty(n)
        energy_vec = np.zeros(n)
        boundary = np.zeros(n, dtype=bool)
        actions = table.actions
        for s in states(params):
            i = state_index(s, params)
            aoi_vec[i] = s.aoi
            boundary[i] = s.aoi == params.aoi_cap
            action = Action(int(actions[s.aoi - 1, s.battery]))
            if action == Action.TRANSMIT and s.battery == 0:
                energy_vec[i] = backup
            for nxt, prob in _successors(s, action, params):
                rows.append(i)
                cols.append(state_index(nxt, params))
                vals.append(prob)
        start = state_index(initial_state, params)

    kernel = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return kernel, aoi_vec, energy_vec, boundary, start


def evaluate_exact(
    spec: PolicySpec,
    params: SystemParams,
    *,
    initial_state: State = State(1, 0),
    residual_tol: float = 1e-12,
    boundary_tol: float | None = 1e-9,
    max_iters: int = 1_000_000,
) -> EvalReport:
    """Stationary average cost of a policy on the truncated chain.

    Raises :class:`BoundaryMassError` when the stationary probability of the
    age cap exceeds ``boundary_tol`` (the cap is too small for this policy);
    pass ``boundary_tol=None`` to score the truncated chain as-is, which is
    what the enumeration oracle needs.
    """
    if not (1 <= initial_state.aoi <= params.aoi_cap):
        raise ValueError(f"initial aoi {initial_state.aoi} outside [1, {params.aoi_cap}]")
    if not 0 <= initial_state.battery <= params.battery_cap:
        raise ValueError(f"initial battery {initial_state.battery} outside the grid")
    kernel, aoi_vec, energy_vec, boundary, start = _policy_kernel(spec, params, initial_state)
    mu = stationary_distribution(kernel, start, residual_tol=residual_tol, max_iters=max_iters)
    mass = float(mu[boundary].sum())
    if boundary_tol is not None and mass > boundary_tol:
        raise BoundaryMassError(
            f"stationary mass {mass:.3e} at aoi_cap={params.aoi_cap} exceeds "
            f"{boundary_tol:.1e}; increase the cap for this policy",
            mass=mass,
        )
    avg_aoi = float(mu @ aoi_vec)
    avg_energy = float(mu @ energy_vec)
    return EvalReport(
        avg_total_cost=avg_aoi + avg_energy,
        avg_aoi=avg_aoi,
        avg_weighted_energy=avg_energy,
        ci_halfwidth_95=0.0,
        method=METHOD_EXACT,
    )


def enumerate_optimal(
    params: SystemParams,
    *,
    tie_tol: float = 1e-9,
    residual_tol: float = 1e-12,
) -> tuple[PolicyTable, float]:
    """Best deterministic stationary policy by brute force.

    Scores all 2^(states) action tables with :func:`evaluate_exact` on the
    truncated chain (boundary guard off, since at desk scale the cap always
    carries mass) and returns the cheapest. Cost ties within ``tie_tol``
    resolve to the table with fewer Transmit entries, then the lowest
    bitmask. Refuses instances above 24 states: the policy count doubles per
    state, so anything larger is no longer a desk-size oracle.
    """
    n = params.n_states
    if n > 24:
        raise ValueError(
            f"enumeration needs <= 24 states, got {n} "
            f"(aoi_cap={params.aoi_cap} x battery levels {params.battery_cap + 1}: "
            f"2^{n} policies)"
        )
    shape = params.grid_shape
    count = 1 << n
    costs = np.empty(count)
    bit_weights = 1 << np.arange(n)
    for mask in range(count):
        bits = ((mask & bit_weights) > 0).astype(np.int8)
        table = PolicyTable(bits.reshape(shape))
        report = evaluate_exact(
            table, params, residual_tol=residual_tol, boundary_tol=None
        )
        costs[mask] = report.avg_total_cost
    best_cost = float(costs.min())
    tied = np.flatnonzero(costs <= best_cost + tie_tol)
    best_mask = int(min(tied, key=lambda m: (int(m).bit_count(), int(m))))
    bits = ((best_mask & bit_weights) > 0).astype(np.int8)
    return PolicyTable(bits.reshape(shape)), float(costs[best_mask])


def report_row_values(
    policy: str,
    params: SystemParams,
    report: EvalReport,
    seed: int,
    note: str = "",
) -> list:
    """One CSV row in :data:`CSV_COLUMNS` order.

    Floats are rendered with ``repr`` so equal runs produce identical bytes.
    """
    return [
        policy,
        repr(float(params.erasure_prob)),
        repr(float(params.harvest_prob)),
        repr(float(params.energy_weight)),
        repr(float(params.backup_cost)),
        params.battery_cap,
        report.method,
        repr(report.avg_total_cost),
        repr(report.avg_aoi),
        repr(report.avg_weighted_energy),
        repr(report.ci_halfwidth_95),
        seed,
        note,
    ]


def append_report_row(
    path: str,
    policy: str,
    params: SystemParams,
    report: EvalReport,
    seed: int,
    note: str = "",
) -> None:
    """Append one result row, creating the header on first write."""
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if fresh:
            writer.writerow(CSV_COLUMNS)
        writer.writerow(report_row_values(policy, params, report, seed, note))


def write_report_rows(path: str, rows: list[list]) -> None:
    """Write a full results CSV (header plus rows) in one shot."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)
