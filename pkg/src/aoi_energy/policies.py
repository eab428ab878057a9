"""Uniform policy abstraction: the solved policy and the baselines.

A policy spec is any of six kinds: ``ZeroWait`` (transmit every slot),
``Periodic`` (transmit on a fixed slot pattern), ``Randomized`` (coin-flip
each slot), ``EnergyFirst`` (transmit whenever the battery is charged, so the
backup supply is never touched), a ``ThresholdPolicy`` (transmit once the age
reaches a per-battery-level threshold), or an explicit ``PolicyTable``.
``decide`` evaluates any of them at a state and slot index.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import Action, RandomStream, State, SystemParams

__all__ = [
    "PolicyTable",
    "ThresholdPolicy",
    "ZeroWait",
    "Periodic",
    "Randomized",
    "EnergyFirst",
    "PolicySpec",
    "decide",
    "is_markov_stationary",
    "parse_policy_spec",
    "policy_label",
]


@dataclass(frozen=True)
class PolicyTable:
    """Deterministic stationary policy as a dense (aoi, battery) action grid.

    ``actions[d - 1, q]`` is the action at age d, battery q. Lookups at ages
    beyond the grid use the top row, which is the natural extension for the
    saturating-age chain.
    """

    actions: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.actions)
        if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
            raise ValueError(f"action table shape {arr.shape} is not a valid (aoi, battery) grid")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("action table entries must be 0 (idle) or 1 (transmit)")
        object.__setattr__(self, "actions", arr.astype(np.int8))

    @property
    def aoi_cap(self) -> int:
        return self.actions.shape[0]

    @property
    def battery_cap(self) -> int:
        return self.actions.shape[1] - 1

    def action(self, state: State) -> Action:
        if state.aoi < 1:
            raise ValueError(f"aoi {state.aoi} < 1")
        row = min(state.aoi, self.aoi_cap) - 1
        return Action(int(self.actions[row, state.battery]))

    def transmit_count(self) -> int:
        return int(self.actions.sum())


@dataclass(frozen=True)
class ThresholdPolicy:
    """Transmit exactly when age >= threshold for the current battery level.

    ``thresholds[q]`` is the age threshold at battery q; ``None`` means the
    policy never transmits at that battery level.
    """

    thresholds: tuple[int | None, ...]

    def __post_init__(self) -> None:
        if len(self.thresholds) < 2:
            raise ValueError("need thresholds for battery levels 0..battery_cap with cap >= 1")
        cleaned = []
        for q, value in enumerate(self.thresholds):
            if value is None:
                cleaned.append(None)
            elif isinstance(value, (int, np.integer)) and value >= 1:
                cleaned.append(int(value))
            else:
                raise ValueError(f"threshold at battery {q} must be an integer >= 1 or None")
        object.__setattr__(self, "thresholds", tuple(cleaned))

    @property
    def battery_cap(self) -> int:
        return len(self.thresholds) - 1

    def action(self, state: State) -> Action:
        if state.aoi < 1:
            raise ValueError(f"aoi {state.aoi} < 1")
        threshold = self.thresholds[state.battery]
        if threshold is not None and state.aoi >= threshold:
            return Action.TRANSMIT
        return Action.IDLE

    def to_table(self, params: SystemParams) -> PolicyTable:
        if params.battery_cap != self.battery_cap:
            raise ValueError(
                f"threshold policy covers battery 0..{self.battery_cap}, "
                f"params expect 0..{params.battery_cap}"
            )
        ages = np.arange(1, params.aoi_cap + 1)[:, None]
        bound = np.array(
            [params.aoi_cap + 1 if t is None else t for t in self.thresholds]
        )[None, :]
        return PolicyTable((ages >= bound).astype(np.int8))

    def to_json(self) -> str:
        return json.dumps({"thresholds": list(self.thresholds)}, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "ThresholdPolicy":
        data = json.loads(text)
        if not isinstance(data, dict) or "thresholds" not in data:
            raise ValueError("threshold JSON must be an object with a 'thresholds' list")
        return cls(thresholds=tuple(data["thresholds"]))

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["q", "threshold"])
            for q, value in enumerate(self.thresholds):
                writer.writerow([q, "never" if value is None else value])

    @classmethod
    def read_csv(cls, path: str) -> "ThresholdPolicy":
        rows: dict[int, int | None] = {}
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames != ["q", "threshold"]:
                raise ValueError(f"unexpected threshold CSV header {reader.fieldnames}")
            for row in reader:
                value = row["threshold"]
                rows[int(row["q"])] = None if value == "never" else int(value)
        if sorted(rows) != list(range(len(rows))):
            raise ValueError("threshold CSV battery levels are not contiguous from 0")
        return cls(thresholds=tuple(rows[q] for q in sorted(rows)))


@dataclass(frozen=True)
class ZeroWait:
    """Transmit a fresh update every slot."""


@dataclass(frozen=True)
class EnergyFirst:
    """Transmit whenever the battery is charged; never draw on the backup."""


@dataclass(frozen=True)
class Periodic:
    """Transmit when the slot index hits the phase of a fixed period."""

    period: int
    phase: int = 0

    def __post_init__(self) -> None:
        if not (isinstance(self.period, int) and self.period >= 1):
            raise ValueError(f"period must be an integer >= 1, got {self.period!r}")
        if not (isinstance(self.phase, int) and 0 <= self.phase < self.period):
            raise ValueError(f"phase must lie in [0, {self.period}), got {self.phase!r}")


@dataclass(frozen=True)
class Randomized:
    """Transmit with a fixed probability each slot, independently."""

    p_tx: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_tx <= 1.0:
            raise ValueError(f"p_tx must lie in [0, 1], got {self.p_tx!r}")


PolicySpec = Union[ZeroWait, Periodic, Randomized, EnergyFirst, ThresholdPolicy, PolicyTable]


def decide(spec: PolicySpec, s: State, t: int, rng: RandomStream) -> Action:
    """Action of ``spec`` at state ``s`` in slot ``t``.

    ``rng`` is consulted only by ``Randomized``. Ages are not capped here, so
    the same call serves the untruncated simulated chain.
    """
    if s.aoi < 1 or s.battery < 0:
        raise ValueError(f"invalid state {s}")
    if isinstance(spec, ZeroWait):
        return Action.TRANSMIT
    if isinstance(spec, EnergyFirst):
        return Action.TRANSMIT if s.battery > 0 else Action.IDLE
    if isinstance(spec, Periodic):
        return Action.TRANSMIT if t % spec.period == spec.phase else Action.IDLE
    if isinstance(spec, Randomized):
        return Action.TRANSMIT if rng.random() < spec.p_tx else Action.IDLE
    if isinstance(spec, (ThresholdPolicy, PolicyTable)):
        return spec.action(s)
    raise TypeError(f"unknown policy spec {spec!r}")


def is_markov_stationary(spec: PolicySpec) -> bool:
    """True when the policy is a deterministic function of the state alone."""
    return not isinstance(spec, (Periodic, Randomized))


def parse_policy_spec(text: str) -> PolicySpec:
    """Parse a command-line policy string.

    Accepted forms: ``zero-wait``, ``energy-first``, ``periodic:<period>``,
    ``periodic:<period>:<phase>``, ``random:<p_tx>``, and
    ``threshold:<file.json>``.
    """
    name, _, arg = text.partition(":")
    if name == "zero-wait":
        return ZeroWait()
    if name == "energy-first":
        return EnergyFirst()
    if name == "periodic":
        period, _, phase = arg.partition(":")
        try:
            return Periodic(int(period), int(phase) if phase else 0)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"bad periodic spec {text!r}: {exc}") from exc
    if name == "random":
        try:
            return Randomized(float(arg))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"bad random spec {text!r}: {exc}") from exc
    if name == "threshold":
        if not arg:
            raise ValueError("threshold spec needs a JSON file path, e.g. threshold:tp.json")
        with open(arg) as handle:
            return ThresholdPolicy.from_json(handle.read())
    raise ValueError(f"unknown policy spec {text!r}")


def policy_label(spec: PolicySpec) -> str:
    """Short stable name used in result rows."""
    if isinstance(spec, ZeroWait):
        return "zero-wait"
    if isinstance(spec, EnergyFirst):
        return "energy-first"
    if isinstance(spec, Periodic):
        if spec.phase:
            return f"periodic:{spec.period}:{spec.phase}"
        return f"periodic:{spec.period}"
    if isinstance(spec, Randomized):
        return f"random:{spec.p_tx:g}"
    if isinstance(spec, ThresholdPolicy):
        return "threshold"
    if isinstance(spec, PolicyTable):
        return "table"
    raise TypeError(f"unknown policy spec {spec!r}")
