"""Per-trial evidence accumulation over window-level predictions.

Each window vote moves a signed evidence value by a fixed step; the trial
is decided the moment the magnitude strictly exceeds the threshold, and
times out if the windows run out first. Threshold and step are interpreted
as the decimal numbers they were written as, so thresholds that are exact
multiples of the step (0.3 with 0.1, say) need the extra vote that exact
decimal arithmetic demands — a plain float running sum gets this wrong
because 0.1 * 3 > 0.3 in binary floating point.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import product
from typing import Iterable, Iterator, Sequence

import numpy as np

from .dsp import (
    PreprocessParams,
    causal_filter_state,
    design_bandpass,
    extract_trials,
    filter_causal_step,
    WindowSet,
)
from .errors import EmptyGrid, EmptyTrial, InvalidThreshold, NoTrials
from .session import ClassLabel, Recording

DEFAULT_THRESHOLDS = tuple(i / 10 for i in range(1, 11))
DEFAULT_STEPS = tuple(i / 100 for i in range(1, 11))


class Outcome(Enum):
    Left = "Left"
    Right = "Right"
    Timeout = "Timeout"

    def matches(self, label: ClassLabel) -> bool:
        return self.name == label.name


def _decimal(x: float) -> Fraction:
    """The exact decimal a float prints as (shortest repr)."""
    return Fraction(str(float(x)))


@dataclass(frozen=True)
class EvidenceConfig:
    """Decision threshold and per-window step, both in (0, 1]."""

    threshold: float
    step: float

    def __post_init__(self):
        for name, v in (("threshold", self.threshold), ("step", self.step)):
            if not math.isfinite(v):
                raise InvalidThreshold(f"{name} must be finite, got {v}")
        if not 0 < self.step <= self.threshold <= 1:
            raise InvalidThreshold(
                f"need 0 < step <= threshold <= 1, got step={self.step} "
                f"threshold={self.threshold}"
            )

    @property
    def votes_to_decide(self) -> int:
        """Smallest net vote count whose evidence strictly exceeds the threshold."""
        return math.floor(_decimal(self.threshold) / _decimal(self.step)) + 1


@dataclass(frozen=True)
class EvidenceOutcome:
    decision: Outcome
    stop_index: int  # windows consumed (1-based); == len(trajectory)
    trajectory: tuple[float, ...]


def accumulate(
    predictions: Sequence[int] | np.ndarray, cfg: EvidenceConfig
) -> EvidenceOutcome:
    """Walk one trial's window votes until a decision or timeout.

    Parameters
    ----------
    predictions : sequence of int
        Window labels in temporal order, ``ClassLabel`` values (0=Left,
        1=Right). A Right vote adds ``step``, a Left vote subtracts it.
    cfg : EvidenceConfig

    Returns
    -------
    EvidenceOutcome
        Decision (Left/Right/Timeout), the 1-based index of the last
        window consumed, and the evidence value after every consumed
        window. Windows after the stop index are never consumed.
    """
    preds = [int(p) for p in predictions]
    if not preds:
        raise EmptyTrial("cannot accumulate over zero windows")
    need = cfg.votes_to_decide
    step = _decimal(cfg.step)
    net = 0
    trajectory: list[float] = []
    for i, p in enumerate(preds):
        net += 1 if p == ClassLabel.Right.value else -1
        trajectory.append(float(net * step))
        if abs(net) >= need:
            decision = Outcome.Right if net > 0 else Outcome.Left
            return EvidenceOutcome(decision, i + 1, tuple(trajectory))
    return EvidenceOutcome(Outcome.Timeout, len(preds), tuple(trajectory))


@dataclass(frozen=True)
class TrialResult:
    label: ClassLabel
    outcome: EvidenceOutcome
    latency_s: float | None  # None on timeout


@dataclass(frozen=True)
class TrialReport:
    """Aggregate trial-level outcomes for one replayed session."""

    results: tuple[TrialResult, ...]
    config: EvidenceConfig
    win_len_s: float
    step_s: float

    @property
    def n_trials(self) -> int:
        return len(self.results)

    @property
    def correct_n(self) -> int:
        return sum(
            r.outcome.decision.matches(r.label)
            for r in self.results
            if r.outcome.decision is not Outcome.Timeout
        )

    @property
    def timeout_n(self) -> int:
        return sum(r.outcome.decision is Outcome.Timeout for r in self.results)

    @property
    def incorrect_n(self) -> int:
        return self.n_trials - self.correct_n - self.timeout_n

    @property
    def correct_pct(self) -> float:
        return 100.0 * self.correct_n / self.n_trials

    @property
    def incorrect_pct(self) -> float:
        return 100.0 * self.incorrect_n / self.n_trials

    @property
    def timeout_pct(self) -> float:
        return 100.0 * self.timeout_n / self.n_trials

    @property
    def mean_latency_windows(self) -> float | None:
        stops = [
            r.outcome.stop_index
            for r in self.results
            if r.outcome.decision is not Outcome.Timeout
        ]
        return float(np.mean(stops)) if stops else None

    @property
    def mean_latency_s(self) -> float | None:
        lats = [r.latency_s for r in self.results if r.latency_s is not None]
        return float(np.mean(lats)) if lats else None

    def to_dict(self, trials: bool = True) -> dict:
        doc = {
            "threshold": self.config.threshold,
            "step": self.config.step,
            "n_trials": self.n_trials,
            "correct_n": self.correct_n,
            "incorrect_n": self.incorrect_n,
            "timeout_n": self.timeout_n,
            "correct_pct": self.correct_pct,
            "incorrect_pct": self.incorrect_pct,
            "timeout_pct": self.timeout_pct,
            "mean_latency_windows": self.mean_latency_windows,
            "mean_latency_s": self.mean_latency_s,
        }
        if trials:
            doc["trials"] = [
                {
                    "label": r.label.name,
                    "decision": r.outcome.decision.name,
                    "stop_index": r.outcome.stop_index,
                    "latency_s": r.latency_s,
                }
                for r in self.results
            ]
        return doc


def _latency_s(outcome: EvidenceOutcome, params: PreprocessParams) -> float | None:
    if outcome.decision is Outcome.Timeout:
        return None
    # the k-th window's last sample arrives win_len + (k-1)*step seconds in
    return params.win_len_s + (outcome.stop_index - 1) * params.step_s


def _report_from_predictions(
    ws: WindowSet, predictions: np.ndarray, cfg: EvidenceConfig, params: PreprocessParams
) -> TrialReport:
    results = []
    label_of = {int(t): int(ws.labels[sl][0]) for t, sl in ws.trial_slices()}
    for t, sl in ws.trial_slices():
        outcome = accumulate(predictions[sl], cfg)
        results.append(
            TrialResult(
                label=ClassLabel(label_of[t]),
                outcome=outcome,
                latency_s=_latency_s(outcome, params),
            )
        )
    return TrialReport(
        results=tuple(results),
        config=cfg,
        win_len_s=params.win_len_s,
        step_s=params.step_s,
    )


def replay_session(
    decoder, rec: Recording, cfg: EvidenceConfig, causal: bool = False
) -> TrialReport:
    """Run the decoder over every trial of a recording and accumulate.

    ``decoder`` needs ``params``, ``windows(rec, causal=)`` and
    ``predict_windows(ws)``; predictions are computed for all windows, the
    accumulator then consumes each trial's prefix.
    """
    ws = decoder.windows(rec, causal=causal)
    predictions = decoder.predict_windows(ws)
    return _report_from_predictions(ws, predictions, cfg, decoder.params)


@dataclass(frozen=True)
class GridResult:
    best: EvidenceConfig
    cells: tuple[tuple[EvidenceConfig, TrialReport], ...]
    objective: str

    def report_for(self, cfg: EvidenceConfig) -> TrialReport:
        for c, rep in self.cells:
            if c == cfg:
                return rep
        raise KeyError(cfg)

    @property
    def best_report(self) -> TrialReport:
        return self.report_for(self.best)

    def to_csv(self) -> str:
        """Threshold rows x step columns; cells are correct/incorrect/timeout %."""
        thresholds = sorted({c.threshold for c, _ in self.cells})
        steps = sorted({c.step for c, _ in self.cells})
        by_key = {(c.threshold, c.step): rep for c, rep in self.cells}
        lines = ["theta\\delta," + ",".join(str(d) for d in steps)]
        for th in thresholds:
            row = [str(th)]
            for d in steps:
                rep = by_key[(th, d)]
                row.append(
                    f"{rep.correct_pct:.2f}/{rep.incorrect_pct:.2f}/{rep.timeout_pct:.2f}"
                )
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "best": {"threshold": self.best.threshold, "step": self.best.step},
            "best_report": self.best_report.to_dict(),
            "cells": [rep.to_dict(trials=False) for _, rep in self.cells],
        }


def grid_search(
    decoder,
    rec: Recording,
    thresholds: Iterable[float] = DEFAULT_THRESHOLDS,
    steps: Iterable[float] = DEFAULT_STEPS,
    objective: str = "counts",
    alpha: float = 1.0,
    beta: float = 0.5,
    causal: bool = False,
) -> GridResult:
    """Sweep (threshold, step) pairs over one recording's trials.

    Window predictions are computed once; each grid cell only re-runs the
    integer accumulator. With ``objective="counts"`` the winner maximizes
    correct trials, breaking ties by fewer incorrect, fewer timeouts, then
    smaller threshold and smaller step. ``objective="weighted"`` maximizes
    ``correct - alpha*incorrect - beta*timeout`` with the same final
    tie-breaks.
    """
    thresholds = sorted(set(float(t) for t in thresholds))
    steps = sorted(set(float(d) for d in steps))
    if not thresholds or not steps:
        raise EmptyGrid("need at least one threshold and one step")
    if objective not in ("counts", "weighted"):
        raise ValueError(f"unknown objective {objective!r}")

    ws = decoder.windows(rec, causal=causal)
    predictions = decoder.predict_windows(ws)
    cells = []
    for th, d in product(thresholds, steps):
        cfg = EvidenceConfig(threshold=th, step=d)
        cells.append((cfg, _report_from_predictions(ws, predictions, cfg, decoder.params)))

    if objective == "counts":
        def key(cell):
            cfg, rep = cell
            return (rep.correct_n, -rep.incorrect_n, -rep.timeout_n,
                    -cfg.threshold, -cfg.step)
    else:
        def key(cell):
            cfg, rep = cell
            score = rep.correct_n - alpha * rep.incorrect_n - beta * rep.timeout_n
            return (score, -cfg.threshold, -cfg.step)

    best = max(cells, key=key)[0]
    return GridResult(best=best, cells=tuple(cells), objective=objective)


@dataclass(frozen=True)
class StreamEvent:
    """One consumed window during a streamed replay."""

    trial_index: int
    window_index: int  # 1-based within the trial
    evidence: float
    state: str  # "accumulating" until the final window's Left/Right/Timeout


def stream_replay(
    decoder,
    rec: Recording,
    cfg: EvidenceConfig,
    realtime: bool = False,
) -> Iterator[StreamEvent]:
    """Replay a recording as a causal stream, one event per consumed window.

    Samples pass through the forward-only filter cascade in arrival order
    (state carried across trials and inter-trial gaps), each window is
    classified as soon as its last sample lands, and the trial stops
    consuming windows at the decision. With ``realtime=True`` the stream
    sleeps one window step between events. Decisions are identical to
    ``replay_session(..., causal=True)``.
    """
    params: PreprocessParams = decoder.params
    win = int(round(params.win_len_s * rec.fs))
    step = int(round(params.step_s * rec.fs))
    spans = extract_trials(rec)  # marker walk only; samples re-filtered below
    if not spans:
        raise NoTrials("recording has no cue/feedback markers")

    coeffs = design_bandpass(params.band_spec(rec.fs))
    state = causal_filter_state(coeffs, rec.n_channels)
    pos = 0
    for t, trial in enumerate(spans):
        start, end = trial.start_sample, trial.start_sample + trial.n_samples
        if start > pos:  # advance filter state through the gap
            _, state = filter_causal_step(coeffs, state, rec.samples[pos:start])
        block, state = filter_causal_step(coeffs, state, rec.samples[start:end])
        pos = end
        if params.car:
            block = block - block.mean(axis=1, keepdims=True)

        n_windows = 1 + (block.shape[0] - win) // step
        need = cfg.votes_to_decide
        step_frac = _decimal(cfg.step)
        net = 0
        for w in range(n_windows):
            one = WindowSet(
                windows=block[w * step : w * step + win][None],
                labels=np.array([trial.label.value]),
                trial_index=np.array([t]),
                run_index=np.array([trial.run_index]),
                fs=rec.fs,
                win_len=win,
                win_step=step,
            )
            vote = int(decoder.predict_windows(one)[0])
            net += 1 if vote == ClassLabel.Right.value else -1
            ev = float(net * step_frac)
            if abs(net) >= need:
                outcome = "Right" if net > 0 else "Left"
            elif w + 1 == n_windows:
                outcome = "Timeout"
            else:
                outcome = "accumulating"
            if realtime:
                time.sleep(params.step_s)
            yield StreamEvent(trial_index=t, window_index=w + 1,
                              evidence=ev, state=outcome)
            if outcome != "accumulating":
                break


def stream_to_report(
    decoder,
    rec: Recording,
    cfg: EvidenceConfig,
    realtime: bool = False,
    on_event=None,
) -> TrialReport:
    """Consume a full streamed replay and assemble the trial report.

    on_event, when given, is called with every StreamEvent as it happens.
    """
    labels = [t.label for t in extract_trials(rec)]
    params: PreprocessParams = decoder.params
    traj: dict[int, list[float]] = {}
    final: dict[int, str] = {}
    for ev in stream_replay(decoder, rec, cfg, realtime=realtime):
        if on_event is not None:
            on_event(ev)
        traj.setdefault(ev.trial_index, []).append(ev.evidence)
        final[ev.trial_index] = ev.state
    results = []
    for t, label in enumerate(labels):
        outcome = EvidenceOutcome(
            decision=Outcome(final[t]),
            stop_index=len(traj[t]),
            trajectory=tuple(traj[t]),
        )
        results.append(
            TrialResult(label=label, outcome=outcome,
                        latency_s=_latency_s(outcome, params))
        )
    return TrialReport(
        results=tuple(results),
        config=cfg,
        win_len_s=params.win_len_s,
        step_s=params.step_s,
    )
