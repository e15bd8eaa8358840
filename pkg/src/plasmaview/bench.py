"""Shot-level disruption-prediction benchmark.

A two-threshold hysteresis counter turns a disruptivity trace into an
alarm decision: scores at or above the high threshold increment the
counter, scores at or below the low threshold reset it, and scores in
between hold it. The alarm fires when the counter reaches ``h``; only
steps at least the required engagement time before series end can fire.
Shot outcomes aggregate into recall/precision/F2 at an operating point
and an AUC from sweeping the high threshold.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Discharge
from .errors import ConfigError, MissingInputError

CATEGORIES = ("TP", "FP", "TN", "FN")


@dataclass(frozen=True)
class AlarmConfig:
    t_low: float = 0.25
    t_high: float = 0.5
    h: int = 2
    dt_req_ms: float = 40.0  # minimum lead time for mitigation to engage
    grid_step_ms: float = 5.0

    def __post_init__(self):
        if not 0.0 <= self.t_low < self.t_high <= 1.0:
            raise ConfigError(
                f"thresholds must satisfy 0 <= t_low < t_high <= 1, got "
                f"({self.t_low}, {self.t_high})"
            )
        if self.h < 1:
            raise ConfigError("hysteresis count h must be >= 1")
        if self.dt_req_ms < 0 or self.grid_step_ms <= 0:
            raise ConfigError("invalid alarm durations")


@dataclass(frozen=True)
class ShotOutcome:
    shot_id: str
    disruptive: bool
    predicted_positive: bool
    alarm_time_ms: float | None
    category: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ConfigError(f"unknown category {self.category!r}")
        if self.predicted_positive != (self.alarm_time_ms is not None):
            raise ConfigError("alarm_time must be present iff predicted positive")
        consistent = {
            "TP": self.disruptive and self.predicted_positive,
            "FN": self.disruptive,  # includes fired-but-late alarms
            "FP": not self.disruptive and self.predicted_positive,
            "TN": not self.disruptive and not self.predicted_positive,
        }[self.category]
        if not consistent:
            raise ConfigError(
                f"category {self.category} inconsistent with truth/prediction"
            )


@dataclass
class MetricsReport:
    counts: dict[str, int]
    recall: float
    precision: float
    f2: float
    auc: float
    roc_points: list[tuple[float, float]]
    outcomes: list[ShotOutcome] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    config: AlarmConfig | None = None


def run_alarm(
    scores: np.ndarray,
    cfg: AlarmConfig,
    times_ms: np.ndarray | None = None,
) -> tuple[bool, float | None]:
    """Run the hysteresis counter over one disruptivity trace.

    Returns (fired, alarm_time_ms). Steps within ``dt_req_ms`` of series
    end cannot fire a countable alarm. ``times_ms`` defaults to the
    uniform grid 0, step, 2*step, ...
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ConfigError("run_alarm requires a nonempty score series")
    if not np.all(np.isfinite(scores)):
        raise ConfigError("scores must be finite")
    if times_ms is None:
        times_ms = np.arange(scores.size) * cfg.grid_step_ms
    times_ms = np.asarray(times_ms, dtype=float)
    if times_ms.shape != scores.shape:
        raise ConfigError("times and scores must have equal length")
    deadline = times_ms[-1] - cfg.dt_req_ms
    counter = 0
    for t, s in zip(times_ms, scores):
        if t > deadline:
            break
        if s >= cfg.t_high:
            counter += 1
        elif s <= cfg.t_low:
            counter = 0
        if counter >= cfg.h:
            return True, float(t)
    return False, None


def categorize(
    disruptive: bool,
    fired: bool,
    alarm_time_ms: float | None,
    disruption_time_ms: float | None,
    cfg: AlarmConfig,
) -> str:
    """Shot-level confusion category; a late alarm on a disruptive shot
    (inside the engagement window) counts as a miss."""
    if disruptive:
        if disruption_time_ms is None:
            raise ConfigError("disruptive shot requires a disruption time")
        if fired and alarm_time_ms is not None and alarm_time_ms <= disruption_time_ms - cfg.dt_req_ms:
            return "TP"
        return "FN"
    return "FP" if fired else "TN"


def f2(precision: float, recall: float) -> float:
    """F-beta with beta=2: recall weighted four times precision."""
    if not (0.0 <= precision <= 1.0 and 0.0 <= recall <= 1.0):
        raise ConfigError("precision and recall must lie in [0, 1]")
    if precision == 0.0 and recall == 0.0:
        return 0.0
    return 5.0 * precision * recall / (4.0 * precision + recall)


def _shot_outcome(
    shot_id: str,
    disruptive: bool,
    disruption_time_ms: float | None,
    times: np.ndarray,
    scores: np.ndarray,
    cfg: AlarmConfig,
) -> ShotOutcome:
    fired, alarm_time = run_alarm(scores, cfg, times)
    category = categorize(disruptive, fired, alarm_time, disruption_time_ms, cfg)
    return ShotOutcome(
        shot_id=shot_id,
        disruptive=disruptive,
        predicted_positive=fired,
        alarm_time_ms=alarm_time,
        category=category,
    )


def sweep_auc(
    scores_by_shot: dict[str, tuple[np.ndarray, np.ndarray]],
    truths: dict[str, tuple[bool, float | None]],
    cfg: AlarmConfig,
    grid_size: int = 99,
) -> tuple[float, list[tuple[float, float]]]:
    """Shot-level ROC by sweeping t_high over a uniform grid in (0, 1).

    t_low is tied to t_high / 2 and h is held fixed, so the sweep stays
    one-dimensional. Points are sorted by FPR and integrated by
    trapezoid with anchored endpoints (0,0) and (1,1).
    """
    n_pos = sum(1 for d, _ in truths.values() if d)
    n_neg = len(truths) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("sweep_auc needs at least one shot of each class")
    points = []
    for t_high in np.linspace(0.0, 1.0, grid_size + 2)[1:-1]:
        sub = AlarmConfig(
            t_low=t_high / 2.0,
            t_high=float(t_high),
            h=cfg.h,
            dt_req_ms=cfg.dt_req_ms,
            grid_step_ms=cfg.grid_step_ms,
        )
        tp = fp = 0
        for shot_id, (times, scores) in scores_by_shot.items():
            disruptive, dtime = truths[shot_id]
            outcome = _shot_outcome(shot_id, disruptive, dtime, times, scores, sub)
            if outcome.category == "TP":
                tp += 1
            elif outcome.category == "FP":
                fp += 1
        points.append((fp / n_neg, tp / n_pos))
    pts = sorted(set(points) | {(0.0, 0.0), (1.0, 1.0)})
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    auc = float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))
    return auc, pts


def evaluate(
    scores_by_shot: dict[str, tuple[np.ndarray, np.ndarray]],
    corpus: list[Discharge],
    cfg: AlarmConfig = AlarmConfig(),
    grid_size: int = 99,
) -> MetricsReport:
    """Full benchmark: operating-point confusion counts plus swept AUC."""
    missing = [d.id for d in corpus if d.id not in scores_by_shot]
    if missing:
        raise MissingInputError(
            "missing score series for shot ids: " + ", ".join(sorted(missing))
        )
    outcomes = []
    truths: dict[str, tuple[bool, float | None]] = {}
    for d in corpus:
        times, scores = scores_by_shot[d.id]
        truths[d.id] = (d.disruptive, d.disruption_time_ms)
        outcomes.append(
            _shot_outcome(d.id, d.disruptive, d.disruption_time_ms, times, scores, cfg)
        )
    counts = {c: 0 for c in CATEGORIES}
    for o in outcomes:
        counts[o.category] += 1
    flags = []
    tp, fp, fn = counts["TP"], counts["FP"], counts["FN"]
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    if tp + fn == 0:
        flags.append("no disruptive shots: recall defined as 0")
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    if tp + fp == 0:
        flags.append("no predicted positives: precision defined as 0")
    try:
        auc, roc = sweep_auc({d.id: scores_by_shot[d.id] for d in corpus}, truths, cfg, grid_size)
    except ConfigError:
        auc, roc = float("nan"), []
        flags.append("single-class corpus: AUC undefined")
    return MetricsReport(
        counts=counts,
        recall=recall,
        precision=precision,
        f2=f2(precision, recall),
        auc=auc,
        roc_points=roc,
        outcomes=outcomes,
        flags=flags,
        config=cfg,
    )


def write_roc_csv(roc_points: list[tuple[float, float]], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for x, y in roc_points:
            writer.writerow(["%.17g" % x, "%.17g" % y])


def write_outcomes_csv(outcomes: list[ShotOutcome], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shot_id", "category", "alarm_time_ms"])
        for o in outcomes:
            writer.writerow(
                [o.shot_id, o.category, "" if o.alarm_time_ms is None else "%.17g" % o.alarm_time_ms]
            )


def format_report(report: MetricsReport) -> str:
    """Human-readable structured text summary of one evaluation."""
    cfg = report.config or AlarmConfig()
    lines = [
        "disruption benchmark report",
        f"operating_point: t_low={cfg.t_low} t_high={cfg.t_high} h={cfg.h} "
        f"dt_req_ms={cfg.dt_req_ms}",
        f"shots: {sum(report.counts.values())}",
        "counts: " + " ".join(f"{k}={report.counts[k]}" for k in CATEGORIES),
        f"recall: {report.recall:.6f}",
        f"precision: {report.precision:.6f}",
        f"f2: {report.f2:.6f}",
        f"auc: {report.auc:.6f}",
    ]
    for flag in report.flags:
        lines.append(f"note: {flag}")
    return "\n".join(lines) + "\n"
