"""Post-hoc analysis: elastic distance between originals and their
augmentations, and a paired signed-rank test over the distances.

The distance is classic dynamic time warping with steps (1,0), (0,1),
(1,1) and per-step Euclidean cost across channels (multivariate
dependent form). Reported magnitudes depend on normalization and data,
so only orderings and significance are meaningful across datasets.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import augbase, viewmaker as vmod
from .core import Discharge
from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class DtwConfig:
    band: int | None = None  # Sakoe-Chiba half-width, in steps

    def __post_init__(self):
        if self.band is not None and self.band < 0:
            raise ConfigError("band must be >= 0")


def dtw(a: np.ndarray, b: np.ndarray, cfg: DtwConfig = DtwConfig()) -> float:
    """Alignment cost between (Ta, d) and (Tb, d) series."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.ndim != 2 or b.ndim != 2:
        raise ConfigError("dtw expects 2-D series")
    if a.shape[1] != b.shape[1]:
        raise ConfigError(f"channel mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise ConfigError("dtw requires nonempty series")
    ta, tb = a.shape[0], b.shape[0]
    if cfg.band is not None and cfg.band < abs(ta - tb):
        raise ConfigError(
            f"band {cfg.band} admits no alignment path for lengths {ta} vs {tb}"
        )
    # local cost row by row; direct differences keep dtw(a, a) exactly zero
    prev = np.full(tb, np.inf)
    for i in range(ta):
        diff = b - a[i]
        cost_row = np.sqrt((diff * diff).sum(axis=1))
        if cfg.band is not None:
            lo = max(0, i - cfg.band)
            hi = min(tb, i + cfg.band + 1)
            mask = np.ones(tb, dtype=bool)
            mask[lo:hi] = False
            cost_row = np.where(mask, np.inf, cost_row)
        cur = np.empty(tb)
        if i == 0:
            cur[0] = cost_row[0]
            for j in range(1, tb):
                cur[j] = cost_row[j] + cur[j - 1]
        else:
            cur[0] = cost_row[0] + prev[0]
            for j in range(1, tb):
                cur[j] = cost_row[j] + min(prev[j], cur[j - 1], prev[j - 1])
        prev = cur
    return float(prev[-1])


@dataclass(frozen=True)
class WilcoxonResult:
    w_plus: float
    w_minus: float
    n: int
    p_value: float
    method: str  # "exact" | "normal"


def wilcoxon_signed_rank(
    x: np.ndarray, y: np.ndarray, exact_threshold: int = 20
) -> WilcoxonResult:
    """Two-sided paired signed-rank test on differences x - y.

    Zero differences are dropped; tied absolute differences take
    midranks. The p-value is exact (full sign-assignment distribution)
    for n <= ``exact_threshold``, else a tie-corrected normal
    approximation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigError("wilcoxon_signed_rank expects paired 1-D samples")
    diff = x - y
    diff = diff[diff != 0.0]
    n = diff.size
    if n == 0:
        raise NumericError("all differences are zero: test undefined")
    ranks = _midranks(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    w_minus = float(ranks[diff < 0].sum())
    if n <= exact_threshold:
        p = _exact_two_sided_p(ranks, w_plus)
        method = "exact"
    else:
        p = _normal_two_sided_p(diff, ranks, w_plus)
        method = "normal"
    return WilcoxonResult(w_plus=w_plus, w_minus=w_minus, n=n, p_value=min(p, 1.0), method=method)


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_two_sided_p(ranks: np.ndarray, w_plus: float) -> float:
    """Distribution of W+ over all 2^n sign assignments, by convolution.

    Midranks are half-integers at worst, so doubling them gives exact
    integer support. Equivalent to full enumeration.
    """
    scaled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(scaled.sum())
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in scaled:
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[: total + 1 - r]
        dist = dist + shifted
    dist /= 2.0 ** len(scaled)
    w2 = int(round(2.0 * w_plus))
    lo = min(w2, total - w2)
    hi = max(w2, total - w2)
    return float(dist[: lo + 1].sum() + dist[hi:].sum())


def _normal_two_sided_p(diff: np.ndarray, ranks: np.ndarray, w_plus: float) -> float:
    n = diff.size
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    # tie correction over groups of equal |difference|
    _, counts = np.unique(np.abs(diff), return_counts=True)
    var -= (counts**3 - counts).sum() / 48.0
    if var <= 0:
        raise NumericError("zero variance in signed-rank statistic")
    z = (w_plus - mean) / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return p


@dataclass
class CompareReport:
    pairs: list[tuple[str, float, float]]  # shot id, view distance, baseline distance
    mean_view: float
    mean_baseline: float
    wilcoxon: WilcoxonResult | None
    note: str = ""


def compare_augmentations(
    corpus: list[Discharge],
    vm: vmod.ViewmakerModel,
    aug_spec: augbase.AugSpec,
    n_samples: int,
    rng: np.random.Generator,
    dtw_cfg: DtwConfig = DtwConfig(),
) -> CompareReport:
    """DTW(original, view) vs DTW(original, baseline augmentation) over a
    random sample of disruptive shots, with a paired signed-rank test."""
    disruptive = [d for d in corpus if d.disruptive]
    if not disruptive:
        raise ConfigError("compare_augmentations needs at least one disruptive shot")
    n = min(n_samples, len(disruptive))
    picks = rng.choice(len(disruptive), size=n, replace=False)
    pairs: list[tuple[str, float, float]] = []
    for k in sorted(picks):
        shot = disruptive[int(k)]
        view = vmod.make_view(vm, shot.samples, rng)
        baseline = augbase.apply(aug_spec, shot.samples, rng, vm.schema)
        pairs.append(
            (shot.id, dtw(shot.samples, view, dtw_cfg), dtw(shot.samples, baseline, dtw_cfg))
        )
    d_view = np.array([p[1] for p in pairs])
    d_base = np.array([p[2] for p in pairs])
    note = ""
    result: WilcoxonResult | None = None
    if len(pairs) < 5:
        note = "fewer than 5 pairs: signed-rank test not run"
    else:
        try:
            result = wilcoxon_signed_rank(d_view, d_base)
        except NumericError as exc:
            note = f"signed-rank test undefined: {exc}"
    return CompareReport(
        pairs=pairs,
        mean_view=float(d_view.mean()),
        mean_baseline=float(d_base.mean()),
        wilcoxon=result,
        note=note,
    )


def write_pairs_csv(report: CompareReport, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shot_id", "dtw_view", "dtw_baseline"])
        for shot_id, dv, db in report.pairs:
            writer.writerow([shot_id, "%.17g" % dv, "%.17g" % db])


def format_compare_report(report: CompareReport) -> str:
    lines = [
        "augmentation distance comparison",
        f"pairs: {len(report.pairs)}",
        f"mean_dtw_view: {report.mean_view:.6f}",
        f"mean_dtw_baseline: {report.mean_baseline:.6f}",
    ]
    if report.wilcoxon is not None:
        w = report.wilcoxon
        lines.append(
            f"wilcoxon: W+={w.w_plus} W-={w.w_minus} n={w.n} "
            f"p={w.p_value:.6g} ({w.method})"
        )
    if report.note:
        lines.append(f"note: {report.note}")
    return "\n".join(lines) + "\n"
