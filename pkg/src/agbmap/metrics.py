"""Training loss and evaluation statistics for AGB predictions.

The loss combines a per-pixel L1 on density maps, a weighted absolute
difference of the integrated totals and an optional per-pixel L1 on
depth maps. Evaluation covers absolute-error summaries, per-location
aggregation and Spearman rank correlation with optional pruning of the
worst-predicted fraction.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ManifestError, UndefinedCorrelationError
from .validation import check_fraction, check_same_shape

__all__ = [
    "LossConfig",
    "DEFAULT_LOSS_CONFIG",
    "loss",
    "PredictionPair",
    "PREDICTION_FIELDS",
    "read_predictions",
    "write_predictions",
    "abs_error_stats",
    "per_id_aggregate",
    "spearman",
    "pruned_spearman",
    "median_of",
    "EvalReport",
    "evaluate",
]


@dataclass(frozen=True)
class LossConfig:
    """Weights of the total-AGB and depth terms of the training loss.

    alpha1 is of the order of one over the pixel count of a 224x224
    image, which makes the mean-based map term and the sum-based total
    term commensurate.
    """

    alpha1: float = 1e-5
    alpha2: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha1) and self.alpha1 >= 0):
            raise ValueError(f"alpha1 must be finite and >= 0; got {self.alpha1!r}")
        if not (math.isfinite(self.alpha2) and self.alpha2 >= 0):
            raise ValueError(f"alpha2 must be finite and >= 0; got {self.alpha2!r}")


DEFAULT_LOSS_CONFIG = LossConfig()


def loss(pred_map, gt_map, pred_depth=None, gt_depth=None, cfg=DEFAULT_LOSS_CONFIG):
    """L1 density loss + alpha1 * |total difference| + alpha2 * L1 depth loss.

    The map terms are means over pixels (resolution-independent); the
    total term compares the map sums. Depth maps must be both present or
    both absent. Zero iff the maps (and depths, when given) are equal.
    """
    pred = np.asarray(pred_map, dtype=np.float64)
    gt = np.asarray(gt_map, dtype=np.float64)
    check_same_shape(pred, gt, "predicted map", "ground-truth map")
    value = float(np.mean(np.abs(pred - gt)))
    value += cfg.alpha1 * abs(float(pred.sum()) - float(gt.sum()))
    if (pred_depth is None) != (gt_depth is None):
        raise ValueError("depth maps must be both present or both absent")
    if pred_depth is not None:
        pd = np.asarray(pred_depth, dtype=np.float64)
        gd = np.asarray(gt_depth, dtype=np.float64)
        check_same_shape(pd, gd, "predicted depth", "ground-truth depth")
        value += cfg.alpha2 * float(np.mean(np.abs(pd - gd)))
    return value


@dataclass(frozen=True)
class PredictionPair:
    """One evaluated sample: predicted vs true total AGB in kg/m^2."""

    sample_id: str
    predicted_agb: float
    true_agb: float
    location_id: str = ""

    def __post_init__(self):
        for name in ("predicted_agb", "true_agb"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(
                    f"sample {self.sample_id!r}: {name} must be finite and >= 0;"
                    f" got {value!r}"
                )

    @property
    def abs_error(self):
        return abs(self.predicted_agb - self.true_agb)


PREDICTION_FIELDS = ("sample_id", "location_id", "predicted_agb", "true_agb")


def write_predictions(fh, pairs):
    """Write PredictionPairs as the standard predictions CSV.

    ``fh`` is an open text file; floats are written with repr so a
    read-back is value-exact.
    """
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(PREDICTION_FIELDS)
    for p in pairs:
        writer.writerow(
            [p.sample_id, p.location_id, repr(p.predicted_agb), repr(p.true_agb)]
        )


def read_predictions(path):
    """Parse a predictions CSV into PredictionPairs.

    Malformed rows raise ManifestError naming the line number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ManifestError(f"{path}: empty predictions CSV")
        if tuple(reader.fieldnames) != PREDICTION_FIELDS:
            raise ManifestError(
                f"{path}: bad header {reader.fieldnames!r},"
                f" expected {','.join(PREDICTION_FIELDS)}"
            )
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            if any(v is None for v in row.values()):
                raise ManifestError(f"{path}: line {lineno}: wrong number of fields")
            try:
                pairs.append(
                    PredictionPair(
                        sample_id=row["sample_id"],
                        location_id=row["location_id"],
                        predicted_agb=float(row["predicted_agb"]),
                        true_agb=float(row["true_agb"]),
                    )
                )
            except ValueError as err:
                raise ManifestError(f"{path}: line {lineno}: {err}") from err
    return pairs


def _errors(pairs):
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no prediction pairs given")
    return pairs, np.array([p.abs_error for p in pairs], dtype=np.float64)


def abs_error_stats(pairs):
    """(mean, median, std) of absolute errors.

    Median uses the midpoint convention for even n; std is the population
    standard deviation (ddof = 0).
    """
    _, errs = _errors(pairs)
    return float(errs.mean()), float(np.median(errs)), float(errs.std())


def per_id_aggregate(pairs):
    """Aggregate errors per location id, then summarize across locations.

    Returns (per_id, stats): ``per_id`` is a list of
    (location_id, mean_abs_error) in order of first appearance, and
    ``stats`` is the (mean, median, std) over those per-location means.
    Every pair must carry a location_id.
    """
    pairs, _ = _errors(pairs)
    grouped = {}
    order = []
    for p in pairs:
        if not p.location_id:
            raise ValueError(f"sample {p.sample_id!r} has no location_id")
        if p.location_id not in grouped:
            grouped[p.location_id] = []
            order.append(p.location_id)
        grouped[p.location_id].append(p.abs_error)
    per_id = [(lid, float(np.mean(grouped[lid]))) for lid in order]
    means = np.array([m for _, m in per_id], dtype=np.float64)
    return per_id, (float(means.mean()), float(np.median(means)), float(means.std()))


def _average_ranks(values):
    """Ranks 1..n with ties sharing the average of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(pairs):
    """Spearman's rank correlation between predicted and true totals.

    Pearson correlation of average ranks, in [-1, 1]. Raises
    UndefinedCorrelationError for n < 2 or when either side has zero
    rank variance (all values tied).
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise UndefinedCorrelationError(
            f"need at least 2 pairs for a rank correlation; got {len(pairs)}"
        )
    pred_ranks = _average_ranks([p.predicted_agb for p in pairs])
    true_ranks = _average_ranks([p.true_agb for p in pairs])
    pred_centered = pred_ranks - pred_ranks.mean()
    true_centered = true_ranks - true_ranks.mean()
    denom = math.sqrt(float(pred_centered @ pred_centered) * float(true_centered @ true_centered))
    if denom == 0:
        raise UndefinedCorrelationError(
            "rank correlation is undefined: zero rank variance (all values tied)"
        )
    rho = float(pred_centered @ true_centered) / denom
    return min(1.0, max(-1.0, rho))


def pruned_spearman(pairs, prune_fraction=0.2):
    """Spearman after dropping the ceil(fraction * n) worst-predicted pairs.

    "Worst" means largest absolute error; ties keep the earlier pair.
    With prune_fraction = 0 this is exactly ``spearman``.
    """
    pairs = list(pairs)
    check_fraction(prune_fraction, "prune_fraction", inclusive_low=True)
    if not pairs:
        raise ValueError("no prediction pairs given")
    n_drop = math.ceil(prune_fraction * len(pairs))
    if n_drop:
        errs = np.array([p.abs_error for p in pairs])
        keep = np.sort(np.argsort(errs, kind="stable")[: len(pairs) - n_drop])
        pairs = [pairs[i] for i in keep]
    if len(pairs) < 2:
        raise UndefinedCorrelationError(
            f"pruning left only {len(pairs)} pair(s); need at least 2"
        )
    return spearman(pairs)


def median_of(train_totals):
    """Median total AGB of a training set (midpoint convention for even n).

    This is the constant the baseline predictor outputs; see
    estimators.MedianBaselineRegressor for the fit/predict wrapper.
    """
    totals = np.asarray(list(train_totals), dtype=np.float64)
    if totals.size == 0:
        raise ValueError("cannot take the median of an empty training set")
    return float(np.median(totals))


@dataclass
class EvalReport:
    """All requested statistics for one prediction set."""

    n: int
    mean_abs_err: float
    median_abs_err: float
    std_abs_err: float
    per_id: list = None
    per_id_mean: float = None
    per_id_median: float = None
    per_id_std: float = None
    spearman_rho: float = None
    spearman_note: str = ""
    pruned_spearman_rho: float = None
    pruned_spearman_note: str = ""
    prune_fraction: float = None

    def rows(self):
        """(metric, value) rows for CSV output; undefined metrics show a note."""
        out = [
            ("n", self.n),
            ("mean_abs_err", self.mean_abs_err),
            ("median_abs_err", self.median_abs_err),
            ("std_abs_err", self.std_abs_err),
        ]
        if self.per_id is not None:
            out += [
                ("n_ids", len(self.per_id)),
                ("per_id_mean_abs_err", self.per_id_mean),
                ("per_id_median_abs_err", self.per_id_median),
                ("per_id_std_abs_err", self.per_id_std),
            ]
        if self.spearman_rho is not None or self.spearman_note:
            out.append(("spearman_rho", self.spearman_rho if not self.spearman_note else self.spearman_note))
        if self.pruned_spearman_rho is not None or self.pruned_spearman_note:
            out.append(
                (
                    f"pruned_spearman_rho@{self.prune_fraction:g}",
                    self.pruned_spearman_rho
                    if not self.pruned_spearman_note
                    else self.pruned_spearman_note,
                )
            )
        return out

    def format_table(self):
        """Human-readable summary mirroring the usual error-table layout."""
        def fmt(x):
            return "-" if x is None else f"{x:.4f}"

        lines = [
            "                 Mean    Median   Std      n",
            f"All-samples      {fmt(self.mean_abs_err):<8} {fmt(self.median_abs_err):<8}"
            f" {fmt(self.std_abs_err):<8} {self.n}",
        ]
        if self.per_id is not None:
            lines.append(
                f"Per-ID           {fmt(self.per_id_mean):<8} {fmt(self.per_id_median):<8}"
                f" {fmt(self.per_id_std):<8} {len(self.per_id)}"
            )
        if self.spearman_note:
            lines.append(f"Spearman rho     {self.spearman_note}")
        elif self.spearman_rho is not None:
            lines.append(f"Spearman rho     {self.spearman_rho:.4f}")
        if self.pruned_spearman_note:
            lines.append(f"Pruned Spearman  {self.pruned_spearman_note}")
        elif self.pruned_spearman_rho is not None:
            lines.append(
                f"Pruned Spearman  {self.pruned_spearman_rho:.4f}"
                f" (worst {self.prune_fraction:.0%} dropped)"
            )
        return "\n".join(lines)


def evaluate(pairs, per_id=False, rank=False, prune_fraction=None):
    """Assemble an EvalReport; undefined correlations become notes, not crashes."""
    pairs = list(pairs)
    mean, median, std = abs_error_stats(pairs)
    report = EvalReport(
        n=len(pairs), mean_abs_err=mean, median_abs_err=median, std_abs_err=std
    )
    if per_id:
        report.per_id, (report.per_id_mean, report.per_id_median, report.per_id_std) = (
            per_id_aggregate(pairs)
        )
    if rank:
        try:
            report.spearman_rho = spearman(pairs)
        except UndefinedCorrelationError as err:
            report.spearman_note = f"undefined ({err})"
        if prune_fraction is not None:
            report.prune_fraction = prune_fraction
            try:
                report.pruned_spearman_rho = pruned_spearman(pairs, prune_fraction)
            except UndefinedCorrelationError as err:
                report.pruned_spearman_note = f"undefined ({err})"
    return report
