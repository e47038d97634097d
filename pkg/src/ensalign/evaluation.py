"""Boundary-error metrics between reference and hypothesis segmentations.

Paired comparison when the boundary counts match; otherwise dynamic time
warping over the boundary end times, with the warped cost averaged over
the hypothesis segments and replicated into the pooled error vector so the
report stays an average over segments rather than a grand mean of files.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import EnsembleAlignment
from .textgrid import IntervalTier

log = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


class CountMismatchError(EvaluationError):
    """Paired comparison on unequal boundary counts; use dtw_error instead."""


@dataclass(frozen=True)
class BoundarySeq:
    """Strictly increasing boundary end times of one segmentation."""

    end_times_s: tuple[float, ...]
    source_id: str = ""

    def __post_init__(self):
        times = tuple(float(t) for t in self.end_times_s)
        if not times:
            raise EvaluationError(f"{self.source_id!r}: boundary sequence is empty")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise EvaluationError(f"{self.source_id!r}: boundary times must be strictly increasing")
        object.__setattr__(self, "end_times_s", times)

    def __len__(self) -> int:
        return len(self.end_times_s)


def _times(seq) -> list[float]:
    if isinstance(seq, BoundarySeq):
        return list(seq.end_times_s)
    times = [float(t) for t in seq]
    if not times:
        raise EvaluationError("boundary sequence is empty")
    return times


def paired_error(ref, hyp) -> np.ndarray:
    """Element-wise |ref - hyp|; requires equal boundary counts."""
    ref_t, hyp_t = _times(ref), _times(hyp)
    if len(ref_t) != len(hyp_t):
        raise CountMismatchError(
            f"{len(ref_t)} reference vs {len(hyp_t)} hypothesis boundaries; use dtw_error"
        )
    return np.abs(np.asarray(ref_t) - np.asarray(hyp_t))


def _dtw_table(ref_t: list[float], hyp_t: list[float]) -> list[list[float]]:
    # Unweighted steps {match, insertion, deletion}; D[0][0] = |r0 - h0|.
    nr, nh = len(ref_t), len(hyp_t)
    inf = float("inf")
    table = [[inf] * nh for _ in range(nr)]
    for i in range(nr):
        for j in range(nh):
            cost = abs(ref_t[i] - hyp_t[j])
            if i == 0 and j == 0:
                table[i][j] = cost
            else:
                best = inf
                if i > 0 and j > 0:
                    best = table[i - 1][j - 1]
                if i > 0 and table[i - 1][j] < best:
                    best = table[i - 1][j]
                if j > 0 and table[i][j - 1] < best:
                    best = table[i][j - 1]
                table[i][j] = cost + best
    return table


def dtw_total_cost(ref, hyp) -> float:
    """Minimum summed |ref_i - hyp_j| over monotone warping paths."""
    ref_t, hyp_t = _times(ref), _times(hyp)
    return _dtw_table(ref_t, hyp_t)[-1][-1]


def dtw_path(ref, hyp) -> list[tuple[int, int]]:
    """One optimal warping path as (ref index, hyp index) pairs."""
    ref_t, hyp_t = _times(ref), _times(hyp)
    table = _dtw_table(ref_t, hyp_t)
    i, j = len(ref_t) - 1, len(hyp_t) - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        candidates = []
        if i > 0 and j > 0:
            candidates.append((table[i - 1][j - 1], i - 1, j - 1))
        if i > 0:
            candidates.append((table[i - 1][j], i - 1, j))
        if j > 0:
            candidates.append((table[i][j - 1], i, j - 1))
        _, i, j = min(candidates)
        path.append((i, j))
    path.reverse()
    return path


def dtw_cost_oracle(ref, hyp, max_paths: int = 2_000_000) -> float:
    """Exhaustive minimum over all monotone warping paths (small inputs only)."""
    ref_t, hyp_t = _times(ref), _times(hyp)
    nr, nh = len(ref_t), len(hyp_t)
    best = float("inf")
    # A path is a sequence of steps in {(1,0),(0,1),(1,1)} from (0,0) to the
    # far corner; enumerate by choosing how many diagonal steps to take.
    seen = 0
    stack = [((0, 0), abs(ref_t[0] - hyp_t[0]))]
    while stack:
        (i, j), cost = stack.pop()
        seen += 1
        if seen > max_paths:
            raise EvaluationError(f"more than {max_paths} partial paths; input too large")
        if i == nr - 1 and j == nh - 1:
            best = min(best, cost)
            continue
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            ni, nj = i + di, j + dj
            if ni < nr and nj < nh:
                stack.append(((ni, nj), cost + abs(ref_t[ni] - hyp_t[nj])))
    return best


def dtw_error(ref, hyp) -> tuple[np.ndarray, int]:
    """Warped cost normalized by the hypothesis length k, replicated k times.

    Returns (per-boundary error vector of k equal entries, k).
    """
    hyp_t = _times(hyp)
    k = len(hyp_t)
    total = dtw_total_cost(ref, hyp)
    return np.full(k, total / k), k


@dataclass(frozen=True)
class FileErrors:
    """One file's contribution to the pooled error vector.

    final_mask marks the entries excluded by the adjusted metrics (the
    structurally file-final boundary).
    """

    source_id: str
    errors_s: np.ndarray
    final_mask: np.ndarray

    def __post_init__(self):
        errors = np.asarray(self.errors_s, dtype=np.float64)
        mask = np.asarray(self.final_mask, dtype=bool)
        if errors.shape != mask.shape or errors.ndim != 1:
            raise EvaluationError("errors and final mask must be equal-length vectors")
        object.__setattr__(self, "errors_s", errors)
        object.__setattr__(self, "final_mask", mask)

    @classmethod
    def flag_final(cls, source_id: str, errors: np.ndarray) -> "FileErrors":
        """Flag the last entry; for both routes it belongs to the final segment."""
        mask = np.zeros(len(errors), dtype=bool)
        mask[-1] = True
        return cls(source_id, errors, mask)


@dataclass(frozen=True)
class ErrorReport:
    """Pooled absolute boundary errors with plain and adjusted central tendencies.

    Metrics are computed over the pooled per-boundary vector, not over
    per-file means; adjusted variants exclude the file-final boundaries.
    """

    pooled_abs_err_s: np.ndarray
    mean_abs_err_s: float
    median_abs_err_s: float
    adj_mean_abs_err_s: float | None
    adj_median_abs_err_s: float | None
    file_count: int
    boundary_count: int
    files_empty_after_adjustment: tuple[str, ...]


def adjusted(files: Sequence[FileErrors]) -> ErrorReport:
    """Pool per-file error vectors and compute both metric variants."""
    if not files:
        raise EvaluationError("no files to evaluate")
    pooled = np.concatenate([f.errors_s for f in files])
    kept = np.concatenate([f.errors_s[~f.final_mask] for f in files])
    empty = tuple(f.source_id for f in files if bool(f.final_mask.all()))
    for source_id in empty:
        log.info("file %s contributes nothing after final-boundary adjustment", source_id)
    return ErrorReport(
        pooled_abs_err_s=pooled,
        mean_abs_err_s=float(np.mean(pooled)),
        median_abs_err_s=float(np.median(pooled)),
        adj_mean_abs_err_s=float(np.mean(kept)) if kept.size else None,
        adj_median_abs_err_s=float(np.median(kept)) if kept.size else None,
        file_count=len(files),
        boundary_count=int(pooled.size),
        files_empty_after_adjustment=empty,
    )


@dataclass(frozen=True)
class EvalPair:
    """Reference and hypothesis boundary sequences for one file."""

    ref: BoundarySeq
    hyp: BoundarySeq

    @property
    def source_id(self) -> str:
        return self.hyp.source_id or self.ref.source_id


def exclude_single_segment(pairs: Sequence[EvalPair]) -> list[EvalPair]:
    """Drop files whose hypothesis has a single segment; their only boundary
    is the file end and carries no model information."""
    kept = []
    for pair in pairs:
        if len(pair.hyp) == 1:
            log.info("excluding %s: single-segment transcription", pair.source_id)
        else:
            kept.append(pair)
    return kept


def evaluate_pair(pair: EvalPair, method: str = "auto") -> FileErrors:
    """Paired when counts match (or forced), DTW otherwise."""
    if method not in ("auto", "paired", "dtw"):
        raise EvaluationError(f"unknown method {method!r}")
    if method == "paired" or (method == "auto" and len(pair.ref) == len(pair.hyp)):
        return FileErrors.flag_final(pair.source_id, paired_error(pair.ref, pair.hyp))
    errors, _ = dtw_error(pair.ref, pair.hyp)
    return FileErrors.flag_final(pair.source_id, errors)


def boundary_seq_from_tier(tier: IntervalTier, source_id: str = "") -> BoundarySeq:
    """End times of the labeled intervals of a segment tier."""
    times = [iv.end_s for iv in tier.intervals if iv.text.strip()]
    if not times:
        raise EvaluationError(f"tier {tier.name!r} of {source_id!r} has no labeled intervals")
    return BoundarySeq(tuple(times), source_id)


@dataclass(frozen=True)
class CiWidthReport:
    """Central tendencies of pooled confidence-interval widths."""

    mean_width_ms: float
    median_width_ms: float
    boundary_count: int


def ci_width_report(ensembles: Sequence[EnsembleAlignment]) -> CiWidthReport:
    widths = []
    for ea in ensembles:
        widths.extend(ea.ci_widths_s())
    if not widths:
        raise EvaluationError("no confidence intervals to summarize")
    arr = np.asarray(widths) * 1000.0
    return CiWidthReport(float(np.mean(arr)), float(np.median(arr)), len(widths))


@dataclass(frozen=True)
class ReportRow:
    """One row of the boundary-error table (values in ms)."""

    data: str
    transcription: str
    method: str
    mean_abs_err_ms: float
    median_abs_err_ms: float
    adj_mean_abs_err_ms: float | None
    adj_median_abs_err_ms: float | None

    @classmethod
    def from_report(
        cls, report: ErrorReport, data: str = "", transcription: str = "", method: str = ""
    ) -> "ReportRow":
        to_ms = lambda v: None if v is None else v * 1000.0
        return cls(
            data,
            transcription,
            method,
            report.mean_abs_err_s * 1000.0,
            report.median_abs_err_s * 1000.0,
            to_ms(report.adj_mean_abs_err_s),
            to_ms(report.adj_median_abs_err_s),
        )


ERROR_REPORT_COLUMNS = [
    "data",
    "transcription",
    "eval_method",
    "mean_abs_err_ms",
    "median_abs_err_ms",
    "adj_mean_abs_err_ms",
    "adj_median_abs_err_ms",
]


def write_error_report_csv(fileobj, rows: Sequence[ReportRow]) -> None:
    writer = csv.writer(fileobj)
    writer.writerow(ERROR_REPORT_COLUMNS)
    for row in rows:
        fmt = lambda v: "" if v is None else f"{v:.2f}"
        writer.writerow(
            [
                row.data,
                row.transcription,
                row.method,
                fmt(row.mean_abs_err_ms),
                fmt(row.median_abs_err_ms),
                fmt(row.adj_mean_abs_err_ms),
                fmt(row.adj_median_abs_err_ms),
            ]
        )


CI_WIDTH_COLUMNS = ["data", "transcription", "mean_width_ms", "median_width_ms"]


def write_ci_width_csv(fileobj, rows: Sequence[tuple[str, str, float, float]]) -> None:
    writer = csv.writer(fileobj)
    writer.writerow(CI_WIDTH_COLUMNS)
    for data, transcription, mean_ms, median_ms in rows:
        writer.writerow([data, transcription, f"{mean_ms:.2f}", f"{median_ms:.2f}"])
