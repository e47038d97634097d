"""Aggregate per-model alignments into median boundaries with confidence
intervals taken from order statistics.

For E members and rank r the interval runs from the r-th to the
(E+1-r)-th ordered estimate; with E=10, r=2 that is the 2nd and 9th
values and the nominal coverage is 97.85%.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

from .aligner import Alignment, LabelSequence

DEFAULT_RANK = 2


class EnsembleMismatchError(ValueError):
    """Member alignments disagree on length or labels."""


class RankError(ValueError):
    """Rank incompatible with the ensemble size."""


@dataclass(frozen=True)
class BoundarySample:
    """All member estimates for one boundary, in fixed member order."""

    boundary_index: int  # 1-based position in the label sequence
    estimates_s: tuple[float, ...]

    def __post_init__(self):
        estimates = tuple(float(e) for e in self.estimates_s)
        if not estimates:
            raise EnsembleMismatchError("a boundary sample needs at least one estimate")
        if any(not math.isfinite(e) or e < 0.0 for e in estimates):
            raise EnsembleMismatchError("boundary estimates must be finite and non-negative")
        object.__setattr__(self, "estimates_s", estimates)


@dataclass(frozen=True)
class EnsembleAlignment:
    """Median boundaries plus interval edges for one file.

    ci_lo_s/ci_hi_s/coverage are None when the member count cannot support
    the requested rank. Median boundaries are not forced to be monotone;
    violations are listed, not repaired.
    """

    labels: LabelSequence
    samples: tuple[BoundarySample, ...]
    median_s: tuple[float, ...]
    ci_lo_s: tuple[float, ...] | None
    ci_hi_s: tuple[float, ...] | None
    coverage: float | None
    rank: int
    source_id: str = ""

    @property
    def non_monotone_indices(self) -> tuple[int, ...]:
        """0-based boundary indices whose median does not exceed the previous one."""
        return tuple(
            j
            for j in range(1, len(self.median_s))
            if self.median_s[j] <= self.median_s[j - 1]
        )

    def ci_widths_s(self) -> tuple[float, ...]:
        if self.ci_lo_s is None or self.ci_hi_s is None:
            raise RankError(f"{self.source_id or 'alignment'}: confidence intervals were suppressed")
        return tuple(hi - lo for lo, hi in zip(self.ci_lo_s, self.ci_hi_s))


def _median(sorted_values: Sequence[float]) -> float:
    n = len(sorted_values)
    if n % 2:
        return sorted_values[n // 2]
    return (sorted_values[n // 2 - 1] + sorted_values[n // 2]) / 2.0


def coverage_of(n_members: int, rank: int) -> float:
    """Exact probability that [X_(r), X_(E+1-r)] covers the population median
    for E continuous i.i.d. draws."""
    if rank < 1 or 2 * rank > n_members:
        raise RankError(f"rank {rank} infeasible for {n_members} members (need 1 <= r <= E/2)")
    tail = sum(math.comb(n_members, i) for i in range(rank))
    return 1.0 - 2.0 * tail / 2.0**n_members


def aggregate(alignments: Sequence[Alignment], rank: int = DEFAULT_RANK) -> EnsembleAlignment:
    """Combine E alignments over identical labels into one EnsembleAlignment.

    Per boundary: median of the sorted estimates (mean of the central pair
    for even E) and interval [r-th, (E+1-r)-th] ordered values. When
    E < 2r the interval is suppressed with a warning; the median is still
    produced.
    """
    if not alignments:
        raise EnsembleMismatchError("cannot aggregate an empty ensemble")
    if rank < 1:
        raise RankError(f"rank must be >= 1, got {rank}")
    first = alignments[0]
    for i, a in enumerate(alignments[1:], start=1):
        if len(a.labels) != len(first.labels) or a.labels.labels != first.labels.labels:
            raise EnsembleMismatchError(
                f"member {i} labels {a.labels.labels} do not match member 0 {first.labels.labels}"
            )
    n_members = len(alignments)
    m = len(first.labels)

    samples = tuple(
        BoundarySample(j + 1, tuple(a.end_times_s[j] for a in alignments)) for j in range(m)
    )
    medians = []
    lows: list[float] = []
    highs: list[float] = []
    with_ci = n_members >= 2 * rank
    if not with_ci:
        warnings.warn(
            f"{n_members} members cannot support rank {rank} intervals; CI suppressed",
            stacklevel=2,
        )
    for sample in samples:
        ordered = sorted(sample.estimates_s)
        medians.append(_median(ordered))
        if with_ci:
            lows.append(ordered[rank - 1])
            highs.append(ordered[n_members - rank])
    return EnsembleAlignment(
        labels=first.labels,
        samples=samples,
        median_s=tuple(medians),
        ci_lo_s=tuple(lows) if with_ci else None,
        ci_hi_s=tuple(highs) if with_ci else None,
        coverage=coverage_of(n_members, rank) if with_ci else None,
        rank=rank,
        source_id=first.source_id,
    )


@dataclass(frozen=True)
class RobustnessReport:
    """Median displacement under bounded corruption, with the mean as contrast."""

    n_members: int
    n_corrupted: int
    clean_median: float
    corrupted_median: float
    bound_lo: float
    bound_hi: float
    median_within_bounds: bool
    clean_mean: float
    corrupted_mean: float


def robustness_check(
    sample: BoundarySample, replacements: Mapping[int, float]
) -> RobustnessReport:
    """Replace up to floor((E-1)/2) estimates arbitrarily and verify the
    corrupted median stays within the breakdown bound of the clean order
    statistics: [X_(ceil(E/2)-c), X_(floor(E/2)+1+c)]."""
    estimates = list(sample.estimates_s)
    n = len(estimates)
    c = len(replacements)
    if c > (n - 1) // 2:
        raise ValueError(f"{c} corruptions exceed the breakdown limit {(n - 1) // 2} for E={n}")
    corrupted = list(estimates)
    for idx, value in replacements.items():
        corrupted[idx] = float(value)

    clean_sorted = sorted(estimates)
    lo_rank = max(1, math.ceil(n / 2) - c)  # 1-based
    hi_rank = min(n, n // 2 + 1 + c)
    bound_lo = clean_sorted[lo_rank - 1]
    bound_hi = clean_sorted[hi_rank - 1]
    corrupted_median = _median(sorted(corrupted))
    return RobustnessReport(
        n_members=n,
        n_corrupted=c,
        clean_median=_median(clean_sorted),
        corrupted_median=corrupted_median,
        bound_lo=bound_lo,
        bound_hi=bound_hi,
        median_within_bounds=bound_lo <= corrupted_median <= bound_hi,
        clean_mean=sum(estimates) / n,
        corrupted_mean=sum(corrupted) / n,
    )


def write_ci_csv(ea: EnsembleAlignment, fileobj) -> None:
    """Per-boundary interval table for analysis outside Praat."""
    writer = csv.writer(fileobj)
    writer.writerow(
        ["source_id", "boundary_index", "label", "median_s", "ci_lo_s", "ci_hi_s", "width_s"]
    )
    for j, label in enumerate(ea.labels.labels):
        if ea.ci_lo_s is not None and ea.ci_hi_s is not None:
            lo, hi = ea.ci_lo_s[j], ea.ci_hi_s[j]
            lo_s, hi_s, width_s = f"{lo:.6f}", f"{hi:.6f}", f"{hi - lo:.6f}"
        else:
            lo_s = hi_s = width_s = ""
        writer.writerow([ea.source_id, j + 1, label, f"{ea.median_s[j]:.6f}", lo_s, hi_s, width_s])
