"""Constrained DP alignment of a label sequence to frame log-probabilities.

The aligner assigns every frame to one position of the label sequence,
monotonically and without skips, maximizing the summed log probability.
Each segment's boundary is the end of the last frame assigned to it; among
equally scoring paths every boundary is placed as late as possible.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .acoustic import LogProbMatrix


class AlignmentError(ValueError):
    pass


class InfeasibleAlignmentError(AlignmentError):
    """More labels than frames."""


class AdjacentRepeatError(AlignmentError):
    """Adjacent identical labels without distinguishing markers."""


class PathEnumerationError(AlignmentError):
    """Instance too large to enumerate exhaustively."""


@dataclass(frozen=True)
class LabelSequence:
    """Positions to align: class names plus markers disambiguating repeats.

    Two adjacent positions with the same class name are only alignable when
    their markers differ; `marked` assigns such markers automatically.
    """

    labels: tuple[str, ...]
    markers: tuple[int, ...] = None  # type: ignore[assignment]

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise AlignmentError("label sequence must be non-empty")
        markers = tuple(self.markers) if self.markers is not None else (0,) * len(labels)
        if len(markers) != len(labels):
            raise AlignmentError("markers must match labels in length")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "markers", markers)

    @classmethod
    def plain(cls, labels) -> "LabelSequence":
        return cls(tuple(labels))

    @classmethod
    def marked(cls, labels) -> "LabelSequence":
        """Build a sequence whose adjacent repeats carry distinct markers."""
        labels = tuple(labels)
        markers = []
        for i, label in enumerate(labels):
            if i > 0 and label == labels[i - 1]:
                markers.append(markers[-1] + 1)
            else:
                markers.append(0)
        return cls(labels, tuple(markers))

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def check_alignable(self) -> None:
        for i in range(1, len(self.labels)):
            if self.labels[i] == self.labels[i - 1] and self.markers[i] == self.markers[i - 1]:
                raise AdjacentRepeatError(
                    f"adjacent repeated label {self.labels[i]!r} at positions {i - 1},{i}; "
                    "use LabelSequence.marked to disambiguate"
                )


@dataclass(frozen=True)
class Alignment:
    """One file's label sequence with per-segment end times."""

    labels: LabelSequence
    end_times_s: tuple[float, ...]
    end_frames: tuple[int, ...]
    total_log_prob: float
    source_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "end_times_s", tuple(float(t) for t in self.end_times_s))
        object.__setattr__(self, "end_frames", tuple(int(f) for f in self.end_frames))
        m = len(self.labels)
        if len(self.end_times_s) != m or len(self.end_frames) != m:
            raise AlignmentError("end vectors must match the label count")
        if any(b <= a for a, b in zip(self.end_times_s, self.end_times_s[1:])):
            raise AlignmentError("end times must be strictly increasing")
        if any(b <= a for a, b in zip(self.end_frames, self.end_frames[1:])):
            raise AlignmentError("end frames must be strictly increasing")


def _observation_matrix(p: LogProbMatrix, l: LabelSequence) -> np.ndarray:
    l.check_alignable()
    idx = [p.inventory.index(label) for label in l.labels]
    return p.values[:, idx]


def _to_alignment(
    p: LogProbMatrix, l: LabelSequence, end_frames: list[int], total: float, source_id: str
) -> Alignment:
    times = tuple((e + 1) * p.frame_advance_s for e in end_frames)
    return Alignment(l, times, tuple(end_frames), float(total), source_id)


def align(p: LogProbMatrix, l: LabelSequence, source_id: str = "") -> Alignment:
    """Best monotone non-skipping assignment of label positions to frames.

    Returns the path maximizing the cumulative log probability; boundary j
    is the last frame assigned to position j. On score ties the transition
    to the next label happens at the later frame, so every boundary is the
    latest it can be among optimal paths.
    """
    obs = _observation_matrix(p, l)
    n, m = obs.shape
    if n < m:
        raise InfeasibleAlignmentError(f"more labels ({m}) than frames ({n})")

    score = np.full((n, m), -np.inf)
    score[0, 0] = obs[0, 0]
    for i in range(1, n):
        stay = score[i - 1]
        advance = np.concatenate(([-np.inf], score[i - 1, :-1]))
        score[i] = obs[i] + np.maximum(stay, advance)

    # Backtrace; >= keeps the current label's span starting as late as
    # possible, which places the previous label's boundary late. The set of
    # optimal end-frame vectors is closed under coordinate-wise max, so the
    # result is the unique latest vector.
    end_frames = [n - 1]
    j = m - 1
    for i in range(n - 1, 0, -1):
        if j == 0:
            break
        if score[i - 1, j - 1] >= score[i - 1, j]:
            end_frames.append(i - 1)
            j -= 1
    end_frames.reverse()
    return _to_alignment(p, l, end_frames, score[n - 1, m - 1], source_id)


def enumerate_paths(n: int, m: int, max_paths: int = 1_000_000) -> list[tuple[int, ...]]:
    """All valid end-frame assignments of m positions to n frames.

    Each tuple gives the 0-based last frame of every position; the count is
    C(n-1, m-1).
    """
    if not 1 <= m <= n:
        raise AlignmentError(f"need 1 <= m <= n, got m={m}, n={n}")
    count = math.comb(n - 1, m - 1)
    if count > max_paths:
        raise PathEnumerationError(f"{count} assignments exceed the {max_paths} enumeration guard")
    return [c + (n - 1,) for c in itertools.combinations(range(n - 1), m - 1)]


def align_oracle(p: LogProbMatrix, l: LabelSequence, source_id: str = "") -> Alignment:
    """Exhaustive reference: scores every assignment from enumerate_paths.

    Tie rule is identical to align: the lexicographically latest end-frame
    vector among maximal-score assignments wins.
    """
    obs = _observation_matrix(p, l)
    n, m = obs.shape
    if n < m:
        raise InfeasibleAlignmentError(f"more labels ({m}) than frames ({n})")
    best_ends = None
    best_score = -np.inf
    for ends in enumerate_paths(n, m):
        pos = 0
        total = 0.0
        for i in range(n):
            if i > ends[pos]:
                pos += 1
            total = total + obs[i, pos]
        if total > best_score or (total == best_score and ends > best_ends):
            best_score = total
            best_ends = ends
    return _to_alignment(p, l, list(best_ends), best_score, source_id)


def write_alignment_csv(alignment: Alignment, fileobj) -> None:
    """Columns source_id,index,label,end_time_s,end_frame plus a trailer."""
    writer = csv.writer(fileobj)
    writer.writerow(["source_id", "index", "label", "end_time_s", "end_frame"])
    for i, (label, t, e) in enumerate(
        zip(alignment.labels.labels, alignment.end_times_s, alignment.end_frames), start=1
    ):
        writer.writerow([alignment.source_id, i, label, f"{t:.6f}", e])
    fileobj.write(f"# total_log_prob = {alignment.total_log_prob!r}\n")


def format_alignment_csv(alignment: Alignment) -> str:
    buf = io.StringIO()
    write_alignment_csv(alignment, buf)
    return buf.getvalue()


def read_alignment_csv(text: str) -> Alignment:
    lines = text.splitlines()
    total = 0.0
    rows = []
    for line in lines[1:]:
        if line.startswith("#"):
            if "total_log_prob" in line:
                total = float(line.split("=", 1)[1])
            continue
        if line.strip():
            rows.append(next(csv.reader([line])))
    if not rows:
        raise AlignmentError("alignment CSV has no data rows")
    source_id = rows[0][0]
    labels = LabelSequence.marked([r[2] for r in rows])
    end_times = tuple(float(r[3]) for r in rows)
    end_frames = tuple(int(r[4]) for r in rows)
    return Alignment(labels, end_times, end_frames, total, source_id)
