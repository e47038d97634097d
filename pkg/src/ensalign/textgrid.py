"""Praat TextGrid files: value types, long/short-format parsing, long-format
writing, and rendering of ensemble alignments as words/phones/ci tiers.

Confidence intervals are represented on a point tier: one point at each
interval edge, labeled `<segment>-lo` / `<segment>-hi`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence, Union

from .aligner import Alignment
from .ensemble import EnsembleAlignment

COLLISION_NUDGE_S = 1e-6


class TextGridError(ValueError):
    pass


class TextGridParseError(TextGridError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class RenderError(TextGridError):
    pass


@dataclass(frozen=True)
class Interval:
    start_s: float
    end_s: float
    text: str

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise TextGridError(f"interval needs start < end, got [{self.start_s}, {self.end_s}]")
        _check_text(self.text)


@dataclass(frozen=True)
class Point:
    time_s: float
    text: str

    def __post_init__(self):
        _check_text(self.text)


def _check_text(text: str) -> None:
    if "\n" in text or "\r" in text:
        raise TextGridError("tier texts may not contain newlines")


@dataclass(frozen=True)
class IntervalTier:
    """Contiguous intervals: each start equals the previous end."""

    name: str
    intervals: tuple[Interval, ...]

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))
        _check_text(self.name)
        for a, b in zip(self.intervals, self.intervals[1:]):
            if b.start_s != a.end_s:
                raise TextGridError(
                    f"tier {self.name!r}: interval starting at {b.start_s} does not "
                    f"meet previous end {a.end_s}"
                )

    def range_s(self) -> tuple[float, float] | None:
        if not self.intervals:
            return None
        return self.intervals[0].start_s, self.intervals[-1].end_s


@dataclass(frozen=True)
class PointTier:
    """Instantaneous marks at strictly increasing times."""

    name: str
    points: tuple[Point, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        _check_text(self.name)
        for a, b in zip(self.points, self.points[1:]):
            if b.time_s <= a.time_s:
                raise TextGridError(
                    f"tier {self.name!r}: point times must be strictly increasing "
                    f"({a.time_s} then {b.time_s})"
                )

    def range_s(self) -> tuple[float, float] | None:
        if not self.points:
            return None
        return self.points[0].time_s, self.points[-1].time_s


Tier = Union[IntervalTier, PointTier]


@dataclass(frozen=True)
class TextGrid:
    xmin_s: float
    xmax_s: float
    tiers: tuple[Tier, ...]

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(self.tiers))
        if not self.xmin_s < self.xmax_s:
            raise TextGridError(f"need xmin < xmax, got [{self.xmin_s}, {self.xmax_s}]")
        for tier in self.tiers:
            rng = tier.range_s()
            if rng is not None and (rng[0] < self.xmin_s or rng[1] > self.xmax_s):
                raise TextGridError(
                    f"tier {tier.name!r} range {rng} exceeds grid range "
                    f"[{self.xmin_s}, {self.xmax_s}]"
                )

    def tier_names(self) -> list[str]:
        return [t.name for t in self.tiers]

    def get_tier(self, name: str) -> Tier:
        for tier in self.tiers:
            if tier.name == name:
                return tier
        raise TextGridError(f"no tier named {name!r}; available: {self.tier_names()}")


def _intervals_from_boundaries(xmin: float, xmax: float, ends, texts) -> list[Interval]:
    intervals = []
    prev = xmin
    for end, text in zip(ends, texts):
        intervals.append(Interval(prev, end, text))
        prev = end
    if prev < xmax:
        intervals.append(Interval(prev, xmax, ""))
    return intervals


def _separate_collisions(points: list[Point], xmin: float, xmax: float) -> list[Point]:
    """Nudge exactly colliding points apart by 1 microsecond.

    The later point moves forward; if that would leave the grid range the
    earlier point moves backward instead.
    """
    out = list(points)
    for i in range(1, len(out)):
        if out[i].time_s <= out[i - 1].time_s:
            nudged = out[i - 1].time_s + COLLISION_NUDGE_S
            if nudged <= xmax:
                out[i] = Point(nudged, out[i].text)
            else:
                j = i - 1
                out[j] = Point(out[i].time_s - COLLISION_NUDGE_S, out[j].text)
                while j > 0 and out[j].time_s <= out[j - 1].time_s:
                    out[j - 1] = Point(out[j].time_s - COLLISION_NUDGE_S, out[j - 1].text)
                    j -= 1
                if out[0].time_s < xmin:
                    raise RenderError("cannot separate colliding points within the file range")
    return out


def render(
    ea: EnsembleAlignment,
    words: "Alignment | Sequence[tuple[str, float]] | None" = None,
    file_range: tuple[float, float] | None = None,
) -> TextGrid:
    """Build a TextGrid with words/phones interval tiers and a ci point tier.

    `words` may be a word-level Alignment or plain (label, end_time) pairs.
    The phones tier tiles the file range using the median boundaries; the
    ci tier holds one `-lo` and one `-hi` point per boundary. When the
    ensemble carried no intervals (suppressed CI) the ci tier is omitted.
    """
    violations = ea.non_monotone_indices
    if violations:
        raise RenderError(f"median boundaries are not increasing at indices {list(violations)}")
    xmin = file_range[0] if file_range else 0.0
    xmax = file_range[1] if file_range else ea.median_s[-1]
    if ea.median_s[0] <= xmin or ea.median_s[-1] > xmax:
        raise RenderError(
            f"median boundaries {ea.median_s[0]}..{ea.median_s[-1]} fall outside "
            f"the file range [{xmin}, {xmax}]"
        )

    tiers: list[Tier] = []
    if words is not None:
        if isinstance(words, Alignment):
            word_items = list(zip(words.labels.labels, words.end_times_s))
        else:
            word_items = [(str(label), float(end)) for label, end in words]
        tiers.append(
            IntervalTier(
                "words",
                _intervals_from_boundaries(
                    xmin, xmax, [end for _, end in word_items], [label for label, _ in word_items]
                ),
            )
        )
    tiers.append(
        IntervalTier("phones", _intervals_from_boundaries(xmin, xmax, ea.median_s, ea.labels.labels))
    )
    if ea.ci_lo_s is not None and ea.ci_hi_s is not None:
        points = []
        for label, lo, hi in zip(ea.labels.labels, ea.ci_lo_s, ea.ci_hi_s):
            points.append(Point(lo, f"{label}-lo"))
            points.append(Point(hi, f"{label}-hi"))
        points.sort(key=lambda p: p.time_s)
        if points and (points[0].time_s < xmin or points[-1].time_s > xmax):
            raise RenderError("confidence interval edges fall outside the file range")
        tiers.append(PointTier("ci", tuple(_separate_collisions(points, xmin, xmax))))
    return TextGrid(xmin, xmax, tuple(tiers))


# ---------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    return f"{x:.16g}"


def _quote(text: str) -> str:
    return '"' + text.replace('"', '""') + '"'


def format_textgrid(tg: TextGrid) -> str:
    """Praat long text format."""
    out = [
        'File type = "ooTextFile"',
        'Object class = "TextGrid"',
        "",
        f"xmin = {_fmt(tg.xmin_s)}",
        f"xmax = {_fmt(tg.xmax_s)}",
        "tiers? <exists>",
        f"size = {len(tg.tiers)}",
        "item []:",
    ]
    for i, tier in enumerate(tg.tiers, start=1):
        out.append(f"    item [{i}]:")
        if isinstance(tier, IntervalTier):
            out.append('        class = "IntervalTier"')
            out.append(f"        name = {_quote(tier.name)}")
            out.append(f"        xmin = {_fmt(tg.xmin_s)}")
            out.append(f"        xmax = {_fmt(tg.xmax_s)}")
            out.append(f"        intervals: size = {len(tier.intervals)}")
            for j, iv in enumerate(tier.intervals, start=1):
                out.append(f"        intervals [{j}]:")
                out.append(f"            xmin = {_fmt(iv.start_s)}")
                out.append(f"            xmax = {_fmt(iv.end_s)}")
                out.append(f"            text = {_quote(iv.text)}")
        else:
            out.append('        class = "TextTier"')
            out.append(f"        name = {_quote(tier.name)}")
            out.append(f"        xmin = {_fmt(tg.xmin_s)}")
            out.append(f"        xmax = {_fmt(tg.xmax_s)}")
            out.append(f"        points: size = {len(tier.points)}")
            for j, pt in enumerate(tier.points, start=1):
                out.append(f"        points [{j}]:")
                out.append(f"            number = {_fmt(pt.time_s)}")
                out.append(f"            mark = {_quote(pt.text)}")
    return "\n".join(out) + "\n"


def write_textgrid(tg: TextGrid, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_textgrid(tg))


@dataclass(frozen=True)
class _Token:
    text: str
    line: int
    is_string: bool


def _tokenize(content: str) -> Iterator[_Token]:
    line = 1
    i = 0
    n = len(content)
    while i < n:
        ch = content[i]
        if ch == "\n":
            line += 1
            i += 1
        elif ch.isspace():
            i += 1
        elif ch == '"':
            start_line = line
            i += 1
            buf = []
            while True:
                if i >= n:
                    raise TextGridParseError("unterminated string", start_line)
                c = content[i]
                if c == '"':
                    if i + 1 < n and content[i + 1] == '"':
                        buf.append('"')
                        i += 2
                    else:
                        i += 1
                        break
                else:
                    if c == "\n":
                        line += 1
                    buf.append(c)
                    i += 1
            yield _Token("".join(buf), start_line, True)
        else:
            j = i
            while j < n and not content[j].isspace() and content[j] != '"':
                j += 1
            yield _Token(content[i:j], line, False)
            i = j


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


class _PayloadStream:
    """The values of a TextGrid file with the long format's decoration
    (keys, `=`, `item [k]:` headers) stripped; works for both formats."""

    def __init__(self, content: str):
        self.tokens = [
            t
            for t in _tokenize(content)
            if t.is_string or t.text in ("<exists>", "<absent>") or _is_number(t.text)
        ]
        self.pos = 0
        self.last_line = 1

    def _next(self, what: str) -> _Token:
        if self.pos >= len(self.tokens):
            raise TextGridParseError(f"unexpected end of file while reading {what}", self.last_line)
        token = self.tokens[self.pos]
        self.pos += 1
        self.last_line = token.line
        return token

    def number(self, what: str) -> float:
        token = self._next(what)
        if token.is_string or not _is_number(token.text):
            raise TextGridParseError(f"expected a number for {what}, got {token.text!r}", token.line)
        return float(token.text)

    def integer(self, what: str) -> int:
        return int(self.number(what))

    def string(self, what: str) -> str:
        token = self._next(what)
        if not token.is_string:
            raise TextGridParseError(f"expected a string for {what}, got {token.text!r}", token.line)
        return token.text

    def flag(self, what: str) -> str:
        token = self._next(what)
        if token.is_string or token.text not in ("<exists>", "<absent>"):
            raise TextGridParseError(f"expected a flag for {what}, got {token.text!r}", token.line)
        return token.text


def parse_textgrid(content: str) -> TextGrid:
    """Parse long or short Praat text format."""
    if content.startswith("﻿"):
        content = content[1:]
    stream = _PayloadStream(content)
    if stream.string("file type") != "ooTextFile":
        raise TextGridParseError('malformed header: expected File type "ooTextFile"', 1)
    if stream.string("object class") != "TextGrid":
        raise TextGridParseError('malformed header: expected Object class "TextGrid"', 1)
    xmin = stream.number("xmin")
    xmax = stream.number("xmax")
    tiers: list[Tier] = []
    if stream.flag("tiers?") == "<exists>":
        size = stream.integer("tier count")
        for _ in range(size):
            tier_class = stream.string("tier class")
            name = stream.string("tier name")
            stream.number("tier xmin")
            stream.number("tier xmax")
            count = stream.integer("entry count")
            try:
                if tier_class == "IntervalTier":
                    intervals = []
                    for _ in range(count):
                        iv_min = stream.number("interval xmin")
                        iv_max = stream.number("interval xmax")
                        text = stream.string("interval text")
                        intervals.append(Interval(iv_min, iv_max, text))
                    tiers.append(IntervalTier(name, tuple(intervals)))
                elif tier_class == "TextTier":
                    points = []
                    for _ in range(count):
                        time = stream.number("point time")
                        mark = stream.string("point mark")
                        points.append(Point(time, mark))
                    tiers.append(PointTier(name, tuple(points)))
                else:
                    raise TextGridParseError(f"unknown tier class {tier_class!r}", stream.last_line)
            except TextGridParseError:
                raise
            except TextGridError as exc:
                raise TextGridParseError(str(exc), stream.last_line) from exc
    try:
        return TextGrid(xmin, xmax, tuple(tiers))
    except TextGridError as exc:
        raise TextGridParseError(str(exc), stream.last_line) from exc


def read_textgrid(path) -> TextGrid:
    with open(path, "r", encoding="utf-8") as f:
        return parse_textgrid(f.read())
