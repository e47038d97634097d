"""Pronunciation lexicons: CMU-format dictionaries and filename pseudo-lexicons.

Headwords are case-folded to upper case; segment labels are kept verbatim
(stress digits included). Comment lines start with `;;;` and variant
headwords carry a parenthesized index, e.g. `WORD(2)`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

from .aligner import LabelSequence

_VARIANT_RE = re.compile(r"^(?P<head>.*\S)\((?P<index>\d+)\)$")

VariantPolicy = Literal["first", "index-selected"]


class LexiconError(ValueError):
    pass


class MalformedEntryError(LexiconError):
    """Dictionary line with a headword but no segments."""


class ConflictError(LexiconError):
    """Duplicate pseudo-lexicon file id with differing segment sequences."""


class OutOfVocabularyError(LexiconError):
    """Transcript tokens missing from the lexicon."""

    def __init__(self, missing: Sequence[str]):
        self.missing = tuple(missing)
        super().__init__(f"out-of-vocabulary tokens: {', '.join(self.missing)}")


def fold_headword(word: str) -> str:
    return word.upper()


@dataclass
class Lexicon:
    """Headword -> ordered pronunciation variants (each a label tuple)."""

    entries: dict[str, list[tuple[str, ...]]] = field(default_factory=dict)

    def add(self, headword: str, pronunciation: Sequence[str]) -> None:
        pron = tuple(pronunciation)
        if not pron:
            raise LexiconError(f"empty pronunciation for {headword!r}")
        self.entries.setdefault(fold_headword(headword), []).append(pron)

    def __contains__(self, headword: str) -> bool:
        return fold_headword(headword) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, headword: str) -> list[tuple[str, ...]]:
        """All pronunciation variants in file order."""
        try:
            return list(self.entries[fold_headword(headword)])
        except KeyError:
            raise OutOfVocabularyError([headword]) from None


@dataclass(frozen=True)
class Transcript:
    """Orthographic tokens for one audio file."""

    tokens: tuple[str, ...]
    source_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise LexiconError(f"transcript {self.source_id!r} has no tokens")


def parse_dictionary(text: str) -> Lexicon:
    """Parse CMU 0.7a-style dictionary content."""
    lex = Lexicon()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith(";;;") or not line.strip():
            continue
        parts = line.split()
        head, segments = parts[0], parts[1:]
        if not segments:
            raise MalformedEntryError(f"line {lineno}: entry {head!r} has no segments")
        match = _VARIANT_RE.match(head)
        if match:
            head = match.group("head")
        lex.add(head, segments)
    return lex


def format_dictionary(lex: Lexicon) -> str:
    """Canonical serialization: sorted headwords, variants in stored order."""
    lines = []
    for head in sorted(lex.entries):
        for i, pron in enumerate(lex.entries[head], start=1):
            shown = head if i == 1 else f"{head}({i})"
            lines.append(f"{shown}  {' '.join(pron)}")
    return "\n".join(lines) + ("\n" if lines else "")


def build_pseudo_lexicon(files: Iterable[tuple[str, Sequence[str]]]) -> Lexicon:
    """Lexicon whose headwords are file ids and whose pronunciations are the
    files' segment sequences; the matching transcript for each file is the
    single token file_id (see pseudo_transcript)."""
    lex = Lexicon()
    for file_id, segments in files:
        pron = tuple(segments)
        if not pron:
            raise LexiconError(f"file {file_id!r} has an empty segment sequence")
        head = fold_headword(file_id)
        if head in lex.entries:
            if lex.entries[head] != [pron]:
                raise ConflictError(f"file id {file_id!r} repeated with a different sequence")
            continue
        lex.add(file_id, pron)
    return lex


def pseudo_transcript(file_id: str) -> Transcript:
    return Transcript((file_id,), source_id=file_id)


def choose_pronunciations(
    transcript: Transcript, lex: Lexicon, variant_policy: VariantPolicy = "first"
) -> list[tuple[str, tuple[str, ...]]]:
    """Resolve each token to one pronunciation.

    With `index-selected`, a token may carry a parenthesized variant index
    (`READ(2)` picks the second variant); bare tokens fall back to the
    first variant. All missing tokens are reported together.
    """
    if variant_policy not in ("first", "index-selected"):
        raise LexiconError(f"unknown variant policy {variant_policy!r}")
    missing = []
    chosen = []
    for token in transcript.tokens:
        word, index = token, 1
        if variant_policy == "index-selected":
            match = _VARIANT_RE.match(token)
            if match:
                word, index = match.group("head"), int(match.group("index"))
        if word not in lex:
            missing.append(word)
            continue
        variants = lex.lookup(word)
        if index < 1 or index > len(variants):
            raise LexiconError(
                f"token {token!r} selects variant {index} but {word!r} has {len(variants)}"
            )
        chosen.append((token, variants[index - 1]))
    if missing:
        raise OutOfVocabularyError(missing)
    return chosen


def expand_transcript(
    transcript: Transcript, lex: Lexicon, variant_policy: VariantPolicy = "first"
) -> LabelSequence:
    """Concatenate one pronunciation per token into an alignable sequence.

    Adjacent identical segments arising at word joins (or inside a
    pronunciation) receive distinct markers so the aligner keeps them as
    separate positions.
    """
    chosen = choose_pronunciations(transcript, lex, variant_policy)
    labels = [seg for _, pron in chosen for seg in pron]
    return LabelSequence.marked(labels)


def read_transcript(text: str, source_id: str = "") -> Transcript:
    """One utterance per file, whitespace-separated tokens."""
    return Transcript(tuple(text.split()), source_id=source_id)
