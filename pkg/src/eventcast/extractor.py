"""Canonical event extraction from raw requests.

A request becomes the token ``"<METHOD> <derandomized-path> <param-count>"``:
the path is segmented into elements, elements that look machine-generated
are replaced by the literal ``RANDOM`` (a character-trigram model decides),
and tokens rarer than a threshold fold into the reserved ``RARE`` token.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

import numpy as np

from .errors import FitError, ParseError
from .ingest import RawRequest

PAD_TOKEN = "PAD"
MASK_TOKEN = "MASK"
RARE_TOKEN = "RARE"
PAD_ID = 0
MASK_ID = 1
RARE_ID = 2
RESERVED_TOKENS = (PAD_TOKEN, MASK_TOKEN, RARE_TOKEN)

RANDOM_ELEMENT = "RANDOM"

# Path element delimiters: the common URI separators
_DELIMITER_RE = re.compile(r"[/\-_.]+")

_OTHER = "#"   # any non-alphabetic character
_BOUNDARY = "^"
_ALPHABET = "abcdefghijklmnopqrstuvwxyz" + _OTHER + _BOUNDARY
_CHAR_INDEX = {c: i for i, c in enumerate(_ALPHABET)}
ALPHABET_SIZE = len(_ALPHABET)


@dataclass(frozen=True)
class PathElement:
    text: str
    flagged_random: bool = False


@dataclass(frozen=True)
class Event:
    """A canonical event token plus its kind (normal/rare/mask/pad)."""

    token: str
    kind: str = "normal"

    def __post_init__(self):
        if self.kind not in ("normal", "rare", "mask", "pad"):
            raise ValueError(f"unknown event kind {self.kind!r}")


PAD_EVENT = Event(PAD_TOKEN, "pad")
MASK_EVENT = Event(MASK_TOKEN, "mask")
RARE_EVENT = Event(RARE_TOKEN, "rare")


def segment_path(path: str) -> list[PathElement]:
    """Split a URI path on ``/ - _ .`` into non-empty elements, in order."""
    return [PathElement(text) for text in _DELIMITER_RE.split(path) if text]


def _normalize_chars(text: str) -> str:
    return "".join(c if "a" <= c <= "z" else _OTHER for c in text.lower())


def _transition_indices(text: str) -> np.ndarray:
    """Index triples for every (c1, c2) -> c3 transition with boundary padding."""
    padded = _BOUNDARY * 2 + _normalize_chars(text) + _BOUNDARY
    idx = np.array([_CHAR_INDEX[c] for c in padded], dtype=np.intp)
    return np.stack([idx[:-2], idx[1:-1], idx[2:]], axis=1)


@dataclass
class CharMarkovModel:
    """Character-trigram model scoring how word-like a path element looks.

    ``log_probs[c1, c2, c3]`` is the Laplace-smoothed log P(c3 | c1 c2)
    over lowercase letters, one OTHER symbol and one boundary symbol.
    Elements whose mean per-transition log-probability falls below
    ``theta`` are considered machine-generated.
    """

    log_probs: np.ndarray
    theta: float

    VERSION = 1

    def __post_init__(self):
        expected = (ALPHABET_SIZE,) * 3
        if self.log_probs.shape != expected:
            raise FitError(f"log_probs must have shape {expected}")
        if not math.isfinite(self.theta):
            raise FitError("theta must be finite")

    def score(self, element: str) -> float:
        """Mean per-transition log-probability of an element."""
        if not element:
            raise ValueError("cannot score an empty element")
        idx = _transition_indices(element)
        return float(self.log_probs[idx[:, 0], idx[:, 1], idx[:, 2]].mean())

    def save(self, path) -> None:
        lines = [f"charmarkov\t{self.VERSION}\t{float(self.theta)!r}\n"]
        for i, c1 in enumerate(_ALPHABET):
            for j, c2 in enumerate(_ALPHABET):
                for k, c3 in enumerate(_ALPHABET):
                    lines.append(f"{c1}{c2}\t{c3}\t{float(self.log_probs[i, j, k])!r}\n")
        with open(path, "w", encoding="utf-8") as handle:
            handle.writelines(lines)

    @classmethod
    def load(cls, path) -> "CharMarkovModel":
        with open(path, "r", encoding="utf-8") as handle:
            header = handle.readline().rstrip("\n").split("\t")
            if len(header) != 3 or header[0] != "charmarkov":
                raise ParseError(f"not a char-markov table: {path}")
            if int(header[1]) != cls.VERSION:
                raise ParseError(f"unsupported char-markov version {header[1]}")
            theta = float(header[2])
            log_probs = np.full((ALPHABET_SIZE,) * 3, np.nan)
            for line in handle:
                context, char, value = line.rstrip("\n").split("\t")
                i, j = _CHAR_INDEX[context[0]], _CHAR_INDEX[context[1]]
                log_probs[i, j, _CHAR_INDEX[char]] = float(value)
        if np.isnan(log_probs).any():
            raise ParseError(f"incomplete char-markov table: {path}")
        return cls(log_probs=log_probs, theta=theta)


def bundled_word_corpus() -> list[str]:
    """The English word list shipped with the package."""
    text = resources.files("eventcast.data").joinpath("english_words.txt").read_text()
    return [word for word in text.split() if word]


def element_corpus(requests: Iterable[RawRequest], word_list: bool = True) -> list[str]:
    """Fit corpus for the randomness detector: digit-free path elements.

    Elements containing any digit are excluded, not just all-digit ones:
    machine-generated identifiers are nearly always alphanumeric, and
    letting them into the corpus teaches the model its own negatives.
    Optionally unioned with the bundled word list; sorted and unique.
    """
    elements = {
        e.text.lower()
        for request in requests
        for e in segment_path(request.path)
        if not any(c.isdigit() for c in e.text)
    }
    if word_list:
        elements.update(bundled_word_corpus())
    return sorted(elements)


def _random_calibration_strings(rng: np.random.Generator, count: int) -> list[str]:
    chars = np.array(list("abcdefghijklmnopqrstuvwxyz0123456789"))
    lengths = rng.integers(8, 13, size=count)
    return ["".join(rng.choice(chars, size=n)) for n in lengths]


def fit_char_markov(
    corpus: Iterable[str],
    theta: float | None = None,
    calibration_size: int = 1000,
    calibration_seed: int = 20200106,
) -> CharMarkovModel:
    """Fit transition counts with add-one smoothing and pick the threshold.

    The threshold separates the corpus strings (assumed word-like) from
    uniform-random alphanumeric strings generated internally: it is the
    midpoint between the 2nd percentile of corpus scores and the 98th
    percentile of random-string scores.  Trimmed extremes are used because
    single outliers on either side otherwise swallow the margin.  Pass
    ``theta`` to override the automatic choice.
    """
    strings = [s for s in corpus if s]
    if not strings:
        raise FitError("char-markov corpus is empty")
    counts = np.zeros((ALPHABET_SIZE,) * 3, dtype=np.int64)
    for text in strings:
        idx = _transition_indices(text)
        np.add.at(counts, (idx[:, 0], idx[:, 1], idx[:, 2]), 1)
    totals = counts.sum(axis=2, keepdims=True)
    log_probs = np.log(counts + 1.0) - np.log(totals + float(ALPHABET_SIZE))
    model = CharMarkovModel(log_probs=log_probs, theta=0.0)
    if theta is None:
        rng = np.random.default_rng(calibration_seed)
        good = [model.score(s) for s in strings if len(s) >= 3]
        if not good:
            raise FitError("corpus has no elements of length >= 3")
        random_scores = [
            model.score(s)
            for s in _random_calibration_strings(rng, calibration_size)
        ]
        theta = float(
            (np.percentile(good, 2.0) + np.percentile(random_scores, 98.0)) / 2.0
        )
    model.theta = float(theta)
    if not math.isfinite(model.theta):
        raise FitError("theta must be finite")
    return model


def is_random_element(model: CharMarkovModel, element: str) -> bool:
    """True when an element looks machine-generated.

    Elements shorter than 3 characters cannot be scored by a two-character
    context and purely numeric elements are resource identifiers; both are
    declared random outright.
    """
    if not element:
        raise ValueError("element must be non-empty")
    if len(element) < 3 or element.isdigit():
        return True
    return model.score(element) < model.theta


def flag_elements(model: CharMarkovModel, elements: list[PathElement]) -> list[PathElement]:
    return [
        PathElement(e.text, is_random_element(model, e.text)) for e in elements
    ]


def canonicalize(request: RawRequest, model: CharMarkovModel) -> Event:
    """Build the canonical event token for a request.

    Random-looking path elements become the literal ``RANDOM``; elements are
    re-joined with ``/`` regardless of their original delimiters.
    """
    elements = flag_elements(model, segment_path(request.path))
    parts = [RANDOM_ELEMENT if e.flagged_random else e.text for e in elements]
    token = f"{request.method} /{'/'.join(parts)} {request.query_param_count}"
    return Event(token)


@dataclass
class EventVocabulary:
    """Dense token<->id map with PAD/MASK/RARE reserved at ids 0/1/2.

    Tokens observed fewer than ``rare_threshold`` times in training are not
    retained; they (and anything never seen) encode to the RARE id.
    """

    token_to_id: dict[str, int]
    id_to_token: list[str]
    rare_threshold: int
    train_counts: dict[str, int] = field(default_factory=dict)
    rare_fold_count: int = 0    # training occurrences folded to RARE

    VERSION = 1

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode(self, event: Event | str) -> int:
        token = event.token if isinstance(event, Event) else event
        return self.token_to_id.get(token, RARE_ID)

    def decode(self, event_id: int) -> str:
        return self.id_to_token[event_id]

    def encode_stream(self, events: Iterable[Event | str]) -> np.ndarray:
        return np.array([self.encode(e) for e in events], dtype=np.int64)

    def to_text(self) -> str:
        lines = []
        for event_id, token in enumerate(self.id_to_token):
            if token == RARE_TOKEN:
                count = self.rare_fold_count
            else:
                count = self.train_counts.get(token, 0)
            lines.append(f"{event_id}\t{token}\t{count}\n")
        return "".join(lines)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.to_text())

    @classmethod
    def load(cls, path, rare_threshold: int = 2) -> "EventVocabulary":
        token_to_id: dict[str, int] = {}
        id_to_token: list[str] = []
        train_counts: dict[str, int] = {}
        rare_fold_count = 0
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                event_id, token, count = line.rstrip("\n").split("\t")
                if int(event_id) != len(id_to_token):
                    raise ParseError(f"non-dense ids in vocabulary file {path}")
                token_to_id[token] = int(event_id)
                id_to_token.append(token)
                if token == RARE_TOKEN:
                    rare_fold_count = int(count)
                elif token not in RESERVED_TOKENS:
                    train_counts[token] = int(count)
        if id_to_token[:3] != list(RESERVED_TOKENS):
            raise ParseError(f"missing reserved tokens in vocabulary file {path}")
        return cls(
            token_to_id=token_to_id,
            id_to_token=id_to_token,
            rare_threshold=rare_threshold,
            train_counts=train_counts,
            rare_fold_count=rare_fold_count,
        )

    def sha256(self) -> str:
        import hashlib

        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def build_vocabulary(train_events: Iterable[Event | str], rare_threshold: int) -> EventVocabulary:
    """Build the vocabulary from training-split events only.

    Retained tokens are ordered by descending count then token text, after
    the three reserved ids.
    """
    if rare_threshold < 1:
        raise FitError("rare_threshold must be a positive integer")
    counts: Counter[str] = Counter()
    for event in train_events:
        token = event.token if isinstance(event, Event) else event
        counts[token] += 1
    if not counts:
        raise FitError("cannot build a vocabulary from an empty event stream")
    kept = sorted(
        (token for token, c in counts.items() if c >= rare_threshold),
        key=lambda token: (-counts[token], token),
    )
    id_to_token = list(RESERVED_TOKENS) + kept
    token_to_id = {token: i for i, token in enumerate(id_to_token)}
    return EventVocabulary(
        token_to_id=token_to_id,
        id_to_token=id_to_token,
        rare_threshold=rare_threshold,
        train_counts=dict(counts),
        rare_fold_count=sum(c for c in counts.values() if c < rare_threshold),
    )
