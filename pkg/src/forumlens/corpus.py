"""Data model, ingestion, tokenization and empirical unigram distributions.

Every value defined here is immutable after construction and every operation
is a pure function, so corpora and models can be shared freely across worker
threads.

Day indexing convention: timestamps are integer UTC seconds and the day index
of a timestamp ``ts`` within a course is ``floor((ts - start_date) / 86400) + 1``,
i.e. 1-based with day 1 starting at ``start_date``.
"""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCorpus, InvariantViolation, ParseError

SECONDS_PER_DAY = 86400

# Unicode alphanumeric runs; underscore is excluded because it is not
# alphanumeric.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class ThreadLabel(Enum):
    SMALL_TALK = "SmallTalk"
    LOGISTICS = "Logistics"
    COURSE_SPECIFIC = "CourseSpecific"
    UNLABELED = "Unlabeled"


class CourseCategory(Enum):
    VOCATIONAL = "Vocational"
    APPLIED_SCIENCE = "AppliedScience"
    HUMANITIES_SOCIAL = "HumanitiesSocial"

    @classmethod
    def from_flags(cls, quantitative: int, vocational: int) -> "CourseCategory":
        """Partition rule: vocational wins, then quantitative, else the rest."""
        if vocational:
            return cls.VOCATIONAL
        if quantitative:
            return cls.APPLIED_SCIENCE
        return cls.HUMANITIES_SOCIAL


def day_index(timestamp: int, start_date: int) -> int:
    """1-based day index of a timestamp relative to a course start."""
    return (timestamp - start_date) // SECONDS_PER_DAY + 1


@dataclass(frozen=True)
class Post:
    post_id: str
    author_id: str
    timestamp: int
    text: str
    is_staff: bool = False

    def __post_init__(self):
        if self.timestamp < 0:
            raise InvariantViolation(self.post_id, "timestamp must be >= 0")


@dataclass(frozen=True)
class Thread:
    thread_id: str
    created_at: int
    posts: tuple[Post, ...]
    label: ThreadLabel = ThreadLabel.UNLABELED

    def __post_init__(self):
        if not self.posts:
            raise InvariantViolation(self.thread_id, "thread has no posts")
        times = [p.timestamp for p in self.posts]
        if any(b < a for a, b in zip(times, times[1:])):
            raise InvariantViolation(self.thread_id, "posts not sorted by timestamp")
        ids = [p.post_id for p in self.posts]
        if len(set(ids)) != len(ids):
            raise InvariantViolation(self.thread_id, "duplicate post ids")
        if self.created_at != self.posts[0].timestamp:
            raise InvariantViolation(
                self.thread_id, "created_at differs from first post timestamp"
            )

    @property
    def length(self) -> int:
        """Number of posts (comments are flattened into posts upstream)."""
        return len(self.posts)

    @property
    def participants(self) -> frozenset[str]:
        return frozenset(p.author_id for p in self.posts)


@dataclass(frozen=True)
class CourseFactors:
    """Per-course regressors for the activity models.

    ``staff_posts`` is kept in raw post counts; the panel regression rescales
    it (see stats.fit_panel_ols).
    """

    quantitative: int
    vocational: int
    video_hours: float
    duration_days: int
    peer_graded: int
    staff_posts: int
    graded_homework: int

    def __post_init__(self):
        if self.video_hours < 0 or self.duration_days < 0:
            raise InvariantViolation("factors", "L and D must be >= 0")
        for name in ("quantitative", "vocational", "peer_graded", "staff_posts", "graded_homework"):
            if getattr(self, name) < 0:
                raise InvariantViolation("factors", f"{name} must be >= 0")


@dataclass(frozen=True)
class Course:
    course_id: str
    start_date: int
    threads: tuple[Thread, ...]
    factors: CourseFactors | None = None
    category: CourseCategory = CourseCategory.HUMANITIES_SOCIAL

    def __post_init__(self):
        ids = [t.thread_id for t in self.threads]
        if len(set(ids)) != len(ids):
            raise InvariantViolation(self.course_id, "duplicate thread ids")

    @property
    def num_threads(self) -> int:
        return len(self.threads)


@dataclass(frozen=True)
class Corpus:
    courses: tuple[Course, ...]

    def __post_init__(self):
        ids = [c.course_id for c in self.courses]
        if len(set(ids)) != len(ids):
            raise InvariantViolation("corpus", "duplicate course ids")

    @property
    def num_courses(self) -> int:
        return len(self.courses)

    @property
    def num_threads(self) -> int:
        return sum(c.num_threads for c in self.courses)

    @property
    def num_posts(self) -> int:
        return sum(t.length for c in self.courses for t in c.threads)

    def course(self, course_id: str) -> Course:
        for c in self.courses:
            if c.course_id == course_id:
                return c
        raise KeyError(course_id)


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    """Stopword list shipped with the package (one word per line)."""
    text = resources.files("forumlens").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def load_stopwords(path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip() for w in fh if w.strip())


def tokenize(text: str, stopwords: frozenset[str] | None = None) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop stopwords and 1-char tokens."""
    if stopwords is None:
        stopwords = default_stopwords()
    return [
        tok
        for tok in _TOKEN_RE.findall(text.lower())
        if len(tok) >= 2 and tok not in stopwords
    ]


def thread_text(thread: Thread, include_staff: bool = True) -> str:
    parts = [p.text for p in thread.posts if include_staff or not p.is_staff]
    return " ".join(parts)


def thread_tokens(
    thread: Thread,
    stopwords: frozenset[str] | None = None,
    include_staff: bool = True,
) -> list[str]:
    return tokenize(thread_text(thread, include_staff), stopwords)


# ---------------------------------------------------------------------------
# Unigram models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UnigramModel:
    """A probability distribution over a fixed, sorted vocabulary.

    ``total_tokens`` is the size of the sample the distribution was estimated
    from; constructed (non-empirical) distributions carry 0.  An empty model
    (no support) is allowed as a degenerate case.
    """

    vocab: tuple[str, ...]
    mass: np.ndarray
    total_tokens: int = 0
    _index: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        object.__setattr__(self, "mass", mass)
        if len(self.vocab) != mass.size:
            raise InvariantViolation("unigram", "vocab and mass lengths differ")
        if list(self.vocab) != sorted(self.vocab):
            raise InvariantViolation("unigram", "vocab must be sorted")
        if mass.size:
            if np.any(mass <= 0):
                raise InvariantViolation("unigram", "all masses must be > 0 on the support")
            if abs(mass.sum() - 1.0) > 1e-9:
                raise InvariantViolation("unigram", "masses must sum to 1 +/- 1e-9")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.vocab)})

    @classmethod
    def from_counts(cls, counts: dict[str, int] | Counter, total_tokens: int | None = None):
        items = sorted((w, c) for w, c in counts.items() if c > 0)
        total = sum(c for _, c in items)
        if total <= 0:
            raise EmptyCorpus("no tokens to estimate a unigram model from")
        vocab = tuple(w for w, _ in items)
        mass = np.array([c for _, c in items], dtype=float) / total
        return cls(vocab, mass, total if total_tokens is None else total_tokens)

    @classmethod
    def from_tokens(cls, docs: Iterable[Sequence[str]]):
        counts: Counter = Counter()
        for doc in docs:
            counts.update(doc)
        return cls.from_counts(counts)

    @classmethod
    def from_probs(cls, probs: dict[str, float], total_tokens: int = 0):
        items = sorted(probs.items())
        vocab = tuple(w for w, _ in items)
        mass = np.array([p for _, p in items], dtype=float)
        return cls(vocab, mass, total_tokens)

    @classmethod
    def uniform(cls, words: Iterable[str], total_tokens: int = 0):
        vocab = tuple(sorted(set(words)))
        if not vocab:
            return cls((), np.zeros(0), total_tokens)
        return cls(vocab, np.full(len(vocab), 1.0 / len(vocab)), total_tokens)

    def prob(self, word: str) -> float:
        i = self._index.get(word)
        return 0.0 if i is None else float(self.mass[i])

    @property
    def support(self) -> frozenset[str]:
        return frozenset(self.vocab)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.mass)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-CDF sampling; deterministic given the generator state."""
        if not len(self.vocab):
            raise EmptyCorpus("cannot sample from an empty distribution")
        idx = np.searchsorted(self.cdf(), rng.random(size), side="right")
        idx = np.minimum(idx, len(self.vocab) - 1)
        return np.asarray(self.vocab, dtype=object)[idx]


def unigram_model(docs: Iterable[Sequence[str]]) -> UnigramModel:
    """Empirical unigram distribution with mass(w) = count(w) / total tokens."""
    return UnigramModel.from_tokens(docs)


# ---------------------------------------------------------------------------
# Ingestion / serialization
# ---------------------------------------------------------------------------

_LABELS = {lab.value: lab for lab in ThreadLabel}
_CATEGORIES = {cat.value: cat for cat in CourseCategory}


def _require(obj: dict, key: str, lineno: int):
    if key not in obj:
        raise ParseError(lineno, f"missing field {key!r}")
    return obj[key]


def _require_int(obj: dict, key: str, lineno: int) -> int:
    val = _require(obj, key, lineno)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ParseError(lineno, f"field {key!r} must be an integer, got {val!r}")
    return val


def _parse_thread_line(line: str, lineno: int) -> tuple[str, Thread]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(lineno, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ParseError(lineno, "each line must be a JSON object")
    course_id = str(_require(obj, "course_id", lineno))
    thread_id = str(_require(obj, "thread_id", lineno))
    created_at = _require_int(obj, "created_at", lineno)
    raw_label = obj.get("label")
    if raw_label is None:
        label = ThreadLabel.UNLABELED
    else:
        try:
            label = _LABELS[raw_label]
        except KeyError:
            raise ParseError(lineno, f"unknown label {raw_label!r}") from None
    raw_posts = _require(obj, "posts", lineno)
    if not isinstance(raw_posts, list) or not raw_posts:
        raise ParseError(lineno, "posts must be a nonempty list")
    posts = []
    for rp in raw_posts:
        if not isinstance(rp, dict):
            raise ParseError(lineno, "each post must be a JSON object")
        posts.append(
            Post(
                post_id=str(_require(rp, "post_id", lineno)),
                author_id=str(_require(rp, "author_id", lineno)),
                timestamp=_require_int(rp, "timestamp", lineno),
                text=str(_require(rp, "text", lineno)),
                is_staff=bool(rp.get("is_staff", False)),
            )
        )
    return course_id, Thread(thread_id, created_at, tuple(posts), label)


def _ingest_jsonl(path) -> Corpus:
    by_course: dict[str, list[Thread]] = {}
    seen: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            course_id, thread = _parse_thread_line(line, lineno)
            bucket = seen.setdefault(course_id, set())
            if thread.thread_id in bucket:
                raise InvariantViolation(thread.thread_id, f"duplicate thread id in {course_id}")
            bucket.add(thread.thread_id)
            by_course.setdefault(course_id, []).append(thread)
    courses = []
    for course_id, threads in by_course.items():
        start = min(t.created_at for t in threads)
        courses.append(Course(course_id, start, tuple(threads)))
    return Corpus(tuple(courses))


def _parse_meta_row(row: dict, lineno: int) -> tuple[str, int, CourseFactors, CourseCategory]:
    try:
        course_id = row["course_id"]
        start_date = int(row["start_date"])
        factors = CourseFactors(
            quantitative=int(row["Q"]),
            vocational=int(row["V"]),
            video_hours=float(row["L"]),
            duration_days=int(row["D"]),
            peer_graded=int(row["P"]),
            staff_posts=int(row["S"]),
            graded_homework=int(row["H"]),
        )
        category = _CATEGORIES[row["category"]]
    except KeyError as exc:
        raise ParseError(lineno, f"missing or unknown column/value {exc}") from exc
    except ValueError as exc:
        raise ParseError(lineno, str(exc)) from exc
    return course_id, start_date, factors, category


def _ingest_csv(path) -> Corpus:
    courses = []
    seen = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            course_id, start_date, factors, category = _parse_meta_row(row, lineno)
            if course_id in seen:
                raise InvariantViolation(course_id, "duplicate course id in metadata")
            seen.add(course_id)
            courses.append(Course(course_id, start_date, (), factors, category))
    return Corpus(tuple(courses))


def ingest_corpus(path, fmt: str = "jsonl") -> Corpus:
    """Read a corpus from disk.

    ``fmt="jsonl"`` reads one thread per line (course start dates default to
    each course's earliest thread; attach_metadata can override them).
    ``fmt="csv"`` reads course metadata only, yielding thread-less courses.
    """
    if fmt == "jsonl":
        return _ingest_jsonl(path)
    if fmt == "csv":
        return _ingest_csv(path)
    raise ValueError(f"unknown corpus format {fmt!r}")


def attach_metadata(corpus: Corpus, path) -> Corpus:
    """Return a new corpus with start dates, factors and categories from a CSV.

    Metadata rows for course ids absent from the corpus add empty courses.
    """
    meta = _ingest_csv(path)
    by_id = {c.course_id: c for c in meta.courses}
    courses = []
    for c in corpus.courses:
        m = by_id.pop(c.course_id, None)
        if m is None:
            courses.append(c)
        else:
            courses.append(Course(c.course_id, m.start_date, c.threads, m.factors, m.category))
    courses.extend(by_id.values())
    return Corpus(tuple(courses))


def serialize_corpus(corpus: Corpus, path) -> None:
    """Write threads in the JSON-lines interchange format (round-trips with ingest)."""
    with open(path, "w", encoding="utf-8") as fh:
        for course in corpus.courses:
            for t in course.threads:
                obj = {
                    "course_id": course.course_id,
                    "thread_id": t.thread_id,
                    "created_at": t.created_at,
                    "label": t.label.value,
                    "posts": [
                        {
                            "post_id": p.post_id,
                            "author_id": p.author_id,
                            "timestamp": p.timestamp,
                            "text": p.text,
                            "is_staff": p.is_staff,
                        }
                        for p in t.posts
                    ],
                }
                fh.write(json.dumps(obj, sort_keys=True) + "\n")


def write_metadata_csv(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["course_id", "start_date", "Q", "V", "L", "D", "P", "S", "H", "category"])
        for c in corpus.courses:
            f = c.factors
            if f is None:
                continue
            writer.writerow(
                [
                    c.course_id,
                    c.start_date,
                    f.quantitative,
                    f.vocational,
                    repr(f.video_hours),
                    f.duration_days,
                    f.peer_graded,
                    f.staff_posts,
                    f.graded_homework,
                    c.category.value,
                ]
            )
