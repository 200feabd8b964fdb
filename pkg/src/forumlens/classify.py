"""Small-talk classifiers: multinomial naive Bayes and a linear SVM.

Small-talk is the positive class throughout.  Feature vectors are raw term
counts over the model vocabulary; tokens outside the vocabulary are ignored
at prediction time.  Trained models are immutable and safe to share;
evaluation is pure.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, ThreadLabel, thread_tokens
from .errors import InvariantViolation, MissingClass
from .genmodel import (
    GenerativeSpec,
    SampledThread,
    sample_thread,
    sample_tokens,
    separating_plane,
)

# (tokens, is_smalltalk) pairs
LabeledDoc = tuple[Sequence[str], bool]


class NbMode(Enum):
    AGGREGATE = "aggregate"
    PER_COURSE = "percourse"


@dataclass(frozen=True, eq=False)
class NbModel:
    """Multinomial naive Bayes with Lidstone smoothing.

    ``pseudocount`` is the additive count per vocabulary word, so the
    class-conditional for word w is (count(w) + a) / (N_class + a*|V|); the
    conditionals therefore sum to exactly 1 over the vocabulary for any a > 0.
    pseudocount=1 is classic add-one smoothing.  Small pseudocounts (e.g.
    2/|V|, a total added mass of two tokens per class) reproduce the behavior
    of count-initialized textbook implementations, whose unseen-word estimates
    scale like 1/N_class and so are heavily overestimated for classes with
    little training data.
    """

    vocab: tuple[str, ...]
    log_prior_neg: float
    log_prior_pos: float
    log_cond_neg: np.ndarray
    log_cond_pos: np.ndarray
    pseudocount: float
    mode: NbMode = NbMode.AGGREGATE
    _index: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if abs(math.exp(self.log_prior_neg) + math.exp(self.log_prior_pos) - 1.0) > 1e-9:
            raise InvariantViolation("nb", "class priors must sum to 1")
        for cond in (self.log_cond_neg, self.log_cond_pos):
            if cond.size != len(self.vocab):
                raise InvariantViolation("nb", "conditional size mismatch")
            if cond.size and abs(np.exp(cond).sum() - 1.0) > 1e-9:
                raise InvariantViolation("nb", "conditionals must sum to 1 over vocab")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.vocab)})


@dataclass(frozen=True)
class NbPrediction:
    positive: bool
    log_posterior_pos: float
    log_posterior_neg: float


@dataclass(frozen=True)
class SvmModel:
    """Linear model scored as sum of per-word weights times counts, plus bias.

    The decision rule is score > theta (ties classify negative).
    """

    weights: dict[str, float]
    bias: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.weights.values()):
            raise InvariantViolation("svm", "weights must be finite")
        if not math.isfinite(self.bias):
            raise InvariantViolation("svm", "bias must be finite")

    def score(self, tokens: Sequence[str]) -> float:
        w = self.weights
        return float(sum(w.get(tok, 0.0) for tok in tokens)) + self.bias


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn) if (self.fp + self.tn) else 0.0


# ---------------------------------------------------------------------------
# Corpus adapters
# ---------------------------------------------------------------------------

_NEGATIVE_LABELS = {ThreadLabel.LOGISTICS, ThreadLabel.COURSE_SPECIFIC}


def labeled_docs(
    corpus: Corpus,
    course_id: str | None = None,
    stopwords: frozenset[str] | None = None,
    include_staff: bool = True,
) -> list[LabeledDoc]:
    """Tokenized (doc, is_smalltalk) pairs; unlabeled threads are skipped."""
    docs: list[LabeledDoc] = []
    for course in corpus.courses:
        if course_id is not None and course.course_id != course_id:
            continue
        for t in course.threads:
            if t.label == ThreadLabel.SMALL_TALK:
                docs.append((thread_tokens(t, stopwords, include_staff), True))
            elif t.label in _NEGATIVE_LABELS:
                docs.append((thread_tokens(t, stopwords, include_staff), False))
    return docs


def labeled_docs_from_sampled(threads: Iterable[SampledThread]) -> list[LabeledDoc]:
    return [(t.tokens, t.is_smalltalk) for t in threads]


# ---------------------------------------------------------------------------
# Naive Bayes
# ---------------------------------------------------------------------------


def train_nb_docs(
    docs: Sequence[LabeledDoc],
    pseudocount: float = 1.0,
    vocab: Sequence[str] | None = None,
    mode: NbMode = NbMode.AGGREGATE,
    course_id: str | None = None,
) -> NbModel:
    if pseudocount <= 0:
        raise InvariantViolation("nb", "pseudocount must be > 0")
    n_pos = sum(1 for _, positive in docs if positive)
    n_neg = len(docs) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MissingClass(course_id)
    if vocab is None:
        words = sorted({w for tokens, _ in docs for w in tokens})
    else:
        words = sorted(set(vocab))
    index = {w: i for i, w in enumerate(words)}
    counts = np.zeros((2, len(words)))
    for tokens, positive in docs:
        row = counts[1 if positive else 0]
        for w, c in Counter(tokens).items():
            i = index.get(w)
            if i is not None:
                row[i] += c
    smoothed = counts + pseudocount
    log_cond = np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))
    return NbModel(
        vocab=tuple(words),
        log_prior_neg=math.log(n_neg / len(docs)),
        log_prior_pos=math.log(n_pos / len(docs)),
        log_cond_neg=log_cond[0],
        log_cond_pos=log_cond[1],
        pseudocount=pseudocount,
        mode=mode,
    )


def train_nb(
    corpus: Corpus,
    mode: NbMode = NbMode.AGGREGATE,
    pseudocount: float = 1.0,
    vocab: Sequence[str] | None = None,
    stopwords: frozenset[str] | None = None,
    include_staff: bool = True,
):
    """Train on labeled threads; PER_COURSE returns {course_id: NbModel}."""
    if mode == NbMode.AGGREGATE:
        docs = labeled_docs(corpus, stopwords=stopwords, include_staff=include_staff)
        return train_nb_docs(docs, pseudocount, vocab, mode)
    models = {}
    for course in corpus.courses:
        docs = labeled_docs(corpus, course.course_id, stopwords=stopwords, include_staff=include_staff)
        models[course.course_id] = train_nb_docs(
            docs, pseudocount, vocab, mode, course_id=course.course_id
        )
    return models


def predict_nb(model: NbModel, tokens: Sequence[str]) -> NbPrediction:
    """Argmax of log prior + sum of log conditionals; ties go negative."""
    log_pos = model.log_prior_pos
    log_neg = model.log_prior_neg
    index = model._index
    for w, c in Counter(tokens).items():
        i = index.get(w)
        if i is None:
            continue
        log_pos += c * float(model.log_cond_pos[i])
        log_neg += c * float(model.log_cond_neg[i])
    return NbPrediction(log_pos > log_neg, log_pos, log_neg)


# ---------------------------------------------------------------------------
# Linear SVM (hinge loss, deterministic-order SGD)
# ---------------------------------------------------------------------------


def _doc_vectors(docs: Sequence[LabeledDoc], index: dict[str, int]):
    rows = []
    for tokens, positive in docs:
        cnt = Counter(tok for tok in tokens if tok in index)
        idx = np.array([index[w] for w in cnt], dtype=np.intp)
        val = np.array(list(cnt.values()), dtype=float)
        rows.append((idx, val, 1.0 if positive else -1.0))
    return rows


def train_svm(
    docs: Sequence[LabeledDoc],
    lambda_: float = 1e-4,
    epochs: int = 50,
    vocab: Sequence[str] | None = None,
) -> SvmModel:
    """Minimize (1/m) sum hinge + (lambda/2)||w||^2 by cyclic subgradient steps.

    Documents are visited in corpus order with step size 1/(lambda * t), t the
    global step count, so training is fully deterministic.  Because the
    objective averages the hinge term, duplicating the corpus r times while
    dividing epochs by r replays the identical update sequence and returns the
    identical boundary (lambda stays fixed).  The decision offset is carried
    by theta, not a trained bias.
    """
    if lambda_ <= 0 or epochs <= 0:
        raise InvariantViolation("svm", "lambda and epochs must be positive")
    if not any(pos for _, pos in docs) or not any(not pos for _, pos in docs):
        raise MissingClass(None)
    if vocab is None:
        words = sorted({w for tokens, _ in docs for w in tokens})
    else:
        words = sorted(set(vocab))
    index = {w: i for i, w in enumerate(words)}
    rows = _doc_vectors(docs, index)
    w = np.zeros(len(words))
    t = 0
    for _ in range(epochs):
        for idx, val, y in rows:
            t += 1
            eta = 1.0 / (lambda_ * t)
            margin = y * float(w[idx] @ val)
            w *= 1.0 - eta * lambda_
            if margin < 1.0:
                w[idx] += eta * y * val
    weights = {word: float(w[i]) for word, i in index.items() if w[i] != 0.0}
    return SvmModel(weights=weights, bias=0.0, theta=0.0)


def svm_objective(model: SvmModel, docs: Sequence[LabeledDoc], lambda_: float) -> float:
    """Average hinge loss plus (lambda/2)||w||^2 for the model on the docs."""
    if not docs:
        raise InvariantViolation("svm", "objective needs at least one document")
    hinge = 0.0
    for tokens, positive in docs:
        y = 1.0 if positive else -1.0
        hinge += max(0.0, 1.0 - y * model.score(tokens))
    reg = 0.5 * lambda_ * sum(v * v for v in model.weights.values())
    return hinge / len(docs) + reg


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(model, docs: Sequence[LabeledDoc], theta: float | None = None) -> EvalReport:
    """TPR/FPR with small-talk as positive.

    For an SvmModel the decision is score > theta (default: model.theta); the
    naive Bayes decision ignores theta.
    """
    if not docs:
        raise InvariantViolation("eval", "test set must be nonempty")
    tp = fp = tn = fn = 0
    for tokens, positive in docs:
        if isinstance(model, SvmModel):
            thr = model.theta if theta is None else theta
            flagged = model.score(tokens) > thr
        else:
            flagged = predict_nb(model, tokens).positive
        if positive:
            tp, fn = (tp + 1, fn) if flagged else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if flagged else (fp, tn + 1)
    return EvalReport(tp, fp, tn, fn)


def roc_sweep(
    model: SvmModel, docs: Sequence[LabeledDoc], thresholds: Sequence[float]
) -> list[tuple[float, EvalReport]]:
    """Evaluate at each threshold; TPR and FPR are non-increasing in theta."""
    if list(thresholds) != sorted(thresholds):
        raise InvariantViolation("roc", "thresholds must be sorted ascending")
    scores = [(model.score(tokens), positive) for tokens, positive in docs]
    out = []
    for theta in thresholds:
        tp = fp = tn = fn = 0
        for s, positive in scores:
            flagged = s > theta
            if positive:
                tp, fn = (tp + 1, fn) if flagged else (tp, fn + 1)
            else:
                fp, tn = (fp + 1, tn) if flagged else (fp, tn + 1)
        out.append((theta, EvalReport(tp, fp, tn, fn)))
    return out


# ---------------------------------------------------------------------------
# Model persistence
# ---------------------------------------------------------------------------


def _nb_to_obj(model: NbModel) -> dict:
    return {
        "kind": "nb",
        "mode": model.mode.value,
        "pseudocount": model.pseudocount,
        "vocab": list(model.vocab),
        "log_prior": [model.log_prior_neg, model.log_prior_pos],
        "log_cond_neg": [float(x) for x in model.log_cond_neg],
        "log_cond_pos": [float(x) for x in model.log_cond_pos],
    }


def _nb_from_obj(obj: dict) -> NbModel:
    return NbModel(
        vocab=tuple(obj["vocab"]),
        log_prior_neg=obj["log_prior"][0],
        log_prior_pos=obj["log_prior"][1],
        log_cond_neg=np.asarray(obj["log_cond_neg"], dtype=float),
        log_cond_pos=np.asarray(obj["log_cond_pos"], dtype=float),
        pseudocount=obj["pseudocount"],
        mode=NbMode(obj["mode"]),
    )


def save_model(model, path) -> None:
    if isinstance(model, NbModel):
        obj = _nb_to_obj(model)
    elif isinstance(model, SvmModel):
        obj = {"kind": "svm", "weights": model.weights, "bias": model.bias, "theta": model.theta}
    elif isinstance(model, dict):
        obj = {"kind": "nb-percourse", "models": {cid: _nb_to_obj(m) for cid, m in model.items()}}
    else:
        raise TypeError(f"cannot save {type(model)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    kind = obj.get("kind")
    if kind == "nb":
        return _nb_from_obj(obj)
    if kind == "svm":
        return SvmModel(weights=dict(obj["weights"]), bias=obj["bias"], theta=obj["theta"])
    if kind == "nb-percourse":
        return {cid: _nb_from_obj(m) for cid, m in obj["models"].items()}
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# Synthetic stress experiments
# ---------------------------------------------------------------------------


def reference_pseudocount(spec: GenerativeSpec) -> float:
    """Per-word pseudocount adding a total mass of two tokens per class.

    This is the normalized form of initializing every conditional count to one
    with a two-count denominator, the convention of the classic textbook
    implementations these experiments model.
    """
    return 2.0 / spec.n


def small_sample_fpr_trials(
    spec: GenerativeSpec,
    course: int = 0,
    trials: int = 200,
    eval_negatives: int = 100,
    pseudocount: float | None = None,
    seed: int = 0,
) -> list[float | None]:
    """Per-course NB trained on the spec's tiny training count, many times over.

    Each trial draws b training threads for the course, trains NB on the full
    model vocabulary, and measures the false positive rate on fresh
    course-specific threads.  Trials whose training draw lacks one of the two
    classes cannot train and yield None.
    """
    if spec.training_counts is None:
        raise InvariantViolation("spec", "spec carries no training counts")
    if pseudocount is None:
        pseudocount = reference_pseudocount(spec)
    b = spec.training_counts[course]
    s = spec.thread_length(course)
    results: list[float | None] = []
    for child in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.Generator(np.random.PCG64(child))
        train = [sample_thread(spec, course, rng) for _ in range(b)]
        docs = labeled_docs_from_sampled(train)
        try:
            model = train_nb_docs(docs, pseudocount=pseudocount, vocab=spec.background.vocab)
        except MissingClass:
            results.append(None)
            continue
        false_pos = 0
        for _ in range(eval_negatives):
            tokens = sample_tokens(spec, course, False, s, rng)
            if predict_nb(model, tokens).positive:
                false_pos += 1
        results.append(false_pos / eval_negatives)
    return results


def plane_and_svm_errors(
    spec: GenerativeSpec,
    course: int = 0,
    n_eval: int = 10_000,
    svm_training_threads: int = 300,
    lambda_: float = 1e-4,
    epochs: int = 50,
    seed: int = 1,
) -> tuple[float, float, SvmModel]:
    """Error rates of the constructed plane and a trained SVM on fresh threads.

    The SVM is trained on an independent sample of labeled threads from the
    same course (the plane itself needs no training).  Returns
    (plane_error, svm_error, svm_model).
    """
    weights, tau = separating_plane(spec)
    plane = SvmModel(weights=weights, bias=0.0, theta=tau)
    ss = np.random.SeedSequence(seed).spawn(2)
    train_rng = np.random.Generator(np.random.PCG64(ss[0]))
    eval_rng = np.random.Generator(np.random.PCG64(ss[1]))

    train = [sample_thread(spec, course, train_rng) for _ in range(svm_training_threads)]
    svm = train_svm(labeled_docs_from_sampled(train), lambda_=lambda_, epochs=epochs)

    plane_errors = svm_errors = 0
    for _ in range(n_eval):
        thread = sample_thread(spec, course, eval_rng)
        if (plane.score(thread.tokens) > plane.theta) != thread.is_smalltalk:
            plane_errors += 1
        if (svm.score(thread.tokens) > svm.theta) != thread.is_smalltalk:
            svm_errors += 1
    return plane_errors / n_eval, svm_errors / n_eval, svm
