"""Per-component text classifiers and prediction serialization.

Eight independent classifiers, one per vector component, each a multinomial
naive-Bayes model over unigram counts with add-one smoothing. Deliberately
dependency-free and deterministic: fitting is order-independent (count
based), ties break by the component's canonical value order, and models
persist to a plain text format. These desk-scale models exercise the full
predict/assemble/evaluate loop; heavyweight model training lives in a
separate package that consumes the same corpus and emits the same
prediction schema.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator, ClassifierMixin

from .cvss import COMPONENTS, COMPONENT_VALUES, CvssVector
from .dataset import LabeledExample
from .jsonl import read_jsonl, write_jsonl

log = logging.getLogger(__name__)

MODEL_FORMAT = "cvsspredict-model"
MODEL_VERSION = 1

_CVE_TOKEN = "<CVE>"
_VER_TOKEN = "<VER>"
_CVE_RE = re.compile(r"\bCVE-\d{4}-\d{4,}\b", re.IGNORECASE)
_VER_RE = re.compile(r"\b\d+(?:\.\d+)+\b")
_TOKEN_RE = re.compile(r"<CVE>|<VER>|[^\W_]+", re.UNICODE)


class EmptyTrainingSet(ValueError):
    pass


class ModelFormatError(ValueError):
    """Persisted model file fails validation."""


@dataclass(frozen=True)
class TokenizedDoc:
    tokens: tuple[str, ...]
    cve_id: str = ""


def tokenize(text: str, cve_id: str = "") -> TokenizedDoc:
    """Lowercased word tokens with CVE ids and version numbers collapsed.

    Ids and dotted version strings become placeholder tokens before
    segmentation, so "Pillow before 3.1.1" and "Pillow before 2.9" train
    the same evidence.
    """
    substituted = _CVE_RE.sub(f" {_CVE_TOKEN} ", text)
    substituted = _VER_RE.sub(f" {_VER_TOKEN} ", substituted)
    tokens = tuple(
        token if token in (_CVE_TOKEN, _VER_TOKEN) else token.lower()
        for token in _TOKEN_RE.findall(substituted)
    )
    return TokenizedDoc(tokens=tokens, cve_id=cve_id)


@dataclass(frozen=True)
class FitConfig:
    #: Tokens rarer than this across the training set are pruned from the
    #: vocabulary as noise. Pruning never empties a non-empty vocabulary.
    min_token_count: int = 2


@dataclass(frozen=True)
class ComponentModel:
    component: str
    classes: tuple[str, ...]
    observed: tuple[str, ...]
    doc_counts: tuple[int, ...]
    token_counts: Mapping[str, tuple[int, ...]]
    totals: tuple[int, ...] = field(init=False, default=())

    def __post_init__(self) -> None:
        if self.component not in COMPONENT_VALUES:
            raise ValueError(f"unknown component {self.component!r}")
        if self.classes != COMPONENT_VALUES[self.component]:
            raise ValueError(f"{self.component}: classes must match the enumeration")
        if not self.observed or any(c not in self.classes for c in self.observed):
            raise ValueError(f"{self.component}: observed classes invalid")
        if len(self.doc_counts) != len(self.observed) or min(self.doc_counts) < 1:
            raise ValueError(f"{self.component}: bad document counts")
        totals = [0] * len(self.observed)
        for counts in self.token_counts.values():
            if len(counts) != len(self.observed) or min(counts) < 0:
                raise ValueError(f"{self.component}: bad token count row")
            for i, count in enumerate(counts):
                totals[i] += count
        object.__setattr__(self, "totals", tuple(totals))

    @property
    def is_constant(self) -> bool:
        return len(self.observed) == 1

    @property
    def vocabulary_size(self) -> int:
        return len(self.token_counts)

    def log_priors(self) -> dict[str, float]:
        total_docs = sum(self.doc_counts)
        return {
            cls: math.log(n / total_docs)
            for cls, n in zip(self.observed, self.doc_counts)
        }

    def score(self, doc: TokenizedDoc) -> dict[str, float]:
        """Log-joint score per observed class; out-of-vocabulary tokens are
        dropped, so they can never move the argmax."""
        scores = self.log_priors()
        if self.is_constant:
            return scores
        vocab_size = self.vocabulary_size
        for token in doc.tokens:
            counts = self.token_counts.get(token)
            if counts is None:
                continue
            for cls, count, total in zip(self.observed, counts, self.totals):
                scores[cls] += math.log((count + 1) / (total + vocab_size))
        return scores


def fit_component(
    component: str,
    train: Sequence[LabeledExample],
    config: FitConfig = FitConfig(),
) -> ComponentModel:
    """Fit one component's classifier from labeled examples."""
    if component not in COMPONENT_VALUES:
        raise ValueError(f"unknown component {component!r}")
    pairs = [(tokenize(ex.text, ex.cve_id), ex.label_of(component)) for ex in train]
    return _fit_counts(component, pairs, config)


def _fit_counts(
    component: str,
    pairs: Sequence[tuple[TokenizedDoc, str]],
    config: FitConfig,
) -> ComponentModel:
    if component not in COMPONENT_VALUES:
        raise ValueError(f"unknown component {component!r}")
    if not pairs:
        raise EmptyTrainingSet(f"{component}: no training examples")
    enumeration = COMPONENT_VALUES[component]
    for _, label in pairs:
        if label not in enumeration:
            raise ValueError(f"{component}: label {label!r} not in enumeration")

    doc_counts: dict[str, int] = {}
    raw_counts: dict[str, dict[str, int]] = {}
    for doc, label in pairs:
        doc_counts[label] = doc_counts.get(label, 0) + 1
        for token in doc.tokens:
            per_class = raw_counts.setdefault(token, {})
            per_class[label] = per_class.get(label, 0) + 1

    observed = tuple(value for value in enumeration if value in doc_counts)
    if len(observed) == 1:
        log.warning(
            "%s: training set contains a single label value %r; "
            "model degrades to a constant predictor",
            component, observed[0],
        )

    pruned = {
        token: per_class
        for token, per_class in raw_counts.items()
        if sum(per_class.values()) >= config.min_token_count
    }
    if not pruned and raw_counts:
        log.debug("%s: pruning would empty the vocabulary; keeping all tokens", component)
        pruned = raw_counts
    if not pruned:
        raise EmptyTrainingSet(f"{component}: training texts contain no tokens")

    token_counts = {
        token: tuple(per_class.get(value, 0) for value in observed)
        for token, per_class in sorted(pruned.items())
    }
    return ComponentModel(
        component=component,
        classes=enumeration,
        observed=observed,
        doc_counts=tuple(doc_counts[value] for value in observed),
        token_counts=token_counts,
    )


def fit_all(
    train: Sequence[LabeledExample],
    config: FitConfig = FitConfig(),
) -> dict[str, ComponentModel]:
    """Fit the eight independent component models."""
    return {
        component: fit_component(component, train, config)
        for component in COMPONENTS
    }


@dataclass(frozen=True)
class ComponentPrediction:
    component: str
    value: str
    scores: Mapping[str, float]


def predict_component(model: ComponentModel, doc: TokenizedDoc) -> ComponentPrediction:
    """Argmax over observed classes; ties go to canonical value order."""
    scores = model.score(doc)
    best = None
    for cls in model.observed:
        if best is None or scores[cls] > scores[best]:
            best = cls
    return ComponentPrediction(component=model.component, value=best, scores=scores)


def predict_vector(models: Mapping[str, ComponentModel], doc: TokenizedDoc) -> CvssVector:
    """Assemble the eight componentwise predictions into one vector."""
    missing = [c for c in COMPONENTS if c not in models]
    if missing:
        raise ValueError(f"missing component models: {', '.join(missing)}")
    values = {
        component: predict_component(models[component], doc).value
        for component in COMPONENTS
    }
    return CvssVector(*(values[component] for component in COMPONENTS))


def predict_records(
    models: Mapping[str, ComponentModel],
    examples: Iterable[LabeledExample],
) -> list[dict]:
    """Per-example, per-component prediction rows in the exchange schema."""
    missing = [c for c in COMPONENTS if c not in models]
    if missing:
        raise ValueError(f"missing component models: {', '.join(missing)}")
    records = []
    for example in examples:
        doc = tokenize(example.text, example.cve_id)
        for component in COMPONENTS:
            prediction = predict_component(models[component], doc)
            records.append({
                "cve_id": example.cve_id,
                "component": component,
                "scores": {
                    cls: round(score, 6)
                    for cls, score in sorted(prediction.scores.items())
                },
                "text_ref": example.text_ref,
                "value": prediction.value,
            })
    return records


def write_predictions(path: str | Path, records: Iterable[dict]) -> int:
    return write_jsonl(path, records)


def read_predictions(path: str | Path) -> list[dict]:
    return list(read_jsonl(path))


def save_model(path: str | Path, model: ComponentModel) -> None:
    lines = [
        f"{MODEL_FORMAT} {MODEL_VERSION}",
        f"component {model.component}",
        f"classes {' '.join(model.classes)}",
        f"observed {' '.join(model.observed)}",
        f"doc_counts {' '.join(str(n) for n in model.doc_counts)}",
        f"vocabulary {model.vocabulary_size}",
    ]
    for token, counts in model.token_counts.items():
        lines.append(f"{token} {' '.join(str(n) for n in counts)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ComponentModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        fmt, version = lines[0].split()
        if fmt != MODEL_FORMAT or int(version) != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model format {lines[0]!r}")
        header: dict[str, list[str]] = {}
        for line in lines[1:6]:
            key, *rest = line.split()
            header[key] = rest
        component = header["component"][0]
        observed = tuple(header["observed"])
        expected_vocab = int(header["vocabulary"][0])
        token_counts: dict[str, tuple[int, ...]] = {}
        for line in lines[6:]:
            token, *counts = line.split()
            token_counts[token] = tuple(int(n) for n in counts)
        if len(token_counts) != expected_vocab:
            raise ModelFormatError(
                f"vocabulary size mismatch: header says {expected_vocab}, "
                f"found {len(token_counts)}"
            )
        return ComponentModel(
            component=component,
            classes=tuple(header["classes"]),
            observed=observed,
            doc_counts=tuple(int(n) for n in header["doc_counts"]),
            token_counts=token_counts,
        )
    except ModelFormatError:
        raise
    except (IndexError, KeyError, ValueError) as exc:
        raise ModelFormatError(f"corrupt model file {path}: {exc}") from exc


def save_models(directory: str | Path, models: Mapping[str, ComponentModel]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for component, model in models.items():
        save_model(directory / f"model_{component}.txt", model)


def load_models(directory: str | Path) -> dict[str, ComponentModel]:
    directory = Path(directory)
    models = {}
    for component in COMPONENTS:
        path = directory / f"model_{component}.txt"
        if not path.exists():
            raise ModelFormatError(f"missing model file {path}")
        model = load_model(path)
        if model.component != component:
            raise ModelFormatError(
                f"{path} declares component {model.component}, expected {component}"
            )
        models[component] = model
    return models


class ComponentClassifier(BaseEstimator, ClassifierMixin):
    """Estimator-style wrapper around one component's model.

    X is a sequence of raw texts, y the component's label values.
    """

    def __init__(self, component: str = "AV", min_token_count: int = 2):
        self.component = component
        self.min_token_count = min_token_count

    def fit(self, X: Sequence[str], y: Sequence[str]) -> "ComponentClassifier":
        texts, labels = list(X), list(y)
        if len(texts) != len(labels):
            raise ValueError("X and y must have equal length")
        pairs = [(tokenize(text), label) for text, label in zip(texts, labels)]
        self.model_ = _fit_counts(
            self.component, pairs, FitConfig(min_token_count=self.min_token_count)
        )
        self.classes_ = list(self.model_.observed)
        return self

    def predict(self, X: Sequence[str]) -> list[str]:
        return [predict_component(self.model_, tokenize(text)).value for text in X]

    def predict_scores(self, X: Sequence[str]) -> list[dict[str, float]]:
        return [dict(predict_component(self.model_, tokenize(text)).scores) for text in X]


class VectorClassifier(BaseEstimator):
    """Estimator-style wrapper fitting all eight components at once.

    X is a sequence of raw texts, y a sequence of canonical vector strings;
    predictions are canonical vector strings.
    """

    def __init__(self, min_token_count: int = 2):
        self.min_token_count = min_token_count

    def fit(self, X: Sequence[str], y: Sequence[str]) -> "VectorClassifier":
        from .cvss import parse_vector

        config = FitConfig(min_token_count=self.min_token_count)
        vectors = [parse_vector(label) for label in y]
        docs = [tokenize(text) for text in X]
        if len(docs) != len(vectors):
            raise ValueError("X and y must have equal length")
        self.models_ = {}
        for index, component in enumerate(COMPONENTS):
            pairs = [(doc, vector.values()[index]) for doc, vector in zip(docs, vectors)]
            self.models_[component] = _fit_counts(component, pairs, config)
        return self

    def predict(self, X: Sequence[str]) -> list[str]:
        return [predict_vector(self.models_, tokenize(text)).serialize() for text in X]

    def score(self, X: Sequence[str], y: Sequence[str]) -> float:
        predictions = self.predict(X)
        hits = sum(1 for predicted, truth in zip(predictions, y) if predicted == truth)
        return hits / len(predictions)
