"""Evaluation metrics: per-component classification reports and score-level
error analysis with a zero-score audit.

Classification metrics are macro-averaged over the classes present in truth
or predictions; Cohen's kappa is unweighted. Score comparison treats two
one-decimal base scores as equal only when their rounded tenths agree, and
the three direction fractions come from a single pass over one denominator,
so they always sum to exactly 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .cvss import COMPONENTS, CvssVector, compute_base_score
from .dataset import LabeledExample, SplitManifest
from .errors import EmptyInput

log = logging.getLogger(__name__)

# Published full-corpus fine-tuning results that motivated this pipeline,
# kept here as comparison targets. Reaching them needs the complete crawled
# corpus plus GPU training; this package does not reproduce them and no test
# asserts them against a live run. See the README for the full statement.
REFERENCE_TARGETS = {
    "per_component": {
        "AV": {"f1": 0.84, "kappa": 0.84},
        "AC": {"f1": 0.82, "kappa": 0.64},
        "PR": {"f1": 0.80, "kappa": 0.74},
        "UI": {"f1": 0.93, "kappa": 0.87},
        "S": {"f1": 0.92, "kappa": 0.85},
        "C": {"f1": 0.87, "kappa": 0.80},
        "I": {"f1": 0.89, "kappa": 0.83},
        "A": {"f1": 0.77, "kappa": 0.81},
    },
    "scores": {
        "mse": 1.44,
        "mae": 0.61,
        "frac_correct": 0.621,
        "frac_higher": 0.205,
        "frac_lower": 0.173,
    },
}


class LengthMismatch(ValueError):
    pass


class DegenerateKappa(ArithmeticError):
    """Chance agreement is 1; kappa's denominator vanishes."""


class MissingPrediction(Exception):
    """A test-set example lacks a prediction for some component."""


class UnknownExample(Exception):
    """A prediction references a text outside the test set."""


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.counts) != len(self.classes):
            raise ValueError("confusion matrix rows must match classes")
        for row in self.counts:
            if len(row) != len(self.classes):
                raise ValueError("confusion matrix must be square")
            if any(n < 0 for n in row):
                raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_pairs(
        cls,
        truth: Sequence[str],
        pred: Sequence[str],
        classes: Sequence[str] | None = None,
    ) -> "ConfusionMatrix":
        if classes is None:
            classes = sorted(set(truth) | set(pred))
        index = {cls_: i for i, cls_ in enumerate(classes)}
        grid = [[0] * len(classes) for _ in classes]
        for t, p in zip(truth, pred):
            grid[index[t]][index[p]] += 1
        return cls(classes=tuple(classes), counts=tuple(tuple(row) for row in grid))

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def row_marginals(self) -> tuple[int, ...]:
        return tuple(sum(row) for row in self.counts)

    def col_marginals(self) -> tuple[int, ...]:
        return tuple(sum(col) for col in zip(*self.counts))

    def diagonal(self) -> int:
        return sum(self.counts[i][i] for i in range(len(self.classes)))

    def to_record(self) -> dict:
        return {"classes": list(self.classes), "counts": [list(r) for r in self.counts]}


@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    # None when chance agreement is 1 and kappa has no defined value.
    cohen_kappa: float | None
    support: int
    per_class: Mapping[str, Mapping[str, float]]
    confusion: ConfusionMatrix

    def to_record(self) -> dict:
        return {
            "accuracy": round(self.accuracy, 6),
            "precision": round(self.macro_precision, 6),
            "recall": round(self.macro_recall, 6),
            "f1": round(self.macro_f1, 6),
            "kappa": None if self.cohen_kappa is None else round(self.cohen_kappa, 6),
            "support": self.support,
            "per_class": {
                cls: {k: round(v, 6) if isinstance(v, float) else v for k, v in row.items()}
                for cls, row in self.per_class.items()
            },
            "confusion": self.confusion.to_record(),
        }


def _kappa(matrix: ConfusionMatrix) -> float:
    total = matrix.total
    # Integer arithmetic for the degenerate check: chance agreement is 1
    # exactly when the marginal product mass equals total^2.
    expected_mass = sum(
        r * c for r, c in zip(matrix.row_marginals(), matrix.col_marginals())
    )
    if expected_mass == total * total:
        raise DegenerateKappa(
            "both truth and predictions are constant; kappa is undefined"
        )
    p_observed = matrix.diagonal() / total
    p_expected = expected_mass / (total * total)
    return (p_observed - p_expected) / (1.0 - p_expected)


def _report_from_matrix(
    matrix: ConfusionMatrix, kappa: float | None
) -> ClassificationReport:
    total = matrix.total
    if total == 0:
        raise EmptyInput("confusion matrix has no observations")
    rows = matrix.row_marginals()
    cols = matrix.col_marginals()
    per_class: dict[str, dict[str, float]] = {}
    precisions, recalls, f1s = [], [], []
    for i, cls in enumerate(matrix.classes):
        tp = matrix.counts[i][i]
        precision = tp / cols[i] if cols[i] else 0.0
        recall = tp / rows[i] if rows[i] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[cls] = {
            "precision": precision, "recall": recall, "f1": f1, "support": rows[i],
        }
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    n_classes = len(matrix.classes)
    return ClassificationReport(
        accuracy=matrix.diagonal() / total,
        macro_precision=sum(precisions) / n_classes,
        macro_recall=sum(recalls) / n_classes,
        macro_f1=sum(f1s) / n_classes,
        cohen_kappa=kappa,
        support=total,
        per_class=per_class,
        confusion=matrix,
    )


def metrics_from_matrix(matrix: ConfusionMatrix) -> ClassificationReport:
    return _report_from_matrix(matrix, _kappa(matrix))


def classification_metrics(
    truth: Sequence[str],
    pred: Sequence[str],
    classes: Sequence[str] | None = None,
) -> ClassificationReport:
    """Accuracy, macro precision/recall/F1, and unweighted Cohen's kappa.

    Macro averages run over the classes present in truth or predictions
    (or the explicit ``classes`` list); 0/0 ratios are defined as 0.
    """
    if len(truth) != len(pred):
        raise LengthMismatch(f"{len(truth)} truth labels vs {len(pred)} predictions")
    if not truth:
        raise EmptyInput("no labels to evaluate")
    return metrics_from_matrix(ConfusionMatrix.from_pairs(truth, pred, classes))


@dataclass(frozen=True)
class ScoreEvalReport:
    mse: float
    mae: float
    # Exact rationals over one denominator, so the three always sum to 1.
    frac_correct: Fraction
    frac_higher: Fraction
    frac_lower: Fraction
    zero_score_count: int
    zero_score_cases: tuple[str, ...]
    support: int

    def to_record(self) -> dict:
        return {
            "mse": round(self.mse, 6),
            "mae": round(self.mae, 6),
            "frac_correct": round(float(self.frac_correct), 6),
            "frac_higher": round(float(self.frac_higher), 6),
            "frac_lower": round(float(self.frac_lower), 6),
            "zero_scores": {
                "count": self.zero_score_count,
                "cases": list(self.zero_score_cases),
            },
            "support": self.support,
        }


def score_eval(
    truth_vectors: Sequence[CvssVector],
    pred_vectors: Sequence[CvssVector],
    cve_ids: Sequence[str] | None = None,
) -> ScoreEvalReport:
    """Score both vector lists and compare: MSE/MAE, direction fractions,
    and the audit of zero-score predictions against nonzero truth.

    Without cve_ids the audit lists positional references like "#3".
    """
    if len(truth_vectors) != len(pred_vectors):
        raise LengthMismatch(
            f"{len(truth_vectors)} truth vectors vs {len(pred_vectors)} predictions"
        )
    if not truth_vectors:
        raise EmptyInput("no vectors to evaluate")
    if cve_ids is not None and len(cve_ids) != len(truth_vectors):
        raise LengthMismatch("cve_ids length must match the vector lists")

    n = len(truth_vectors)
    sq_sum = 0.0
    abs_sum = 0.0
    correct = higher = lower = 0
    zero_cases: list[str] = []
    for idx, (t, p) in enumerate(zip(truth_vectors, pred_vectors)):
        truth_score = compute_base_score(t).base_score
        pred_score = compute_base_score(p).base_score
        diff = pred_score - truth_score
        sq_sum += diff * diff
        abs_sum += abs(diff)
        # One-decimal scores compared on integer tenths; float artifacts
        # cannot make equal scores differ.
        t_tenths, p_tenths = round(truth_score * 10), round(pred_score * 10)
        if p_tenths == t_tenths:
            correct += 1
        elif p_tenths > t_tenths:
            higher += 1
        else:
            lower += 1
        if p_tenths == 0 and t_tenths > 0:
            zero_cases.append(cve_ids[idx] if cve_ids is not None else f"#{idx}")
    return ScoreEvalReport(
        mse=sq_sum / n,
        mae=abs_sum / n,
        frac_correct=Fraction(correct, n),
        frac_higher=Fraction(higher, n),
        frac_lower=Fraction(lower, n),
        zero_score_count=len(zero_cases),
        zero_score_cases=tuple(zero_cases),
        support=n,
    )


@dataclass(frozen=True)
class RunReport:
    components: Mapping[str, ClassificationReport]
    scores: ScoreEvalReport
    test_examples: int

    @property
    def degenerate(self) -> tuple[str, ...]:
        return tuple(
            c for c in COMPONENTS
            if c in self.components and self.components[c].cohen_kappa is None
        )

    def to_record(self) -> dict:
        return {
            "components": {
                component: self.components[component].to_record()
                for component in COMPONENTS
                if component in self.components
            },
            "scores": self.scores.to_record(),
            "test_examples": self.test_examples,
        }


def _index_predictions(predictions: Iterable[dict]) -> dict[tuple[str, str], str]:
    index: dict[tuple[str, str], str] = {}
    for row in predictions:
        try:
            key = (row["text_ref"], row["component"])
            value = row["value"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"bad prediction row: {exc}") from exc
        if key in index and index[key] != value:
            raise ValueError(
                f"conflicting predictions for text_ref {key[0]} component {key[1]}: "
                f"{index[key]} vs {value}"
            )
        index[key] = value
    return index


def evaluate_run(
    manifest: SplitManifest,
    corpus: Sequence[LabeledExample],
    predictions: Iterable[dict],
) -> RunReport:
    """Join predictions to the test split and compute the full report.

    Predictions must cover every test example for all eight components, and
    must not reference anything outside the test set (leakage guard). A
    component whose kappa is undefined is reported with kappa null rather
    than failing the whole run.
    """
    test_rows = [ex for ex in corpus if manifest.side_of(ex.cve_id) == "test"]
    if not test_rows:
        raise EmptyInput("the manifest selects no test examples from this corpus")
    test_refs = {ex.text_ref for ex in test_rows}
    index = _index_predictions(predictions)

    strays = sorted({ref for ref, _ in index if ref not in test_refs})
    if strays:
        raise UnknownExample(
            f"{len(strays)} predicted text_refs are not test-set examples: "
            + ", ".join(strays[:5])
        )
    missing = [
        (ex.cve_id, ex.text_ref, component)
        for ex in test_rows
        for component in COMPONENTS
        if (ex.text_ref, component) not in index
    ]
    if missing:
        cve, ref, component = missing[0]
        raise MissingPrediction(
            f"{len(missing)} test predictions missing; first: "
            f"{cve} ({ref}) component {component}"
        )

    reports: dict[str, ClassificationReport] = {}
    value_index = {c: i for i, c in enumerate(COMPONENTS)}
    for component in COMPONENTS:
        truth = [ex.labels.values()[value_index[component]] for ex in test_rows]
        pred = [index[(ex.text_ref, component)] for ex in test_rows]
        try:
            reports[component] = classification_metrics(truth, pred)
        except DegenerateKappa:
            log.warning("%s: constant truth and predictions; kappa undefined", component)
            matrix = ConfusionMatrix.from_pairs(truth, pred)
            reports[component] = _report_from_matrix(matrix, None)

    truth_vectors = [ex.labels for ex in test_rows]
    pred_vectors = [
        CvssVector(*(index[(ex.text_ref, component)] for component in COMPONENTS))
        for ex in test_rows
    ]
    scores = score_eval(truth_vectors, pred_vectors, [ex.cve_id for ex in test_rows])
    return RunReport(components=reports, scores=scores, test_examples=len(test_rows))


def render_report(report: RunReport) -> str:
    """Human-readable table of the run report."""
    lines = [
        f"{'component':>9} {'accuracy':>9} {'precision':>9} {'recall':>9} "
        f"{'f1':>9} {'kappa':>9}"
    ]
    for component in COMPONENTS:
        r = report.components[component]
        kappa = "n/a" if r.cohen_kappa is None else f"{r.cohen_kappa:.4f}"
        lines.append(
            f"{component:>9} {r.accuracy:9.4f} {r.macro_precision:9.4f} "
            f"{r.macro_recall:9.4f} {r.macro_f1:9.4f} {kappa:>9}"
        )
    s = report.scores
    lines.append("")
    lines.append(
        f"scores on {s.support} examples: mse {s.mse:.4f}  mae {s.mae:.4f}  "
        f"correct {float(s.frac_correct):.4f}  higher {float(s.frac_higher):.4f}  "
        f"lower {float(s.frac_lower):.4f}"
    )
    lines.append(
        f"zero-score predictions against nonzero truth: {s.zero_score_count}"
        + (f" ({', '.join(s.zero_score_cases[:5])})" if s.zero_score_count else "")
    )
    return "\n".join(lines)
