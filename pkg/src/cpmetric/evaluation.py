"""Classification/regression metrics and the runtime benchmark harness.

Metrics follow the usual definitions: micro F1 equals accuracy for
single-label classification, macro F1 averages per-class F1 over all m
classes (classes without support or predictions contribute 0), Cohen's
kappa corrects observed agreement by the chance agreement of the two
marginals, and MAE counts interval units (classification) or absolute
label error (regression).

The benchmark times the three-net comparison task ("which of A and B is
closer to ref?") per triple, for the exact distance and for trained-model
inference, with a warmup and a monotonic clock.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import metric, nn


@dataclass
class ClassificationReport:
    micro_f1: float
    macro_f1: float
    kappa: float
    mae_intervals: float
    confusion: np.ndarray  # (m, m); rows = true bin, cols = predicted bin

    def to_json(self) -> str:
        return json.dumps(
            {
                "micro_f1": self.micro_f1,
                "macro_f1": self.macro_f1,
                "kappa": self.kappa,
                "mae_intervals": self.mae_intervals,
                "confusion": self.confusion.tolist(),
            },
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ClassificationReport":
        doc = json.loads(text)
        return cls(
            micro_f1=doc["micro_f1"],
            macro_f1=doc["macro_f1"],
            kappa=doc["kappa"],
            mae_intervals=doc["mae_intervals"],
            confusion=np.asarray(doc["confusion"], dtype=np.int64),
        )

    def __eq__(self, other):
        return (
            isinstance(other, ClassificationReport)
            and self.micro_f1 == other.micro_f1
            and self.macro_f1 == other.macro_f1
            and self.kappa == other.kappa
            and self.mae_intervals == other.mae_intervals
            and bool(np.array_equal(self.confusion, other.confusion))
        )


def _check_lengths(predictions, labels):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValueError(
            f"predictions {predictions.shape} and labels {labels.shape} "
            "must be equal-length vectors"
        )
    return predictions, labels


def confusion_matrix(predictions, labels, m: int) -> np.ndarray:
    predictions, labels = _check_lengths(predictions, labels)
    if len(labels) and (
        labels.min() < 0 or labels.max() >= m or predictions.min() < 0
        or predictions.max() >= m
    ):
        raise ValueError(f"class indices must lie in [0, {m})")
    cm = np.zeros((m, m), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def f_score(predictions, labels, averaging: str = "micro", m: int | None = None) -> float:
    if m is None:
        m = int(max(np.max(predictions), np.max(labels))) + 1
    cm = confusion_matrix(predictions, labels, m)
    if averaging == "micro":
        return float(np.trace(cm) / cm.sum())
    if averaging == "macro":
        scores = np.zeros(m)
        for c in range(m):
            tp = cm[c, c]
            denom = cm[c, :].sum() + cm[:, c].sum()  # 2tp + fn + fp
            scores[c] = 2.0 * tp / denom if denom else 0.0
        return float(scores.mean())
    raise ValueError(f"unknown averaging {averaging!r}")


def cohen_kappa(predictions, labels) -> float:
    """Inter-rater agreement corrected for chance.

    Degenerate case (both raters always emit the same single class, chance
    agreement 1): defined as 1.0 when observed agreement is also 1, else 0.0.
    """
    predictions, labels = _check_lengths(predictions, labels)
    total = len(labels)
    m = int(max(predictions.max(), labels.max())) + 1
    cm = confusion_matrix(predictions, labels, m)
    p_o = np.trace(cm) / total
    p_e = float((cm.sum(axis=1) / total) @ (cm.sum(axis=0) / total))
    if p_e >= 1.0 - 1e-15:
        return 1.0 if p_o >= 1.0 - 1e-15 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def mae(predictions, labels, mode: str = nn.CLASSIFICATION) -> float:
    """Mean absolute error: interval units for classification, label units
    for regression."""
    predictions, labels = _check_lengths(predictions, labels)
    if mode not in (nn.CLASSIFICATION, nn.REGRESSION):
        raise ValueError(f"unknown mode {mode!r}")
    return float(np.abs(predictions.astype(np.float64) - labels).mean())


def classification_report(predictions, labels, m: int) -> ClassificationReport:
    return ClassificationReport(
        micro_f1=f_score(predictions, labels, "micro", m),
        macro_f1=f_score(predictions, labels, "macro", m),
        kappa=cohen_kappa(predictions, labels),
        mae_intervals=mae(predictions, labels, nn.CLASSIFICATION),
        confusion=confusion_matrix(predictions, labels, m),
    )


def report_table(report: ClassificationReport) -> str:
    head = f"{'micro-F1':>10} {'macro-F1':>10} {'Cohen-k':>10} {'MAE':>10}"
    row = (
        f"{report.micro_f1:>10.4f} {report.macro_f1:>10.4f} "
        f"{report.kappa:>10.4f} {report.mae_intervals:>10.4f}"
    )
    return head + "\n" + row + "\n"


# --- runtime benchmark --------------------------------------------------------

EXACT_KTD = "exact-ktd"
MODEL_INFERENCE = "model-inference"


@dataclass
class TimingReport:
    trials: int
    entries: dict = field(default_factory=dict)    # (method, n) -> {mean_ms, std_ms}
    agreement: dict = field(default_factory=dict)  # n -> fraction answers equal

    def to_json(self) -> str:
        return json.dumps(
            {
                "trials": self.trials,
                "entries": {
                    f"{method}/{n}": stats
                    for (method, n), stats in sorted(self.entries.items())
                },
                "agreement": {str(n): v for n, v in sorted(self.agreement.items())},
            },
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TimingReport":
        doc = json.loads(text)
        entries = {}
        for key, stats in doc["entries"].items():
            method, n = key.rsplit("/", 1)
            entries[(method, int(n))] = stats
        return cls(
            trials=doc["trials"],
            entries=entries,
            agreement={int(k): v for k, v in doc["agreement"].items()},
        )

    def table(self) -> str:
        ns = sorted({n for _, n in self.entries})
        lines = [
            f"{'N':>3} {'exact mean (std) ms':>22} {'model mean (std) ms':>22} "
            f"{'agreement':>10}"
        ]
        for n in ns:
            ex = self.entries.get((EXACT_KTD, n))
            mo = self.entries.get((MODEL_INFERENCE, n))
            ex_s = f"{ex['mean_ms']:.3f} ({ex['std_ms']:.3f})" if ex else "-"
            mo_s = f"{mo['mean_ms']:.3f} ({mo['std_ms']:.3f})" if mo else "-"
            ag = self.agreement.get(n)
            ag_s = "-" if ag is None else f"{ag:.3f}"
            lines.append(f"{n:>3} {ex_s:>22} {mo_s:>22} {ag_s:>10}")
        return "\n".join(lines) + "\n"


def _model_compare(model, ref, A, B) -> str:
    # one two-row forward pass scores both candidate pairs
    from . import encoding

    ref_lap, ref_cpt = encoding.net_features(ref)
    a_lap, a_cpt = encoding.net_features(A)
    b_lap, b_cpt = encoding.net_features(B)
    dtype = model.dtype
    batch = {
        "lap_a": np.stack([ref_lap, ref_lap]).astype(dtype),
        "cpt_a": np.stack([ref_cpt, ref_cpt]).astype(dtype),
        "lap_b": np.stack([a_lap, b_lap]).astype(dtype),
        "cpt_b": np.stack([a_cpt, b_cpt]).astype(dtype),
    }
    out = nn.forward(model, batch)
    if model.mode == nn.CLASSIFICATION:
        da, db = int(np.argmax(out[0])), int(np.argmax(out[1]))
    else:
        da, db = float(out[0, 0]), float(out[1, 0])
    if da == db:
        return metric.TIE
    return metric.A_CLOSER if da < db else metric.B_CLOSER


def benchmark_runtime(
    libraries: dict,
    models: dict,
    trials: int,
    seed: int = 0,
    p: float = metric.DEFAULT_PENALTY,
    warmup: int = 50,
    methods: tuple = (EXACT_KTD, MODEL_INFERENCE),
) -> TimingReport:
    """Per-triple wall time of the comparison task for each method and n.

    ``libraries`` maps n to a list of CP-nets to sample triples from;
    ``models`` maps n to a trained model (required when model inference is
    benchmarked).  Each trial draws a fresh triple of distinct nets; the
    first ``warmup`` triples per method are run untimed.  Also reports how
    often the two methods give the same answer on the timed triples.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if MODEL_INFERENCE in methods:
        missing = [n for n in libraries if n not in models]
        if missing:
            raise ValueError(f"no trained model for n in {missing}")
    report = TimingReport(trials=trials)

    for n, nets in sorted(libraries.items()):
        rng = np.random.default_rng([seed, n])
        triples = [
            tuple(rng.choice(len(nets), size=3, replace=False))
            for _ in range(warmup + trials)
        ]
        answers: dict = {}
        for method in methods:
            if method == EXACT_KTD:
                run = lambda r, a, b: metric.qualitative_compare(
                    nets[r], nets[a], nets[b], p=p
                )
            elif method == MODEL_INFERENCE:
                model = models[n]
                run = lambda r, a, b: _model_compare(model, nets[r], nets[a], nets[b])
            else:
                raise ValueError(f"unknown method {method!r}")

            times = np.empty(trials)
            method_answers = []
            for i, (r, a, b) in enumerate(triples):
                start = time.perf_counter()
                answer = run(r, a, b)
                elapsed = time.perf_counter() - start
                if i >= warmup:
                    times[i - warmup] = elapsed
                    method_answers.append(answer)
            answers[method] = method_answers
            report.entries[(method, n)] = {
                "mean_ms": float(times.mean() * 1e3),
                "std_ms": float(times.std() * 1e3),
            }
        if EXACT_KTD in answers and MODEL_INFERENCE in answers:
            same = sum(
                x == y for x, y in zip(answers[EXACT_KTD], answers[MODEL_INFERENCE])
            )
            report.agreement[n] = same / trials
    return report
