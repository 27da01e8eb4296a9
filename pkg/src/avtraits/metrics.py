"""Trait accuracy metrics and the robustness evaluation harness.

Per-trait accuracy over N items is the mean of 1 - |label - prediction|;
the average accuracy is the mean over the five traits (fixed column
order E, N, A, C, O).  Because the score is affine in the absolute
error, every row also reports the mean absolute error (1 - accuracy).

The robustness harness evaluates a model under ``clean`` plus the six
non-ideal scenarios with per-scenario, per-sample derived seeds, so a
report is a pure function of (model, dataset, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ShapeError
from .mas import NON_IDEAL_SCENARIOS, SCENARIOS, Sample, apply_scenario

__all__ = [
    "MetricsInput",
    "RobustnessReport",
    "ScenarioRow",
    "TRAITS",
    "average_accuracy",
    "evaluate_model",
    "format_table",
    "per_trait_accuracy",
    "robustness_report",
    "scenario_comparison_table",
    "trait_accuracy",
    "trait_comparison_table",
]

TRAITS = ("E", "N", "A", "C", "O")
TABLE_HEADER = ("scenario",) + TRAITS + ("average", "mae")


@dataclass
class MetricsInput:
    """Aligned N x 5 prediction and label matrices, all entries in [0, 1]."""

    predictions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.predictions.ndim != 2 or self.predictions.shape[1] != len(TRAITS):
            raise ShapeError(f"predictions must be N x 5, got {self.predictions.shape}")
        if self.predictions.shape != self.labels.shape:
            raise ShapeError(
                f"predictions {self.predictions.shape} and labels {self.labels.shape} disagree"
            )
        if self.predictions.shape[0] < 1:
            raise InputError("metrics need at least one sample")
        for name, arr in (("predictions", self.predictions), ("labels", self.labels)):
            if (arr < 0).any() or (arr > 1).any():
                raise InputError(f"{name} must lie in [0, 1]")


def trait_accuracy(inp: MetricsInput, j: int) -> float:
    """Accuracy of trait column j (0-based, order E N A C O)."""
    if not 0 <= j < len(TRAITS):
        raise InputError(f"trait index must be in 0..4, got {j}")
    return float(np.mean(1.0 - np.abs(inp.labels[:, j] - inp.predictions[:, j])))


def per_trait_accuracy(inp: MetricsInput) -> np.ndarray:
    return np.array([trait_accuracy(inp, j) for j in range(len(TRAITS))])


def average_accuracy(inp: MetricsInput) -> float:
    return float(np.mean(per_trait_accuracy(inp)))


def evaluate_model(model, samples: list[Sample]) -> MetricsInput:
    """Run inference over samples and pair predictions with labels."""
    if not samples:
        raise InputError("cannot evaluate on an empty sample list")
    preds = np.stack([model.predict(s.visual, s.audio) for s in samples])
    labels = np.stack([s.label for s in samples])
    return MetricsInput(predictions=preds, labels=labels)


@dataclass
class ScenarioRow:
    scenario: str
    accuracies: np.ndarray  # five traits, order E N A C O
    average: float
    mae: float


@dataclass
class RobustnessReport:
    """Per-scenario accuracy table: clean plus the six non-ideal scenarios."""

    model_id: str
    seed: int
    rows: list[ScenarioRow]

    def row(self, scenario: str) -> ScenarioRow:
        for r in self.rows:
            if r.scenario == scenario:
                return r
        raise InputError(f"report has no scenario {scenario!r}")

    def non_ideal_average(self) -> float:
        return float(np.mean([self.row(s).average for s in NON_IDEAL_SCENARIOS]))

    def to_table(self, delimiter: str = ",") -> str:
        return format_table(
            [(r.scenario, r.accuracies, r.average, r.mae) for r in self.rows], delimiter
        )

    def to_json(self) -> str:
        payload = {
            "model_id": self.model_id,
            "seed": self.seed,
            "traits": list(TRAITS),
            "rows": [
                {
                    "scenario": r.scenario,
                    "accuracy": {t: r.accuracies[i] for i, t in enumerate(TRAITS)},
                    "average": r.average,
                    "mae": r.mae,
                }
                for r in self.rows
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _scenario_row(scenario: str, inp: MetricsInput) -> ScenarioRow:
    accs = per_trait_accuracy(inp)
    avg = float(np.mean(accs))
    return ScenarioRow(scenario=scenario, accuracies=accs, average=avg, mae=1.0 - avg)


def evaluate_scenario(model, samples: list[Sample], scenario: str, seed: int) -> ScenarioRow:
    """One report row; seeds derive from (seed, scenario index, sample index)."""
    if not samples:
        raise InputError("cannot evaluate on an empty sample list")
    s_idx = SCENARIOS.index(scenario)
    preds = []
    labels = []
    for i, sample in enumerate(samples):
        rng = np.random.default_rng(np.random.SeedSequence([seed, s_idx, i]))
        corrupted = apply_scenario(sample, scenario, rng)
        preds.append(model.predict(corrupted.visual, corrupted.audio))
        labels.append(sample.label)
    inp = MetricsInput(predictions=np.stack(preds), labels=np.stack(labels))
    return _scenario_row(scenario, inp)


def robustness_report(model, samples: list[Sample], seed: int, model_id: str = "model") -> RobustnessReport:
    rows = [evaluate_scenario(model, samples, scenario, seed) for scenario in SCENARIOS]
    return RobustnessReport(model_id=model_id, seed=seed, rows=rows)


# -- table rendering -----------------------------------------------------


def format_table(rows, delimiter: str = ",") -> str:
    """Render (name, five accuracies, average, mae) rows with a fixed header."""
    lines = [delimiter.join(TABLE_HEADER)]
    for name, accs, avg, mae in rows:
        cells = [name] + [f"{v:.5f}" for v in list(accs) + [avg, mae]]
        lines.append(delimiter.join(cells))
    return "\n".join(lines)


def scenario_comparison_table(
    baseline: RobustnessReport, augmented: RobustnessReport, delimiter: str = ","
) -> str:
    """Per-scenario average accuracy of two models plus the delta."""
    lines = [delimiter.join(("scenario", baseline.model_id, augmented.model_id, "delta"))]
    for scenario in SCENARIOS:
        a = baseline.row(scenario).average
        b = augmented.row(scenario).average
        lines.append(delimiter.join((scenario, f"{a:.5f}", f"{b:.5f}", f"{b - a:+.5f}")))
    return "\n".join(lines)


def trait_comparison_table(
    baseline: RobustnessReport, augmented: RobustnessReport, delimiter: str = ","
) -> str:
    """Per-trait accuracy averaged over the six non-ideal scenarios, per model."""
    lines = [delimiter.join(("method",) + TRAITS + ("average",))]
    for report in (baseline, augmented):
        traits = np.mean(
            [report.row(s).accuracies for s in NON_IDEAL_SCENARIOS], axis=0
        )
        avg = float(np.mean([report.row(s).average for s in NON_IDEAL_SCENARIOS]))
        cells = [report.model_id] + [f"{v:.5f}" for v in traits] + [f"{avg:.5f}"]
        lines.append(delimiter.join(cells))
    return "\n".join(lines)
