"""Per-sample and aggregate scoring for the three evaluation settings.

Setting 1 scores pixel-level IoU over generated boxes; Settings 2 and 3
score instance-level IoU, precision, recall and F1 over selected OCR
indices. Aggregation is macro: per-sample means within each dataset,
then an unweighted mean of the dataset means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, Mapping

from .geometry import pixel_iou
from .parsing import ParsedResponse

if TYPE_CHECKING:
    from .pipeline import Sample


class SettingMismatchError(ValueError):
    """Parsed response kind does not match the evaluation setting."""


class EmptyDatasetError(ValueError):
    """A declared dataset has no scored samples."""


BOX_SETTING = 1
INDEX_SETTINGS = (2, 3)

PIXEL_METRICS = ("pixel_iou",)
INSTANCE_METRICS = ("instance_iou", "precision", "recall", "f1")


@dataclass
class SampleScore:
    """Scores for one sample under one setting.

    Settings 2/3 fill the instance metrics; Setting 1 fills pixel_iou.
    ``degenerate_flags`` records malformed-record conditions (e.g. empty
    ground truth) rather than model failures.
    """

    sample_id: str
    setting: int
    followed_instruction: bool
    pixel_iou: float | None = None
    instance_iou: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    degenerate_flags: list[str] = field(default_factory=list)

    def metric_values(self) -> dict[str, float]:
        names = PIXEL_METRICS if self.setting == BOX_SETTING else INSTANCE_METRICS
        return {name: float(getattr(self, name)) for name in names}

    def to_dict(self) -> dict:
        d = {
            "id": self.sample_id,
            "setting": self.setting,
            "followed_instruction": self.followed_instruction,
            "degenerate_flags": list(self.degenerate_flags),
        }
        d.update(self.metric_values())
        return d


@dataclass
class DatasetAggregate:
    sample_count: int
    metrics: dict[str, float]


@dataclass
class EvalReport:
    """Per-dataset and overall means plus the per-sample scores."""

    setting: int
    per_dataset: dict[str, DatasetAggregate]
    overall: dict[str, float]
    sample_scores: list[SampleScore]
    config: dict = field(default_factory=dict)


def instance_iou(pred_indices: Iterable[int], gt_indices: Iterable[int]) -> float:
    """|pred ∩ gt| / |pred ∪ gt| over index sets; 0 when the union is empty."""
    pred = set(pred_indices)
    gt = set(gt_indices)
    union = pred | gt
    if not union:
        return 0.0
    return len(pred & gt) / len(union)


def sample_prf(
    pred_indices: Iterable[int], gt_indices: Iterable[int]
) -> tuple[float, float, float]:
    """Precision, recall and F1 over index sets.

    Empty predictions give precision 0; F1 is 0 whenever P + R == 0
    (the harmonic mean is undefined there and zero penalizes empty
    predictions).
    """
    pred = set(pred_indices)
    gt = set(gt_indices)
    hits = len(pred & gt)
    precision = hits / len(pred) if pred else 0.0
    recall = hits / len(gt) if gt else 0.0
    if precision + recall == 0.0:
        return precision, recall, 0.0
    f1 = 2.0 * precision * recall / (precision + recall)
    return precision, recall, f1


def score_sample(setting: int, parsed: ParsedResponse, sample: "Sample") -> SampleScore:
    """Score one parsed response against a benchmark record."""
    if setting not in (1, 2, 3):
        raise ValueError(f"unknown setting {setting}")
    expected_kind = "boxes" if setting == BOX_SETTING else "indices"
    if parsed.kind != expected_kind:
        raise SettingMismatchError(
            f"parse/setting mismatch: setting {setting} needs {expected_kind}, "
            f"got {parsed.kind}"
        )

    flags: list[str] = []
    if not sample.gt_indices:
        flags.append("empty_ground_truth")

    if setting == BOX_SETTING:
        gt_boxes = sample.gt_boxes()
        if not parsed.boxes and not gt_boxes:
            flags.append("pixel_iou_both_empty")
        return SampleScore(
            sample_id=sample.id,
            setting=setting,
            followed_instruction=parsed.followed_instruction,
            pixel_iou=pixel_iou(parsed.boxes, gt_boxes),
            degenerate_flags=flags,
        )

    pred = set(parsed.indices)
    gt = set(sample.gt_indices)
    precision, recall, f1 = sample_prf(pred, gt)
    return SampleScore(
        sample_id=sample.id,
        setting=setting,
        followed_instruction=parsed.followed_instruction,
        instance_iou=instance_iou(pred, gt),
        precision=precision,
        recall=recall,
        f1=f1,
        degenerate_flags=flags,
    )


def missing_score(sample_id: str, setting: int) -> SampleScore:
    """All-zero score for a sample with no response.

    Refusals count against both the grounding metrics and the
    instruction-following rate; excluding them would inflate both.
    """
    score = SampleScore(
        sample_id=sample_id,
        setting=setting,
        followed_instruction=False,
        degenerate_flags=["missing_response"],
    )
    if setting == BOX_SETTING:
        score.pixel_iou = 0.0
    else:
        score.instance_iou = score.precision = score.recall = score.f1 = 0.0
    return score


def instruction_following_rate(scores: Iterable[SampleScore]) -> float:
    """Fraction of samples that produced at least one box or index."""
    scores = list(scores)
    if not scores:
        raise ValueError("instruction_following_rate needs at least one sample")
    return sum(1 for s in scores if s.followed_instruction) / len(scores)


def _mean(values: list[float]) -> float:
    # fsum: exactly permutation-invariant, unlike sequential addition
    return math.fsum(values) / len(values)


def aggregate(
    scores: Iterable[SampleScore],
    dataset_of: Mapping[str, str] | Callable[[str], str],
) -> EvalReport:
    """Reduce per-sample scores to per-dataset and overall means.

    ``dataset_of`` maps sample id to dataset name and defines the full
    dataset roster: a declared dataset with no scored samples is an
    error. Reduction runs in canonical (sorted sample id, sorted dataset)
    order for reproducibility.
    """
    scores = sorted(scores, key=lambda s: s.sample_id)
    if not scores:
        raise ValueError("aggregate needs at least one score")
    settings = {s.setting for s in scores}
    if len(settings) != 1:
        raise ValueError(f"mixed settings in one aggregation: {sorted(settings)}")
    setting = settings.pop()

    lookup = dataset_of if callable(dataset_of) else dataset_of.__getitem__
    buckets: dict[str, list[SampleScore]] = {}
    if not callable(dataset_of):
        buckets = {name: [] for name in dataset_of.values()}
    for s in scores:
        try:
            name = lookup(s.sample_id)
        except KeyError:
            raise ValueError(f"sample {s.sample_id!r} not assigned to a dataset")
        buckets.setdefault(name, []).append(s)

    metric_names = PIXEL_METRICS if setting == BOX_SETTING else INSTANCE_METRICS
    per_dataset: dict[str, DatasetAggregate] = {}
    for name in sorted(buckets):
        bucket = buckets[name]
        if not bucket:
            raise EmptyDatasetError(f"dataset {name!r} has no samples")
        metrics = {
            m: _mean([s.metric_values()[m] for s in bucket]) for m in metric_names
        }
        metrics["instruction_following_rate"] = instruction_following_rate(bucket)
        per_dataset[name] = DatasetAggregate(len(bucket), metrics)

    overall = {
        m: _mean([agg.metrics[m] for agg in per_dataset.values()])
        for m in (*metric_names, "instruction_following_rate")
    }
    return EvalReport(
        setting=setting,
        per_dataset=per_dataset,
        overall=overall,
        sample_scores=scores,
    )
