"""Detection evaluation: greedy IoU matching, 101-point AP, mAP50 and mAP_3states.

Follows the COCO conventions at a single IoU threshold: predictions are
matched per image and class in descending confidence, each to the
highest-IoU unmatched ground truth above the threshold.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import kernels
from .errors import EvaluationError, ValidationError
from .geometry import Detection, Frame, GroundTruth
from .taxonomy import (
    THREE_STATES,
    ClassKey,
    DatasetSchema,
    State,
    TLClass,
    class_sort_key,
    project_to_state,
    render_class,
)

REPORT_SCHEMA_VERSION = 1
AP_MODES = ("coco101", "allpoints")


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    conf_threshold: float = 0.001
    max_detections_per_image: int = 300
    interpolation_points: int = 101
    # operating point for the scalar precision/recall columns
    pr_conf: float = 0.25
    ap_mode: str = "coco101"

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValidationError(f"iou_threshold must lie in (0, 1], got {self.iou_threshold}")
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ValidationError(f"conf_threshold must lie in [0, 1], got {self.conf_threshold}")
        if self.max_detections_per_image < 1:
            raise ValidationError("max_detections_per_image must be >= 1")
        if self.interpolation_points < 2:
            raise ValidationError("interpolation_points must be >= 2")
        if not 0.0 <= self.pr_conf <= 1.0:
            raise ValidationError(f"pr_conf must lie in [0, 1], got {self.pr_conf}")
        if self.ap_mode not in AP_MODES:
            raise ValidationError(f"ap_mode must be one of {AP_MODES}")


@dataclass
class ClassResult:
    instances: int
    predictions: int
    precision: float
    recall: float
    ap: Optional[float]

    def to_json(self):
        return {
            "instances": self.instances,
            "predictions": self.predictions,
            "precision": self.precision,
            "recall": self.recall,
            "ap": self.ap,
        }


@dataclass
class EvalReport:
    per_class: Dict[ClassKey, ClassResult]
    map50: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    config: EvalConfig
    map_3states: Optional[float] = None
    map_3states_partial: bool = False
    ap_by_state: Dict[State, float] = field(default_factory=dict)

    @property
    def absent_classes(self) -> List[ClassKey]:
        """Classes without ground-truth instances; excluded from the mAP mean."""
        return [c for c, r in self.per_class.items() if r.instances == 0]

    def to_json(self) -> dict:
        cfg = self.config
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": {
                "iou_threshold": cfg.iou_threshold,
                "conf_threshold": cfg.conf_threshold,
                "max_detections_per_image": cfg.max_detections_per_image,
                "interpolation_points": cfg.interpolation_points,
                "pr_conf": cfg.pr_conf,
                "ap_mode": cfg.ap_mode,
            },
            "map50": self.map50,
            "precision": self.precision,
            "recall": self.recall,
            "map_3states": self.map_3states,
            "map_3states_partial": self.map_3states_partial,
            "ap_by_state": {s.value: ap for s, ap in self.ap_by_state.items()},
            "per_class": {render_class(c): r.to_json() for c, r in self.per_class.items()},
            "absent_classes": [render_class(c) for c in self.absent_classes],
        }

    def to_table(self) -> str:
        cfg = self.config
        lines = [
            f"# IoU={cfg.iou_threshold} conf>={cfg.conf_threshold} max_det={cfg.max_detections_per_image} "
            f"AP={cfg.ap_mode} P/R@conf>={cfg.pr_conf}",
            f"{'class':<26}{'inst':>7}{'preds':>8}{'P':>8}{'R':>8}{'AP50':>8}",
        ]

        def fmt(v):
            return f"{v:8.4f}" if v is not None else f"{'-':>8}"

        for c, r in self.per_class.items():
            lines.append(f"{render_class(c):<26}{r.instances:>7}{r.predictions:>8}"
                         f"{fmt(r.precision)}{fmt(r.recall)}{fmt(r.ap)}")
        lines.append(f"{'all':<26}{'':>7}{'':>8}{fmt(self.precision)}{fmt(self.recall)}{fmt(self.map50)}")
        if self.map_3states is not None:
            tag = " (partial)" if self.map_3states_partial else ""
            states = " ".join(f"{s.value}={ap:.4f}" for s, ap in self.ap_by_state.items())
            lines.append(f"mAP_3states={self.map_3states:.4f}{tag}  {states}")
        return "\n".join(lines)


def match_frame(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruth],
    cfg: EvalConfig = EvalConfig(),
) -> Tuple[List[Tuple[Detection, bool]], int]:
    """Greedily match one class's predictions to its ground truths within a frame.

    Predictions are visited by descending confidence (stable, so equal
    confidences keep input order). Returns ``[(pred, is_tp), ...]`` in visiting
    order and the number of unmatched ground truths.
    """
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    ordered = [preds[i] for i in order]
    matched = _match_indices(ordered, gts, cfg.iou_threshold)
    out = [(p, m >= 0) for p, m in zip(ordered, matched)]
    return out, len(gts) - int(np.count_nonzero(matched >= 0))


def _match_indices(ordered_preds, gts, iou_threshold):
    if not ordered_preds:
        return np.empty(0, dtype=np.int64)
    if not gts:
        return np.full(len(ordered_preds), -1, dtype=np.int64)
    pb = np.array([p.bbox.as_list() for p in ordered_preds], dtype=np.float64)
    gb = np.array([g.bbox.as_list() for g in gts], dtype=np.float64)
    return kernels.greedy_match(kernels.iou_matrix(pb, gb), iou_threshold)


def _recall_thresholds(points: int) -> np.ndarray:
    # i / (points - 1) exactly, e.g. 0.00, 0.01, ..., 1.00
    return np.arange(points, dtype=np.float64) / (points - 1)


def average_precision(tp_flags: Sequence[bool], total_gt: int, cfg: EvalConfig = EvalConfig()) -> Optional[float]:
    """AP of a confidence-ordered list of tp/fp flags.

    ``coco101``: mean over recall levels r of the maximum precision at recall >= r.
    ``allpoints``: area under the monotone precision envelope.
    Returns None when ``total_gt`` is 0 (the class is excluded, not scored 0).
    """
    if total_gt <= 0:
        return None
    tp = np.asarray(tp_flags, dtype=bool)
    if tp.size == 0:
        return 0.0
    tpc = np.cumsum(tp, dtype=np.float64)
    fpc = np.cumsum(~tp, dtype=np.float64)
    recall = tpc / total_gt
    precision = tpc / (tpc + fpc)
    # envelope: best precision achievable at this recall or beyond
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    if cfg.ap_mode == "allpoints":
        r = np.concatenate(([0.0], recall))
        return float(np.sum((r[1:] - r[:-1]) * envelope))
    levels = _recall_thresholds(cfg.interpolation_points)
    idx = np.searchsorted(recall, levels, side="left")
    interp = np.zeros_like(levels)
    ok = idx < recall.size
    interp[ok] = envelope[idx[ok]]
    return float(np.mean(interp))


def _prepare_predictions(frame: Frame, cfg: EvalConfig, kind) -> List[Tuple[int, Detection]]:
    kept = [(i, d) for i, d in enumerate(frame.detections)
            if isinstance(d.cls, kind) and d.confidence >= cfg.conf_threshold]
    kept.sort(key=lambda t: -t[1].confidence)
    return kept[: cfg.max_detections_per_image]


def _class_universe(classes) -> List[ClassKey]:
    if isinstance(classes, DatasetSchema):
        classes = classes.classes
    return sorted(set(classes), key=class_sort_key)


def _kind_of(classes) -> tuple:
    kinds = {type(c) for c in classes}
    return tuple(kinds) if kinds else (TLClass,)


def _evaluate_class(c, per_frame, cfg):
    """per_frame: list of (frame_id, [(record_idx, det)], [gt]) restricted to class c."""
    entries = []
    n_gt = 0
    for frame_id, preds, gts in per_frame:
        n_gt += len(gts)
        if not preds:
            continue
        matched = _match_indices([d for _, d in preds], gts, cfg.iou_threshold)
        for (idx, d), m in zip(preds, matched):
            entries.append((-d.confidence, frame_id, idx, bool(m >= 0)))
    entries.sort()
    flags = [e[3] for e in entries]
    ap = average_precision(flags, n_gt, cfg)
    op = [e[3] for e in entries if -e[0] >= cfg.pr_conf]
    tp_op = sum(op)
    precision = tp_op / len(op) if op else 0.0
    recall = tp_op / n_gt if n_gt else 0.0
    return c, ClassResult(n_gt, len(entries), precision, recall, ap)


def _check_frames(gt_frames, pred_frames):
    gt_ids = {f.id for f in gt_frames}
    pred_ids = {f.id for f in pred_frames}
    if len(gt_ids) != len(gt_frames) or len(pred_ids) != len(pred_frames):
        raise EvaluationError("duplicate frame ids in evaluation input")
    if gt_ids != pred_ids:
        missing_pred = sorted(gt_ids - pred_ids)
        missing_gt = sorted(pred_ids - gt_ids)
        raise EvaluationError(
            f"frame sets differ; missing from predictions: {missing_pred}; missing from ground truth: {missing_gt}"
        )


def _mean(values):
    values = [v for v in values if v is not None]
    return math.fsum(values) / len(values) if values else None


def evaluate(
    gt_frames: Sequence[Frame],
    pred_frames: Sequence[Frame],
    schema: Union[DatasetSchema, Iterable[ClassKey]],
    cfg: EvalConfig = EvalConfig(),
    workers: int = 1,
    three_states: bool = False,
) -> EvalReport:
    """Evaluate predictions against ground truth over a whole split.

    ``schema`` fixes the class universe (a DatasetSchema or any collection of
    class keys: TLClass, State or ArrowClass). Ground truths come from
    ``gt_frames[*].ground_truths``, predictions from ``pred_frames[*].detections``.
    With ``workers > 1`` classes are evaluated on a thread pool; the report is
    identical to the sequential one.
    """
    _check_frames(gt_frames, pred_frames)
    classes = _class_universe(schema)
    kind = _kind_of(classes)
    preds_by_id = {f.id: f for f in pred_frames}

    buckets: Dict[ClassKey, list] = {c: [] for c in classes}
    for gf in sorted(gt_frames, key=lambda f: f.id):
        pf = preds_by_id[gf.id]
        preds = _prepare_predictions(pf, cfg, kind)
        by_cls_p: Dict[ClassKey, list] = {}
        for idx, d in preds:
            by_cls_p.setdefault(d.cls, []).append((idx, d))
        by_cls_g: Dict[ClassKey, list] = {}
        for g in gf.ground_truths:
            if isinstance(g.cls, kind):
                by_cls_g.setdefault(g.cls, []).append(g)
        for c in by_cls_p.keys() | by_cls_g.keys():
            if c not in buckets:
                raise EvaluationError(f"class {render_class(c)!r} is not in the evaluation class set")
            buckets[c].append((gf.id, by_cls_p.get(c, []), by_cls_g.get(c, [])))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _evaluate_class(c, buckets[c], cfg), classes))
    else:
        results = [_evaluate_class(c, buckets[c], cfg) for c in classes]
    per_class = dict(results)

    scored = [r for r in per_class.values() if r.instances > 0]
    report = EvalReport(
        per_class=per_class,
        map50=_mean(r.ap for r in scored),
        precision=_mean(r.precision for r in scored),
        recall=_mean(r.recall for r in scored),
        config=cfg,
    )
    if three_states:
        states = evaluate_3states(gt_frames, pred_frames, cfg, workers=workers)
        report.map_3states = states.map_3states
        report.map_3states_partial = states.map_3states_partial
        report.ap_by_state = states.ap_by_state
    return report


def project_frame(frame: Frame) -> Frame:
    """Replace every traffic-light class by its state; arrows are dropped."""
    dets = tuple(Detection(d.bbox, project_to_state(d.cls), d.confidence)
                 for d in frame.detections if isinstance(d.cls, TLClass))
    gts = tuple(GroundTruth(g.bbox, project_to_state(g.cls))
                for g in frame.ground_truths if isinstance(g.cls, TLClass))
    return Frame(frame.id, frame.width, frame.height, dets, gts, frame.timestamp_ms)


def evaluate_3states(
    gt_frames: Sequence[Frame],
    pred_frames: Sequence[Frame],
    cfg: EvalConfig = EvalConfig(),
    workers: int = 1,
) -> EvalReport:
    """Evaluate with pictograms removed from labels and predictions.

    The returned report is over State classes; ``map_3states`` is the mean AP
    of red, yellow and green (over those present, flagged partial if any is
    missing). red_yellow and off are scored as their own classes but stay out
    of that mean.
    """
    report = evaluate(
        [project_frame(f) for f in gt_frames],
        [project_frame(f) for f in pred_frames],
        list(State),
        cfg,
        workers=workers,
    )
    report.ap_by_state = {s: r.ap for s, r in report.per_class.items() if r.ap is not None}
    present = [report.ap_by_state[s] for s in THREE_STATES if s in report.ap_by_state]
    report.map_3states = _mean(present)
    report.map_3states_partial = len(present) < len(THREE_STATES)
    return report
