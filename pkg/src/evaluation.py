#!/usr/bin/env python3
"""
Anticipation Metrics

Video-level threshold sweep, interpolated average precision, frame-level
AUC and AP, time-to-accident metrics and the adaptive-vs-static alert
comparison. Each metric has a brute-force oracle used by the test suite.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .config import EvalConfig
from .exceptions import InputError, UndefinedMetricError
from .risk_head import RiskTrace

logger = logging.getLogger(__name__)


@dataclass
class SweepPoint:
    """Video-level counts at one threshold"""
    theta: float
    tp: int
    fp: int
    fn: int
    tn: int
    precision: Optional[float]
    recall: float
    mean_tta_s: Optional[float]


@dataclass
class AlertComparison:
    """Adaptive-threshold trigger against a static threshold"""
    false_alarm_rate: Optional[float]
    recall: Optional[float]
    mean_tta_s: Optional[float]
    static_threshold: float = 0.5
    static_false_alarm_rate: Optional[float] = None
    static_recall: Optional[float] = None
    static_mean_tta_s: Optional[float] = None
    tta_advantage_s: Optional[float] = None
    mean_safety_margin: Optional[float] = None


@dataclass
class EvalReport:
    ap: Optional[float]
    auc: Optional[float]
    mtta_s: Optional[float]
    tta_at_r50_s: Optional[float]
    false_alarm_rate: Optional[float]
    frame_ap: Optional[float] = None
    alerts: Optional[AlertComparison] = None
    sweep: List[SweepPoint] = field(default_factory=list)
    videos: int = 0
    positives: int = 0
    tta_mode: str = 'sweep'
    causal: bool = False

    def to_dict(self) -> Dict:
        return asdict(self)


def evaluated_scores(trace: RiskTrace) -> np.ndarray:
    """Frames that count for a video: up to the collision for positives, all frames otherwise"""
    p = np.asarray(trace.p, dtype=np.float64)
    if trace.label:
        if trace.t_accident is None or not 0 <= trace.t_accident < len(p):
            raise InputError(f"Positive trace has invalid t_accident {trace.t_accident}")
        return p[:trace.t_accident + 1]
    return p


def _thresholds(traces: Sequence[RiskTrace]) -> np.ndarray:
    scores = np.concatenate([evaluated_scores(trace) for trace in traces])
    return np.unique(np.concatenate([scores, [0.0, 1.0]]))[::-1]


def sweep(traces: Sequence[RiskTrace]) -> List[SweepPoint]:
    """
    Video-level precision/recall/TTA at every distinct score plus {0, 1}

    A positive video is a true positive at theta when some frame up to the
    collision scores >= theta; its TTA is measured from the first such
    frame. A negative video is a false positive when any frame does.

    Returns:
        Sweep points in descending theta order
    """
    if not traces:
        raise InputError("sweep needs at least one trace")
    thetas = _thresholds(traces)
    positives = [trace for trace in traces if trace.label]
    negatives = [trace for trace in traces if not trace.label]
    tp = np.zeros(len(thetas), dtype=np.int64)
    tta_sum = np.zeros(len(thetas))
    for trace in positives:
        running = np.maximum.accumulate(evaluated_scores(trace))
        first = np.searchsorted(running, thetas, side='left')
        hit = first < len(running)
        tp += hit
        tta_sum += np.where(hit, (trace.t_accident - first) / trace.fps, 0.0)
    fp = np.zeros(len(thetas), dtype=np.int64)
    for trace in negatives:
        fp += evaluated_scores(trace).max() >= thetas
    points = []
    for index, theta in enumerate(thetas):
        t, f = int(tp[index]), int(fp[index])
        points.append(SweepPoint(
            theta=float(theta),
            tp=t,
            fp=f,
            fn=len(positives) - t,
            tn=len(negatives) - f,
            precision=t / (t + f) if t + f else None,
            recall=t / len(positives) if positives else 0.0,
            mean_tta_s=float(tta_sum[index] / t) if t else None,
        ))
    return points


def _envelope_ap(pairs: Sequence[Tuple[Optional[float], float]]) -> float:
    """Interpolated AP from (precision, recall) pairs"""
    defined = [(p, r) for p, r in pairs if p is not None]
    levels = sorted({r for _, r in defined if r > 0})
    ap = 0.0
    previous = 0.0
    for level in levels:
        envelope = max(p for p, r in defined if r >= level)
        ap += (level - previous) * envelope
        previous = level
    return ap


def average_precision(points: Sequence[SweepPoint]) -> float:
    """
    Interpolated average precision over a sweep

    Raises:
        UndefinedMetricError: no positive videos
    """
    if not points:
        raise InputError("average_precision needs a nonempty sweep")
    if points[0].tp + points[0].fn == 0:
        raise UndefinedMetricError("Average precision is undefined without positive videos")
    return _envelope_ap([(point.precision, point.recall) for point in points])


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Mann-Whitney rank statistic with ties counted as one half

    Raises:
        UndefinedMetricError: only one class present
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise InputError("auc scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative frame")
    ranks = rankdata(scores, method='average')
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def frame_scores_and_labels(traces: Sequence[RiskTrace], window_s: float = 3.0) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluated frame scores with their windowed labels, concatenated over videos"""
    scores, labels = [], []
    for trace in traces:
        p = evaluated_scores(trace)
        y = np.zeros(len(p), dtype=np.int64)
        if trace.label:
            start = max(0, trace.t_accident - int(round(window_s * trace.fps)))
            y[start:] = 1
        scores.append(p)
        labels.append(y)
    return np.concatenate(scores), np.concatenate(labels)


def frame_average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Interpolated AP over individual frames"""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("Frame AP is undefined without positive frames")
    order = np.argsort(-scores, kind='stable')
    sorted_scores = scores[order]
    tp = np.cumsum(labels[order])
    fp = np.cumsum(~labels[order])
    # last index of each tie group
    ends = np.r_[np.nonzero(np.diff(sorted_scores))[0], len(scores) - 1]
    pairs = [(tp[i] / (tp[i] + fp[i]), tp[i] / n_pos) for i in ends]
    return _envelope_ap(pairs)


def mean_tta(points: Sequence[SweepPoint]) -> float:
    """mean_tta_s averaged uniformly over sweep points with recall > 0"""
    hits = [point for point in points if point.recall > 0]
    if not hits:
        raise UndefinedMetricError("No sweep point has positive recall")
    return float(np.mean([point.mean_tta_s for point in hits]))


def tta_at_r50(points: Sequence[SweepPoint]) -> float:
    """mean_tta_s at the largest theta whose recall reaches 0.5 (points in descending theta)"""
    for point in points:
        if point.recall >= 0.5:
            return point.mean_tta_s
    raise UndefinedMetricError("Recall never reaches 0.5; TTA@R50 is undefined")


def tta_metrics(points: Sequence[SweepPoint]) -> Tuple[float, float]:
    """(mTTA, TTA@R50) in seconds"""
    return mean_tta(points), tta_at_r50(points)


def point_at(traces: Sequence[RiskTrace], theta: float) -> SweepPoint:
    """Sweep point at one fixed threshold"""
    positives = [trace for trace in traces if trace.label]
    negatives = [trace for trace in traces if not trace.label]
    tp, ttas = 0, []
    for trace in positives:
        crossing = np.nonzero(evaluated_scores(trace) >= theta)[0]
        if crossing.size:
            tp += 1
            ttas.append((trace.t_accident - crossing[0]) / trace.fps)
    fp = sum(1 for trace in negatives if evaluated_scores(trace).max() >= theta)
    return SweepPoint(
        theta=float(theta), tp=tp, fp=fp, fn=len(positives) - tp, tn=len(negatives) - fp,
        precision=tp / (tp + fp) if tp + fp else None,
        recall=tp / len(positives) if positives else 0.0,
        mean_tta_s=float(np.mean(ttas)) if ttas else None,
    )


def _trigger(trace: RiskTrace, tau: np.ndarray) -> Optional[int]:
    p = evaluated_scores(trace)
    above = np.nonzero(p > tau[:len(p)])[0]
    return int(above[0]) if above.size else None


def adaptive_alert_eval(traces: Sequence[RiskTrace], static_threshold: float = 0.5) -> AlertComparison:
    """
    Per-video alert iff p_t > tau_t for some evaluated frame

    Reports the false-alarm rate over negatives, recall and mean TTA over
    positives for the adaptive trigger and for a static threshold, the TTA
    advantage of adaptive over static, and the mean safety margin
    (0.5 - tau) / 0.5 at the adaptive alert frames.
    """
    positives = [trace for trace in traces if trace.label]
    negatives = [trace for trace in traces if not trace.label]

    def run(threshold_of):
        alarms = sum(1 for trace in negatives if _trigger(trace, threshold_of(trace)) is not None)
        ttas, frames = [], []
        for trace in positives:
            first = _trigger(trace, threshold_of(trace))
            if first is not None:
                ttas.append((trace.t_accident - first) / trace.fps)
                frames.append((trace, first))
        return (alarms / len(negatives) if negatives else None,
                len(ttas) / len(positives) if positives else None,
                float(np.mean(ttas)) if ttas else None,
                frames)

    fa, recall, tta, alert_frames = run(lambda trace: np.asarray(trace.tau, dtype=np.float64))
    static_fa, static_recall, static_tta, _ = run(
        lambda trace: np.full(trace.frames, static_threshold, dtype=np.float64))
    margins = [(0.5 - float(trace.tau[frame])) / 0.5 for trace, frame in alert_frames]
    return AlertComparison(
        false_alarm_rate=fa,
        recall=recall,
        mean_tta_s=tta,
        static_threshold=static_threshold,
        static_false_alarm_rate=static_fa,
        static_recall=static_recall,
        static_mean_tta_s=static_tta,
        tta_advantage_s=tta - static_tta if tta is not None and static_tta is not None else None,
        mean_safety_margin=float(np.mean(margins)) if margins else None,
    )


def _guarded(metric, *args):
    try:
        return metric(*args)
    except UndefinedMetricError as e:
        logger.warning(f"{e}")
        return None


def evaluate(traces: Sequence[RiskTrace], config: Optional[EvalConfig] = None) -> EvalReport:
    """
    Full evaluation report over traces

    Undefined metrics (for example AP on an all-negative set) are reported
    as None with a logged warning.
    """
    config = (config or EvalConfig()).validate()
    if not traces:
        raise InputError("evaluate needs at least one trace")
    points = sweep(traces)
    scores, labels = frame_scores_and_labels(traces, config.label_window_s)
    if config.tta_mode == 'fixed':
        mtta = point_at(traces, config.fixed_theta).mean_tta_s
    else:
        mtta = _guarded(mean_tta, points)
    tta_r50 = _guarded(tta_at_r50, points)
    alerts = adaptive_alert_eval(traces, config.static_threshold)
    report = EvalReport(
        ap=_guarded(average_precision, points),
        auc=_guarded(auc, scores, labels),
        mtta_s=mtta,
        tta_at_r50_s=tta_r50,
        false_alarm_rate=alerts.false_alarm_rate,
        frame_ap=_guarded(frame_average_precision, scores, labels),
        alerts=alerts,
        sweep=points,
        videos=len(traces),
        positives=sum(1 for trace in traces if trace.label),
        tta_mode=config.tta_mode,
        causal=config.causal,
    )
    logger.info(f"Evaluated {report.videos} videos: AP={report.ap} AUC={report.auc} "
                f"mTTA={report.mtta_s} TTA@R50={report.tta_at_r50_s} FA={report.false_alarm_rate}")
    return report


# ----------------------------------------------------------------------
# brute-force oracles
# ----------------------------------------------------------------------

def oracle_sweep(traces: Sequence[RiskTrace]) -> List[SweepPoint]:
    """Exhaustive enumeration: every threshold, every video, every frame"""
    candidates = {0.0, 1.0}
    for trace in traces:
        candidates.update(float(s) for s in evaluated_scores(trace))
    points = []
    for theta in sorted(candidates, reverse=True):
        tp = fp = 0
        tta_total = 0.0
        n_pos = n_neg = 0
        for trace in traces:
            scores = evaluated_scores(trace)
            if trace.label:
                n_pos += 1
                for t in range(len(scores)):
                    if scores[t] >= theta:
                        tp += 1
                        tta_total += (trace.t_accident - t) / trace.fps
                        break
            else:
                n_neg += 1
                if any(s >= theta for s in scores):
                    fp += 1
        points.append(SweepPoint(theta, tp, fp, n_pos - tp, n_neg - fp,
                                 tp / (tp + fp) if tp + fp else None,
                                 tp / n_pos if n_pos else 0.0,
                                 tta_total / tp if tp else None))
    return points


def oracle_average_precision(traces: Sequence[RiskTrace]) -> float:
    points = oracle_sweep(traces)
    if points[0].tp + points[0].fn == 0:
        raise UndefinedMetricError("no positives")
    total = 0.0
    previous = 0.0
    for level in sorted({p.recall for p in points if p.recall > 0}):
        best = 0.0
        for point in points:
            if point.recall >= level and point.precision is not None and point.precision > best:
                best = point.precision
        total += (level - previous) * best
        previous = level
    return total


def oracle_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """O(pos * neg) pair counting"""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    if not pos or not neg:
        raise UndefinedMetricError("single class")
    wins = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def oracle_tta(traces: Sequence[RiskTrace]) -> Tuple[float, float]:
    points = oracle_sweep(traces)
    hits = [p.mean_tta_s for p in points if p.recall > 0]
    if not hits:
        raise UndefinedMetricError("no recall")
    mtta = sum(hits) / len(hits)
    qualifying = [p for p in points if p.recall >= 0.5]
    if not qualifying:
        raise UndefinedMetricError("recall below 0.5")
    best = max(qualifying, key=lambda p: p.theta)
    return mtta, best.mean_tta_s


def oracle_frame_average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    labels = [bool(y) for y in labels]
    n_pos = sum(labels)
    if n_pos == 0:
        raise UndefinedMetricError("no positive frames")
    pairs = []
    for theta in sorted(set(float(s) for s in scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= theta and y)
        fp = sum(1 for s, y in zip(scores, labels) if s >= theta and not y)
        pairs.append((tp / (tp + fp), tp / n_pos))
    total = 0.0
    previous = 0.0
    for level in sorted({r for _, r in pairs if r > 0}):
        total += (level - previous) * max(p for p, r in pairs if r >= level)
        previous = level
    return total


def sweep_rows(points: Sequence[SweepPoint]) -> List[Dict]:
    """CSV rows: theta, precision, recall, mean_tta_s"""
    return [{'theta': p.theta, 'precision': p.precision, 'recall': p.recall, 'mean_tta_s': p.mean_tta_s}
            for p in points]


def trace_rows(trace: RiskTrace) -> List[Dict]:
    """CSV rows: frame, p, tau, alert, argmax_x, argmax_y"""
    peaks = trace.peak_cells()
    return [{'frame': t, 'p': float(trace.p[t]), 'tau': float(trace.tau[t]), 'alert': int(trace.alert[t]),
             'argmax_x': int(peaks[t, 1]), 'argmax_y': int(peaks[t, 0])} for t in range(trace.frames)]
