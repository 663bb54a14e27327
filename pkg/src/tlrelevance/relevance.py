"""Per-frame traffic-light relevance from road arrow markings.

For each frame: classify every detected arrow as relevant or not, map arrows
to the light pictograms they govern through a best-fit cascade, and let a
light inherit relevance from any relevant arrow mapped to it. When no arrows
are visible the most recent relevant arrow classes from a sliding window are
reused.
"""
from __future__ import annotations

import enum
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence

from .gbm import ArrowFeatures, GBMModel, feature_matrix, features_from_row
from .geometry import Detection, Frame
from .taxonomy import ArrowClass, Pictogram, State, TLClass

A, P = ArrowClass, Pictogram

# First non-empty tier wins. A tier with several pictograms selects lights of any of them.
MATCH_CASCADE: Dict[ArrowClass, tuple] = {
    A.STRAIGHT: ((P.STRAIGHT,), (P.STRAIGHT_LEFT, P.STRAIGHT_RIGHT), (P.CIRCLE,)),
    A.LEFT: ((P.LEFT,), (P.STRAIGHT_LEFT,), (P.CIRCLE,)),
    A.RIGHT: ((P.RIGHT,), (P.STRAIGHT_RIGHT,), (P.CIRCLE,)),
    A.STRAIGHT_LEFT: ((P.STRAIGHT_LEFT,), (P.STRAIGHT, P.LEFT), (P.CIRCLE,)),
    A.STRAIGHT_RIGHT: ((P.STRAIGHT_RIGHT,), (P.STRAIGHT, P.RIGHT), (P.CIRCLE,)),
}

DEFAULT_WINDOW = 30
DEFAULT_THRESHOLD = 0.5


class Source(str, enum.Enum):
    CLASSIFIED = "classified"
    HISTORY = "history"
    SINGLE_PICTOGRAM_RULE = "single_pictogram_rule"
    UNIFORM_STATE_RULE = "uniform_state_rule"
    UNMATCHED = "unmatched"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ArrowObservation:
    detection: Detection
    features: ArrowFeatures
    prob_relevant: float
    relevant: bool


@dataclass(frozen=True)
class LightVerdict:
    detection: Detection
    relevant: bool
    source: Source


@dataclass(frozen=True)
class RelevanceAssignment:
    frame_id: str
    lights: tuple  # LightVerdict per traffic-light detection, in input order
    arrows: tuple = ()  # ArrowObservation, only when arrows were classified
    rule: Source = Source.UNMATCHED


class HistoryBuffer:
    """Relevant arrow classes of the last ``window`` frames, oldest first."""

    def __init__(self, window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ValueError("history window must be >= 1")
        self.window = window
        self._entries = deque(maxlen=window)

    @property
    def entries(self) -> List[FrozenSet[ArrowClass]]:
        return list(self._entries)

    def push(self, relevant_classes: Iterable[ArrowClass]) -> None:
        self._entries.append(frozenset(relevant_classes))

    def latest(self) -> Optional[FrozenSet[ArrowClass]]:
        """Most recent non-empty entry still inside the window."""
        for entry in reversed(self._entries):
            if entry:
                return entry
        return None

    def __len__(self):
        return len(self._entries)


def update_history(h: HistoryBuffer, relevant_classes: Iterable[ArrowClass]) -> HistoryBuffer:
    h.push(relevant_classes)
    return h


def cascade_pictograms(arrow: ArrowClass, available: Iterable[Pictogram]) -> FrozenSet[Pictogram]:
    """Pictograms an arrow maps to, given the pictograms present among the lights."""
    available = set(available)
    for tier in MATCH_CASCADE[ArrowClass(arrow)]:
        hit = available.intersection(tier)
        if hit:
            return frozenset(hit)
    return frozenset()


def _lit(light: Detection) -> bool:
    return isinstance(light.cls, TLClass) and light.cls.state is not State.OFF


def match_pictograms_to_arrows(lights: Sequence[Detection], arrows: Sequence) -> Dict[int, FrozenSet[int]]:
    """Map each arrow (by position in ``arrows``) to the indices of the lights it governs.

    ``arrows`` may hold ArrowObservation, Detection or bare ArrowClass values.
    Off lights are never matched.
    """
    by_pict: Dict[Pictogram, List[int]] = {}
    for i, light in enumerate(lights):
        if _lit(light):
            by_pict.setdefault(light.cls.pictogram, []).append(i)
    out = {}
    per_class = {}
    for j, arrow in enumerate(arrows):
        cls = _arrow_class(arrow)
        hit = per_class.get(cls)
        if hit is None:
            picts = cascade_pictograms(cls, by_pict.keys())
            hit = per_class[cls] = frozenset(i for p in picts for i in by_pict[p])
        out[j] = hit
    return out


def _arrow_class(arrow) -> ArrowClass:
    if isinstance(arrow, ArrowObservation):
        return arrow.detection.cls
    if isinstance(arrow, Detection):
        return arrow.cls
    return ArrowClass(arrow)


def classify_arrows(arrows: Sequence[Detection], frame: Frame, model: GBMModel,
                    threshold: float = DEFAULT_THRESHOLD) -> List[ArrowObservation]:
    if not arrows:
        return []
    X = feature_matrix(arrows, frame)
    probs = model.predict_proba(X).tolist()
    return [ArrowObservation(a, features_from_row(x), p, p >= threshold) for a, x, p in zip(arrows, X, probs)]


def _all_same(lights, key):
    return len({key(d.cls) for d in lights}) == 1


def assign_relevance(frame: Frame, model: GBMModel, history: HistoryBuffer,
                     threshold: float = DEFAULT_THRESHOLD) -> RelevanceAssignment:
    """Relevance of every traffic light in ``frame``; advances ``history`` by one frame.

    Rules, first applicable wins:
    1. all lit lights share one state -> all relevant
    2. all lit lights share one pictogram -> all relevant
    3. arrows visible -> classify, match, propagate
    4. no arrows -> match against the latest relevant arrow classes in history
    5. otherwise nothing is relevant
    Off lights are always not relevant.
    """
    lights = frame.lights
    arrows = frame.arrows
    lit_idx = {i for i, d in enumerate(lights) if _lit(d)}
    lit = [lights[i] for i in sorted(lit_idx)]

    def verdicts(relevant_idx, matched_idx, source):
        out = []
        for i, d in enumerate(lights):
            if i in lit_idx and i in matched_idx:
                out.append(LightVerdict(d, i in relevant_idx, source))
            else:
                out.append(LightVerdict(d, False, Source.UNMATCHED))
        return tuple(out)

    if lit and _all_same(lit, lambda c: c.state):
        history.push(())
        return RelevanceAssignment(frame.id, verdicts(lit_idx, lit_idx, Source.UNIFORM_STATE_RULE),
                                   rule=Source.UNIFORM_STATE_RULE)
    if lit and _all_same(lit, lambda c: c.pictogram):
        history.push(())
        return RelevanceAssignment(frame.id, verdicts(lit_idx, lit_idx, Source.SINGLE_PICTOGRAM_RULE),
                                   rule=Source.SINGLE_PICTOGRAM_RULE)

    if arrows:
        obs = classify_arrows(arrows, frame, model, threshold)
        mapping = match_pictograms_to_arrows(lights, obs)
        matched, relevant = set(), set()
        for j, idx in mapping.items():
            matched |= idx
            if obs[j].relevant:
                relevant |= idx
        history.push(o.detection.cls for o in obs if o.relevant)
        return RelevanceAssignment(frame.id, verdicts(relevant, matched, Source.CLASSIFIED), tuple(obs),
                                   rule=Source.CLASSIFIED)

    remembered = history.latest()
    history.push(())
    if remembered:
        mapping = match_pictograms_to_arrows(lights, sorted(remembered, key=list(ArrowClass).index))
        matched = set().union(*mapping.values())
        return RelevanceAssignment(frame.id, verdicts(matched, matched, Source.HISTORY), rule=Source.HISTORY)
    return RelevanceAssignment(frame.id, verdicts(set(), set(), Source.UNMATCHED), rule=Source.UNMATCHED)


class RelevanceEngine:
    """Stateful per-sequence consumer; one engine per camera stream."""

    def __init__(self, model: GBMModel, window: int = DEFAULT_WINDOW, threshold: float = DEFAULT_THRESHOLD):
        self.model = model
        self.threshold = threshold
        self.history = HistoryBuffer(window)

    def process(self, frame: Frame) -> RelevanceAssignment:
        return assign_relevance(frame, self.model, self.history, self.threshold)

    def run(self, frames: Iterable[Frame]) -> List[RelevanceAssignment]:
        return [self.process(f) for f in frames]


def run_sequences(model: GBMModel, sequences: Sequence[Sequence[Frame]], window: int = DEFAULT_WINDOW,
                  threshold: float = DEFAULT_THRESHOLD, workers: int = 1) -> List[List[RelevanceAssignment]]:
    """Process independent sequences, optionally on a thread pool (one engine each)."""

    def one(frames):
        return RelevanceEngine(model, window, threshold).run(frames)

    if workers <= 1:
        return [one(s) for s in sequences]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, sequences))
