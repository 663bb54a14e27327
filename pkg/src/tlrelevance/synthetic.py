"""Seeded synthetic scenes for training, tests and latency benchmarks.

Arrows are painted near lane centers. Lanes are spaced in the image according
to a simple perspective model (wider near the camera), and an arrow's label is
given by a deviation-band rule: relevant when its horizontal deviation from
the image center lies within ``RELEVANCE_BAND`` of a class-dependent offset
(turn arrows sit slightly off-center in the ego lane).
"""
from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .geometry import BBox, Detection, Frame, GroundTruth
from .taxonomy import ARROW_ORDER, LIT_STATES, ArrowClass, Pictogram, TLClass

LANE_OFFSET = {
    ArrowClass.STRAIGHT: 0.0,
    ArrowClass.LEFT: -0.03,
    ArrowClass.RIGHT: 0.03,
    ArrowClass.STRAIGHT_LEFT: -0.015,
    ArrowClass.STRAIGHT_RIGHT: 0.015,
}
RELEVANCE_BAND = 0.07
# lane index relative to the ego lane, and how often arrows of each lane are seen
LANES = (-2, -1, 0, 1, 2)
LANE_WEIGHTS = (0.1, 0.2, 0.4, 0.2, 0.1)
LANE_JITTER = 0.03
DTLD_SIZE = (2048, 1024)


def is_relevant(cls: ArrowClass, dev_signed: float) -> bool:
    return abs(dev_signed - LANE_OFFSET[cls]) < RELEVANCE_BAND


def _arrow_box(rng, width, height, cls):
    depth = rng.uniform(0.0, 1.0)  # 0 far, 1 near
    spacing = 0.12 + 0.18 * depth  # lane width as a fraction of image width
    while True:
        lane = LANES[int(rng.choice(len(LANES), p=LANE_WEIGHTS))]
        dev = LANE_OFFSET[cls] + lane * spacing + rng.normal(0.0, LANE_JITTER)
        if abs(dev) < 0.45:
            break
    cx = (0.5 + dev) * width
    cy = (0.55 + 0.4 * depth) * height
    w = (0.02 + 0.06 * depth) * width * rng.uniform(0.9, 1.1)
    h = (0.04 + 0.12 * depth) * height * rng.uniform(0.9, 1.1)
    return BBox(cx, cy, w, h).clamped(width, height)


def arrow_frames(n_arrows: int, seed: int = 7, per_frame: int = 4, size=DTLD_SIZE) -> List[Frame]:
    """Frames holding labelled arrow predictions (the training-file layout)."""
    rng = np.random.default_rng(seed)
    width, height = size
    frames = []
    made = 0
    while made < n_arrows:
        k = min(per_frame, n_arrows - made)
        dets, gts = [], []
        for _ in range(k):
            cls = ARROW_ORDER[int(rng.integers(len(ARROW_ORDER)))]
            box = _arrow_box(rng, width, height, cls)
            rel = is_relevant(cls, box.cx / width - 0.5)
            dets.append(Detection(box, cls, float(rng.uniform(0.3, 1.0))))
            gts.append(GroundTruth(box, cls, rel))
        frames.append(Frame(f"arrows_{len(frames):06d}", width, height, tuple(dets), tuple(gts)))
        made += k
    return frames


def arrow_dataset(n: int = 2000, seed: int = 7, size=DTLD_SIZE):
    """``(X, y)`` arrays for the relevance classifier, built through the feature extractor."""
    from .gbm import extract_features

    X, y = [], []
    for fr in arrow_frames(n, seed, size=size):
        for g in fr.ground_truths:
            X.append(extract_features(Detection(g.bbox, g.cls, 1.0), fr).as_array())
            y.append(1.0 if g.relevant else 0.0)
    return np.stack(X), np.asarray(y)


def train_test_split(X, y, test_fraction: float = 0.2, seed: int = 7) -> Tuple:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(y))
    n_test = int(round(test_fraction * len(y)))
    te, tr = perm[:n_test], perm[n_test:]
    return X[tr], y[tr], X[te], y[te]


def _light(rng, width, height, state, pictogram):
    cx = rng.uniform(0.05, 0.95) * width
    cy = rng.uniform(0.05, 0.45) * height
    w = rng.uniform(8.0, 30.0)
    box = BBox(cx, cy, w, w * rng.uniform(2.2, 2.8)).clamped(width, height)
    return Detection(box, TLClass(state, pictogram), float(rng.uniform(0.3, 1.0)))


DTLD_PICTOGRAMS = (Pictogram.CIRCLE, Pictogram.STRAIGHT, Pictogram.LEFT, Pictogram.RIGHT, Pictogram.STRAIGHT_LEFT)


def bench_stream(n_frames: int, n_arrows: int = 20, n_lights: int = 20, seed: int = 7,
                 size=DTLD_SIZE, pictograms=DTLD_PICTOGRAMS) -> List[Frame]:
    """Frames with mixed light states and pictograms, so every frame exercises arrow matching."""
    rng = np.random.default_rng(seed)
    width, height = size
    picts = list(pictograms)
    frames = []
    for i in range(n_frames):
        dets = []
        for j in range(n_lights):
            # cycle so no frame with >= 2 lights collapses to a uniform-state or single-pictogram frame
            state = LIT_STATES[j % len(LIT_STATES)]
            pict = picts[(j // len(LIT_STATES) + j) % len(picts)]
            dets.append(_light(rng, width, height, state, pict))
        for _ in range(n_arrows):
            cls = ARROW_ORDER[int(rng.integers(len(ARROW_ORDER)))]
            dets.append(Detection(_arrow_box(rng, width, height, cls), cls, float(rng.uniform(0.3, 1.0))))
        frames.append(Frame(f"bench_{i:06d}", width, height, tuple(dets), (), timestamp_ms=25 * i))
    return frames
