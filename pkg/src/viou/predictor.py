"""Box-trajectory predictors used while a track coasts and for backward re-linking.

These stand in for a pixel-level visual tracker: they see only the history of
detected boxes, never image data. A history is a time-ordered sequence of
``(frame, BBox)`` pairs, most recent last.
"""
from __future__ import annotations

from typing import Sequence

from .geom import BBox

BoxHistory = Sequence[tuple[int, BBox]]

PREDICTOR_KINDS = ("constant_velocity", "constant_position")


def _check(h: BoxHistory, steps: int) -> None:
    if len(h) == 0:
        raise ValueError("cannot predict from an empty history")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")


def _center_velocity(entries: BoxHistory) -> tuple[float, float]:
    """Average per-frame center displacement between the first and last entry."""
    if len(entries) < 2:
        return 0.0, 0.0
    f0, b0 = entries[0]
    f1, b1 = entries[-1]
    dt = f1 - f0
    return (b1.cx - b0.cx) / dt, (b1.cy - b0.cy) / dt


class Predictor:
    """Interface: predict a box ``steps`` frames past either end of a history."""

    name = "base"

    def forward(self, h: BoxHistory, steps: int) -> BBox:
        raise NotImplementedError

    def backward(self, h: BoxHistory, steps: int) -> BBox:
        raise NotImplementedError


class ConstantPosition(Predictor):
    name = "constant_position"

    def forward(self, h, steps):
        _check(h, steps)
        return h[-1][1]

    def backward(self, h, steps):
        _check(h, steps)
        return h[0][1]


class ConstantVelocity(Predictor):
    """Extrapolate the box center with the mean velocity over the last ``window`` entries.

    Width and height are held at the boundary entry's values.
    """

    name = "constant_velocity"

    def __init__(self, window: int = 3):
        if window < 2:
            raise ValueError("velocity window must cover at least 2 entries")
        self.window = window

    def forward(self, h, steps):
        _check(h, steps)
        last = h[-1][1]
        vx, vy = _center_velocity(h[-self.window:])
        if vx == 0.0 and vy == 0.0:
            return last
        return BBox.from_center(last.cx + vx * steps, last.cy + vy * steps, last.w, last.h)

    def backward(self, h, steps):
        _check(h, steps)
        first = h[0][1]
        vx, vy = _center_velocity(h[:self.window])
        if vx == 0.0 and vy == 0.0:
            return first
        return BBox.from_center(first.cx - vx * steps, first.cy - vy * steps, first.w, first.h)


def make_predictor(kind: str = "constant_velocity", window: int = 3) -> Predictor:
    if kind == "constant_velocity":
        return ConstantVelocity(window)
    if kind == "constant_position":
        return ConstantPosition()
    raise ValueError(f"unknown predictor {kind!r}; choose one of {', '.join(PREDICTOR_KINDS)}")


def predict_forward(h: BoxHistory, steps: int, kind: str = "constant_velocity", window: int = 3) -> BBox:
    return make_predictor(kind, window).forward(h, steps)


def predict_backward(h: BoxHistory, steps: int, kind: str = "constant_velocity", window: int = 3) -> BBox:
    return make_predictor(kind, window).backward(h, steps)
