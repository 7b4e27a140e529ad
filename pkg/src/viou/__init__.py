"""V-IOU tracking with ReID appearance association, plus CLEAR-MOT evaluation."""

__version__ = "0.1.0"
