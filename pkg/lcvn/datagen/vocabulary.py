"""Closed word vocabulary shared by the instruction templates and the word tokenizer."""

from __future__ import annotations

from typing import Tuple

DIRECTION_WORDS: Tuple[str, ...] = (
    "walk", "go", "move", "continue", "turn", "left", "right", "straight",
    "ahead", "forward", "slightly", "stop", "then", "and", "until", "you",
)
CONNECTIVES: Tuple[str, ...] = (
    "the", "a", "at", "to", "toward", "past", "near", "along",
    "on", "your", "in", "front", "of", "reach",
)
COLORS: Tuple[str, ...] = ("red", "green", "blue", "yellow", "orange", "purple", "white", "black")
LANDMARK_NOUNS: Tuple[str, ...] = (
    "tree", "bench", "door", "stall", "lamp", "sign", "car", "statue", "fountain", "cabinet",
    "bin", "kiosk", "pole", "rock", "hut", "gate", "crate", "cone", "pillar", "bike",
)
SCENE_ADJECTIVES: Tuple[str, ...] = ("wide", "narrow", "quiet", "open")
SCENE_NOUNS: Tuple[str, ...] = ("path", "corridor")

VOCABULARY: Tuple[str, ...] = (
    DIRECTION_WORDS + CONNECTIVES + COLORS + LANDMARK_NOUNS + SCENE_ADJECTIVES + SCENE_NOUNS
)
assert len(VOCABULARY) == len(set(VOCABULARY)) == 64

# unseen-environment layouts draw names and colours only from the reserved tails
SEEN_NOUNS = LANDMARK_NOUNS[:14]
UNSEEN_NOUNS = LANDMARK_NOUNS[14:]
SEEN_COLORS = tuple(range(6))
UNSEEN_COLORS = (6, 7)

PALETTE: Tuple[Tuple[float, float, float], ...] = (
    (0.90, 0.10, 0.10),
    (0.10, 0.75, 0.20),
    (0.15, 0.25, 0.95),
    (0.95, 0.90, 0.10),
    (1.00, 0.55, 0.00),
    (0.60, 0.15, 0.75),
    (1.00, 1.00, 1.00),
    (0.02, 0.02, 0.02),
)
assert len(PALETTE) == len(COLORS)
