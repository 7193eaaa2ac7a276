"""Multimodal command fusion.

Voice and gesture recognizers emit discrete tokens at arbitrary times. The
first token opens a fusion window anchored at its timestamp; every token
arriving within the window joins the same command. When the window expires
the tokens are encoded, in arrival order, into a fixed-width input tensor
for the command classifier.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger("coact.fusion")

WINDOW_SECONDS = 2.0
SLOTS = 4

VOICE_TOKENS = {
    "place_object": 0,
    "there": 1,
    "pick": 2,
    "component_one": 3,
    "component_two": 4,
    "component_three": 5,
    "pause": 6,
    "resume": 7,
    "replan": 8,
    "yes": 9,
    "no": 10,
    "moving_away": 11,
    "faster": 12,
    "slower": 13,
    "help": 14,
}

GESTURE_TOKENS = {
    "point_at": 15,
    "thumbs_up": 16,
    "thumbs_down": 17,
    "stop_palm": 18,
    "beckon": 19,
    "one_finger": 20,
    "two_fingers": 21,
    "wave": 22,
}

VOCAB_SIZE = len(VOICE_TOKENS) + len(GESTURE_TOKENS)

TOKEN_NAMES = {v: k for k, v in VOICE_TOKENS.items()}
TOKEN_NAMES.update({v: k for k, v in GESTURE_TOKENS.items()})

CLASS_NAMES = [
    "place_object_there",
    "pick_component_one",
    "pick_component_two",
    "pick_component_three",
    "pause",
    "resume",
    "replan",
    "confirm",
    "reject",
    "moving_away",
    "faster",
    "slower",
    "help",
    "stop",
    "point_there",
]

# Canonical token patterns per command class. Variants of one class share a
# class id; no two classes share a token multiset, so arrival order never
# makes them ambiguous.
CLASS_PATTERNS: dict[int, list[tuple[int, ...]]] = {
    0: [(0, 1, 15)],          # "place object" "there" + pointing
    1: [(2, 3, 20), (2, 3)],  # "pick" "component one" (+ one finger)
    2: [(2, 4, 21), (2, 4)],
    3: [(2, 5), (2, 5, 19)],
    4: [(6,), (6, 18)],       # "pause" (+ open palm)
    5: [(7,), (7, 19)],       # "resume" (+ beckon)
    6: [(8,), (8, 22)],
    7: [(9, 16), (9,)],       # "yes" (+ thumbs up)
    8: [(10, 17), (10,)],
    9: [(11,)],
    10: [(12,)],
    11: [(13,)],
    12: [(14, 22), (14,)],
    13: [(18,)],              # open palm alone
    14: [(1, 15)],            # "there" + pointing
}

N_CLASSES = len(CLASS_NAMES)


@dataclass
class ChannelEvent:
    """One recognized token from a single input channel."""

    channel: str  # "voice" or "gesture"
    token: int
    timestamp: float

    def __post_init__(self) -> None:
        table = {"voice": VOICE_TOKENS, "gesture": GESTURE_TOKENS}.get(self.channel)
        if table is None:
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.token not in table.values():
            raise ValueError(
                f"token {self.token} outside the {self.channel} id range"
            )


@dataclass
class InputTensor:
    """Fixed-width classifier input built from one closed window."""

    values: np.ndarray  # shape (SLOTS,), nonzero entries in (0, 1]
    tokens: list[int]
    t_open: float
    t_close: float


def encode_tokens(tokens: list[int] | tuple[int, ...]) -> np.ndarray:
    """Map token ids, in arrival order, to slot values (t + 1) / V with
    zero padding. Zero is reserved for the empty slot, so every real token
    lands strictly above it."""
    if len(tokens) > SLOTS:
        raise ValueError(f"at most {SLOTS} tokens per window")
    values = np.zeros(SLOTS, dtype=float)
    for k, t in enumerate(tokens):
        if not 0 <= t < VOCAB_SIZE:
            raise ValueError(f"token id {t} out of range")
        values[k] = (t + 1) / VOCAB_SIZE
    return values


@dataclass
class FusionWindow:
    """Accumulates channel events into fixed-duration fusion windows.

    ingest() and poll() both may return a finished InputTensor: ingest when
    the incoming event lands past the open window (closing it and opening a
    new one anchored at the event), poll when the clock alone passes the
    window end.
    """

    duration: float = WINDOW_SECONDS
    open_since: float | None = None
    pending: list[ChannelEvent] = field(default_factory=list)
    overflow_count: int = 0

    def ingest(self, event: ChannelEvent) -> InputTensor | None:
        finished = None
        if self.open_since is not None and event.timestamp >= self.open_since + self.duration:
            finished = self.close()
        if self.open_since is None:
            self.open_since = event.timestamp
        if len(self.pending) >= SLOTS:
            # Capacity is a hard envelope of the input tensor, not an error:
            # the surplus token is dropped and counted.
            self.overflow_count += 1
            log.warning(
                "fusion window full, dropping %s token %d at t=%.3f",
                event.channel,
                event.token,
                event.timestamp,
            )
            return finished
        self.pending.append(event)
        return finished

    def poll(self, now: float) -> InputTensor | None:
        if self.open_since is None or now < self.open_since + self.duration:
            return None
        return self.close()

    def close(self) -> InputTensor | None:
        """Close the current window immediately and emit its tensor."""
        if self.open_since is None:
            return None
        tokens = [e.token for e in self.pending]
        tensor = InputTensor(
            values=encode_tokens(tokens),
            tokens=tokens,
            t_open=self.open_since,
            t_close=self.open_since + self.duration,
        )
        self.open_since = None
        self.pending = []
        return tensor


def build_dataset(copies: int = 40, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic classifier corpus: every arrival-order permutation of every
    class pattern, replicated `copies` times and shuffled."""
    rows = []
    labels = []
    for class_id, patterns in CLASS_PATTERNS.items():
        for pattern in patterns:
            for perm in set(itertools.permutations(pattern)):
                rows.append(encode_tokens(list(perm)))
                labels.append(class_id)
    X = np.tile(np.array(rows), (copies, 1))
    y = np.tile(np.array(labels, dtype=int), copies)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    return X[order], y[order]


def split_dataset(
    X: np.ndarray, y: np.ndarray, train_fraction: float = 0.8
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    cut = int(round(train_fraction * len(y)))
    cut = min(max(cut, 1), len(y) - 1)
    return X[:cut], y[:cut], X[cut:], y[cut:]
