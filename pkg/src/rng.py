"""
Counter-Based Random Streams

Reproducible word streams keyed by (master seed, trial index) on top of
numpy's Philox4x64 bit generator. Word t of a stream is a pure function of
(seed, trial, stream, round, t), so any entry of any trial can be regenerated
in isolation and trials can run on any worker in any order. The stream index
separates draws that share a seed and trial but must be independent, such as
the two slots of a figure1 comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from src.exceptions import DomainError

_U64 = 1 << 64
_WORDS_PER_BLOCK = 4
# Rejection rounds live in the third counter word, far above any block index;
# the stream index takes the fourth.
_ROUND_SHIFT = 128
_STREAM_SHIFT = 192
_INV_2_53 = 2.0 ** -53


def check_u64(value: int, name: str) -> int:
    """Validate that an integer fits in an unsigned 64-bit word."""
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise DomainError(f"{name} must be an integer", details={name: value})
    value = int(value)
    if not 0 <= value < _U64:
        raise DomainError(f"{name} must lie in [0, 2**64)", details={name: value})
    return value


@dataclass(frozen=True)
class CounterStream:
    """
    Word source for one (seed, trial) pair.

    Entry e of width w owns words [e*w, (e+1)*w) of the stream. Rejection
    resampling reads the same positions from round r >= 1. Streams with
    different `stream` indices never share a counter block.
    """

    seed: int
    trial: int
    stream: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "seed", check_u64(self.seed, "seed"))
        object.__setattr__(self, "trial", check_u64(self.trial, "trial"))
        object.__setattr__(self, "stream", check_u64(self.stream, "stream"))

    @property
    def key(self) -> int:
        return (self.seed << 64) | self.trial

    def _generator(self, first_word: int, round_: int) -> np.random.Philox:
        # Philox increments before producing, so counter c yields block c + 1.
        counter = (self.stream << _STREAM_SHIFT) + (round_ << _ROUND_SHIFT) + first_word // _WORDS_PER_BLOCK
        return np.random.Philox(key=self.key, counter=counter)

    def raw(self, first_word: int, count: int, round_: int = 0) -> np.ndarray:
        """Return `count` consecutive uint64 words starting at `first_word`."""
        skip = first_word % _WORDS_PER_BLOCK
        words = self._generator(first_word, round_).random_raw(skip + count)
        return np.asarray(words, dtype=np.uint64)[skip:]

    def entry_words(self, start: int, stop: int, width: int, round_: int = 0) -> np.ndarray:
        """Words for entries [start, stop), shaped (stop - start, width)."""
        count = max(stop - start, 0)
        return self.raw(start * width, count * width, round_).reshape(count, width)

    def uniforms(self, count: int) -> np.ndarray:
        """Open-interval uniforms for the first `count` words of round 0."""
        return words_to_uniform(self.raw(0, count))


def words_to_uniform(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to uniforms in the open interval (0, 1)."""
    top = (np.asarray(words, dtype=np.uint64) >> np.uint64(11)).astype(np.float64)
    return (top + 0.5) * _INV_2_53


def words_to_normal(words: np.ndarray) -> np.ndarray:
    """Standard normal variates by inverse-CDF transform of each word."""
    return ndtri(words_to_uniform(words))
