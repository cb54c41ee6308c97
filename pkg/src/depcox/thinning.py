"""Multi-level thinning: rate ladders, level assignment, and the modified
birth/death acceptance ratios.

A ladder replaces the single global intensity bound by an ordered set of
fractional levels. Each thinned point carries the index of the level it is
currently assigned, which upper-bounds the sigmoid of its function value.
With a one-level ladder everything here reduces exactly to the classic
single-bound scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class RateLadder:
    """Ordered bound fractions ``levels`` (last one exactly 1) with slack.

    ``slack`` keeps newly assigned function values strictly below their
    level so the function can move without immediately hitting the bound.
    """

    levels: tuple[float, ...] = (1.0,)
    slack: float = 0.9

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) == 0:
            raise ValidationError("ladder needs at least one level")
        if any(not 0.0 < v <= 1.0 for v in levels):
            raise ValidationError(f"levels must lie in (0, 1]: {levels}")
        if any(a >= b for a, b in zip(levels, levels[1:])):
            raise ValidationError(f"levels must be strictly increasing: {levels}")
        if levels[-1] != 1.0:
            raise ValidationError(f"last level must be exactly 1: {levels}")
        if not 0.0 < self.slack < 1.0:
            raise ValidationError(f"slack must lie in (0, 1): {self.slack}")

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.levels)


def default_ladder(n_levels: int, slack: float = 0.9) -> RateLadder:
    """Halving ladder with ``n_levels`` entries, e.g. 3 -> (1/4, 1/2, 1)."""
    if n_levels < 1:
        raise ValidationError("n_levels must be at least 1")
    return RateLadder(tuple(2.0 ** -(n_levels - 1 - i) for i in range(n_levels)), slack)


def assign_rate(sigmoid_value, ladder: RateLadder):
    """Index of the smallest level whose slack-scaled value covers ``sigmoid_value``.

    Falls back to the top level when even the slack-scaled top is exceeded,
    so the returned level always upper-bounds the sigmoid. Accepts scalars
    or arrays; indices are 0-based.
    """
    scaled = ladder.as_array() * ladder.slack
    idx = np.searchsorted(scaled, sigmoid_value, side="left")
    idx = np.minimum(idx, ladder.n_levels - 1)
    if np.ndim(sigmoid_value) == 0:
        return int(idx)
    return idx.astype(int)


def thinned_prob(sigmoid_value: float, level: float) -> float:
    """Probability of a thinned point at a site with the given sigmoid and level."""
    if sigmoid_value > level:
        raise ValidationError(
            f"sigmoid value {sigmoid_value} exceeds its assigned level {level}"
        )
    return (level - sigmoid_value) / level


def accept_insert(
    n_thinned: int,
    volume: float,
    lambda_star: float,
    level: float,
    sigmoid_value: float,
    b: float = 0.5,
) -> float:
    """Acceptance ratio for inserting a thinned point at the given site.

    ``n_thinned`` is the count before the insertion; ``b`` is the constant
    insertion proposal probability.
    """
    p = thinned_prob(sigmoid_value, level)
    return ((1.0 - b) * volume * lambda_star * level * p) / ((n_thinned + 1) * b)


def accept_delete(
    n_thinned: int,
    volume: float,
    lambda_star: float,
    level: float,
    sigmoid_value: float,
    b: float = 0.5,
) -> float:
    """Acceptance ratio for deleting one of ``n_thinned`` thinned points.

    Reciprocal of :func:`accept_insert` for the matching configuration. A
    point sitting exactly on its level is deleted with certainty (+inf).
    """
    if n_thinned < 1:
        raise ValidationError("cannot delete from an empty thinned set")
    p = thinned_prob(sigmoid_value, level)
    denom = (1.0 - b) * volume * lambda_star * level * p
    if denom == 0.0:
        return float("inf")
    return (n_thinned * b) / denom


def accept_move(
    old_level: float, old_sigmoid: float, new_level: float, new_sigmoid: float
) -> float:
    """Acceptance ratio for relocating a thinned point.

    Product of the insertion and deletion criteria; the count, volume and
    bound terms cancel, leaving the ratio of level-weighted thinning
    probabilities.
    """
    num = new_level * thinned_prob(new_sigmoid, new_level)
    den = old_level * thinned_prob(old_sigmoid, old_level)
    if den == 0.0:
        return float("inf")
    return num / den


def estimate_total(data_rate_idx, thinned_rate_idx, ladder: RateLadder) -> float:
    """Level-weighted estimate of the single-bound point total.

    Each point counts as the reciprocal of its level fraction; with a
    one-level ladder this is exactly the raw count.
    """
    levels = ladder.as_array()
    data_idx = np.asarray(data_rate_idx, dtype=int)
    thin_idx = np.asarray(thinned_rate_idx, dtype=int)
    for idx in (data_idx, thin_idx):
        if idx.size and (idx.min() < 0 or idx.max() >= ladder.n_levels):
            raise ValidationError("rate index out of range for ladder")
    total = 0.0
    if data_idx.size:
        total += float(np.sum(1.0 / levels[data_idx]))
    if thin_idx.size:
        total += float(np.sum(1.0 / levels[thin_idx]))
    return total
