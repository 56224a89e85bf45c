"""Hooper's rule for combining independent evidence scores."""

from __future__ import annotations

import math
from typing import Iterable

# largest float below 1; long products of small factors would otherwise round to 1.0
SCORE_CEILING = math.nextafter(1.0, 0.0)


class ScoreOutOfRange(ValueError):
    pass


def hooper(scores: Iterable[float]) -> float:
    """Combine scores as ``1 - prod(1 - s)``.

    The product is taken as an exactly rounded sum of ``log1p(-s)``, so any
    permutation of the inputs gives a bitwise identical result and adding a
    score never lowers it. An empty input gives 0 and a single input is
    returned unchanged.

    Examples
    --------
    >>> round(hooper([0.8, 0.3]), 12)
    0.86
    """
    xs = [float(s) for s in scores]
    for s in xs:
        if not 0.0 <= s < 1.0:
            raise ScoreOutOfRange(f"score {s} not in [0, 1)")
    if not xs:
        return 0.0
    top = max(xs)
    if len(xs) == 1:
        return top
    combined = -math.expm1(math.fsum(math.log1p(-s) for s in xs))
    return min(max(combined, top), SCORE_CEILING)
