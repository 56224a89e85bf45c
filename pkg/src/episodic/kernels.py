"""Numeric inner loops: great-circle distances, interval gaps, stay-point scan.

Every kernel exists twice, once as a numba ``@njit`` loop and once as plain
numpy. The module-level names point at the numba versions unless numba is
missing or ``EPISODIC_DISABLE_NUMBA`` is set to a truthy value, in which case
the numpy versions are used. Both are importable directly (``NUMPY_KERNELS``
and ``NUMBA_KERNELS``) so tests and the benchmark can compare them.
"""

from __future__ import annotations

import math
import os

import numpy as np

EARTH_RADIUS_M = 6_371_000.0

_DISABLE = os.environ.get("EPISODIC_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLE:
        raise ImportError("numba disabled by EPISODIC_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters between two (lat, lon) points in degrees."""
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _np_pairwise_haversine(lat_a, lon_a, lat_b, lon_b):
    la = np.radians(np.asarray(lat_a, dtype=np.float64))[:, None]
    lb = np.radians(np.asarray(lat_b, dtype=np.float64))[None, :]
    dl = np.radians(np.asarray(lon_b, dtype=np.float64))[None, :] - np.radians(
        np.asarray(lon_a, dtype=np.float64)
    )[:, None]
    a = np.sin((lb - la) / 2) ** 2 + np.cos(la) * np.cos(lb) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(a)))


def _np_interval_gaps(start_a, end_a, start_b, end_b):
    sa = np.asarray(start_a, dtype=np.float64)[:, None]
    ea = np.asarray(end_a, dtype=np.float64)[:, None]
    sb = np.asarray(start_b, dtype=np.float64)[None, :]
    eb = np.asarray(end_b, dtype=np.float64)[None, :]
    return np.maximum(0.0, np.maximum(sa, sb) - np.minimum(ea, eb))


def _np_stay_point_bounds(t, lat, lon, d_max, t_min):
    t = np.asarray(t, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    n = t.shape[0]
    starts: list[int] = []
    ends: list[int] = []
    i = 0
    window = 64
    while i < n - 1:
        # first index after i whose distance to the anchor exceeds d_max
        j = i + 1
        while j < n:
            hi = min(n, j + window)
            d = _np_pairwise_haversine(lat[i : i + 1], lon[i : i + 1], lat[j:hi], lon[j:hi])[0]
            far = np.nonzero(d > d_max)[0]
            if far.size:
                j = j + int(far[0])
                break
            j = hi
        last = j - 1
        if last > i and t[last] - t[i] >= t_min:
            starts.append(i)
            ends.append(last)
            i = j
        else:
            i += 1
    return np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64)


NUMPY_KERNELS = {
    "pairwise_haversine": _np_pairwise_haversine,
    "interval_gaps": _np_interval_gaps,
    "stay_point_bounds": _np_stay_point_bounds,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_haversine(lat1, lon1, lat2, lon2):
        p1 = math.radians(lat1)
        p2 = math.radians(lat2)
        dp = p2 - p1
        dl = math.radians(lon2 - lon1)
        a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
        return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))

    @njit(cache=True)
    def _nb_pairwise_haversine_impl(lat_a, lon_a, lat_b, lon_b):
        out = np.empty((lat_a.shape[0], lat_b.shape[0]), dtype=np.float64)
        for i in range(lat_a.shape[0]):
            for j in range(lat_b.shape[0]):
                out[i, j] = _nb_haversine(lat_a[i], lon_a[i], lat_b[j], lon_b[j])
        return out

    @njit(cache=True)
    def _nb_interval_gaps_impl(start_a, end_a, start_b, end_b):
        out = np.empty((start_a.shape[0], start_b.shape[0]), dtype=np.float64)
        for i in range(start_a.shape[0]):
            for j in range(start_b.shape[0]):
                g = max(start_a[i], start_b[j]) - min(end_a[i], end_b[j])
                out[i, j] = g if g > 0.0 else 0.0
        return out

    @njit(cache=True)
    def _nb_stay_point_bounds_impl(t, lat, lon, d_max, t_min):
        n = t.shape[0]
        starts = np.empty(n, dtype=np.int64)
        ends = np.empty(n, dtype=np.int64)
        k = 0
        i = 0
        while i < n - 1:
            j = i + 1
            while j < n and _nb_haversine(lat[i], lon[i], lat[j], lon[j]) <= d_max:
                j += 1
            last = j - 1
            if last > i and t[last] - t[i] >= t_min:
                starts[k] = i
                ends[k] = last
                k += 1
                i = j
            else:
                i += 1
        return starts[:k], ends[:k]

    def _f64(x):
        return np.ascontiguousarray(x, dtype=np.float64)

    def _nb_pairwise_haversine(lat_a, lon_a, lat_b, lon_b):
        return _nb_pairwise_haversine_impl(_f64(lat_a), _f64(lon_a), _f64(lat_b), _f64(lon_b))

    def _nb_interval_gaps(start_a, end_a, start_b, end_b):
        return _nb_interval_gaps_impl(_f64(start_a), _f64(end_a), _f64(start_b), _f64(end_b))

    def _nb_stay_point_bounds(t, lat, lon, d_max, t_min):
        return _nb_stay_point_bounds_impl(_f64(t), _f64(lat), _f64(lon), float(d_max), float(t_min))

    NUMBA_KERNELS = {
        "pairwise_haversine": _nb_pairwise_haversine,
        "interval_gaps": _nb_interval_gaps,
        "stay_point_bounds": _nb_stay_point_bounds,
    }
    BACKEND = "numba"
else:  # pragma: no cover - depends on environment
    NUMBA_KERNELS = {}
    BACKEND = "numpy"

_ACTIVE = NUMBA_KERNELS or NUMPY_KERNELS


def pairwise_haversine(lat_a, lon_a, lat_b, lon_b) -> np.ndarray:
    """Distance matrix in meters, shape ``(len(lat_a), len(lat_b))``."""
    return _ACTIVE["pairwise_haversine"](lat_a, lon_a, lat_b, lon_b)


def interval_gaps(start_a, end_a, start_b, end_b) -> np.ndarray:
    """Gap between closest endpoints of every interval pair; 0 where they overlap.

    Inputs are epoch seconds. Instants are intervals with ``start == end``.
    """
    return _ACTIVE["interval_gaps"](start_a, end_a, start_b, end_b)


def stay_point_bounds(t, lat, lon, d_max: float, t_min: float) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive ``(start, end)`` index pairs of stay points in a time-sorted track.

    Anchored scan: from anchor ``i`` extend ``j`` while point ``j`` lies within
    ``d_max`` meters of the anchor. If the covered span is at least ``t_min``
    seconds the run ``i..j-1`` is a stay and scanning resumes after it,
    otherwise the anchor advances by one.
    """
    return _ACTIVE["stay_point_bounds"](t, lat, lon, d_max, t_min)
