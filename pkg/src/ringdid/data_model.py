"""Data containers plus the substrate operations every estimator consumes.

The package works on long-format microdata: one row per (unit, period)
record, each unit tagged with either planar coordinates / (longitude,
latitude) degrees, or a precomputed distance to the treatment point.
Containers are columnar (numpy arrays) because every estimator here is a
vectorized group-mean computation; :class:`Observation` is the row-level
view used at the ingestion boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DataError, EstimationError, SpecError

# Mean Earth radius, kilometers (IUGG mean radius R1).
EARTH_RADIUS_KM = 6371.0088

METRICS = ("euclidean", "great_circle")

# Quantile index guard: p*n is computed in floats, so an exact integer can
# come out a hair high; subtracting this before ceil() restores the exact
# rank for any sample smaller than ~1e8 units.
_RANK_EPS = 1e-9


@dataclass(frozen=True)
class Point:
    """A location: planar (x, y), or (longitude, latitude) in degrees."""

    x: float
    y: float

    def require_valid(self, metric: str) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise SpecError(f"point ({self.x}, {self.y}) has non-finite coordinates")
        if metric == "great_circle" and not (-180.0 <= self.x <= 180.0 and -90.0 <= self.y <= 90.0):
            raise SpecError(
                f"point ({self.x}, {self.y}) outside lon [-180,180] / lat [-90,90] "
                "required by the great-circle metric"
            )


@dataclass(frozen=True)
class Observation:
    """One unit-period record; exactly one of location / distance is set."""

    unit_id: str
    period: int
    outcome: float
    location: Point | None = None
    distance: float | None = None


@dataclass(frozen=True)
class Dataset:
    """Columnar long-format records.

    Exactly one of ``distances`` or the coordinate pair ``xs``/``ys`` is
    present; ingestion resolves files carrying both (the distance column
    wins, with a warning).  All arrays share one length.
    """

    unit_ids: np.ndarray
    periods: np.ndarray
    outcomes: np.ndarray
    distances: np.ndarray | None = None
    xs: np.ndarray | None = None
    ys: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = len(self.unit_ids)
        if n == 0:
            raise DataError("dataset has no rows")
        for name in ("periods", "outcomes", "distances", "xs", "ys"):
            col = getattr(self, name)
            if col is not None and len(col) != n:
                raise DataError(f"column {name} has length {len(col)}, expected {n}")
        has_dist = self.distances is not None
        has_xy = self.xs is not None and self.ys is not None
        if has_dist == has_xy:
            raise DataError("dataset must carry exactly one of: distance column, coordinate columns")
        bad = ~np.isin(self.periods, (0, 1))
        if bad.any():
            raise DataError(f"period values outside {{0,1}} in {int(bad.sum())} row(s)")
        if not np.all(np.isfinite(self.outcomes)):
            raise DataError("non-finite outcome values present")
        if has_dist:
            if not np.all(np.isfinite(self.distances)):
                raise DataError("non-finite distance values present")
            if np.any(self.distances < 0):
                raise DataError("negative distance values present")
        else:
            if not (np.all(np.isfinite(self.xs)) and np.all(np.isfinite(self.ys))):
                raise DataError("non-finite coordinate values present")

    @property
    def n_rows(self) -> int:
        return len(self.unit_ids)

    @property
    def has_distances(self) -> bool:
        return self.distances is not None

    def observations(self) -> Iterator[Observation]:
        """Row-level view (handy for spot checks; estimators stay columnar)."""
        for i in range(self.n_rows):
            loc = None if self.has_distances else Point(float(self.xs[i]), float(self.ys[i]))
            dist = float(self.distances[i]) if self.has_distances else None
            yield Observation(
                unit_id=str(self.unit_ids[i]),
                period=int(self.periods[i]),
                outcome=float(self.outcomes[i]),
                location=loc,
                distance=dist,
            )

    def with_distances(self, sample: "DistanceSample") -> "Dataset":
        """Return a distance-mode copy, joining ``sample`` on unit id."""
        if sample.unit_ids is None:
            raise DataError("distance sample carries no unit ids to join on")
        lookup = {uid: float(d) for uid, d in zip(sample.unit_ids, sample.distances)}
        try:
            dist = np.array([lookup[uid] for uid in self.unit_ids], dtype=float)
        except KeyError as missing:
            raise DataError(f"no distance available for unit {missing.args[0]!r}") from None
        return Dataset(
            unit_ids=self.unit_ids,
            periods=self.periods,
            outcomes=self.outcomes,
            distances=dist,
        )

    def within(self, d_c: float) -> tuple["Dataset", int]:
        if not self.has_distances:
            raise DataError("subsampling by distance requires a distance column")
        keep = self.distances <= d_c
        dropped = int((~keep).sum())
        if not keep.any():
            raise EstimationError(f"no rows within distance {d_c}")
        return (
            Dataset(
                unit_ids=self.unit_ids[keep],
                periods=self.periods[keep],
                outcomes=self.outcomes[keep],
                distances=self.distances[keep],
            ),
            dropped,
        )


@dataclass(frozen=True)
class DistanceSample:
    """Per-unit distances to the treatment point, with sort order for F_n."""

    distances: np.ndarray
    sorted_index: np.ndarray
    n: int
    unit_ids: np.ndarray | None = None

    @classmethod
    def from_distances(cls, distances, unit_ids=None) -> "DistanceSample":
        arr = np.asarray(distances, dtype=float)
        if arr.ndim != 1:
            raise DataError("distances must be one-dimensional")
        if len(arr) and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
            raise DataError("distances must be finite and nonnegative")
        return cls(
            distances=arr,
            sorted_index=np.argsort(arr, kind="stable"),
            n=len(arr),
            unit_ids=None if unit_ids is None else np.asarray(unit_ids),
        )

    @classmethod
    def from_dataset(cls, data: Dataset) -> "DistanceSample":
        """Collapse a distance-mode dataset to one distance per unit.

        Rows of the same unit must agree exactly on distance; disagreement
        points at an upstream geocoding or merge bug and is an error.
        """
        if not data.has_distances:
            raise DataError("dataset has no distance column; run compute_distances first")
        codes, uniques = _factorize(data.unit_ids)
        first = np.full(len(uniques), -1, dtype=np.int64)
        rows = np.arange(data.n_rows)
        # reversed so the surviving assignment is the unit's first row
        first[codes[::-1]] = rows[::-1]
        per_unit = data.distances[first]
        if not np.array_equal(per_unit[codes], data.distances):
            mism = uniques[np.unique(codes[per_unit[codes] != data.distances])]
            raise DataError(f"conflicting distances for unit(s): {_preview(mism)}")
        return cls.from_distances(per_unit, unit_ids=uniques)

    def sorted_distances(self) -> np.ndarray:
        return self.distances[self.sorted_index]


@dataclass(frozen=True)
class PanelDiffs:
    """First-differenced panel: one record per unit."""

    unit_ids: np.ndarray
    distances: np.ndarray
    delta_y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.delta_y)

    def within(self, d_c: float) -> tuple["PanelDiffs", int]:
        keep = self.distances <= d_c
        dropped = int((~keep).sum())
        if not keep.any():
            raise EstimationError(f"no units within distance {d_c}")
        return (
            PanelDiffs(
                unit_ids=self.unit_ids[keep],
                distances=self.distances[keep],
                delta_y=self.delta_y[keep],
            ),
            dropped,
        )


def _factorize(ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integer codes in order of first appearance, plus the unique ids.

    First-appearance order (rather than sorted order) keeps downstream
    reductions bit-stable no matter how ids are spelled, so a simulated
    dataset and its CSV round trip group identically.
    """
    uniq, first_idx, inverse = np.unique(ids, return_index=True, return_inverse=True)
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    return rank[inverse], uniq[order]


def _preview(ids, limit: int = 8) -> str:
    ids = list(ids)
    head = ", ".join(repr(i) for i in ids[:limit])
    if len(ids) > limit:
        head += f", ... ({len(ids)} total)"
    return head


def _euclidean(xs, ys, treatment: Point) -> np.ndarray:
    return np.hypot(xs - treatment.x, ys - treatment.y)


def _great_circle_km(lons, lats, treatment: Point) -> np.ndarray:
    """Haversine distance to the treatment point, kilometers."""
    lon1 = np.radians(lons)
    lat1 = np.radians(lats)
    lon2 = math.radians(treatment.x)
    lat2 = math.radians(treatment.y)
    a = (
        np.sin((lat2 - lat1) / 2.0) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def compute_distances(data: Dataset, treatment: Point, metric: str = "euclidean") -> DistanceSample:
    """Distance of every unit to the treatment point.

    Parameters
    ----------
    data : Dataset
        Coordinate-mode dataset.  Unit locations are time-invariant;
        rows of one unit carrying different coordinates are an error.
    treatment : Point
        The treatment location, in the same coordinate convention.
    metric : {"euclidean", "great_circle"}
        ``great_circle`` treats (x, y) as (longitude, latitude) degrees
        and returns kilometers via the haversine formula.

    Returns
    -------
    DistanceSample
        One distance per unit, in order of first appearance.
    """
    if metric not in METRICS:
        raise SpecError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if data.has_distances:
        raise DataError("dataset rows carry no locations (distance column present instead)")
    treatment.require_valid(metric)
    if metric == "great_circle" and not (
        np.all(np.abs(data.xs) <= 180.0) and np.all(np.abs(data.ys) <= 90.0)
    ):
        raise DataError("coordinates outside lon [-180,180] / lat [-90,90] under great_circle")

    codes, uniques = _factorize(data.unit_ids)
    first = np.full(len(uniques), -1, dtype=np.int64)
    rows = np.arange(data.n_rows)
    first[codes[::-1]] = rows[::-1]
    x0 = data.xs[first]
    y0 = data.ys[first]
    agree = (data.xs == x0[codes]) & (data.ys == y0[codes])
    if not agree.all():
        bad = uniques[np.unique(codes[~agree])]
        raise DataError(f"conflicting locations for unit(s): {_preview(bad)}")
    if metric == "euclidean":
        dist = _euclidean(x0, y0, treatment)
    else:
        dist = _great_circle_km(x0, y0, treatment)
    return DistanceSample.from_distances(dist, unit_ids=uniques)


def empirical_quantile(sample: DistanceSample, p: float) -> float:
    """Type-1 (inverse-CDF) empirical quantile of the distances.

    Returns the smallest observed distance x with F_n(x) >= p; p = 0
    returns the minimum.  Quantiles are always actual data points, which
    keeps downstream bins nonempty by construction.
    """
    if not 0.0 <= p <= 1.0:
        raise SpecError(f"quantile level {p} outside [0, 1]")
    if sample.n == 0:
        raise DataError("empty distance sample")
    srt = sample.sorted_distances()
    if p == 0.0:
        return float(srt[0])
    k = math.ceil(p * sample.n - _RANK_EPS)
    k = min(max(k, 1), sample.n)
    return float(srt[k - 1])


def first_differences(data: Dataset) -> PanelDiffs:
    """Per-unit outcome change Y(period 1) - Y(period 0).

    Requires a balanced two-period panel in distance mode: every unit
    exactly once in each period.  The unit's distance is carried through.
    """
    if not data.has_distances:
        raise DataError("first differences need a distance column; run compute_distances first")
    codes, uniques = _factorize(data.unit_ids)
    u = len(uniques)
    p1 = data.periods == 1
    count0 = np.bincount(codes[~p1], minlength=u)
    count1 = np.bincount(codes[p1], minlength=u)
    bad = (count0 != 1) | (count1 != 1)
    if bad.any():
        raise DataError(f"unbalanced panel; unit(s) without exactly one row per period: {_preview(uniques[bad])}")
    y0 = np.empty(u)
    y1 = np.empty(u)
    y0[codes[~p1]] = data.outcomes[~p1]
    y1[codes[p1]] = data.outcomes[p1]
    d0 = np.empty(u)
    d1 = np.empty(u)
    d0[codes[~p1]] = data.distances[~p1]
    d1[codes[p1]] = data.distances[p1]
    if not np.array_equal(d0, d1):
        raise DataError(f"conflicting distances for unit(s): {_preview(uniques[d0 != d1])}")
    return PanelDiffs(unit_ids=uniques, distances=d0, delta_y=y1 - y0)


def subsample_within(data, d_c: float):
    """Restrict to units with distance <= d_c (boundary kept).

    Works on :class:`Dataset` and :class:`PanelDiffs` alike; returns the
    filtered container together with the number of records dropped.
    """
    if not d_c > 0:
        raise SpecError(f"d_c must be positive, got {d_c}")
    return data.within(d_c)
