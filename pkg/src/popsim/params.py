"""Parameter computation and lookup.

Probabilities are per *life-year* (the interval between two consecutive
birthdays of one person), not per calendar year. Converting calendar-year
census counts into such probabilities uses Farr's rate formula

    p = D / (P_avg + D/2)

which corrects for the fact that roughly half of the events recorded at age
``a`` in a calendar year happened to people who started the year aged a-1.

Integer disaggregation uses a Huntington-Hill style priority method
(priority w / sqrt(n(n+1))), the divisor method classically used for
apportioning parliament seats.
"""

from __future__ import annotations

import csv
import heapq
import math
from typing import Iterable

import numpy as np

from . import regions
from .errors import CoverageError, InputError

PROBABILITY_KINDS = ("death", "emigration", "birth", "internal_migration")
IMMIGRATION_KIND = "immigration"

# census metric holding the per-year event counts for each probability kind
EVENT_METRIC = {
    "death": "D",
    "emigration": "E",
    "birth": "B",
    "internal_migration": "IM_OUT",
}

PARAM_CSV_HEADER = ("kind", "year", "region", "sex", "age", "value")


def farr_probability(deaths: float, pop_avg: float) -> float:
    """Per-life-year event probability from a yearly count and average cohort size.

    Algebraically equal to 1 - (1 - m/2)/(1 + m/2) with m = deaths/pop_avg.
    """
    if deaths < 0:
        raise InputError(f"negative event count {deaths}")
    if pop_avg <= 0:
        raise InputError(f"undefined cell: pop_avg={pop_avg} with {deaths} events")
    if deaths >= 2 * pop_avg:
        raise InputError(
            f"event count {deaths} >= 2*pop_avg ({pop_avg}); probability would reach 1"
        )
    return deaths / (pop_avg + deaths / 2.0)


def disaggregate_proportional(aggregate: float, weights) -> np.ndarray:
    """Split ``aggregate`` proportionally to ``weights``; zero weight gets exactly 0."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w < 0):
        raise InputError("weights must be non-negative and non-empty")
    total = w.sum()
    if total == 0:
        raise InputError("weights must not all be zero")
    return aggregate * (w / total)


def apportion_integer(total: int, weights) -> list[int]:
    """Distribute an integer ``total`` over cells proportionally to ``weights``.

    Huntington-Hill priority method: every positive-weight cell receives a
    first unit (by descending weight while units last), further units go to
    the highest priority w/sqrt(n(n+1)). Ties break toward the lower index.
    The result sums exactly to ``total`` and is invariant under positive
    scaling of the weight vector.
    """
    w = [float(x) for x in weights]
    if total < 0:
        raise InputError("total must be non-negative")
    if any(x < 0 for x in w):
        raise InputError("weights must be non-negative")
    alloc = [0] * len(w)
    if total == 0:
        return alloc
    positive = [i for i, x in enumerate(w) if x > 0]
    if not positive:
        raise InputError("cannot apportion a positive total over all-zero weights")

    if total < len(positive):
        for i in sorted(positive, key=lambda i: (-w[i], i))[:total]:
            alloc[i] = 1
        return alloc

    for i in positive:
        alloc[i] = 1
    remaining = total - len(positive)
    # max-heap on priority; (-priority, index) gives the lower-index tie-break
    heap = [(-w[i] / math.sqrt(2.0), i) for i in positive]
    heapq.heapify(heap)
    for _ in range(remaining):
        _, i = heapq.heappop(heap)
        alloc[i] += 1
        n = alloc[i]
        heapq.heappush(heap, (-w[i] / math.sqrt(n * (n + 1.0)), i))
    return alloc


class ParameterTable:
    """Lookup of per-life-year probabilities keyed by (year, region, sex, age).

    Regions are stored at one resolution level; queries with finer codes are
    mapped upward through the region hierarchy. Ages above ``max_age`` clamp
    to the ``max_age`` row. Sex is ``'m'``/``'f'``, or ``'all'`` when one row
    covers both.
    """

    def __init__(self, kind: str, max_age: int):
        if kind not in PROBABILITY_KINDS and kind != IMMIGRATION_KIND:
            raise InputError(f"unknown parameter kind {kind!r}")
        self.kind = kind
        self.max_age = int(max_age)
        self._rows: dict[tuple[int, str, str], np.ndarray] = {}
        self.level: int | None = None
        self.years: set[int] = set()
        self.regions: set[str] = set()
        self.sexes: set[str] = set()
        self._region_cache: dict[str, str] = {}

    def set_row(self, year: int, region: str, sex: str, values) -> None:
        arr = np.asarray(values, dtype=float)
        if arr.shape != (self.max_age + 1,):
            raise InputError(
                f"row for ({year},{region},{sex}) must cover ages 0..{self.max_age}"
            )
        if np.any(arr < 0) or (self.kind != IMMIGRATION_KIND and np.any(arr > 1)):
            raise InputError(f"values out of range for kind {self.kind!r}")
        lvl = regions.level_of(region)
        if self.level is None:
            self.level = lvl
        elif lvl != self.level:
            raise InputError(
                f"mixed region levels in {self.kind} table: {region!r} is not "
                f"{regions.level_name(self.level)}"
            )
        self._rows[(year, region, sex)] = arr
        self.years.add(year)
        self.regions.add(region)
        self.sexes.add(sex)
        self._region_cache.clear()

    def set_constant(self, years: Iterable[int], region_list: Iterable[str],
                     sexes: Iterable[str], values) -> None:
        for y in years:
            for r in region_list:
                for s in sexes:
                    self.set_row(y, r, s, values)

    def _map_region(self, region: str) -> str:
        mapped = self._region_cache.get(region)
        if mapped is None:
            mapped = regions.region_at_level(region, self.level)
            self._region_cache[region] = mapped
        return mapped

    def lookup(self, year: int, region: str, sex: str, age: int) -> float:
        if age < 0:
            raise InputError(f"negative age {age}")
        if self.level is None:
            raise CoverageError(f"{self.kind} table is empty")
        key_sex = "all" if "all" in self.sexes else sex
        row = self._rows.get((year, self._map_region(region), key_sex))
        if row is None:
            raise CoverageError(
                f"{self.kind} parameters missing for year={year} region={region} sex={sex}"
            )
        return float(row[min(age, self.max_age)])

    def covers(self, years: Iterable[int], region_list: Iterable[str],
               sexes: Iterable[str]) -> list[str]:
        """Human-readable list of coverage gaps (empty when fully covered)."""
        gaps = []
        for y in years:
            for r in region_list:
                for s in sexes:
                    key_sex = "all" if "all" in self.sexes else s
                    try:
                        mapped = self._map_region(r)
                    except InputError as exc:
                        gaps.append(str(exc))
                        continue
                    if (y, mapped, key_sex) not in self._rows:
                        gaps.append(f"{self.kind}: year={y} region={r} sex={s}")
        return gaps

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(PARAM_CSV_HEADER)
            for (year, region, sex) in sorted(self._rows):
                row = self._rows[(year, region, sex)]
                for age, value in enumerate(row):
                    writer.writerow([self.kind, year, region, sex, age, repr(float(value))])

    @classmethod
    def from_csv(cls, path) -> "ParameterTable":
        cells, kind, max_age = _read_param_csv(path)
        if kind == IMMIGRATION_KIND:
            raise InputError(f"{path}: use ImmigrationTable.from_csv for immigration counts")
        table = cls(kind, max_age)
        for (year, region, sex), by_age in cells.items():
            values = np.zeros(max_age + 1)
            for age, v in by_age.items():
                values[age] = v
            table.set_row(year, region, sex, values)
        return table


class ImmigrationTable:
    """Integer immigrant counts per (year, region, sex, age).

    Counts are exact: the engine creates precisely this many agents per cell,
    randomising only entry date and birthdate.
    """

    def __init__(self):
        self.counts: dict[tuple[int, str, str, int], int] = {}

    def add(self, year: int, region: str, sex: str, age: int, count: int) -> None:
        if count < 0:
            raise InputError(f"negative immigration count for ({year},{region},{sex},{age})")
        regions.level_of(region)  # validates the code
        if count:
            key = (year, region, sex, age)
            self.counts[key] = self.counts.get(key, 0) + int(count)

    def cells_for_year(self, year: int) -> list[tuple[str, str, int, int]]:
        """(region, sex, age, count) cells of ``year`` in deterministic order."""
        out = [(r, s, a, n) for (y, r, s, a), n in self.counts.items() if y == year]
        out.sort()
        return out

    def years(self) -> set[int]:
        return {y for (y, _, _, _) in self.counts}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(PARAM_CSV_HEADER)
            for (year, region, sex, age) in sorted(self.counts):
                writer.writerow([IMMIGRATION_KIND, year, region, sex, age,
                                 self.counts[(year, region, sex, age)]])

    @classmethod
    def from_csv(cls, path) -> "ImmigrationTable":
        cells, kind, _ = _read_param_csv(path)
        if kind != IMMIGRATION_KIND:
            raise InputError(f"{path}: expected immigration counts, found kind {kind!r}")
        table = cls()
        for (year, region, sex), by_age in cells.items():
            for age, v in by_age.items():
                if v != int(v):
                    raise InputError(f"{path}: non-integer immigration count {v}")
                table.add(year, region, sex, age, int(v))
        return table


def _read_param_csv(path):
    cells: dict[tuple[int, str, str], dict[int, float]] = {}
    kind = None
    max_age = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(PARAM_CSV_HEADER):
            raise InputError(f"{path}: expected header {','.join(PARAM_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                k, year, region, sex, age, value = row
                year, age, value = int(year), int(age), float(value)
            except (ValueError, TypeError) as exc:
                raise InputError(f"{path}:{lineno}: bad row {row!r}: {exc}") from None
            if kind is None:
                kind = k
            elif k != kind:
                raise InputError(f"{path}:{lineno}: mixed kinds {kind!r} and {k!r}")
            if sex not in ("m", "f", "all"):
                raise InputError(f"{path}:{lineno}: sex must be m, f or all")
            if age < 0:
                raise InputError(f"{path}:{lineno}: negative age")
            cells.setdefault((year, region, sex), {})[age] = value
            max_age = max(max_age, age)
    if kind is None:
        raise InputError(f"{path}: no data rows")
    return cells, kind, max_age


def derive_params_from_census(census, kind: str, max_age: int | None = None) -> ParameterTable:
    """Farr probabilities from a census's event counts and Jan-1 snapshots.

    Per cell, p = farr(X, P_avg) with P_avg the mean of the adjacent Jan-1
    snapshots when both exist, else the start-of-year count. Birth
    probabilities are computed against the female population only.
    """
    if kind not in PROBABILITY_KINDS:
        raise InputError(f"cannot derive parameters of kind {kind!r}")
    metric = EVENT_METRIC[kind]
    snap_years = set(census.years("P"))
    if not snap_years:
        raise InputError("census holds no population snapshots")
    event_years = {y for (y, _, _, _) in census.keys(metric)}
    derive_years = sorted({y for y in snap_years if y + 1 in snap_years}
                          | (event_years & snap_years))
    region_list = sorted(census.regions())
    sexes = ("f",) if kind == "birth" else ("m", "f")
    if max_age is None:
        max_age = max((a for (_, _, _, a) in census.keys("P")), default=0)

    table = ParameterTable(kind, max_age)
    for year in derive_years:
        for region in region_list:
            for sex in sexes:
                values = np.zeros(max_age + 1)
                for age in range(max_age + 1):
                    pop0 = census.get("P", year, region, sex, age)
                    if year + 1 in snap_years:
                        pop1 = census.get("P", year + 1, region, sex, age)
                        pop_avg = (pop0 + pop1) / 2.0
                    else:
                        pop_avg = pop0
                    events = census.get(metric, year, region, sex, age)
                    if pop_avg <= 0:
                        if events > 0:
                            raise InputError(
                                f"empty cell: {metric}({year},{region},{sex},{age})={events} "
                                "with no population"
                            )
                        continue
                    values[age] = farr_probability(events, pop_avg)
                table.set_row(year, region, sex, values)
    return table
