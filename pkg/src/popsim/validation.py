"""Monte Carlo aggregation and deviation metrics against a reference census.

An ensemble is a list of censuses from runs differing only in seed. The
cell-wise ensemble mean is compared with the reference through the signed
minimum/maximum relative deviation over a year range,

    e = (sim - data) / max(1, data),

which deliberately does not smooth over fluctuations: systematic under- or
overestimation stays visible, and the max(1, .) guard keeps empty reference
cells finite. Confidence bands come from applying the same metrics to the
5% and 95% ensemble quantiles of each report row's aggregated year series;
the resulting pair is reported sorted ascending.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .census import METRICS, AgeClassScheme, SyntheticCensus
from .errors import InputError

REPORT_CSV_HEADER = ("region", "sex", "age_class", "e_min", "e_min_ci_lo",
                     "e_min_ci_hi", "e_max", "e_max_ci_lo", "e_max_ci_hi")


def ensemble_mean(ensemble: list[SyntheticCensus]) -> SyntheticCensus:
    """Cell-wise arithmetic mean of the runs (absent cells count as zero)."""
    if not ensemble:
        raise InputError("ensemble is empty")
    total = ensemble[0]
    for run in ensemble[1:]:
        total = total.add(run)
    return total.scaled(1.0 / len(ensemble))


def quantile_band(ensemble: list[SyntheticCensus], q_lo: float = 0.05,
                  q_hi: float = 0.95) -> tuple[SyntheticCensus, SyntheticCensus]:
    """Cell-wise empirical quantiles (linear interpolation between order stats)."""
    n = len(ensemble)
    if n < 2:
        raise InputError("quantile band needs at least 2 runs")
    lower, upper = SyntheticCensus(), SyntheticCensus()
    for metric in METRICS:
        keys = set()
        for run in ensemble:
            keys.update(run.keys(metric))
        for key in keys:
            values = [run.get(metric, *key) for run in ensemble]
            lo, hi = np.quantile(values, [q_lo, q_hi])
            lower.record_event(metric, *key, n=float(lo))
            upper.record_event(metric, *key, n=float(hi))
    return lower, upper


def deviation_extrema(sim_series, data_series, years) -> tuple[float, float]:
    """Signed (e_min, e_max) of the relative deviation over ``years``.

    Both series are mappings year -> value; the denominator guard is
    max(1, data).
    """
    years = list(years)
    if not years:
        raise InputError("empty year range")
    ratios = []
    for y in years:
        sim = float(sim_series.get(y, 0.0))
        data = float(data_series.get(y, 0.0))
        ratios.append((sim - data) / max(1.0, data))
    return min(ratios), max(ratios)


@dataclass
class ReportRow:
    region: str | None
    sex: str | None
    age_class: str | None
    e_min: float
    e_min_ci: tuple[float, float]
    e_max: float
    e_max_ci: tuple[float, float]


@dataclass
class DeviationReport:
    rows: list[ReportRow] = field(default_factory=list)
    coverage_gaps: list[str] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_CSV_HEADER)
            for r in self.rows:
                writer.writerow([
                    r.region or "-", r.sex or "-",
                    "-" if r.age_class is None else r.age_class,
                    repr(r.e_min), repr(r.e_min_ci[0]), repr(r.e_min_ci[1]),
                    repr(r.e_max), repr(r.e_max_ci[0]), repr(r.e_max_ci[1]),
                ])


def _series(census: SyntheticCensus, metric: str, years, region, sex, age_class):
    out = {y: 0.0 for y in years}
    for (y, r, s, a), n in census.items(metric):
        if y not in out:
            continue
        if region is not None and r != region:
            continue
        if sex is not None and s != sex:
            continue
        if age_class is not None and a != age_class:
            continue
        out[y] += n
    return out


def deviation_report(ensemble: list[SyntheticCensus], reference: SyntheticCensus,
                     scheme: AgeClassScheme | None = None, metric: str = "P",
                     region_level: int | None = None) -> DeviationReport:
    """Extrema-with-confidence-band report, one block per aggregation level.

    Blocks follow the overall / per-sex / per-age-class / per-region /
    per-region-and-age-class layout. For each row, the 5%/95% ensemble
    quantiles are taken of the row's aggregated year series (the quantile of
    the aggregate, not a sum of cell-wise quantiles) and the extrema applied
    to them give the confidence band, reported sorted ascending. Rows whose
    reference series is entirely absent are listed as coverage gaps instead
    of failing.
    """
    if not ensemble:
        raise InputError("ensemble is empty")
    if scheme is None:
        scheme = AgeClassScheme.twenty_year()
    runs = [census.aggregate(scheme, region_level) for census in ensemble]
    # a reference with integer ages is single-age resolution: bin it the same way
    ref_single_age = all(isinstance(a, int) for (_, _, _, a) in reference.keys(metric))
    ref = reference.aggregate(scheme if ref_single_age else None, region_level)

    year_sets = [set(run.years(metric)) for run in runs]
    years = sorted(set.intersection(*year_sets) & set(ref.years(metric)))
    if not years:
        raise InputError(f"no overlapping years between ensemble and reference for {metric}")

    region_list = sorted({r for (_, r, _, _) in ref.keys(metric)})
    sexes = sorted({s for (_, _, s, _) in ref.keys(metric)})
    classes = [label for label in scheme.labels]

    blocks: list[tuple] = [(None, None, None)]
    blocks += [(None, s, None) for s in sexes]
    blocks += [(None, None, c) for c in classes]
    blocks += [(r, None, None) for r in region_list]
    blocks += [(r, None, c) for r in region_list for c in classes]

    report = DeviationReport()
    for region, sex, age_class in blocks:
        ref_series = _series(ref, metric, years, region, sex, age_class)
        if all(v == 0 for v in ref_series.values()):
            report.coverage_gaps.append(
                f"reference empty for region={region or '-'} sex={sex or '-'} "
                f"age_class={age_class or '-'}")
            continue
        matrix = np.array([[_series(run, metric, years, region, sex, age_class)[y]
                            for y in years] for run in runs])
        mean_series = dict(zip(years, matrix.mean(axis=0)))
        e_min, e_max = deviation_extrema(mean_series, ref_series, years)
        if len(runs) >= 2:
            lo_series = dict(zip(years, np.quantile(matrix, 0.05, axis=0)))
            hi_series = dict(zip(years, np.quantile(matrix, 0.95, axis=0)))
        else:
            lo_series = hi_series = mean_series
        lo_min, lo_max = deviation_extrema(lo_series, ref_series, years)
        hi_min, hi_max = deviation_extrema(hi_series, ref_series, years)
        report.rows.append(ReportRow(
            region=region, sex=sex,
            age_class=None if age_class is None else str(age_class),
            e_min=e_min, e_min_ci=tuple(sorted((lo_min, hi_min))),
            e_max=e_max, e_max_ci=tuple(sorted((lo_max, hi_max))),
        ))
    return report
