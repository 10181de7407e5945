"""Stage orchestration: solve -> fit -> closed form -> oracle -> compare.

Each stage result is computed once and cached, so a subcommand runs exactly the stages
its outputs depend on. Table builders turn stage results into the output tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.application.cfm import END, START, total_nli
from app.application.fitting import LinkFits, find_split, fit_link, two_segment_power
from app.application.oracle import ComparisonTable, OracleResult, compare, nli_psd_numeric
from app.application.raman import LinkPropagation, propagate_link
from app.crosscutting.logging import (
    CorrelationContext,
    get_logger,
    log_stage_complete,
    log_stage_start,
)
from app.crosscutting.metrics import RunMetrics
from app.crosscutting.reporting import Table
from app.domain.entities import LinkSpec, MlFactors, NliReport, SegmentFit
from app.domain.normalization import KM, THZ, linear_to_db, per_km, watt_to_dbm

logger = get_logger(__name__)

SOLVE, FIT, NLI, ORACLE, COMPARE, ALL = "solve", "fit", "nli", "oracle", "compare", "all"
SUBCOMMANDS = (SOLVE, FIT, NLI, ORACLE, COMPARE, ALL)
_CONTRIBUTION_NAMES = {START: "start", END: "end"}


@dataclass
class StageResults:
    """Everything computed so far in one run."""

    propagation: Optional[LinkPropagation] = None
    fits: Optional[LinkFits] = None
    report: Optional[NliReport] = None
    oracle: Optional[OracleResult] = None
    comparison: Optional[ComparisonTable] = None


class NliPipeline:
    """Runs the estimator stages for one normalized link."""

    def __init__(self, link: LinkSpec, ml: Optional[MlFactors] = None,
                 metrics: Optional[RunMetrics] = None):
        self.link = link
        self.ml = ml or MlFactors.ones(link.n_spans, link.n_channels)
        self.metrics = metrics or RunMetrics(run_id="pipeline", subcommand=ALL)
        self.results = StageResults()

    def _stage(self, name: str, compute: Callable[[], object], **fields) -> object:
        log_stage_start(logger, name, **fields)
        with CorrelationContext(stage=name), self.metrics.stage(name) as record:
            value = compute()
        log_stage_complete(logger, name, record.duration_ms)
        return value

    def solve(self) -> LinkPropagation:
        if self.results.propagation is None:
            propagation = self._stage(SOLVE, lambda: propagate_link(self.link), spans=self.link.n_spans)
            self.metrics.add("spans_solved", propagation.n_spans)
            self.metrics.add("bvp_sweeps", sum(p.iterations for p in propagation.profiles))
            self.results.propagation = propagation
        return self.results.propagation

    def intrinsic_alpha(self) -> List[np.ndarray]:
        f = self.link.frequencies
        return [np.asarray(span.fiber.alpha(f), dtype=float) for span in self.link.spans]

    def fit(self) -> LinkFits:
        if self.results.fits is None:
            propagation = self.solve()
            fits = self._stage(FIT, lambda: fit_link(propagation.profiles, self.intrinsic_alpha(),
                                                     self.link.options.fitter))
            self.metrics.add("fits", fits.count)
            self.results.fits = fits
        return self.results.fits

    def nli(self) -> NliReport:
        if self.results.report is None:
            propagation, fits = self.solve(), self.fit()
            report = self._stage(NLI, lambda: total_nli(self.link, propagation, fits, self.ml,
                                                        self.link.options.engine))
            self.metrics.add("series_terms", report.series_terms)
            self.results.report = report
        return self.results.report

    def oracle(self) -> OracleResult:
        if self.results.oracle is None:
            propagation, fits = self.solve(), self.fit()
            options = self.link.options.oracle
            result = self._stage(ORACLE, lambda: nli_psd_numeric(self.link, propagation, fits, self.ml, options),
                                 mode=options.mode.value, grid=options.island_grid)
            self.metrics.add("oracle_refinements", result.refinements)
            self.metrics.set("oracle_grid", result.grid)
            self.results.oracle = result
        return self.results.oracle

    def compare(self) -> ComparisonTable:
        if self.results.comparison is None:
            report, oracle = self.nli(), self.oracle()
            self.results.comparison = self._stage(COMPARE, lambda: compare(report, oracle))
        return self.results.comparison

    def run(self, subcommand: str) -> List[Table]:
        """Compute the stages behind a subcommand and return its output tables."""
        builders: Dict[str, Tuple[Callable[[], List[Table]], ...]] = {
            SOLVE: (self.solve_tables,),
            FIT: (self.fit_tables,),
            NLI: (self.nli_tables,),
            ORACLE: (self.oracle_tables,),
            COMPARE: (self.compare_tables,),
            ALL: (self.solve_tables, self.fit_tables, self.nli_tables, self.oracle_tables,
                  self.compare_tables),
        }
        if subcommand not in builders:
            raise ValueError(f"unknown subcommand: {subcommand}")
        tables: List[Table] = []
        for build in builders[subcommand]:
            tables.extend(build())
        return tables

    def summary(self) -> Dict[str, object]:
        """Headline numbers of the stages that ran, for the stdout run record."""
        out: Dict[str, object] = {"channels": self.link.n_channels, "spans": self.link.n_spans}
        r = self.results
        if r.propagation is not None:
            out["maxBvpResidual"] = max(p.residual for p in r.propagation.profiles)
        if r.fits is not None:
            out["fits"] = r.fits.count
        if r.report is not None:
            out["maxNliDbm"] = float(np.max(watt_to_dbm(r.report.total)))
        if r.oracle is not None:
            out["oracleGrid"] = r.oracle.grid
            out["oracleChangeDb"] = r.oracle.change_db
        if r.comparison is not None:
            out["maxAbsDeltaDb"] = r.comparison.max_abs_delta_db
            out["meanDeltaDb"] = r.comparison.mean_delta_db
        return out

    # table builders

    def solve_tables(self) -> List[Table]:
        propagation = self.solve()
        min_samples = self.link.options.fitter.min_samples
        tables = []
        for n, profile in enumerate(propagation.profiles):
            table = Table(f"profile_span{n + 1}", ("z_m",) + tuple(profile.labels))
            for k, z in enumerate(profile.z):
                table.add_row(float(z), *(float(v) for v in profile.powers[:, k]))
            tables.append(table)

        summary = Table("span_summary", (
            "span", "channel_thz", "launch_dbm", "output_dbm", "span_gain_db", "post_gain_db",
            "gamma_start_db", "gamma_end_db", "split_km",
        ))
        f = self.link.frequencies
        for n, profile in enumerate(propagation.profiles):
            for c in range(self.link.n_channels):
                summary.add_row(
                    n + 1, float(f[c] / THZ),
                    float(watt_to_dbm(propagation.launch[n, c])),
                    float(watt_to_dbm(propagation.span_end[n, c])),
                    float(linear_to_db(propagation.transfer[n, c])),
                    float(linear_to_db(propagation.post_gain[n, c])),
                    float(linear_to_db(propagation.gamma_start[n, c])),
                    float(linear_to_db(propagation.gamma_end[n, c])),
                    float(find_split(profile.z, profile.channel(c), min_samples) / KM),
                )
        tables.append(summary)
        return tables

    def fit_tables(self) -> List[Table]:
        propagation, fits = self.solve(), self.fit()
        f = self.link.frequencies
        fit_table = Table("fits", (
            "span", "channel_thz", "segment", "split_km", "alpha0_per_km", "alpha1_per_km",
            "sigma_per_km", "mse",
        ))
        for n in range(self.link.n_spans):
            for c in range(self.link.n_channels):
                fit = fits.get(n, c)
                if fit is None:
                    continue
                for i, seg in ((START, fit.st), (END, fit.end)):
                    if seg is None:
                        continue
                    fit_table.add_row(n + 1, float(f[c] / THZ), _CONTRIBUTION_NAMES[i],
                                      float(fit.split_z / KM), *_segment_cells(seg))

        overlay = Table("fit_overlay", ("span", "channel_thz", "z_km", "numeric_dbm", "fitted_dbm",
                                        "intrinsic_dbm"))
        alphas = self.intrinsic_alpha()
        for n, profile in enumerate(propagation.profiles):
            z = profile.z
            for c in range(self.link.n_channels):
                fit = fits.get(n, c)
                numeric = watt_to_dbm(profile.channel(c))
                if fit is None:
                    fitted = np.full(z.shape, -np.inf)
                else:
                    fitted = watt_to_dbm(two_segment_power(fit, z, profile.length))
                intrinsic = watt_to_dbm(profile.channel(c)[0] * np.exp(-2.0 * alphas[n][c] * z))
                for k in range(z.size):
                    overlay.add_row(n + 1, float(f[c] / THZ), float(z[k] / KM), float(numeric[k]),
                                    float(fitted[k]), float(intrinsic[k]))
        return [fit_table, overlay]

    def nli_tables(self) -> List[Table]:
        report = self.nli()
        totals = report.total
        table = Table("nli", ("cut_thz", "nli_total_w", "nli_total_dbm", "psd_w_per_hz"))
        for c, f in enumerate(report.cut_frequencies):
            table.add_row(float(f / THZ), float(totals[c]), float(watt_to_dbm(totals[c])), float(report.psd[c]))

        breakdown = Table("nli_breakdown", ("cut_thz", "span", "contribution", "interferer_thz", "nli_w"))
        n_ch, n_spans = report.breakdown.shape[0], report.breakdown.shape[1]
        for c in range(n_ch):
            for n in range(n_spans):
                for i in (START, END):
                    for m in range(n_ch):
                        breakdown.add_row(float(report.cut_frequencies[c] / THZ), n + 1,
                                          _CONTRIBUTION_NAMES[i], float(report.cut_frequencies[m] / THZ),
                                          float(report.breakdown[c, n, i, m]))
        return [table, breakdown]

    def oracle_tables(self) -> List[Table]:
        result = self.oracle()
        power = result.power
        table = Table("oracle", ("cut_thz", "nli_total_w", "nli_total_dbm", "psd_w_per_hz", "oracle_mode", "grid"))
        for c, f in enumerate(result.cut_frequencies):
            table.add_row(float(f / THZ), float(power[c]), float(watt_to_dbm(power[c])),
                          float(result.psd[c]), result.mode.value, int(result.grid))
        return [table]

    def compare_tables(self) -> List[Table]:
        comparison = self.compare()
        table = Table("compare", ("cut_thz", "cfm_dbm", "oracle_dbm", "delta_db", "oracle_mode"))
        for row in comparison.rows:
            table.add_row(row.cut_thz, row.cfm_dbm, row.oracle_dbm, row.delta_db, row.oracle_mode)
        return [table]


def _segment_cells(seg: SegmentFit) -> Tuple[float, ...]:
    return (
        float(per_km(seg.alpha0)),
        float(per_km(seg.alpha1)),
        float(per_km(seg.sigma)),
        float(seg.weighted_mse),
    )
