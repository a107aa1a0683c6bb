"""Stages behind the CLI: ingest, fit, score, compare, ekc, simulate, recover."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as mio
from .diagnostics import FitIndices, MardiaResult, fit_indices, mardia_test
from .ekc import GRP_TERMS, CurveEstimate, cubic_coefficients, loess_fit, trend_turning_points
from .estimation import FitConfig, FitResult, fit_ml, standardized_estimates
from .model import Dataset, ModelSpec
from .scoring import IndexTable, PeriodComparison, compare_periods, make_index_table, rank_units
from .simulate import (
    SimConfig,
    params_from_mapping,
    recovery_study,
    simulate,
    simulate_query_table,
)

__all__ = [
    "ConvergenceError",
    "PeriodResult",
    "ingest",
    "fit_periods",
    "score_periods",
    "compare",
    "ekc",
    "run_pipeline",
    "simulate_data",
    "recover",
]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """The ML fit stopped without meeting the convergence criteria."""


@dataclass
class PeriodResult:
    period: str
    dataset: Dataset | None = None
    raw: mio.RawQueryTable | None = None
    fit: FitResult | None = None
    indices: FitIndices | None = None
    mardia: MardiaResult | None = None
    table: IndexTable | None = None
    curve: CurveEstimate | None = None
    files: list[Path] = field(default_factory=list)


def _out(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in str(name))


# -- ingest --------------------------------------------------------------------


def ingest(cfg: dict, out=None) -> dict[str, PeriodResult]:
    if not cfg.get("input"):
        raise mio.SchemaError("config needs an 'input' CSV")
    tables, violations = mio.read_raw_table(cfg["input"])
    if violations:
        if out is not None:
            mio.write_csv(
                _out(out) / "rejected_rows.csv",
                ["line", "region", "period", "reason"],
                [(v.line, v.region, v.period, v.reason) for v in violations],
            )
        msg = f"{len(violations)} invalid input row(s): " + "; ".join(map(str, violations))
        if not cfg.get("drop_invalid_rows"):
            raise mio.SchemaError(msg)
        log.warning("%s (dropped)", msg)
    periods = cfg.get("periods") or list(tables)
    missing = [p for p in periods if p not in tables]
    if missing:
        raise mio.SchemaError(f"period(s) not in input: {', '.join(missing)}")

    results = {}
    for period in periods:
        raw = tables[period]
        ds = mio.standardize_dataset(raw, cfg["causes"])
        res = PeriodResult(period, dataset=ds, raw=raw)
        if out is not None:
            path = _out(out) / f"dataset_{_safe(period)}.csv"
            mio.write_csv(
                path,
                ["unit"] + list(ds.indicator_names) + list(ds.cause_names),
                ([u] + list(ds.Y[i]) + list(ds.X[i]) for i, u in enumerate(ds.unit_labels)),
            )
            res.files.append(path)
        results[period] = res
    return results


# -- fit -------------------------------------------------------------------------


def _fit_config(cfg: dict) -> FitConfig:
    f = cfg["fit"]
    return FitConfig(
        gtol=float(f["gtol"]),
        ftol=float(f["ftol"]),
        max_iter=int(f["max_iter"]),
        se_methods=tuple(f["se_methods"]),
    )


def _report_rows(res: PeriodResult):
    fit, ds = res.fit, res.dataset
    spec = fit.spec
    est = fit.estimates
    std_est, _ = standardized_estimates(fit)
    ses = {m: fit.se(m) for m in ("naive", "mlm", "mlr")}
    rows = []
    free = list(spec.free_loadings)
    for i, name in enumerate(spec.indicator_names):
        if i == spec.fixed_loading:
            rows.append(("lambda", name, 1.0, std_est[i], None, None, None, "fixed"))
        else:
            j = free.index(i)
            rows.append(("lambda", name, est[j], std_est[i], ses["naive"][j], ses["mlm"][j], ses["mlr"][j], fit.significance[j]))
    p, k = spec.p, spec.k
    for c, name in enumerate(spec.cause_names):
        j = p - 1 + c
        rows.append(("beta", name, est[j], std_est[p + c], ses["naive"][j], ses["mlm"][j], ses["mlr"][j], fit.significance[j]))
    for i, name in enumerate(spec.indicator_names):
        j = p - 1 + k + i
        rows.append(("theta", name, est[j], std_est[p + k + i], ses["naive"][j], ses["mlm"][j], ses["mlr"][j], fit.significance[j]))
    j = len(est) - 1
    rows.append(("sigma", "sigma", est[j], std_est[-1], ses["naive"][j], ses["mlm"][j], ses["mlr"][j], fit.significance[j]))

    fi, mt = res.indices, res.mardia
    stats_rows = [
        ("n_obs", ds.n),
        ("loglik", fit.loglik),
        ("aic", fi.aic),
        ("bic", fi.bic),
        ("cfi", fi.cfi),
        ("rmsea", fi.rmsea),
        ("srmr", fi.srmr),
        ("chisq_model", fi.chisq_model),
        ("df_model", fi.df_model),
        ("chisq_baseline", fi.chisq_baseline),
        ("df_baseline", fi.df_baseline),
        ("mlm_scaling", fit.mlm_scaling),
        ("mardia_skewness_stat", mt.skewness_stat),
        ("mardia_skewness_pvalue", mt.skewness_pvalue),
        ("mardia_kurtosis_stat", mt.kurtosis_stat),
        ("mardia_kurtosis_pvalue", mt.kurtosis_pvalue),
        ("converged", int(fit.converged)),
        ("iterations", fit.iterations),
        ("gradient_norm", fit.gradient_norm),
    ]
    rows += [("fit", name, value, None, None, None, None, "") for name, value in stats_rows]
    return rows


REPORT_HEADER = ["section", "parameter", "estimate", "estimate_std", "se_naive", "se_mlm", "se_mlr", "stars"]


def _write_report(res: PeriodResult, cfg: dict, out: Path):
    rows = _report_rows(res)
    base = out / f"fit_report_{_safe(res.period)}"
    res.files.append(mio.write_csv(base.with_suffix(".csv"), REPORT_HEADER, rows))
    fit = res.fit
    doc = {
        "period": res.period,
        "variant": cfg.get("variant"),
        "causes": list(fit.spec.cause_names),
        "indicators": list(fit.spec.indicator_names),
        "parameters": [
            dict(zip(REPORT_HEADER, r)) for r in rows if r[0] != "fit"
        ],
        "fit": {r[1]: r[2] for r in rows if r[0] == "fit"},
        "mardia_rejected": res.mardia.rejected,
        "flags": list(fit.flags),
    }
    if all(t in fit.spec.cause_names for t in GRP_TERMS):
        coefs = cubic_coefficients(fit)
        doc["income_trend"] = {
            "coefficients": list(coefs),
            "turning_points_standardized": list(trend_turning_points(coefs)),
        }
    res.files.append(mio.write_json(base.with_suffix(".json"), doc))


def fit_periods(cfg: dict, out=None, results: dict | None = None) -> dict[str, PeriodResult]:
    results = results if results is not None else ingest(cfg, out)
    fc = _fit_config(cfg)
    for res in results.values():
        ds = res.dataset
        spec = ModelSpec.for_dataset(ds)
        fit = fit_ml(ds, spec, fc)
        if not fit.converged:
            raise ConvergenceError(
                f"period {res.period}: no convergence after {fit.iterations} iterations "
                f"(gradient norm {fit.gradient_norm:.3g})"
            )
        res.fit = fit
        res.indices = fit_indices(ds, fit)
        res.mardia = mardia_test(ds.Y)
        if out is not None:
            _write_report(res, cfg, _out(out))
    return results


# -- scores ----------------------------------------------------------------------

INDEX_HEADER = ["unit", "period", "raw_score", "index", "rank"]


def _write_index(table: IndexTable, out: Path) -> Path:
    order = np.argsort(table.rank, kind="stable")
    return mio.write_csv(
        out / f"index_{_safe(table.period_label)}.csv",
        INDEX_HEADER,
        (
            (table.unit_labels[i], table.period_label, table.raw_score[i], table.scaled_index[i], table.rank[i])
            for i in order
        ),
    )


def read_scores(path) -> dict[str, IndexTable]:
    """Fixture scores (``unit,period,index``) ranked per period without fitting."""
    by_period: dict[str, tuple[list, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"unit", "period", "index"}
        if not need <= set(reader.fieldnames or []):
            raise mio.SchemaError(f"scores file needs columns {sorted(need)}")
        for line, row in enumerate(reader, start=2):
            try:
                v = float(row["index"])
            except ValueError as exc:
                raise mio.SchemaError(f"line {line}: index {row['index']!r} is not a number") from exc
            units, vals = by_period.setdefault(row["period"].strip(), ([], []))
            units.append(row["unit"].strip())
            vals.append(v)
    return {p: rank_units(u, v, period_label=p) for p, (u, v) in by_period.items()}


def score_periods(cfg: dict, out=None, results: dict | None = None) -> dict[str, PeriodResult]:
    if cfg.get("scores"):
        tables = read_scores(cfg["scores"])
        periods = cfg.get("periods") or list(tables)
        results = {p: PeriodResult(p, table=tables[p]) for p in periods}
    else:
        results = results if results is not None else fit_periods(cfg, out)
        for res in results.values():
            res.table = make_index_table(res.dataset, res.fit)
    if out is not None:
        for res in results.values():
            res.files.append(_write_index(res.table, _out(out)))
    return results


# -- compare ---------------------------------------------------------------------


def compare(cfg: dict, out=None, results: dict | None = None) -> PeriodComparison:
    results = results if results is not None else score_periods(cfg, out)
    pair = cfg.get("compare") or list(results)[:2]
    if len(pair) < 2:
        raise mio.SchemaError("comparison needs two periods")
    a, b = (results[p].table for p in pair)
    comp = compare_periods(a, b)
    if out is not None:
        out = _out(out)
        stem = f"comparison_{_safe(pair[0])}_{_safe(pair[1])}"
        mio.write_csv(
            out / f"{stem}.csv",
            ["unit", "index_a", "index_b", "rank_a", "rank_b"],
            zip(comp.unit_labels, comp.index_a, comp.index_b, comp.rank_a, comp.rank_b),
        )
        mio.write_json(
            out / f"{stem}.json",
            {"period_a": pair[0], "period_b": pair[1], "spearman": comp.spearman, "pearson": comp.pearson},
        )
    return comp


# -- ekc -------------------------------------------------------------------------


def ekc(cfg: dict, out=None, results: dict | None = None) -> dict[str, PeriodResult]:
    results = results if results is not None else score_periods(cfg, out)
    lc = cfg["loess"]
    for res in results.values():
        if res.raw is None:
            log.info("period %s: no income data, skipping loess", res.period)
            continue
        if lc["x_scale"] == "raw":
            x = res.raw.causes["grp_pc"]
        else:
            x, _ = mio.standardize_columns(res.raw.causes["grp_pc"][:, None], ["grp_pc"])
            x = x[:, 0]
        pos = {u: i for i, u in enumerate(res.table.unit_labels)}
        y = res.table.scaled_index[[pos[u] for u in res.raw.regions]]
        res.curve = loess_fit(x, y, span=float(lc["span"]), degree=int(lc["degree"]), n_grid=int(lc["n_grid"]))
        if out is not None:
            c = res.curve
            res.files.append(
                mio.write_csv(
                    _out(out) / f"ekc_{_safe(res.period)}.csv",
                    ["grp", "fitted", "lo", "hi"],
                    zip(c.grid, c.fitted, c.ci_lower, c.ci_upper),
                )
            )
    return results


def run_pipeline(cfg: dict, out) -> dict[str, PeriodResult]:
    """Every stage in order; returns per-period results with the files written."""
    if cfg.get("scores"):
        results = score_periods(cfg, out)
    else:
        results = score_periods(cfg, out, fit_periods(cfg, out))
        ekc(cfg, out, results)
    if len(results) >= 2 or cfg.get("compare"):
        compare(cfg, out, results)
    return results


# -- simulation ------------------------------------------------------------------


def _sim_config(section: dict, seed: int) -> SimConfig:
    tp = params_from_mapping(section.get("true_params"))
    spec = ModelSpec(p=tp.p, k=tp.k)
    return SimConfig(
        spec=spec,
        true_params=tp,
        n=int(section.get("n", 1000)),
        error_distribution=section.get("error_distribution", "normal"),
        df=float(section.get("df", 5.0)),
        seed=int(section.get("seed", seed)),
    )


def simulate_data(cfg: dict, out) -> Path:
    """Write simulated data: model-level (``format: dataset``) or raw query counts."""
    sec = cfg.get("simulate") or {}
    out = _out(out)
    if sec.get("format", "dataset") == "raw":
        rows = simulate_query_table(
            n_regions=int(sec.get("n_regions", 81)),
            periods=tuple(str(p) for p in sec.get("periods", ("2014", "2015"))),
            seed=int(sec.get("seed", cfg.get("seed", 0))),
        )
        header = ["region", "period", "month", "q1", "q2", "q3", "q4", "q5", "total"] + list(mio.CAUSE_COLUMNS)
        return mio.write_csv(out / "simulated_raw.csv", header, ([r[h] for h in header] for r in rows))
    sc = _sim_config(sec, int(cfg.get("seed", 0)))
    sim = simulate(sc)
    ds = sim.dataset
    return mio.write_csv(
        out / "simulated_dataset.csv",
        ["unit"] + list(ds.indicator_names) + list(ds.cause_names) + ["eta"],
        ([u] + list(ds.Y[i]) + list(ds.X[i]) + [sim.eta[i]] for i, u in enumerate(ds.unit_labels)),
    )


def recover(cfg: dict, out):
    sec = cfg.get("recover") or {}
    sc = _sim_config(sec, int(cfg.get("seed", 0)))
    report = recovery_study(
        sc, int(sec.get("replications", 200)), _fit_config(cfg), n_jobs=int(sec.get("n_jobs", 1))
    )
    out = _out(out)
    (out / "recovery.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "recovery_summary.txt").write_text(report.summary(), encoding="utf-8")
    return report
