"""Command line front end.

Exit codes: 0 success, 1 validation checks failed, 2 malformed input or
configuration, 3 nothing estimable (no complete cases / no events),
4 output could not be written.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import io as hio
from .bivariate import (
    BivariateConfig,
    BivariateMeans,
    change_score,
    change_score_cs,
    lambda0,
    mean_vector,
    nonignorable_shift,
    subsample_summary,
)
from .errors import DataError, HiermissError, NoCompleteCasesError, NoEventsError, ParameterError
from .estimator import hierarchical_estimate, make_mode
from .km import max_deviation, product_limit, recursive_cdf
from .params import ParameterDef
from .simulation import StudySpec, convergence_probe, run_study

log = logging.getLogger("hiermiss")

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_EMPTY, EXIT_OUTPUT = 0, 1, 2, 3, 4


class OutputError(Exception):
    pass


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if not isinstance(cfg, dict):
        raise DataError("config must be a JSON object")
    return cfg


def _component(ref, columns) -> int:
    if isinstance(ref, int):
        return ref
    if ref in columns:
        return columns.index(ref)
    raise ParameterError(f"bad parameter definition: unknown column {ref!r}")


def parse_params(specs, columns) -> list[ParameterDef]:
    """Parameter list from config entries like ``{"kind": "mean", "component": "x1"}``."""
    if not specs:
        return [ParameterDef.mean(q) for q in range(len(columns))]
    out = []
    for d in specs:
        comps = d.get("components", [d["component"]] if "component" in d else [])
        comps = tuple(_component(c, list(columns)) for c in comps)
        try:
            out.append(
                ParameterDef(d["kind"], comps, threshold=d.get("threshold"), tag=d.get("tag"))
            )
        except KeyError as exc:
            raise ParameterError(f"bad parameter definition: missing {exc}") from None
    return out


def estimate_report(result, dataset, mode, monotone) -> dict:
    labels = [p.label for p in result.params]
    nodes = {}
    for pat, node in sorted(result.nodes.items(), key=lambda kv: (kv[0].level, kv[0])):
        nodes[str(pat)] = {
            "J": node.J,
            "level": pat.level,
            "parameters": [labels[s] for s in node.param_ids],
            "theta": node.theta_tilde,
            **node.provenance.as_dict(),
        }
    return {
        "columns": list(dataset.columns),
        "parameters": labels,
        "mode": mode.name,
        "monotone": monotone,
        "theta": result.theta,
        "cov": result.cov,
        "n_rows": result.partition.n_rows,
        "dropped": result.partition.dropped,
        "pattern_counts": {str(p): len(ix) for p, ix in sorted(result.partition.groups.items(), key=lambda kv: (kv[0].level, kv[0]))},
        "nodes": nodes,
        "fallbacks": result.fallbacks,
    }


def emit(report, fmt, path, table=None, sections=None):
    if fmt == "json":
        text = hio.dumps_json(report)
    elif fmt == "csv":
        text = hio.dumps_csv(report, table)
    else:
        text = hio.dumps_table(report, sections)
    try:
        hio.write_output(text, path)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from exc


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    token = args.missing_token or cfg.get("missing_token", "NA")
    ds = hio.read_dataset(args.input, token)
    params = parse_params(cfg.get("parameters"), ds.columns)
    mode = make_mode(args.mode or cfg.get("mode", "plugin"), cfg.get("phi_cov"))
    monotone = args.monotone or bool(cfg.get("monotone", False))
    result = hierarchical_estimate(ds, params, mode, monotone=monotone)
    report = estimate_report(result, ds, mode, monotone)
    sections = [
        ("estimate", [{"parameter": l, "theta": float(t), "se": float(np.sqrt(max(v, 0.0)))}
                      for l, t, v in zip(report["parameters"], result.theta, np.diag(result.cov))]),
        ("pattern counts", [{"pattern": k, "J": v} for k, v in report["pattern_counts"].items()]
         + [{"pattern": "dropped", "J": report["dropped"]}]),
        ("nodes", [{"pattern": k, "children": " ".join(v["children"]) or "-",
                    "fallback": v["fallback"] or "-", "overlap": v["overlapping_sources"]}
                   for k, v in report["nodes"].items()]),
    ]
    emit(report, args.format, args.output, sections=sections)
    return EXIT_OK


def cmd_km(args) -> int:
    sample = hio.read_censored(args.input)
    cdf = recursive_cdf(sample)
    report = {
        "knots": cdf.knots,
        "cdf": cdf.values,
        "survival": cdf.survival,
        "n": len(sample),
        "events": int(sample.event.sum()),
    }
    if args.oracle:
        report["max_deviation"] = max_deviation(cdf, product_limit(sample))
    table = [
        {"knot": float(k), "cdf": float(c), "survival": float(s)}
        for k, c, s in zip(cdf.knots, cdf.values, cdf.survival)
    ]
    sections = [("step function", table)]
    if args.oracle:
        sections.append(("product-limit check", {"max_deviation": report["max_deviation"]}))
    emit(report, args.format, args.output, table=table, sections=sections)
    return EXIT_OK


def _bivariate_inputs(args, cfg):
    if args.input:
        ds = hio.read_dataset(args.input, args.missing_token or cfg.get("missing_token", "NA"))
        if ds.q != 2:
            raise DataError(f"bivariate input needs two columns, found {ds.q}")
        means, (J11, J21, J22) = subsample_summary(ds.values)
        if J11 < 2:
            raise NoCompleteCasesError("need at least two complete rows to estimate covariance")
        both = ~np.isnan(ds.values).any(axis=1)
        s = np.cov(ds.values[both], rowvar=False, ddof=1)
        return means, BivariateConfig(s[0, 0], s[1, 1], s[0, 1], J11, J21, J22)
    try:
        m = cfg["means"]
        s = cfg["sigma"]
        sizes = cfg["sizes"]
    except KeyError as exc:
        raise DataError(f"bivariate config needs {exc} (or pass --input)") from None
    means = BivariateMeans(
        float(m["x111"]), float(m["x112"]),
        float(m.get("x211", np.nan)), float(m.get("x222", np.nan)),
    )
    sizes = list(sizes) + [0] * (3 - len(sizes))
    return means, BivariateConfig(float(s[0][0]), float(s[1][1]), float(s[0][1]), *sizes)


def cmd_bivariate(args) -> int:
    cfg = load_config(args.config)
    means, bc = _bivariate_inputs(args, cfg)
    report = {
        "variant": args.variant,
        "sizes": {"J11": bc.J11, "J21": bc.J21, "J22": bc.J22},
        "sigma": bc.sigma,
        "means": means._asdict(),
    }
    if args.variant == "mean-vector":
        mu, cov = mean_vector(means, bc)
        report.update(estimate=mu, cov=cov, gain=lambda0(bc))
    elif args.variant == "change-score":
        d, v = change_score(means, bc)
        report.update(estimate=d, variance=v)
    elif args.variant == "compound-symmetry":
        sd = float(cfg.get("sd", np.sqrt(0.5 * (bc.sigma11 + bc.sigma22))))
        rho = float(cfg.get("rho", bc.sigma12 / sd**2))
        d, v = change_score_cs(means, sd, rho, bc.J11, bc.J21)
        report.update(estimate=d, variance=v, sd=sd, rho=rho)
    else:
        d, v = nonignorable_shift(means, bc)
        report.update(estimate=d, variance=v)
    emit(report, args.format, args.output)
    return EXIT_OK


def _study_spec(args):
    cfg = load_config(args.config)
    if args.seed is None and cfg.get("seed") is None:
        raise DataError("a seed is required (--seed or \"seed\" in config)")
    try:
        return StudySpec.from_dict(cfg, seed=args.seed), cfg
    except (KeyError, TypeError) as exc:
        raise DataError(f"bad study config: {exc}") from None


def _study_table(report):
    rows = []
    for name, s in report.estimators.items():
        for i, lab in enumerate(s.labels):
            rel = s.variance_rel_error
            rows.append({
                "estimator": name,
                "param": lab,
                "mean": float(s.mean[i]),
                "bias/SE": float(s.bias_z[i]),
                "variance": float(s.variance[i]),
                "theory": None if s.theory_variance is None else float(s.theory_variance[i]),
                "rel.err": None if rel is None else float(rel[i]),
                "failed": s.n_failed,
                "ok": s.passed,
            })
    return rows


def cmd_simulate(args, validate=False) -> int:
    spec, cfg = _study_spec(args)
    report = run_study(spec, workers=args.workers)
    out = report.to_dict()
    passed = report.passed
    if validate and cfg.get("ladder"):
        rows = convergence_probe(spec, cfg["ladder"], workers=args.workers)
        errs = [r.gain_error for r in rows]
        ratios = [r.variance_ratio for r in rows]
        trend = all(a > b for a, b in zip(errs, errs[1:])) and all(
            a >= b for a, b in zip(ratios, ratios[1:])
        )
        out["convergence"] = [r.__dict__ for r in rows]
        out["convergence_passed"] = trend
        passed = passed and trend
        out["passed"] = passed
    table = _study_table(report)
    if args.output:
        emit(out, args.format, args.output, table=table)
        sys.stdout.write(hio.dumps_table(None, [("study", table)]))
    else:
        emit(out, args.format, None, table=table, sections=[("study", table)])
    if validate and not passed:
        return EXIT_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiermiss",
        description="Hierarchical estimation of location parameters with missing data.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt="json"):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--format", choices=["json", "csv", "table"], default=fmt)
        p.add_argument("--output", help="write here instead of stdout")
        return p

    p = common(sub.add_parser("estimate", help="hierarchical estimate from a CSV"))
    p.add_argument("--input", required=True)
    p.add_argument("--missing-token", default=None)
    p.add_argument("--mode", choices=["known", "plugin"], default=None)
    p.add_argument("--monotone", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = common(sub.add_parser("km", help="censored-data CDF from a time,event CSV"))
    p.add_argument("--input", required=True)
    p.add_argument("--oracle", action="store_true", help="also run the product-limit estimator")
    p.set_defaults(func=cmd_km)

    p = common(sub.add_parser("bivariate", help="closed-form two-component estimators"))
    p.add_argument("--input")
    p.add_argument("--missing-token", default=None)
    p.add_argument(
        "--variant",
        choices=["mean-vector", "change-score", "compound-symmetry", "shift"],
        default="mean-vector",
    )
    p.set_defaults(func=cmd_bivariate)

    for name, helptext, validate in (
        ("simulate", "run a Monte Carlo study", False),
        ("validate", "run a study and fail on any broken check", True),
    ):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, default=None)
        p.set_defaults(func=lambda a, v=validate: cmd_simulate(a, validate=v))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (NoCompleteCasesError, NoEventsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    except HiermissError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
