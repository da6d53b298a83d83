"""Command-line entry point: ``bmccsp {simulate,fit,benchmark,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import dgp, effects, files, sampler
from .diagnostics import DegenerateChainError, geweke_diagnostic
from .panel import CsvSchema, PanelData, load_panel_csv, write_panel_csv
from .shrinkage import CspHyper
from .stiefel import GmcConfig
from .svg import counterfactual_chart

OUT_ENV = "BMCCSP_OUT"
LEVELS = (0.7, 0.9)
Z_CRIT = 1.959963984540054  # two-sided 5%


class CliError(Exception):
    pass


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV, "out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise CliError(f"output directory {out} is not writable")
    return out


def _csv_list(text: str | None) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip()) if text else ()


def sampler_config(args) -> sampler.SamplerConfig:
    try:
        return sampler.SamplerConfig(
            rank=args.rank,
            csp=CspHyper(eta=args.eta, kappa1=args.kappa1, kappa2=args.kappa2, delta_inf=args.delta_inf),
            nu1=args.nu1,
            nu2=args.nu2,
            alpha=args.alpha,
            n_iter=args.iters,
            n_burn=args.burn,
            thin=args.thin,
            seed=args.seed,
            gmc=GmcConfig(step=args.step, n_step=args.n_step, target_accept=args.target_accept,
                          varsigma=args.varsigma, decay=args.decay,
                          sign_flip=not args.no_sign_flip),
            phi_mode=args.phi_mode,
            keep_phi=getattr(args, "keep_phi", False),
            collapsed_steps=args.collapsed_steps,
        )
    except ValueError as exc:
        raise CliError(f"invalid sampler configuration: {exc}") from None


# -- simulate ----------------------------------------------------------------


def cmd_simulate(args) -> list[Path]:
    try:
        spec = dgp.DgpSpec(kind=args.kind, J=args.units, T0=args.pre, T1=args.post,
                           atet=args.atet, seed=args.seed, sigma2=args.sigma2)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = _outdir(args)
    sp = dgp.generate(spec)
    panel_path, truth_path, meta_path = out / "panel.csv", out / "truth.csv", out / "meta.json"
    write_panel_csv(sp.panel, panel_path)
    truth_panel = PanelData(sp.truth, np.zeros_like(sp.panel.mask), None,
                            sp.panel.unit_labels, sp.panel.period_labels)
    write_panel_csv(truth_panel, truth_path, CsvSchema(outcome="y0", treatment="treated"))
    files.write_json(meta_path, {"command": "simulate", "spec": asdict(spec),
                                 "files": ["panel.csv", "truth.csv"]})
    return [panel_path, truth_path, meta_path]


# -- fit ---------------------------------------------------------------------


def monitored_geweke(chains: dict[str, np.ndarray]) -> dict:
    out = {}
    for name, chain in chains.items():
        try:
            z = geweke_diagnostic(chain)
            out[name] = {"z": z, "pass_5pct": bool(abs(z) < Z_CRIT)}
        except (ValueError, DegenerateChainError) as exc:
            out[name] = {"z": None, "pass_5pct": None, "note": str(exc)}
    return out


def cmd_fit(args) -> list[Path]:
    cfg = sampler_config(args)
    schema = CsvSchema(unit=args.unit_col, period=args.period_col, outcome=args.outcome_col,
                       treatment=args.treat_col, covariates=_csv_list(args.covariates),
                       time_invariant=_csv_list(args.time_invariant))
    try:
        data = load_panel_csv(args.data, schema)
        cfg.resolve_rank(data.J, data.T)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if data.n_treated == 0:
        raise CliError("panel has no treated cells; nothing to impute")
    out = _outdir(args)
    draws = sampler.run_mcmc(data, cfg)
    atet = effects.atet_draws(draws, data)
    summary = effects.atet_posterior(draws, data, LEVELS)
    eig = effects.eigenvalue_summary(draws)

    written = []
    files.write_draws(out, draws, data, atet, binary=args.binary)
    written += [out / files.DRAWS_CSV, out / files.DRAWS_SCHEMA]
    if args.binary:
        written.append(out / files.DRAWS_BIN)
    files.write_json(out / "summary.json", summary.to_dict())
    files.write_per_period(out / "per_period.csv", summary, LEVELS)
    files.write_rows(out / "eigenvalues.csv", ["index", "posterior_mean"],
                     ([k + 1, float(v)] for k, v in enumerate(eig)))
    written += [out / "summary.json", out / "per_period.csv", out / "eigenvalues.csv"]
    if cfg.keep_phi:
        rows = []
        for j in range(data.J):
            mean, lo, hi = effects.loading_summary(draws, j, 0.9)
            rows += [[data.unit_labels[j], h + 1, float(mean[h]), float(lo[h]), float(hi[h])]
                     for h in range(mean.size)]
        files.write_rows(out / "loadings.csv", ["unit", "h", "mean", "low_90", "high_90"], rows)
        written.append(out / "loadings.csv")
    diag = {
        "geweke": monitored_geweke({"tau": draws.tau_draws, "atet": atet, "log_post": draws.log_post}),
        "accept_rate": draws.accept_rate,
        "eps_final": draws.eps_final,
        "n_reorth": draws.n_reorth,
        "n_post": draws.n_post,
        "rank": cfg.resolve_rank(data.J, data.T),
        "config": asdict(cfg),
    }
    files.write_json(out / "diagnostics.json", diag)
    written.append(out / "diagnostics.json")
    return written


# -- benchmark ---------------------------------------------------------------


def cmd_benchmark(args) -> list[Path]:
    try:
        cases = [dgp.parse_case(c) for c in args.cases]
        for kind, J, T0 in cases:
            dgp.DgpSpec(kind=kind, J=J, T0=T0, T1=args.post)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    methods = list(_csv_list(args.methods))
    available = sorted(dgp.method_table())
    unknown = [m for m in methods if m not in available]
    if unknown:
        raise CliError(f"unknown method(s) {', '.join(unknown)}; available: {', '.join(available)}")
    if dgp.NORMALIZER not in methods:
        raise CliError(f"methods must include {dgp.NORMALIZER!r}, the normalizer")
    cfg = sampler_config(args)
    out = _outdir(args)
    report = dgp.run_benchmark(cases, methods, args.reps, seed=args.seed, cfg=cfg,
                               T1=args.post, atet=args.atet, n_jobs=args.jobs)
    files.write_benchmark(out / "benchmark.csv", report.summary,
                          ["kind", "J", "T0", "method", "mse", "mae", "time", "n_reps"])
    files.write_benchmark(out / "benchmark_raw.csv", report.raw,
                          ["kind", "J", "T0", "rep", "method", "mse", "mae", "mse_norm",
                           "mae_norm", "time"])
    return [out / "benchmark.csv", out / "benchmark_raw.csv"]


# -- report ------------------------------------------------------------------


def cmd_report(args) -> list[Path]:
    fit_dir = Path(args.fit_dir)
    src = fit_dir / "per_period.csv"
    if not src.exists():
        raise CliError(f"missing fit artifact: expected {src} (run `bmccsp fit` first)")
    periods, cols = files.read_per_period(src)
    out = _outdir(args)
    header = ["period", "realized", "counterfactual_mean", "low_70", "high_70", "low_90", "high_90"]
    missing = [h for h in header[1:] if h not in cols]
    if missing:
        raise CliError(f"{src} lacks columns {missing}")
    rows = [[p] + [float(cols[h][i]) for h in header[1:]] for i, p in enumerate(periods)]
    files.write_rows(out / "report.csv", header, rows)
    bands = {lev: (cols[f"low_{int(100 * lev)}"], cols[f"high_{int(100 * lev)}"]) for lev in LEVELS}
    svg = counterfactual_chart(periods, cols["realized"], cols["counterfactual_mean"], bands,
                               title=args.title, ylabel=args.ylabel)
    (out / "report.svg").write_text(svg, encoding="utf-8")
    return [out / "report.csv", out / "report.svg"]


# -- parser ------------------------------------------------------------------


def _add_sampler_flags(p: argparse.ArgumentParser, iters: int, burn: int) -> None:
    g = p.add_argument_group("sampler")
    g.add_argument("--iters", type=int, default=iters)
    g.add_argument("--burn", type=int, default=burn)
    g.add_argument("--thin", type=int, default=1)
    g.add_argument("--rank", type=int, default=None, help="H; default min(J, T)")
    g.add_argument("--eta", type=float, default=5.0)
    g.add_argument("--kappa1", type=float, default=2.0)
    g.add_argument("--kappa2", type=float, default=2.0)
    g.add_argument("--delta-inf", type=float, default=0.01)
    g.add_argument("--nu1", type=float, default=0.001)
    g.add_argument("--nu2", type=float, default=0.001)
    g.add_argument("--alpha", type=float, default=0.001, help="prior precision of beta")
    g.add_argument("--step", type=float, default=0.01, help="initial geodesic MC step")
    g.add_argument("--n-step", type=int, default=5)
    g.add_argument("--target-accept", type=float, default=0.6)
    g.add_argument("--varsigma", type=float, default=0.6)
    g.add_argument("--decay", choices=("varsigma", "reciprocal"), default="varsigma",
                   help="step-size adaptation schedule")
    g.add_argument("--no-sign-flip", action="store_true", help="disable the column sign-flip move")
    g.add_argument("--collapsed-steps", type=int, default=2,
                   help="loading-integrated (Psi, tau, lambda) rounds per sweep; 0 disables them")
    g.add_argument("--phi-mode", choices=sampler.PHI_MODES, default="conjugate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bmccsp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic panel")
    p.add_argument("--kind", choices=dgp.DGP_KINDS, default="independent")
    p.add_argument("--units", type=int, default=5)
    p.add_argument("--pre", type=int, default=10)
    p.add_argument("--post", type=int, default=20)
    p.add_argument("--atet", type=float, default=0.0)
    p.add_argument("--sigma2", type=float, default=1.0, help="treated-unit noise variance (weighted DGP)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the sampler on a long-format panel CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--unit-col", default="unit")
    p.add_argument("--period-col", default="period")
    p.add_argument("--outcome-col", default="outcome")
    p.add_argument("--treat-col", default="treated")
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--time-invariant", help="comma-separated covariates constant within unit")
    p.add_argument("--keep-phi", action="store_true", help="retain loading draws")
    p.add_argument("--binary", action="store_true", help="also write a columnar binary draw file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_sampler_flags(p, 3000, 1000)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("benchmark", help="normalized MSE/MAE over seeded replications")
    p.add_argument("--cases", nargs="+", required=True, help="kind:J:T0 entries")
    p.add_argument("--methods", default="scm,mcnnm,bmc")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--post", type=int, default=20)
    p.add_argument("--atet", type=float, default=0.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _add_sampler_flags(p, 3000, 1000)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="plot-ready CSV and SVG chart from fit outputs")
    p.add_argument("--fit-dir", default=os.environ.get(OUT_ENV, "out"))
    p.add_argument("--title", default="")
    p.add_argument("--ylabel", default="outcome")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        written = args.func(args)
    except (CliError, sampler.SamplerError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
