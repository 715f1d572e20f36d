"""Command-line front end: ``fpbench price | converge | bench | diagnose``.

Exit status: 0 on success, 2 on invalid input (including an infeasible
Carr-Madan alpha), 3 when a convergence search or the reference oracle fails.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import bench
from .errors import AgreementFailure, InvalidParams, NoConvergence, PricingError
from .models import AvgParams, BsmParams, check_avg_measure, load_model_file
from .pricers import (
    CarrMadanConfig,
    FftConfig,
    PricingRequest,
    _alpha_for,
    price_attari,
    price_carr_madan,
    price_cos,
    price_dpd,
    price_dpd_vec,
    price_fft,
    price_fft_sa,
)
from .reference import dual_method_references, reference_prices
from .transforms import FourierGrid

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3

METHOD_ALIASES = {
    "dpd": "dpd", "dpd_opt": "dpd_opt", "dpd-opt": "dpd_opt",
    "at": "at_opt", "at_opt": "at_opt", "at-opt": "at_opt",
    "cm": "cm_opt", "cm_opt": "cm_opt", "cm-opt": "cm_opt",
    "fft": "fft", "fft_sa": "fft_sa", "fft-sa": "fft_sa",
    "cos": "cos_opt", "cos_opt": "cos_opt", "cos-opt": "cos_opt",
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: str
    methods: tuple[str, ...] = ("cos_opt",)
    strikes: tuple[float, ...] = ()
    tenors: tuple[float, ...] = (1.0,)
    domain: float | None = None
    n: int | None = None
    L: float | None = None
    alpha: float | None = None
    kmax: float | None = None
    out: str | None = None
    seed: int = 0
    jobs: int = 1
    runs: int = 100
    log2n: tuple[int, int] = (4, 12)
    ref_domain: float | None = None
    ref_n: int = 1_000_000
    ref_alpha: float | None = None
    min_n_tol: float | None = None
    n_cap: int = 1 << 24

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise InvalidParams(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)


def resolve_model_path(name: str) -> Path:
    """A filesystem path, or the name of a bundled model file (``bsm``, ``avg_test3.json``...)."""
    path = Path(name)
    if path.exists():
        return path
    stem = name if name.endswith(".json") else name + ".json"
    bundled = resources.files("fpbench") / "data" / Path(stem).name
    if bundled.is_file():
        return Path(str(bundled))
    raise InvalidParams(f"model file not found: {name}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _methods(text: str) -> tuple[str, ...]:
    out = []
    for m in text.split(","):
        key = m.strip().lower()
        if key not in METHOD_ALIASES:
            raise argparse.ArgumentTypeError(f"unknown method {m!r}")
        out.append(METHOD_ALIASES[key])
    return tuple(out)


def _log2_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi or lo)


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def _default_strikes(market) -> tuple[float, ...]:
    return tuple(round(market.s0 * f, 10) for f in (0.6, 1.0, 1.4))


# ---------------------------------------------------------------- commands


def _price_one(method: str, model, market, req: PricingRequest, cfg: RunConfig):
    n = cfg.n or 4096
    if method == "cos_opt":
        return price_cos(model, market, req, cfg.L or 12.0, cfg.n or 256)
    if method in ("fft", "fft_sa"):
        alpha = _alpha_for(model, cfg.alpha, enforce=True)
        if cfg.kmax is not None:
            fcfg = FftConfig.from_kmax(alpha, cfg.kmax, n)
        else:
            fcfg = FftConfig(alpha, n, cfg.domain or 200.0)
        return (price_fft if method == "fft" else price_fft_sa)(model, market, req, fcfg)
    grid = FourierGrid(cfg.domain or 200.0, n)
    if method == "dpd":
        return price_dpd(model, market, req, grid)
    if method == "dpd_opt":
        return price_dpd_vec(model, market, req, grid)
    if method == "at_opt":
        return price_attari(model, market, req, grid)
    return price_carr_madan(model, market, req, grid, None if cfg.alpha is None else CarrMadanConfig(cfg.alpha))


def cmd_price(cfg: RunConfig, model, market, out) -> int:
    strikes = cfg.strikes or _default_strikes(market)
    rows = []
    for method in cfg.methods:
        for t in cfg.tenors:
            pv = _price_one(method, model, market, PricingRequest(t, strikes), cfg)
            for k, c, interp in zip(pv.strikes, pv.calls, pv.interpolated):
                rows.append([pv.method, _fmt(k), _fmt(t), _fmt(c), int(bool(interp))])
    _write_rows(cfg.out, ["method", "k", "t", "call", "interpolated"], rows, out)
    return EXIT_OK


def _write_rows(path, header, rows, out) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _options(cfg: RunConfig, market) -> list[tuple[float, float]]:
    strikes = cfg.strikes or _default_strikes(market)
    return [(k, t) for t in cfg.tenors for k in strikes]


def _references(cfg: RunConfig, model, market, options) -> np.ndarray:
    if isinstance(model, BsmParams):
        return np.concatenate([reference_prices(model, market, [k], t) for k, t in options])
    domain = cfg.ref_domain or cfg.domain or 500.0
    alpha = cfg.ref_alpha if cfg.ref_alpha is not None else cfg.alpha
    refs = []
    for k, t in options:
        refs.append(dual_method_references(model, market, [k], t, domain, cfg.ref_n, alpha=alpha)[0].value)
    return np.array(refs)


def _converge_task(args):
    method, cfg, model, market, options, refs = args
    domain = cfg.L if method == "cos_opt" else cfg.domain
    if domain is None:
        raise InvalidParams(f"{method}: --{'L' if method == 'cos_opt' else 'domain'} is required")
    report = bench.convergence_curves(
        method, model, market, options, domain, refs, range(cfg.log2n[0], cfg.log2n[1] + 1), alpha=cfg.alpha
    )
    min_n = None
    if cfg.min_n_tol is not None:
        try:
            min_n = bench.search_min_n(
                method, model, market, options, domain, cfg.min_n_tol, refs=refs, alpha=cfg.alpha, n_cap=cfg.n_cap
            )
        except NoConvergence as exc:
            min_n = exc
    return report, min_n


def cmd_converge(cfg: RunConfig, model, market, out) -> int:
    """Curves per method; a failed minimum-N search still leaves the curve files behind."""
    options = _options(cfg, market)
    refs = _references(cfg, model, market, options)
    tasks = [(m, cfg, model, market, options, refs) for m in cfg.methods]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = pool.map(_converge_task, tasks)
    else:
        results = map(_converge_task, tasks)
    prefix = cfg.out or "convergence"
    failures = []
    for report, min_n in results:
        bench.write_convergence_csv(report, f"{prefix}_{report.method}.csv")
        bench.write_plot_data(report, f"{prefix}_{report.method}_plot.csv")
        line = f"{report.method}: domain={_fmt(report.domain)} min_n_at_tol={report.min_n_at_tol}"
        if isinstance(min_n, NoConvergence):
            failures.append(min_n)
            line += " min_n=not-converged"
        elif min_n is not None:
            line += f" min_n({cfg.min_n_tol:g})={min_n}"
        print(line, file=out)
    if failures:
        raise failures[0]
    return EXIT_OK


def cmd_bench(cfg: RunConfig, model, market, out) -> int:
    # Timing is single-threaded regardless of --jobs.
    strikes = bench.moneyness_strikes(market.s0, cfg.seed)
    reports = []
    for method in cfg.methods:
        domain = cfg.L if method == "cos_opt" else cfg.domain
        if domain is None or cfg.n is None:
            raise InvalidParams(f"{method}: bench needs --n and --{'L' if method == 'cos_opt' else 'domain'}")
        setup = bench.MethodSetup(method, domain, cfg.n, cfg.alpha)
        rep = bench.time_batches(setup, model, market, cfg.tenors[0], strikes, runs=cfg.runs)
        reports.append(rep)
        print(f"{method}: " + " ".join(f"{s}:{t * 1e3:.4g}ms" for s, t in zip(rep.sizes, rep.mean_seconds)), file=out)
    bench.write_bench_csv(reports, cfg.out or "bench.csv")
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, model, market, out) -> int:
    strikes = cfg.strikes or (60.0, 90.0, 140.0)
    tenors = cfg.tenors if cfg.tenors else (1.0, 0.1)
    n = cfg.n or (1 << 24)
    domain = cfg.domain or 1.2e6
    measure_ok = True
    if isinstance(model, AvgParams):
        report = check_avg_measure(model)
        measure_ok = report.measure_ok
        print(f"measure_ok={str(report.measure_ok).lower()} alpha_max={report.alpha_max:.6g}", file=out)
    else:
        print(f"measure_ok=true model={model.tag}", file=out)
    cells = bench.blowup_matrix(
        model, market, strikes, tenors, n=n, domain=domain, l_scale=cfg.L or 12.0,
        alpha=cfg.alpha if cfg.alpha is not None else 1.75,
    )
    rows = [[c.method, _fmt(c.t), _fmt(c.k), _fmt(c.value), c.status] for c in cells]
    prefix = cfg.out or "diagnose"
    _write_rows(f"{prefix}_blowup.csv", ["method", "t", "k", "value", "status"], rows, out)
    for method in dict.fromkeys(c.method for c in cells):
        verdict = "feasible" if bench.method_feasible(cells, method) else "infeasible"
        vals = " ".join(f"{c.value:.6g}" for c in cells if c.method == method)
        print(f"{method:8s} {verdict:10s} {vals}", file=out)
    if measure_ok and isinstance(model, AvgParams):
        alpha_max = check_avg_measure(model).alpha_max
        ref_alpha = cfg.ref_alpha if cfg.ref_alpha is not None else 0.5 * alpha_max
        options = [(k, t) for t in tenors for k in strikes]
        ref_domain = cfg.ref_domain or domain
        ref_n = max(n, cfg.ref_n)
        refs = []
        for t in tenors:
            quotes = dual_method_references(model, market, strikes, t, ref_domain, ref_n, alpha=ref_alpha)
            refs += [q.value for q in quotes]
        alphas = (0.01, 0.25 * alpha_max, 0.5 * alpha_max, 0.99 * alpha_max, 1.75)
        sweep = bench.alpha_sweep(model, market, options, alphas, FourierGrid(domain, n), refs)
        sweep_rows = [[_fmt(r.alpha), r.status, _fmt(r.max_error)] for r in sweep]
        _write_rows(f"{prefix}_alpha.csv", ["alpha", "status", "max_error"], sweep_rows, out)
        for r in sweep:
            print(f"alpha={r.alpha:.6g} {r.status} max_error={r.max_error:.3g}", file=out)
    return EXIT_OK


COMMANDS = {"price": cmd_price, "converge": cmd_converge, "bench": cmd_bench, "diagnose": cmd_diagnose}


def run(cfg: RunConfig, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        if cfg.command not in COMMANDS:
            raise InvalidParams(f"unknown command {cfg.command!r}")
        model, market = load_model_file(resolve_model_path(cfg.model))
        return COMMANDS[cfg.command](cfg, model, market, out)
    except (NoConvergence, AgreementFailure) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_FAILED
    except (InvalidParams, PricingError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpbench", description="Fourier option pricing and benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("price", "price calls and write a CSV"),
        ("converge", "error-vs-N curves against reference prices"),
        ("bench", "batch timing at a fixed configuration"),
        ("diagnose", "measure check, blow-up matrix and alpha sweep"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", required=True, help="model JSON file or bundled name")
        p.add_argument("--method", dest="methods", type=_methods, default=("cos_opt",),
                       help="comma-separated: dpd, dpd_opt, at, cm, fft, fft_sa, cos")
        p.add_argument("--strikes", type=_floats, default=())
        p.add_argument("--tenors", type=_floats, default=None)
        p.add_argument("--domain", type=float, help="quadrature upper limit W")
        p.add_argument("--n", type=int, help="nodes / FFT size / COS terms")
        p.add_argument("--L", type=float, help="COS truncation scale")
        p.add_argument("--alpha", type=float, help="Carr-Madan dampening parameter")
        p.add_argument("--kmax", type=float, help="FFT log-strike half-width (sets W = n pi / kmax)")
        p.add_argument("--out", help="output file (or prefix for multi-file commands)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        if name == "bench":
            p.add_argument("--runs", type=int, default=100)
        if name == "converge":
            p.add_argument("--log2n", type=_log2_range, default=(4, 12), help="range of log2 N, e.g. 4:12")
            p.add_argument("--min-n-tol", type=float, help="also search the minimum N at this tolerance")
            p.add_argument("--n-cap", type=int, help="largest N tried by the minimum-N search")
        if name in ("converge", "diagnose"):
            p.add_argument("--ref-domain", type=float)
            p.add_argument("--ref-n", type=int, default=1_000_000)
            p.add_argument("--ref-alpha", type=float)
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    doc = {k: v for k, v in vars(ns).items() if v is not None}
    if "tenors" not in doc:
        doc["tenors"] = (1.0, 0.1) if ns.command == "diagnose" else (1.0,)
    return RunConfig.from_dict(doc)


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    return run(config_from_args(ns))


if __name__ == "__main__":
    sys.exit(main())
