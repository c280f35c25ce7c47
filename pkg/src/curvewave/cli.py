"""Command-line experiment runner.

    curvewave <subcommand> [--config FILE] [--set key=value ...] [flags]

A config file holds `key = value` lines (`#` starts a comment). Values from
--set and from the dedicated flags override the file. Every subcommand
writes a JSON report and, when it produces a table, a CSV file into the
output directory (flag --output-dir, else $CURVEWAVE_OUTPUT_DIR, else the
config key output_dir). Exit codes: 0 all checks pass, 1 a check failed,
2 invalid config, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
ENV_OUTPUT = "CURVEWAVE_OUTPUT_DIR"

SUBCOMMANDS = ("spectral-check", "fundamental-integrals", "jacobi-run", "kato-norm", "parametrix",
               "born-series", "schrodinger-decay", "decay-scan", "acceptance")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


# ---------------------------------------------------------------------------
# config schema


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _bool(text):
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _positive(v):
    return v > 0


# key: (parser, default, validator or None, description)
SCHEMA = {
    "space": (str, "h3", lambda v: v in ("h3", "s3", "r3"), "h3 | s3 | r3"),
    "kappa0": (float, None, lambda v: v != 0, "curvature (defaults: -1 on h3, 1 on s3)"),
    "delta": (float, 0.1, None, "decay-weight loss, 0 < delta < alpha0"),
    "seed": (int, 0, lambda v: v >= 0, "RNG seed"),
    "samples": (int, 20, _positive, "random samples for spectral-check"),
    "degree": (int, 8, lambda v: 0 <= v <= 16, "polynomial degree of test functions"),
    "ell_max": (int, 16, lambda v: 0 <= v <= 64, "largest spectral index"),
    "level": (int, 16, _positive, "S2 quadrature level"),
    "r": (_floats, [0.5, 1.0, 2.0, 4.0], lambda v: len(v) > 0 and all(x > 0 for x in v), "radii"),
    "weight": (str, "none", lambda v: v in ("none", "j"), "fundamental-integral weight"),
    "profile": (str, "gaussian", lambda v: v in ("gaussian", "exponential", "compact"),
                "perturbation profile"),
    "matrix": (str, "identity", lambda v: v in ("identity", "tracefree"), "perturbation matrix"),
    "eps": (float, 0.01, lambda v: v >= 0, "perturbation amplitude"),
    "potential": (str, "indicator", lambda v: v in ("indicator", "gaussian", "exponential", "zero"),
                  "potential family"),
    "amplitude": (float, 0.05, lambda v: v >= 0, "potential amplitude"),
    "dt": (float, 0.05, _positive, "time step of the kernel grid"),
    "T": (float, 4.0, _positive, "time window"),
    "r_max": (float, 20.0, _positive, "outer radius"),
    "t_list": (_floats, [1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
               lambda v: len(v) > 0 and all(x > 0 for x in v), "times for decay scans"),
    "kernel": (str, "free", lambda v: v in ("free", "perturbed"), "Schrodinger kernel source"),
    "tol": (float, 1e-6, _positive, "tolerance of the main check"),
    "c_max": (float, 4.0, _positive, "factorial-bound constant"),
    "only": (_ints, [], lambda v: all(1 <= k <= 12 for k in v), "acceptance criteria to run"),
    "dump_kernels": (_bool, False, None, "write full kernel CSV dumps"),
    "workers": (int, 1, _positive, "parallel workers (results identical at any value)"),
    "output_dir": (str, "curvewave-output", None, "output directory"),
}
# keys that do not change results
_NOT_HASHED = ("output_dir", "workers", "dump_kernels")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def resolve_config(raw: dict) -> dict:
    """Apply defaults, parse and validate; raises ConfigError naming config.<key>."""
    cfg = {}
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(f"config.{key}: unknown key")
    for key, (parse, default, check, desc) in SCHEMA.items():
        if key in raw and raw[key] is not None:
            try:
                val = parse(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config.{key}: cannot parse {raw[key]!r} ({desc})") from exc
        else:
            val = default
        if val is not None and check is not None and not check(val):
            raise ConfigError(f"config.{key}: invalid value {val!r} ({desc})")
        cfg[key] = val
    kappa0 = cfg["kappa0"]
    if kappa0 is None:
        kappa0 = {"h3": -1.0, "s3": 1.0, "r3": 0.0}[cfg["space"]]
    if (cfg["space"] == "h3" and kappa0 >= 0) or (cfg["space"] == "s3" and kappa0 <= 0):
        raise ConfigError(f"config.kappa0: sign does not match space {cfg['space']}")
    cfg["kappa0"] = kappa0
    alpha0 = float(np.sqrt(-kappa0)) if kappa0 < 0 else 0.0
    if cfg["space"] == "h3" and not 0 < cfg["delta"] < alpha0:
        raise ConfigError(f"config.delta: must lie in (0, alpha0 = {alpha0:g})")
    return cfg


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in _NOT_HASHED}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# reports


@dataclass
class Table:
    name: str
    columns: list
    units: list
    rows: list


@dataclass
class RunReport:
    experiment: str
    config_hash: str
    config: dict
    checks: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    tables: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def body(self) -> dict:
        from .acceptance import _plain

        return _plain({"experiment": self.experiment, "config_hash": self.config_hash,
                       "config": self.config, "checks": self.checks, "results": self.results,
                       "passed": self.passed})

    def to_json(self) -> str:
        doc = self.body()
        doc["wall_time_s"] = round(self.wall_time, 3)
        return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True)


def _check(name, measured, tolerance, passed, **details):
    return {"name": name, "measured": float(measured), "tolerance": float(tolerance),
            "passed": bool(passed), "details": details}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def table_csv(table: Table, report: RunReport) -> str:
    buf = io.StringIO()
    buf.write(f"# curvewave {report.experiment} table={table.name} config_sha256={report.config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"{c} [{u}]" for c, u in zip(table.columns, table.units)])
    for row in table.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_outputs(report: RunReport, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for table in report.tables:
        p = out_dir / f"{report.experiment}-{table.name}.csv"
        p.write_text(table_csv(table, report))
        paths.append(p)
    p = out_dir / f"{report.experiment}.json"
    p.write_text(report.to_json() + "\n")
    paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# experiments


def _space(cfg):
    from .manifold import Space

    if cfg["space"] == "h3":
        return Space.hyperbolic(float(np.sqrt(-cfg["kappa0"])))
    if cfg["space"] == "s3":
        return Space.sphere(cfg["kappa0"])
    return Space.flat()


def _potential(cfg):
    from . import kato

    name, amp = cfg["potential"], cfg["amplitude"]
    if name == "zero":
        return kato.zero_potential()
    return kato.builtin_potential(name, amp)


def run_spectral_check(cfg, report):
    from . import freeprop
    from .manifold import Space

    S3 = Space.sphere()
    rng = np.random.default_rng(cfg["seed"])
    rows, worst, anti = [], 0.0, 0.0
    for i in range(cfg["samples"]):
        f = freeprop.PolynomialFunction.random(rng, cfg["degree"])
        x = rng.normal(size=4)
        x /= np.linalg.norm(x)
        t = float(rng.uniform(0.05, 2 * np.pi - 0.05))
        geo = freeprop.apply_sine(S3, t, f, x, level=cfg["degree"] + 4)
        spec = freeprop.spectral_sine_apply(t, f, x, ell_max=cfg["degree"])
        mirror = freeprop.apply_sine(S3, 2 * np.pi - t, f, x, level=cfg["degree"] + 4)
        err = abs(geo - spec) / max(abs(spec), 1e-3 * np.abs(f.coeffs).sum())
        worst, anti = max(worst, err), max(anti, abs(geo + mirror))
        rows.append((i, t, geo, spec, err))
    report.tables.append(Table("samples", ["sample", "t", "geometric", "spectral", "rel_err"],
                               ["-", "length", "value", "value", "-"], rows))
    report.checks.append(_check("geometric vs spectral", worst, cfg["tol"], worst <= cfg["tol"]))
    report.checks.append(_check("antisymmetry S0(t) + S0(2pi - t)", anti, 1e-8, anti <= 1e-8))


def run_fundamental_integrals(cfg, report):
    from . import freeprop

    sp = _space(cfg)
    weight = sp.j if cfg["weight"] == "j" else None
    rows, worst = [], 0.0
    for r in cfg["r"]:
        num = freeprop.fundamental_integral_check(sp, r, weight=weight)
        ref = freeprop.fundamental_integral_closed(sp, r, weight=weight)
        err = abs(num - ref) / abs(ref)
        worst = max(worst, err)
        rows.append((r, num, ref, err))
    report.tables.append(Table("integrals", ["r", "numeric", "closed_form", "rel_err"],
                               ["length", "1/volume", "1/volume", "-"], rows))
    tol = max(cfg["tol"], 1e-8)
    report.checks.append(_check("numeric vs closed form", worst, tol, worst <= tol))


def run_jacobi(cfg, report):
    from . import jacobi, parametrix

    pe = jacobi.builtin_perturbation(cfg["profile"], cfg["eps"], cfg["matrix"])
    path = jacobi.integrate_transport(cfg["kappa0"], pe, cfg["r_max"])
    r = np.concatenate([np.geomspace(1e-3, 1.0, 40), np.linspace(1.0, cfg["r_max"], 96)[1:]])
    j = np.abs(jacobi.scalar_j(cfg["kappa0"], r))
    D, dD = path.deviation(r)
    dev = np.linalg.norm(D, ord=2, axis=(-2, -1)) / j
    ddev = np.linalg.norm(dD, ord=2, axis=(-2, -1)) / j
    a = path.area(r)[0]
    err = parametrix.error_values(path, r) * j
    report.tables.append(Table("transport", ["r", "dev_T_over_j", "dev_dT_over_j", "area", "error_times_j"],
                               ["length", "-", "1/length", "length^2", "1/length"],
                               list(zip(r, dev, ddev, a, err))))
    eps = max(cfg["eps"], 1e-300)
    s1, s2 = jacobi.small_r_slopes(path)
    report.results.update({"small_r_slope_T": s1, "small_r_slope_dT": s2})
    report.checks.append(_check("sup |T - jI|/j <= 2 eps", dev.max(), 2 * eps, dev.max() <= 2 * eps))
    report.checks.append(_check("sup |T' - j'I|/j <= 2 eps", ddev.max(), 2 * eps, ddev.max() <= 2 * eps))
    if cfg["eps"] > 0:
        report.checks.append(_check("small-r slope of T", s1, 2.9, s1 >= 2.9))
        report.checks.append(_check("small-r slope of T'", s2, 1.9, s2 >= 1.9))


def run_kato(cfg, report):
    from . import kato

    sp = _space(cfg)
    V = _potential(cfg)
    rep = kato.kato_report(sp, V, delta=cfg["delta"])
    doc = json.loads(rep.to_json())
    report.results["kato_report"] = doc
    rows = [(k, doc[k]) for k in ("kato", "modified_kato", "kato_delta", "l1", "l1_gamma")]
    report.tables.append(Table("norms", ["norm", "value"], ["-", "potential*length^2"], rows))
    finite = all(np.isfinite(v) for _, v in rows)
    report.checks.append(_check("all norms finite", float(finite), 1, finite))


def run_parametrix(cfg, report):
    from . import jacobi, parametrix

    pe = jacobi.builtin_perturbation(cfg["profile"], cfg["eps"], cfg["matrix"])
    T, dt = cfg["T"], cfg["dt"]
    n = int(round(T / dt))
    path = jacobi.integrate_transport(cfg["kappa0"], pe, T + 1.0)
    S0 = parametrix.perturbed_parametrix(path, dt, n)
    E = parametrix.error_kernel(path, dt, n)
    res = parametrix.iterate_error_series(S0, E)
    C = parametrix.factorial_constant(res.norms, max(cfg["eps"], 1e-300), T) if cfg["eps"] > 0 else 0.0
    resid = parametrix.algebraic_residual(S0, E, res.total)
    rows = [(k, u, l) for k, (u, l) in enumerate(zip(res.norms, res.linf_norms))]
    report.tables.append(Table("series", ["n", "u_l1_norm", "sup_t_l1_norm"],
                               ["-", "time", "-"], rows))
    report.results.update({"factorial_constant": C, "algebraic_residual": resid})
    if cfg["dump_kernels"]:
        report.tables.append(Table("kernel", ["t", "r", "shell_coeff", "ac"],
                                   ["time", "length", "1/area", "1/volume"], res.total.dump_rows()))
    report.checks.append(_check("factorial constant", C, cfg["c_max"], C <= cfg["c_max"]))


def run_born(cfg, report):
    from . import kato, parametrix

    sp = _space(cfg)
    V = _potential(cfg)
    T, dt = cfg["T"], cfg["dt"]
    res = parametrix.born_series_potential(sp, V, dt, int(round(T / dt)))
    kn = kato.kato_norm(sp, V)
    rows = [(k, u, l) for k, (u, l) in enumerate(zip(res.norms, res.linf_norms))]
    report.tables.append(Table("series", ["n", "u_l1_norm", "sup_t_l1_norm"], ["-", "time", "-"], rows))
    if cfg["dump_kernels"]:
        report.tables.append(Table("kernel", ["t", "r", "shell_coeff", "ac"],
                                   ["time", "length", "1/area", "1/volume"], res.total.dump_rows()))
    worst = max(res.ratios) if res.ratios else 0.0
    report.results.update({"kato_norm": kn, "ratios": res.ratios})
    report.checks.append(_check("term ratio <= 2 ||V||_K", worst, 2 * kn, worst <= 2 * kn))


def run_schrodinger(cfg, report):
    from . import schrodinger

    r = np.arange(0.0, min(cfg["r_max"], 10.0) + 1e-9, 0.1)
    if cfg["kernel"] == "free":
        source = schrodinger.free_kernel_oscillatory
    else:
        from .acceptance import perturbed_sine_kernel

        series, _ = perturbed_sine_kernel(kato_size=cfg["amplitude"], dt=cfg["dt"],
                                          T=max(cfg["T"], float(r[-1])))
        r = r[np.isclose(r / cfg["dt"], np.round(r / cfg["dt"]))]
        source = lambda t, rr: schrodinger.perturbed_kernel(series.total, t, rr)  # noqa: E731
    rows = schrodinger.decay_scan(source, cfg["t_list"], r)
    report.tables.append(Table("decay", ["t", "sup_abs_K", "t32_sup_abs_K"],
                               ["time", "1/volume", "time^1.5/volume"], rows))
    if cfg["dump_kernels"]:
        dump = []
        for t in cfg["t_list"]:
            K = source(t, r)
            dump += [(t, rr, v.real, v.imag) for rr, v in zip(r, K.values)]
        report.tables.append(Table("kernel", ["t", "r", "re_K", "im_K"],
                                   ["time", "length", "1/volume", "1/volume"], dump))
    col = [row[2] for row in rows]
    report.results["sup_t32_K"] = max(col)
    if cfg["kernel"] == "free":
        c = schrodinger.FREE_DECAY_CONSTANT
        err = max(abs(v - c) / c for v in col)
        report.checks.append(_check("t^{3/2} sup |K| = (4 pi)^{-3/2}", err, cfg["tol"], err <= cfg["tol"]))
    else:
        report.checks.append(_check("t^{3/2} sup |K| bounded", max(col), float("inf"), np.isfinite(max(col))))


def run_decay_scan(cfg, report):
    from .acceptance import check_exponential_decay

    res = check_exponential_decay(amplitude=cfg["amplitude"], T_max=cfg["T"],
                                  delta_frac=cfg["delta"] / _space(cfg).alpha0)
    report.tables.append(Table("decay", ["t", "sinh_rate_t_sup_u"], ["time", "1/volume"],
                               res.details["profile"]))
    report.results.update({k: v for k, v in res.details.items() if k != "profile"})
    report.checks.append(_check(res.name, res.measured, res.tolerance, res.passed))


def _acceptance_worker(k):
    from . import acceptance

    return acceptance.CHECKS[k]()


def run_acceptance(cfg, report, echo=None):
    from . import acceptance

    numbers = cfg["only"] or sorted(acceptance.CHECKS)
    if cfg["workers"] > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg["workers"]) as ex:
            results = list(ex.map(_acceptance_worker, numbers))
    else:
        results = acceptance.run(numbers, echo=echo)
    rows = []
    for r in results:
        d = r.as_dict()
        report.checks.append({"name": f"criterion {r.number}: {r.name}", "measured": d["measured"],
                              "tolerance": d["tolerance"], "passed": d["passed"],
                              "details": d["details"]})
        rows.append((r.number, r.name, r.measured, r.tolerance, "PASS" if r.passed else "FAIL"))
    report.tables.append(Table("criteria", ["criterion", "name", "measured", "tolerance", "status"],
                               ["-", "-", "-", "-", "-"], rows))


RUNNERS = {
    "spectral-check": run_spectral_check,
    "fundamental-integrals": run_fundamental_integrals,
    "jacobi-run": run_jacobi,
    "kato-norm": run_kato,
    "parametrix": run_parametrix,
    "born-series": run_born,
    "schrodinger-decay": run_schrodinger,
    "decay-scan": run_decay_scan,
    "acceptance": run_acceptance,
}

_FLAG_KEYS = ("space", "r", "eps", "profile", "matrix", "potential", "amplitude", "dt", "T",
              "seed", "delta", "kernel", "only", "workers", "tol")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curvewave", description="Wave and Schrodinger propagator experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value config file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        s.add_argument("--output-dir", help=f"output directory (else ${ENV_OUTPUT})")
        s.add_argument("--dump-kernels", action="store_true", default=None)
        for key in _FLAG_KEYS:
            s.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                           help=SCHEMA[key][3])
    return p


def _numeric_errors():
    from .jacobi import ConjugatePointError, ConvergenceError, IntegrationError
    from .kato import DivergentIntegralError
    from .parametrix import DivergenceError, GridError
    from .schrodinger import ResolutionError

    return (ArithmeticError, FloatingPointError, IntegrationError, ConjugatePointError,
            ConvergenceError, DivergentIntegralError, DivergenceError, GridError, ResolutionError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = {}
        if args.config:
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                raise ConfigError(f"config: cannot read {args.config} ({exc.strerror})") from exc
            raw.update(parse_config_text(text, args.config))
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
            k, v = item.split("=", 1)
            raw[k.strip()] = v.strip()
        for key in _FLAG_KEYS:
            if getattr(args, key) is not None:
                raw[key] = getattr(args, key)
        if args.dump_kernels:
            raw["dump_kernels"] = True
        cfg = resolve_config(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.output_dir or os.environ.get(ENV_OUTPUT) or cfg["output_dir"])
    report = RunReport(args.command, config_hash(cfg),
                       {k: v for k, v in cfg.items() if k not in _NOT_HASHED})
    t0 = time.perf_counter()
    try:
        with np.errstate(over="raise", invalid="ignore", divide="ignore"):
            RUNNERS[args.command](cfg, report)
    except _numeric_errors() as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    report.wall_time = time.perf_counter() - t0
    for table in report.tables:
        if args.command != "acceptance" and len(table.rows) <= 60:
            print(",".join(table.columns))
            for row in table.rows:
                print(",".join(f"{v:.6f}" if isinstance(v, (float, np.floating)) else str(v) for v in row))
    for c in report.checks:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: measured {c['measured']:.6g} "
              f"(tolerance {c['tolerance']:.3g})")
    paths = write_outputs(report, out_dir)
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return EXIT_OK if report.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
