"""Command-line entry point: ``sla <subcommand> [options]``.

Settings are layered as flags over a JSON ``--config`` file over built-in
defaults.  Exit codes: 0 when every check passes, 1 when a check fails, 2 on
usage errors or invalid dimensions.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

from . import analysis, bench, gradcheck, kernels, theory, verify
from .errors import DegenerateInputError, ParameterError
from .mechanisms import AttentionConfig, MechanismKind, count_gate_params
from .report import RunReport
from .tensor import FeatureMapKind

SUBCOMMANDS = ("verify", "theorem", "gradcheck", "needle", "bench", "params")

BANDS = {("full-softmax", "parallel"): (1.6, 2.4),
         ("sla", "recurrent"): (0.7, 1.3),
         ("sla", "chunkwise"): (0.7, 1.3)}

# Per-subcommand defaults layered under the config file and flags.
SUBCOMMAND_DEFAULTS = {
    "verify": dict(L=64, H=4, dk=8, seeds=1),
    "theorem": dict(H=None, seeds=100, lmax=1e3),
    "gradcheck": dict(L=4, H=2, dk=3, seeds=5, fmap="identity"),
    "needle": dict(L_grid=[256], H=4, dk=8, dv=8, seeds=50, routing="soft"),
    "bench": dict(L_grid=[512, 1024, 2048, 4096, 8192], H=2, dk=32, reps=5,
                  mechanisms=["full-softmax", "sla"]),
    "params": dict(layers=24, dk=256, H=4),
}


@dataclass
class CliConfig:
    subcommand: str = ""
    seed: int = 0
    L: int = 64
    H: int | None = 4
    dk: int = 8
    dv: int | None = None
    C: int | None = None
    mechanism: str = "sla"
    fmap: str | None = None
    lambdas: list[float] | None = None
    out: str | None = None
    format: str = "csv"
    seeds: int = 1
    workers: int = 1
    # theorem
    sq: list[float] | None = None
    sk: list[float] | None = None
    lmax: float = 1e3
    # gradcheck
    h: float = gradcheck.FD_STEP
    # needle
    L_grid: list[int] = field(default_factory=lambda: [256])
    routing: str = "soft"
    # bench
    reps: int = 5
    mechanisms: list[str] = field(default_factory=lambda: ["full-softmax", "sla"])
    compare_backends: bool = False
    # params
    layers: int = 24

    def attention_config(self, **overrides) -> AttentionConfig:
        """Validate the dimension fields against :class:`AttentionConfig` invariants."""
        kw = dict(seq_len=self.L, heads=self.H, key_dim=self.dk, value_dim=self.dv,
                  feature_map=self.fmap, chunk_size=self.C, mechanism=self.mechanism)
        kw.update(overrides)
        return AttentionConfig(**kw)

    def describe(self) -> str:
        keys = ("seed", "L", "H", "dk", "dv", "C", "mechanism", "fmap")
        return " ".join(f"{k}={getattr(self, k)}" for k in keys if getattr(self, k) is not None)


CONFIG_FIELDS = {f.name for f in fields(CliConfig)}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--seed", type=int, help="base seed (default: $SLA_SEED or 0)")
    common.add_argument("--config", dest="config_path", metavar="PATH",
                        help="JSON file with CliConfig field names; flags override it")
    common.add_argument("--out", help="write machine-readable results to this path")
    common.add_argument("--format", choices=("csv", "json"), help="format for --out (default csv)")

    dims = argparse.ArgumentParser(add_help=False, argument_default=S)
    dims.add_argument("--L", type=int, help="sequence length")
    dims.add_argument("--H", "--heads", dest="H", type=int, help="number of heads")
    dims.add_argument("--dk", type=int, help="key dimension per head")
    dims.add_argument("--dv", type=int, help="value dimension per head (default dk)")
    dims.add_argument("--C", type=int, help="chunk size")
    dims.add_argument("--fmap", choices=[k.value for k in FeatureMapKind], help="feature map")
    dims.add_argument("--seeds", type=int, help="number of consecutive seeds starting at --seed")

    parser = argparse.ArgumentParser(prog="sla", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    sub.required = True

    p = sub.add_parser("verify", parents=[common, dims], argument_default=S,
                       help="strategy equivalence, reduction laws, streaming and causality")
    p.add_argument("--workers", type=int, help="threads to fan seeds across")

    p = sub.add_parser("theorem", parents=[common], argument_default=S,
                       help="gate sharpening, winner-take-all limit and magnitude invariance")
    p.add_argument("--sq", type=_floats, help="query-side head scores, comma separated")
    p.add_argument("--sk", type=_floats, help="key-side head scores, comma separated")
    p.add_argument("--lmax", type=float, help="largest lambda for the limit checks")
    p.add_argument("--lambdas", type=_floats, help="ascending lambda grid for the sweep")
    p.add_argument("--H", "--heads", dest="H", type=int, help="restrict random suites to one head count")
    p.add_argument("--seeds", type=int, help="random cases per suite when --sq/--sk are absent")

    p = sub.add_parser("gradcheck", parents=[common, dims], argument_default=S,
                       help="analytic vs central-difference gradients of the SLA loss")
    p.add_argument("--h", type=float, help="finite-difference step")

    p = sub.add_parser("needle", parents=[common], argument_default=S,
                       help="needle retrieval: sla vs linear vs softmax attention")
    p.add_argument("--L", dest="L_grid", type=_ints, help="comma-separated sequence lengths")
    p.add_argument("--H", "--heads", dest="H", type=int)
    p.add_argument("--dk", type=int)
    p.add_argument("--dv", type=int)
    p.add_argument("--seeds", type=int, help="instances per length")
    p.add_argument("--routing", choices=analysis.ROUTINGS)

    p = sub.add_parser("bench", parents=[common], argument_default=S,
                       help="wall-clock scaling in L and fitted exponents")
    p.add_argument("--L", dest="L_grid", type=_ints, help="comma-separated ascending lengths")
    p.add_argument("--H", "--heads", dest="H", type=int)
    p.add_argument("--dk", type=int)
    p.add_argument("--dv", type=int)
    p.add_argument("--C", type=int, help="chunk size (clipped to each L)")
    p.add_argument("--reps", type=int)
    p.add_argument("--mechanisms", type=_names, help="comma-separated mechanism kinds")
    p.add_argument("--compare-backends", dest="compare_backends", action="store_true",
                   help="also time the recurrent scan on every available backend")
    p.add_argument("--workers", type=int, help="threads to time grid points on")

    p = sub.add_parser("params", parents=[common], argument_default=S,
                       help="extra parameters introduced by the head gates")
    p.add_argument("--layers", type=int)
    p.add_argument("--dk", type=int)
    p.add_argument("--H", "--heads", dest="H", type=int)
    return parser


def load_config(args: argparse.Namespace, environ=None) -> CliConfig:
    """Defaults, then subcommand defaults, then ``$SLA_SEED``, then the JSON file, then flags."""
    environ = os.environ if environ is None else environ
    values = asdict(CliConfig())
    values.update(SUBCOMMAND_DEFAULTS[args.subcommand])
    if environ.get("SLA_SEED"):
        try:
            values["seed"] = int(environ["SLA_SEED"])
        except ValueError:
            raise UsageError(f"SLA_SEED must be an integer, got {environ['SLA_SEED']!r}")
    flags = vars(args).copy()
    path = flags.pop("config_path", None)
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}")
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(data) - CONFIG_FIELDS
        if unknown:
            raise UsageError(f"unknown config fields: {', '.join(sorted(unknown))}")
        if data.get("subcommand", args.subcommand) != args.subcommand:
            raise UsageError(f"config is for {data['subcommand']!r}, not {args.subcommand!r}")
        values.update(data)
    values.update(flags)
    cfg = CliConfig(**values)
    if cfg.format not in ("csv", "json"):
        raise UsageError(f"format must be csv or json, got {cfg.format!r}")
    return cfg


def _emit(report: RunReport, cfg: CliConfig) -> None:
    if cfg.out:
        report.meta.setdefault("config", asdict(cfg))
        report.write(cfg.out, cfg.format)


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return str(x)
    if isinstance(x, float):
        return f"{x:.3e}" if x and (abs(x) < 1e-3 or abs(x) >= 1e4) else f"{x:.6g}"
    return str(x)


def _table(rows, cols, out) -> None:
    cells = [[_fmt(r.get(c)) for c in cols] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(cols)]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)), file=out)
    for row in cells:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)), file=out)


def _report_failures(report: RunReport, cfg: CliConfig, out) -> None:
    for case in report.failures:
        detail = " ".join(f"{k}={_fmt(v)}" for k, v in case.items() if k != "passed")
        print(f"FAIL [{cfg.describe()}] {detail}", file=out)


def _seeds(cfg: CliConfig) -> list[int]:
    if cfg.seeds < 1:
        raise ParameterError(f"seeds must be >= 1, got {cfg.seeds}")
    return list(range(cfg.seed, cfg.seed + cfg.seeds))


def cmd_verify(cfg: CliConfig, out) -> int:
    config = cfg.attention_config()
    report = verify.verify_report(config, _seeds(cfg), workers=cfg.workers)
    _table(verify.summarize(report), ["check", "max_error", "tol", "worst_seed", "passed"], out)
    _emit(report, cfg)
    _report_failures(report, cfg, out)
    return 0 if report.passed else 1


def cmd_theorem(cfg: CliConfig, out) -> int:
    lambdas = cfg.lambdas or theory.default_lambda_grid()
    if cfg.sq is not None or cfg.sk is not None:
        sq = cfg.sq if cfg.sq is not None else cfg.sk
        sk = cfg.sk if cfg.sk is not None else cfg.sq
        sweep = theory.gate_entropy_sweep(theory.SweepGrid(lambdas, sq, sk))
        verdict = theory.wta_limit_check(sq, sk, cfg.lmax)  # tied maxima: exit 2
        print("lambda  entropy_q  entropy_k  c_lambda", file=out)
        for row in zip(sweep.lambdas, sweep.entropy_q, sweep.entropy_k, sweep.c_lambda):
            print("  ".join(_fmt(float(x)) for x in row), file=out)
        print(f"monotone_q={sweep.monotone_q} monotone_k={sweep.monotone_k} "
              f"limit_q={sweep.limit_q} limit_k={sweep.limit_k}", file=out)
        report = RunReport("theorem", meta={"sq": list(sq), "sk": list(sk), "lmax": cfg.lmax},
                           columns=["lambda", "entropy_q", "entropy_k", "c_lambda"])
        for lam, eq, ek, c in zip(sweep.lambdas, sweep.entropy_q, sweep.entropy_k, sweep.c_lambda):
            report.add(**{"lambda": lam, "entropy_q": eq, "entropy_k": ek, "c_lambda": c})
        print(f"C({_fmt(cfg.lmax)}) = {verdict.achieved!r} target={verdict.target:g} "
              f"error={verdict.error:.3e} {'pass' if verdict.passed else 'FAIL'}", file=out)
        report.meta.update(target=verdict.target, achieved=verdict.achieved,
                           limit_passed=verdict.passed)
        ok = sweep.passed and verdict.passed
        report.meta["passed"] = ok
        _emit(report, cfg)
        if not ok:
            print(f"FAIL seed={cfg.seed} sq={sq} sk={sk} lmax={cfg.lmax}", file=out)
        return 0 if ok else 1

    heads = theory.SUITE_HEADS if cfg.H is None else (cfg.H,)
    if any(h < 2 for h in heads):
        raise ParameterError("random theorem suites need H >= 2")
    suites = [theory.entropy_suite(cfg.seed, cfg.seeds, heads, cfg.lmax, lambdas),
              theory.wta_suite(cfg.seed, cfg.seeds, heads, cfg.lmax),
              theory.invariance_suite(cfg.seed, cfg.seeds)]
    combined = RunReport("theorem", meta={"seed": cfg.seed, "count": cfg.seeds},
                         columns=["suite", "case", "max_error", "tol", "passed"])
    rows = []
    for s in suites:
        for c in s.cases:
            err = c.get("max_error", max(c.get("max_weight_dev", 0.0), c.get("max_entropy_dev", 0.0)))
            combined.add(suite=s.name, **{k: v for k, v in c.items() if k != "max_error"},
                         max_error=err)
        errs = [c["max_error"] for c in combined.cases if c["suite"] == s.name]
        rows.append(dict(suite=s.name, cases=len(s.cases), max_error=max(errs),
                         tol=s.cases[0]["tol"], passed=s.passed))
    _table(rows, ["suite", "cases", "max_error", "tol", "passed"], out)
    _emit(combined, cfg)
    _report_failures(combined, cfg, out)
    return 0 if combined.passed else 1


def cmd_gradcheck(cfg: CliConfig, out) -> int:
    config = cfg.attention_config(mechanism=MechanismKind.SLA)
    report = gradcheck.gradcheck_report(config, _seeds(cfg), h=cfg.h)
    _table(report.cases, report.columns, out)
    _emit(report, cfg)
    _report_failures(report, cfg, out)
    return 0 if report.passed else 1


def cmd_needle(cfg: CliConfig, out) -> int:
    seeds = _seeds(cfg)
    dv = cfg.dv or cfg.dk
    report = analysis.compare_mechanisms(seeds, cfg.L_grid, cfg.H, cfg.dk, dv, cfg.routing)
    filtering = 0.0
    for L in cfg.L_grid:
        for seed in seeds:
            inst = analysis.build_needle_instance(L, cfg.H, cfg.dk, dv, analysis.Rng(seed))
            filtering = max(filtering, analysis.perfect_filtering_error(inst))
    for case in report.cases:
        case["passed"] = case["win_rate"] >= analysis.MIN_WIN_RATE
    report.meta["perfect_filtering_error"] = filtering
    _table(report.cases, report.columns + ["passed"], out)
    ok_filter = filtering <= analysis.FILTERING_TOL
    print(f"perfect filtering max error {filtering:.3e} (tol {analysis.FILTERING_TOL:g}) "
          f"{'pass' if ok_filter else 'FAIL'}", file=out)
    _emit(report, cfg)
    _report_failures(report, cfg, out)
    return 0 if report.passed and ok_filter else 1


def cmd_bench(cfg: CliConfig, out) -> int:
    points, exponents, checks = [], {}, []
    for name in cfg.mechanisms:
        config = AttentionConfig(max(cfg.L_grid), cfg.H, cfg.dk, cfg.dv, chunk_size=cfg.C,
                                 mechanism=name)
        pts = bench.time_mechanism(config, cfg.L_grid, cfg.reps, seed=cfg.seed,
                                   workers=cfg.workers)
        points.extend(pts)
        for strategy in bench.default_strategies(config.mechanism):
            s = bench.series(pts, config.mechanism.value, strategy)
            key = f"{config.mechanism.value}/{strategy}"
            try:
                exponents[key] = bench.fit_scaling_exponent(s)
            except ParameterError:
                continue
            band = BANDS.get((config.mechanism.value, strategy))
            if band is not None:
                checks.append((key, exponents[key], band))
            if strategy != "parallel":
                sizes = {p.state_bytes for p in s}
                checks.append((f"{key} state bytes", len(sizes), (1, 1)))
    if cfg.compare_backends:
        config = AttentionConfig(max(cfg.L_grid), cfg.H, cfg.dk, cfg.dv, chunk_size=cfg.C)
        points.extend(bench.compare_backends(config, cfg.L_grid, cfg.reps, cfg.seed))
    report = bench.bench_report(points, exponents)
    _table(report.cases, report.columns, out)
    for key, slope in exponents.items():
        print(f"slope {key}: {slope:.3f}", file=out)
    ok = True
    for key, value, (lo, hi) in checks:
        good = lo <= value <= hi
        ok = ok and good
        print(f"{'pass' if good else 'FAIL'} {key}: {_fmt(value)} in [{lo}, {hi}]", file=out)
    report.meta["checks"] = [dict(check=k, value=v, low=lo, high=hi, passed=lo <= v <= hi)
                             for k, v, (lo, hi) in checks]
    report.meta["backend"] = kernels.BACKEND
    _emit(report, cfg)
    if not ok:
        print(f"FAIL [{cfg.describe()}] L_grid={cfg.L_grid} reps={cfg.reps}", file=out)
    return 0 if ok else 1


def cmd_params(cfg: CliConfig, out) -> int:
    n = count_gate_params(cfg.layers, cfg.dk, cfg.H)
    print(n, file=out)
    if cfg.out:
        report = RunReport("params", columns=["layers", "dk", "H", "gate_params"])
        report.add(layers=cfg.layers, dk=cfg.dk, H=cfg.H, gate_params=n)
        _emit(report, cfg)
    return 0


COMMANDS = {"verify": cmd_verify, "theorem": cmd_theorem, "gradcheck": cmd_gradcheck,
            "needle": cmd_needle, "bench": cmd_bench, "params": cmd_params}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on unknown flags
    sub = parser._subparsers._group_actions[0].choices[args.subcommand]
    try:
        cfg = load_config(args)
        cfg.subcommand = args.subcommand
        return COMMANDS[args.subcommand](cfg, out)
    except (UsageError, ParameterError, DegenerateInputError) as exc:
        sub.print_usage(sys.stderr)
        print(f"{sub.prog}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
