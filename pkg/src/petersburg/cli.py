"""Command-line front end.

Exit status: 0 on success, 2 for invalid input (configuration, hypotheses,
arguments, unwritable output) and 3 when a numerical procedure fails.
"""

import argparse
import csv
import json
import os
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import game_model as gm
from . import limit_laws as ll
from . import report
from . import sampler as smp
from .config import parse_config
from .errors import ConfigError, DomainError, NumericalError, ResourceError
from .experiments import KINDS, ExperimentConfig, effective_seed, run_experiment
from .game_model import GameParams
from .rng import SEED_ENV_VAR

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
EXACT_QUANTITIES = ("pmf", "tail", "moment", "truncated-mean", "mu", "max-cdf",
                    "max-exceedance", "net-gain", "sum-law", "regime")
_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


class _Invalid(Exception):
    pass


def _int_auto(text):
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def _common(parser):
    parser.add_argument("--config", help="YAML experiment file ('-' reads stdin)")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    seeds = parser.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=_int_auto, help=f"master seed; overrides ${SEED_ENV_VAR}")
    seeds.add_argument("--wallclock-seed", action="store_true",
                       help="seed from the clock and print the chosen value")
    parser.add_argument("--format", choices=report.FORMATS, default="csv")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for replicates")
    parser.add_argument("-q", "--quiet", action="store_true", help="no progress messages")
    parser.add_argument("--timing", action="store_true", help="fill the walltime_ms column")


def _params_flags(parser):
    parser.add_argument("--p", type=float, default=None)
    parser.add_argument("--s", type=float, default=None)
    parser.add_argument("--r", type=float, default=None)


_INLINE = ("n", "R", "u", "b", "eps", "a", "t_grid", "tol", "method", "no_ks",
           "mc_n", "sandwich_n_max", "name", "p", "s", "r")


def _experiment_flags(parser):
    _params_flags(parser)
    parser.add_argument("--n", type=int, nargs="+")
    parser.add_argument("--R", type=int)
    parser.add_argument("--u", type=float)
    parser.add_argument("--b", type=float)
    parser.add_argument("--eps", type=float, nargs="+")
    parser.add_argument("--a", type=float)
    parser.add_argument("--t-grid", dest="t_grid", type=float, nargs="+")
    parser.add_argument("--tol", type=float)
    parser.add_argument("--method", choices=("auto", "direct", "closed"))
    parser.add_argument("--no-ks", dest="no_ks", action="store_true", default=None,
                        help="skip the KS comparison (no limit CDF inversion)")
    parser.add_argument("--mc-n", dest="mc_n", type=int, nargs="+")
    parser.add_argument("--sandwich-n-max", dest="sandwich_n_max", type=int)
    parser.add_argument("--name")


def build_parser():
    parser = argparse.ArgumentParser(prog="petersburg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run every experiment in a config file")
    _common(run)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        _common(p)
        _experiment_flags(p)
    ex = sub.add_parser("exact", help="evaluate an exact game-model formula")
    ex.add_argument("quantity", choices=EXACT_QUANTITIES)
    _params_flags(ex)
    ex.add_argument("--x", type=float)
    ex.add_argument("--k", type=int)
    ex.add_argument("--beta", type=float)
    ex.add_argument("--n", type=int)
    ex.add_argument("--k-cap", dest="k_cap", type=int, default=gm.MAX_ENUM_K)
    ex.add_argument("--format", choices=report.FORMATS, default="csv")
    cf = sub.add_parser("cf", help="print g(t) and the limit CF over a t-grid")
    _params_flags(cf)
    cf.add_argument("--variant", choices=[v.value for v in ll.ExponentVariant])
    cf.add_argument("--a", type=float)
    cf.add_argument("--u", type=float, default=1.0)
    cf.add_argument("--t", type=float, nargs="+", default=[0.1, 0.5, 1.0, 2.0, 5.0, 10.0])
    cf.add_argument("--format", choices=report.FORMATS, default="csv")
    return parser


def _game_params(args):
    given = [v is not None for v in (args.p, args.s, args.r)]
    if not any(given):
        return GameParams.classical()
    if not all(given):
        raise _Invalid("give all of --p, --s and --r, or none for the classical game")
    return GameParams(args.p, args.s, args.r)


def _explicit_seed(args, stderr):
    if getattr(args, "wallclock_seed", False):
        seed = time.time_ns() & ((1 << 64) - 1)
        print(f"seed: {seed}", file=stderr)
        return seed
    if args.seed is not None:
        return args.seed
    value = os.environ.get(SEED_ENV_VAR)
    if value not in (None, ""):
        try:
            return int(value, 0)
        except ValueError:
            raise _Invalid(f"${SEED_ENV_VAR} is not an integer: {value!r}") from None
    return None


def _read_config(path, default_kind):
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as err:
        raise _Invalid(f"cannot read config: {err}") from None
    return parse_config(text, default_kind)


def _inline_config(args):
    fields = {k: getattr(args, k) for k in ("n", "R", "u", "b", "eps", "a", "t_grid", "tol",
                                             "method", "mc_n", "sandwich_n_max", "name")}
    fields = {k: v for k, v in fields.items() if v is not None}
    if args.no_ks:
        fields["ks"] = False
    if "n" not in fields:
        raise _Invalid("--n is required without --config")
    cfg = ExperimentConfig(kind=args.command, params=_game_params(args), **fields)
    try:
        return cfg.validate()
    except DomainError as err:
        field = getattr(err, "field", None)
        flag = {"params": "--p/--s/--r", "t_grid": "--t-grid"}.get(field, f"--{field}")
        raise ConfigError(str(err), field=flag if field else None) from None


def _configs(args):
    if args.command == "run":
        if args.config is None:
            raise _Invalid("run needs --config")
        return _read_config(args.config, None)
    if args.config is not None:
        inline = [k for k in _INLINE if getattr(args, k) is not None]
        if inline:
            raise _Invalid(f"--{inline[0].replace('_', '-')} cannot be combined with --config")
        return _read_config(args.config, args.command)
    return [_inline_config(args)]


def report_filename(label, fmt):
    return f"{_UNSAFE.sub('_', label)}.{fmt}"


def _run_experiments(args, stdout, stderr):
    if args.jobs < 1:
        raise _Invalid("--jobs must be >= 1")
    configs = _configs(args)
    seed = _explicit_seed(args, stderr)
    if not configs:
        return EXIT_OK
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise _Invalid(f"cannot create output directory: {err}") from None
    if not os.access(out, os.W_OK):
        raise _Invalid(f"output directory {out} is not writable")
    for cfg in configs:
        used = effective_seed(cfg, seed)
        rep = run_experiment(cfg, seed=used, jobs=args.jobs, timing=args.timing)
        path = out / report_filename(cfg.label, args.format)
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(report.render(rep, args.format, seed=used))
        except OSError as err:
            raise _Invalid(f"cannot write report: {err}") from None
        if not args.quiet:
            print(f"{cfg.label}: {len(rep.rows)} rows -> {path}", file=stderr)
    return EXIT_OK


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise _Invalid(f"{args.quantity} needs --{name.replace('_', '-')}")


def _exact_rows(args):
    P = _game_params(args)
    q = args.quantity
    if q == "pmf":
        _need(args, "k")
        value, prob = gm.pmf(P, args.k)
        return ("k", "value", "probability"), [(args.k, value, prob)]
    if q == "tail":
        _need(args, "x")
        return ("x", "tail"), [(args.x, gm.tail(P, args.x))]
    if q == "moment":
        _need(args, "beta")
        return ("beta", "moment"), [(args.beta, gm.moment(P, args.beta))]
    if q == "truncated-mean":
        _need(args, "x")
        return ("x", "truncated_mean"), [(args.x, gm.truncated_mean(P, args.x))]
    if q == "mu":
        _need(args, "x")
        return ("x", "mu"), [(args.x, gm.mu(P, args.x))]
    if q == "max-cdf":
        _need(args, "n", "x")
        return ("n", "x", "cdf"), [(args.n, args.x, gm.exact_max_cdf(P, args.n, args.x))]
    if q == "max-exceedance":
        _need(args, "n", "x")
        return ("n", "x", "exceedance"), [(args.n, args.x, gm.max_exceedance(P, args.n, args.x))]
    if q == "net-gain":
        _need(args, "n")
        return ("n", "expected_net_gain"), [(args.n, smp.expected_net_gain(P, args.n))]
    if q == "sum-law":
        _need(args, "n")
        law = gm.exact_sum_distribution(P, args.n, args.k_cap)
        rows = [(float(v), float(w)) for v, w in zip(law.values, law.probs)]
        rows.append(("truncated", law.truncation_mass))
        return ("value", "probability"), rows
    return ("regime", "rq"), [(P.regime().value, P.rq)]


def _cf_rows(args):
    P = _game_params(args)
    if args.variant is None:
        variant = (ll.ExponentVariant.COMPENSATED_FELLER if P.regime() is gm.Regime.FELLER
                   else ll.ExponentVariant.UNCOMPENSATED)
    else:
        variant = ll.ExponentVariant(args.variant)
    spec = ll.LevyExponentSpec(variant, P, a=args.a)
    t = np.asarray(args.t, dtype=float)
    g = np.atleast_1d(ll.levy_exponent(spec, t))
    phi = np.atleast_1d(ll.cf_limit(spec, args.u, t))
    rows = [(float(tt), float(gg.real), float(gg.imag), float(ff.real), float(ff.imag))
            for tt, gg, ff in zip(t, g, phi)]
    return ("t", "g_re", "g_im", "phi_re", "phi_im"), rows


def _emit_table(header, rows, fmt, stdout):
    if fmt == "json":
        records = [{h: report.json_number(v) for h, v in zip(header, row)} for row in rows]
        stdout.write(json.dumps(records, indent=2, allow_nan=False) + "\n")
        return
    writer = csv.writer(stdout, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([report.format_cell(v) for v in row])


def main(argv=None, stdout=None, stderr=None):
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_INVALID
    try:
        if args.command == "exact":
            _emit_table(*_exact_rows(args), args.format, stdout)
            return EXIT_OK
        if args.command == "cf":
            _emit_table(*_cf_rows(args), args.format, stdout)
            return EXIT_OK
        return _run_experiments(args, stdout, stderr)
    except (ConfigError, DomainError, ResourceError, _Invalid) as err:
        print(f"error: {err}", file=stderr)
        return EXIT_INVALID
    except NumericalError as err:
        print(f"numerical failure: {err}", file=stderr)
        for key, value in sorted(err.diagnostics.items()):
            if key != "pieces":
                print(f"  {key}: {value}", file=stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
