"""Command-line entry point.

Every output starts with a header ``# urnstable <version> <config json>``
(CSV) or carries ``urnstable_version`` and ``config`` keys (JSON). Floats
are written as ``%.16e``. Exit codes: 0 success, 1 failed verification
gate, 2 invalid parameters, 3 I/O failure.

Environment: ``URNSTABLE_THREADS`` sets the worker count, ``URNSTABLE_OUTDIR``
is prepended to relative ``--out`` paths.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, freq, heavytail, limitlaw, rng as rngmod, urnsim, verify
from .errors import DecompositionUnavailable, NumericalError, ParameterError

EXIT_OK, EXIT_GATE, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None
    format: str = "csv"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


# -- formatting and output ----------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.16e}"


def csv_text(cfg: RunConfig, columns, rows) -> str:
    lines = [f"# urnstable {__version__} {cfg.to_json()}", ",".join(columns)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def resolve_out(path: str | None) -> str | None:
    if path is None or path == "-":
        return None
    base = os.environ.get("URNSTABLE_OUTDIR")
    if base and not os.path.isabs(path):
        path = os.path.join(base, path)
    return path


def write_atomic(path: str | None, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename (stdout when None)."""
    if path is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".urnstable-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def floats(s: str) -> list[float]:
    try:
        return [float(x) for x in str(s).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def bits(s: str) -> tuple:
    s = str(s).replace(",", "")
    if not s or any(c not in "01" for c in s):
        raise argparse.ArgumentTypeError(f"expected a 0/1 pattern, got {s!r}")
    return tuple(int(c) for c in s)


def vectors(s: str) -> list[list[float]]:
    """``"a1,a2;b1,b2"`` -> ``[[a1, a2], [b1, b2]]``."""
    return [floats(part) for part in str(s).split(";") if part.strip()]


def make_model(family: str, beta: float):
    if family == "power":
        return freq.make_power_law(beta)
    if family == "logperturbed":
        return freq.make_log_perturbed(beta)
    raise ParameterError(f"unknown family {family!r}")


def make_law(name: str, alpha: float | None, scale: float = 1.0):
    if name == "rademacher":
        return heavytail.rademacher()
    if alpha is None:
        raise ParameterError(f"law {name!r} needs --alpha")
    if name == "pareto":
        return heavytail.symmetric_pareto(alpha)
    if name == "stable":
        return heavytail.exact_sas(alpha, scale)
    raise ParameterError(f"unknown law {name!r}")


def _params(args, skip=("command", "config", "out", "seed", "func")):
    return {k: v for k, v in vars(args).items() if k not in skip}


# -- subcommands -----------------------------------------------------------------------

def cmd_freq_table(args, cfg):
    model = make_model(args.family, args.beta)
    k = np.arange(1, args.kmax + 1)
    p = model.head(args.kmax)
    rows = [(int(kk), pp, model.tail_mass(int(kk))) for kk, pp in zip(k, p)]
    return csv_text(cfg, ["k", "p_k", "tail_mass"], rows)


def cmd_freq_nu(args, cfg):
    model = make_model(args.family, args.beta)
    rows = []
    for x in args.x:
        rows.append((x, model.nu(x)))
    return csv_text(cfg, ["x", "nu"], rows)


def cmd_eps(args, cfg):
    law = make_law(args.law, args.alpha, args.scale)
    extra = {"c_eps": law.c_eps, "sigma_alpha": law.sigma_alpha}
    cfg.params.update(extra)
    if args.theta:
        th = np.asarray(args.theta)
        rows = zip(th, np.atleast_1d(law.chf(th)), np.atleast_1d(law.one_minus_chf(th)))
        return csv_text(cfg, ["theta", "chf", "one_minus_chf"], rows)
    x = law.sample(rngmod.stream(args.seed, 0, rngmod.MARKS), args.samples)
    return csv_text(cfg, ["i", "eps"], enumerate(x))


def simulate_rows(model, law, grid, reps, seed, engine="binned", poissonized=False):
    d = grid.d
    pats = urnsim.all_patterns(d)
    cols = ["rep", "checkpoint", "K", "Ustar", "U", "Z", "U1", "U2"] + \
        [f"M_{p.bitstring}" for p in pats]
    rows = []
    for r in range(reps):
        g = rngmod.stream(seed, r, rngmod.URN)
        if poissonized:
            tr = urnsim.poissonized_simulate(model, grid.times, grid.n, g)
        else:
            tr = urnsim.simulate(model, grid, g, engine=engine)
        ms = urnsim.attach_marks(tr, law, rngmod.stream(seed, r, rngmod.MARKS))
        M = tr.M
        K, Us = tr.K, tr.Ustar
        for j in range(d):
            # M columns describe the whole checkpoint vector; repeated per row
            rows.append([r, int(tr.checkpoints[j]) if not poissonized else tr.checkpoints[j],
                         K[j], Us[j], ms.U[j], ms.Z[j], ms.U1[j], ms.U2[j]]
                        + [int(M[p.index]) for p in pats])
    return cols, rows


def cmd_simulate(args, cfg):
    if args.reps < 1:
        raise ParameterError("--reps must be >= 1")
    model = make_model(args.family, args.beta)
    law = make_law(args.law, args.alpha)
    grid = urnsim.TimeGrid(tuple(args.times), args.n)
    cols, rows = simulate_rows(model, law, grid, args.reps, args.seed, args.engine,
                               args.poissonized)
    return csv_text(cfg, cols, rows)


def cmd_mdelta(args, cfg):
    if len(args.times) != len(args.delta):
        raise ParameterError("--times and --delta need the same length")
    res = limitlaw.m_delta(args.times, args.delta, args.beta)
    if args.format == "json":
        return json.dumps({"urnstable_version": __version__, "config": asdict(cfg),
                           "value": res.value, "abs_error": res.abs_error},
                          sort_keys=True, indent=2) + "\n"
    return f"{res.value:.{args.digits}f}\n"


def cmd_chf(args, cfg):
    A = np.asarray(args.a, dtype=np.float64)
    if A.ndim != 2 or A.shape[1] != len(args.times):
        raise ParameterError("each --a vector needs one entry per time")
    if args.which == "U":
        vals = limitlaw.chf_U(A, args.times, args.alpha, args.beta, args.sigma)
    else:
        vals = limitlaw.chf_Z(A, args.times, args.alpha, args.beta, args.sigma)
    vals = np.atleast_1d(vals)
    cols = [f"a{j + 1}" for j in range(A.shape[1])] + ["chf"]
    return csv_text(cfg, cols, [list(a) + [v] for a, v in zip(A, vals)])


def cmd_lepage(args, cfg):
    conf = limitlaw.LePageConfig(args.alpha, args.beta, args.J)
    s = limitlaw.lepage_sample(conf, args.times, args.reps, args.seed, args.which)
    cfg.params["chf_bound_unit"] = s.chf_bound_unit
    cfg.params["abs_tail_bound"] = s.abs_tail_bound
    cols = ["rep"] + [f"{args.which}_{j + 1}" for j in range(len(args.times))]
    return csv_text(cfg, cols, [[r] + list(row) for r, row in enumerate(s.paths)])


def cmd_gaussian_field(args, cfg):
    pts = np.asarray(args.points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != len(args.delta):
        raise ParameterError("each point needs one time per pattern bit")
    x = limitlaw.gaussian_field_sample(pts, args.delta, args.beta,
                                       rngmod.stream(args.seed, 0, rngmod.GAUSS), args.size)
    cols = ["sample"] + [f"X_{j + 1}" for j in range(len(pts))]
    return csv_text(cfg, cols, [[i] + list(row) for i, row in enumerate(x)])


def cmd_verify_suite(args, cfg):
    override = cfg.params.get("suite", {})
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    res = verify.run_suite(override, args.seed, args.only, log=log)
    rep = verify.suite_report(res, override, args.seed, args.timings)
    rep["urnstable_version"] = __version__
    return json.dumps(rep, indent=2, sort_keys=True) + "\n", rep["passed"]


# -- parser ------------------------------------------------------------------------------

SIM_COLUMNS = """columns: rep, checkpoint (balls thrown), K (occupied urns), Ustar
(odd-occupied urns), U (sum of marks over odd urns), Z (sum of marks over
occupied urns), U1 and U2 (centred and compensator parts of U; nan when
beta >= alpha), M_<bits> (urns whose parities at the checkpoints match bits,
first bit = first time; identical on every row of a replicate)."""


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="urnstable", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"urnstable {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="JSON file with option defaults")
        sp.add_argument("--out", help="output path (default stdout)")
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="master seed")
        return sp

    sp = common(sub.add_parser("freq-table", help="p_k and tail mass for k <= kmax",
                               description="columns: k, p_k, tail_mass (sum_{j>k} p_j)"), False)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--family", choices=["power", "logperturbed"], default="power")
    sp.add_argument("--kmax", type=int, default=20)
    sp.set_defaults(func=cmd_freq_table)

    sp = common(sub.add_parser("freq-nu", help="counting function nu(x)",
                               description="columns: x, nu (#{k : p_k >= 1/x})"), False)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--family", choices=["power", "logperturbed"], default="power")
    sp.add_argument("--x", type=floats, required=True)
    sp.set_defaults(func=cmd_freq_nu)

    sp = common(sub.add_parser("eps", help="mark law samples or chf",
                               description="columns: i, eps (samples) or theta, chf, "
                                           "one_minus_chf (with --theta)"))
    sp.add_argument("--law", choices=["rademacher", "pareto", "stable"], required=True)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--scale", type=float, default=1.0)
    sp.add_argument("--samples", type=int, default=10)
    sp.add_argument("--theta", type=floats)
    sp.set_defaults(func=cmd_eps)

    sp = common(sub.add_parser("simulate", help="urn paths with marks", description=SIM_COLUMNS))
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--family", choices=["power", "logperturbed"], default="power")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--law", choices=["rademacher", "pareto", "stable"], default="rademacher")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--times", type=floats, default=[1.0])
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--engine", choices=["binned", "stream"], default="binned")
    sp.add_argument("--poissonized", action="store_true")
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("mdelta", help="parity integral m_t^delta",
                               description="prints m_t^delta"), False)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--times", type=floats, required=True)
    sp.add_argument("--delta", type=bits, required=True)
    sp.add_argument("--digits", type=int, default=6)
    sp.add_argument("--format", choices=["text", "json"], default="text")
    sp.set_defaults(func=cmd_mdelta)

    sp = common(sub.add_parser("chf", help="limit characteristic functions",
                               description="columns: a1..ad, chf"), False)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--times", type=floats, required=True)
    sp.add_argument("--a", type=vectors, required=True, help='e.g. "1,0;0.5,0.5"')
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--which", choices=["U", "Z"], default="U")
    sp.set_defaults(func=cmd_chf)

    sp = common(sub.add_parser("lepage", help="truncated series draws of the limit",
                               description="columns: rep, <which>_1..<which>_d"))
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--J", type=int, default=10_000)
    sp.add_argument("--times", type=floats, default=[1.0])
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--which", choices=["U", "Z"], default="U")
    sp.set_defaults(func=cmd_lepage)

    sp = common(sub.add_parser("gaussian-field", help="Gaussian limit field draws",
                               description="columns: sample, X_1..X_N (one per point)"))
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--delta", type=bits, required=True)
    sp.add_argument("--points", type=vectors, required=True, help='e.g. "0.5;1"')
    sp.add_argument("--size", type=int, default=1)
    sp.set_defaults(func=cmd_gaussian_field)

    sp = common(sub.add_parser("verify-suite", help="run the acceptance gates",
                               description="writes a JSON report; exit 1 if any gate fails"))
    sp.add_argument("--only", type=lambda s: [x for x in s.split(",") if x])
    sp.add_argument("--timings", action="store_true", help="include runtimes in the report")
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_verify_suite)
    return p


def _load_config(argv):
    """Pre-scan for ``--config`` and return its JSON dict (or None)."""
    if "--config" not in argv:
        return None
    i = argv.index("--config")
    if i + 1 >= len(argv):
        return None
    with open(argv[i + 1]) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise json.JSONDecodeError("config must be a JSON object", "", 0)
    return cfg


def _apply_config(parser, argv, file_cfg):
    """Turn config-file entries into defaults of the chosen subcommand."""
    sub = parser._subparsers._group_actions[0].choices
    cmd = next((a for a in argv if a in sub), None)
    if cmd is None:
        return {}
    by_dest = {a.dest: a for a in sub[cmd]._actions}
    extra = {}
    for k, v in file_cfg.items():
        key = k.replace("-", "_")
        action = by_dest.get(key)
        if action is None or key in ("config", "help"):
            extra[key] = v
            continue
        action.default = _coerce(key, v)
        action.required = False
    return extra


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    threads = os.environ.get("URNSTABLE_THREADS")
    if threads:
        try:
            limitlaw.numba.set_num_threads(max(1, min(int(threads),
                                                      limitlaw.numba.config.NUMBA_NUM_THREADS)))
        except ValueError:
            pass
    parser = build_parser()
    try:
        file_cfg = _load_config(argv)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"urnstable: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    extra = _apply_config(parser, argv, file_cfg) if file_cfg else {}
    args = parser.parse_args(argv)
    params = _params(args)
    if "suite" in extra:
        params["suite"] = extra["suite"]
    cfg = RunConfig(args.command, params, getattr(args, "seed", 0) or 0, args.out,
                    "json" if args.command == "verify-suite" else "csv")
    try:
        result = args.func(args, cfg)
    except (ParameterError, DecompositionUnavailable) as exc:
        print(f"urnstable: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"urnstable: numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_GATE
    passed = True
    if isinstance(result, tuple):
        result, passed = result
    try:
        write_atomic(resolve_out(args.out), result)
    except OSError as exc:
        print(f"urnstable: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if passed else EXIT_GATE


def _coerce(key, v):
    if key in ("times", "x", "theta"):
        return floats(v) if isinstance(v, str) else [float(x) for x in np.atleast_1d(v)]
    if key == "delta" and not isinstance(v, tuple):
        return bits("".join(str(x) for x in v) if isinstance(v, list) else v)
    if key in ("a", "points") and isinstance(v, str):
        return vectors(v)
    return v


if __name__ == "__main__":
    sys.exit(main())
