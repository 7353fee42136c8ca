"""Command-line entry point: ``sigmaflow {sigma,flow,family} ...``.

Every CSV starts with a ``# config_hash=...`` comment line followed by a header
row. Floats are written with 17 significant digits, so identical
configurations give byte-identical files. Each command that writes files
also writes ``manifest.json`` listing them.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from numpy.polynomial import chebyshev as cheb

from sigmaflow import __version__
from sigmaflow.errors import ConeViolation
from sigmaflow.experiments import asymptotic_ratios, cos2_profile, ell_profile, eps_sweep, ratio_violations
from sigmaflow.flow import FlowConfig, Status, run
from sigmaflow.functionals import ConformalFactor
from sigmaflow.sphere_geometry import Convention, schouten_arrays, sigma1_arrays, sigma2_arrays
from sigmaflow.symfunc import check_hessian_identity, in_gamma_plus, sigma_k

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_USAGE = 2
EXIT_MAX_TIME = 3
EXIT_CONE = 4
EXIT_STEP_FAILURE = 5

IDENTITY_TOLERANCE = 1e-5

FLOW_EXIT = {
    Status.CONVERGED: EXIT_OK,
    Status.MAX_TIME_REACHED: EXIT_MAX_TIME,
    Status.CONE_VIOLATION: EXIT_CONE,
    Status.STEP_FAILURE: EXIT_STEP_FAILURE,
}

TRAJECTORY_COLUMNS = ("time", "dt", "F2", "F0eps", "r_eps", "s_eps", "min_sigma1", "min_sigma2", "residual")
PROFILE_COLUMNS = ("theta", "s", "u", "du", "d2u", "lambda_r", "lambda_t", "sigma1", "sigma2")
FAMILY_COLUMNS = (
    "ell",
    "F2",
    "vol",
    "total_scalar",
    "F2_ratio",
    "vol_ratio",
    "scalar_ratio",
    "quotient_vol",
    "quotient_scalar",
    "total_sigma1",
)
SWEEP_COLUMNS = (
    "eps",
    "status",
    "tildeF2eps",
    "holder_bound",
    "tildeF20",
    "F2",
    "r_eps",
    "s_eps",
    "residual",
    "time",
    "steps",
)

# flag dest -> (FlowConfig field or profile key, type)
FLOW_KEYS = {
    "n": int,
    "eps": float,
    "grid_size": int,
    "quad_order": int,
    "dt_init": float,
    "dt_policy": str,
    "scheme": str,
    "cfl_safety": float,
    "cfl_interval": int,
    "max_time": float,
    "max_steps": int,
    "residual_tol": float,
    "conservation_tol": float,
    "sigma1_floor": float,
}
PROFILE_KEYS = {"preset": str, "amp": float, "ell": float, "profile": str, "convention": str}
PROFILE_DEFAULTS = {"preset": "round", "amp": 0.2, "ell": 1.0, "profile": None, "convention": "minus"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# formatting and files


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def config_hash(content):
    blob = json.dumps(content, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_csv(path, columns, rows, digest):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


@dataclasses.dataclass
class RunManifest:
    command: str
    config_hash: str
    versions: str
    started: str
    finished: str = ""
    outputs: list = dataclasses.field(default_factory=list)

    def write(self, out_dir):
        self.finished = _now()
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n")
        return path


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _versions():
    return f"sigmaflow {__version__}; numpy {np.__version__}; python {platform.python_version()}"


def _manifest(argv, digest):
    return RunManifest(" ".join(["sigmaflow"] + list(argv)), digest, _versions(), _now())


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def parse_list(text, kind=float):
    items = [item.strip() for item in text.split(",") if item.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a non-empty comma-separated list")
    try:
        return [kind(item) for item in items]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# ---------------------------------------------------------------------------
# sigma


def cmd_sigma(args):
    if args.action == "eval":
        lam = args.lambdas
        if not 0 <= args.k <= len(lam):
            raise UsageError(f"--k must lie in [0, {len(lam)}]")
        print(fmt(sigma_k(lam, args.k)))
        if args.k >= 1:
            member = in_gamma_plus(lam, args.k).member
            print(f"Gamma_{args.k}+: {'yes' if member else 'no'}")
        return EXIT_OK
    seed = args.seed if args.seed is not None else int(os.environ.get("SIGMAFLOW_SEED", "0"))
    report = check_hessian_identity(args.n, args.trials, seed=seed)
    print(f"trials: {report.trials}")
    print(f"max deviation: {report.max_deviation:.3e}")
    print(f"max hessian form: {report.max_hessian:.3e}")
    print(f"max nu-bound excess: {report.max_nu_excess:.3e}")
    ok = report.max_deviation <= IDENTITY_TOLERANCE and report.max_hessian <= 1e-12 and report.max_nu_excess <= 1e-10
    return EXIT_OK if ok else EXIT_TOLERANCE


# ---------------------------------------------------------------------------
# flow


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    known = {**FLOW_KEYS, **PROFILE_KEYS}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = known[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def resolve_settings(args):
    """Defaults, then the config file, then explicit flags."""
    settings = dict(PROFILE_DEFAULTS)
    if args.config:
        try:
            settings.update(read_config_file(args.config))
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
    for key in (*FLOW_KEYS, *PROFILE_KEYS):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings.get("profile") and "preset" not in _explicit(args):
        settings["preset"] = "file"
    try:
        config = FlowConfig(**{k: v for k, v in settings.items() if k in FLOW_KEYS})
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    profile = {k: settings[k] for k in PROFILE_KEYS}
    return config, profile


def _explicit(args):
    return {k for k in PROFILE_KEYS if getattr(args, k, None) is not None}


def read_table(path):
    """Columns of a CSV written by this tool (``#`` comment lines skipped) as float arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise UsageError(f"{path}: empty table")
        rows = [row for row in reader if row]
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError:
        raise UsageError(f"{path}: non-numeric or ragged table") from None
    return {name.strip(): data[:, i] for i, name in enumerate(header)}


def load_profile_file(path, grid, n, convention):
    """Tabulated ``u`` against ``theta`` or ``s``."""
    try:
        data = read_table(path)
    except OSError as exc:
        raise UsageError(f"cannot read profile: {exc}") from None
    if "u" not in data or not ({"theta", "s"} & set(data)):
        raise UsageError("profile file needs a 'u' column and a 'theta' or 's' column")
    x = np.cos(data["theta"]) if "theta" in data else data["s"]
    u = data["u"]
    if len(u) < 2:
        raise UsageError("profile file needs at least two rows")
    if x.shape == grid.s.shape and np.allclose(x, grid.s, rtol=0, atol=1e-12):
        values = u
    else:
        degree = min(len(x) - 1, grid.size - 1)
        values = cheb.chebval(grid.s, cheb.chebfit(x, u, degree))
    return ConformalFactor(grid, values, n, Convention(convention))


def build_profile(profile, config):
    grid = config.grid()
    preset = profile["preset"]
    if preset == "round":
        return ConformalFactor(grid, np.zeros(grid.size), config.n)
    if preset == "cos2":
        return cos2_profile(grid, profile["amp"], config.n)
    if preset == "ell-family":
        return ell_profile(grid, profile["ell"], config.n)
    if preset == "file":
        if not profile["profile"]:
            raise UsageError("preset 'file' needs --profile PATH")
        return load_profile_file(profile["profile"], grid, config.n, profile["convention"])
    raise UsageError(f"unknown preset {preset!r}")


def profile_rows(u):
    """Final-profile table at the grid nodes, ``g = exp(-2u) g0``; sigma columns are those of ``g``."""
    u = u.to_convention(Convention.MINUS_TWO_U)
    s, u0, du, d2u = u.jets("grid")
    lr, lt = schouten_arrays(s, du, d2u, Convention.MINUS_TWO_U)
    s1 = np.exp(2.0 * u0) * sigma1_arrays(lr, lt, u.n)
    s2 = np.exp(4.0 * u0) * sigma2_arrays(lr, lt, u.n)
    return zip(u.grid.theta, s, u0, du, d2u, lr, lt, s1, s2)


def _semantic(config, profile):
    content = {"config": dataclasses.asdict(config), "preset": profile["preset"]}
    if profile["preset"] == "cos2":
        content["amp"] = profile["amp"]
    elif profile["preset"] == "ell-family":
        content["ell"] = profile["ell"]
    elif profile["preset"] == "file":
        content["profile_sha256"] = hashlib.sha256(Path(profile["profile"]).read_bytes()).hexdigest()
        content["convention"] = profile["convention"]
    return content


def _cone_message(exc):
    where = f" at s={exc.location:.6g}" if exc.location is not None else ""
    value = exc.min_sigma1 if exc.min_sigma1 is not None else float("nan")
    return f"ConeViolation: min sigma_1 = {value:.6g}{where}; initial metric is outside C_1"


def cmd_flow_run(args, argv):
    config, profile = resolve_settings(args)
    u0 = build_profile(profile, config)
    digest = config_hash(_semantic(config, profile))
    out = _out_dir(args.out)
    manifest = _manifest(argv, digest)
    try:
        trajectory = run(config, u0)
    except ConeViolation as exc:
        print(_cone_message(exc), file=sys.stderr)
        manifest.write(out)
        return EXIT_CONE
    traj_path = out / "trajectory.csv"
    prof_path = out / "final_profile.csv"
    write_csv(traj_path, TRAJECTORY_COLUMNS, (row.as_tuple() for row in trajectory.rows), digest)
    write_csv(prof_path, PROFILE_COLUMNS, profile_rows(trajectory.final.u), digest)
    manifest.outputs = [str(traj_path), str(prof_path)]
    manifest.write(out)
    final = trajectory.final
    print(f"status: {trajectory.status.value}")
    print(f"time: {fmt(final.time)}  steps: {trajectory.steps}  rejections: {trajectory.rejections}")
    print(f"F2: {fmt(final.report.F2)}  tildeF2eps: {fmt(final.report.tildeF2eps)}")
    print(f"residual: {final.residual:.3e}  s_eps: {final.report.s_eps:.3e}")
    print(f"min sigma_1 along run: {fmt(trajectory.min_sigma1)}  final min sigma_2: {fmt(final.report.min_sigma2)}")
    if trajectory.status is Status.CONE_VIOLATION:
        print(f"ConeViolation: min sigma_1 = {trajectory.min_sigma1:.6g}; {trajectory.message}", file=sys.stderr)
    elif trajectory.message:
        print(trajectory.message, file=sys.stderr)
    if args.gnuplot_hint:
        print(gnuplot_hint(traj_path, "1:3", "F2"))
    return FLOW_EXIT[trajectory.status]


def cmd_flow_sweep(args, argv):
    config, profile = resolve_settings(args)
    u0 = build_profile(profile, config)
    eps_list = args.eps_list
    content = _semantic(config, profile)
    content["config"].pop("eps")
    content["eps_list"] = eps_list
    digest = config_hash(content)
    out = _out_dir(args.out)
    manifest = _manifest(argv, digest)
    try:
        rows = eps_sweep(config, u0, eps_list, jobs=args.jobs)
    except ConeViolation as exc:
        print(_cone_message(exc), file=sys.stderr)
        manifest.write(out)
        return EXIT_CONE
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = out / "eps_sweep.csv"
    write_csv(path, SWEEP_COLUMNS, ([getattr(r, c) for c in SWEEP_COLUMNS] for r in rows), digest)
    manifest.outputs = [str(path)]
    manifest.write(out)
    bad = [r for r in rows if r.converged and not r.holder_ok()]
    for r in rows:
        flag = "" if r.converged else "  (not converged)"
        print(f"eps={fmt(r.eps)}: {r.status}  tildeF2eps={fmt(r.tildeF2eps)}  holder_bound={fmt(r.holder_bound)}{flag}")
    if args.gnuplot_hint:
        print(gnuplot_hint(path, "1:3", "tildeF2eps"))
    return EXIT_TOLERANCE if bad else EXIT_OK


# ---------------------------------------------------------------------------
# family


def cmd_family(args, argv):
    if args.n < 5:
        print(f"family sweep requires n ≥ 5 (got n={args.n})", file=sys.stderr)
        return EXIT_USAGE
    try:
        rows = asymptotic_ratios(args.ells, args.n, order=args.order, jobs=args.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    digest = config_hash({"n": args.n, "ells": args.ells, "order": args.order})
    out = _out_dir(args.out)
    manifest = _manifest(argv, digest)
    path = out / "family.csv"
    write_csv(path, FAMILY_COLUMNS, ([row[c] for c in FAMILY_COLUMNS] for row in rows), digest)
    manifest.outputs = [str(path)]
    manifest.write(out)
    for row in rows:
        print(
            f"ell={fmt(row['ell'])}: F2_ratio={row['F2_ratio']:.6f} vol_ratio={row['vol_ratio']:.6f} "
            f"scalar_ratio={row['scalar_ratio']:.6f}"
        )
    problems = ratio_violations(rows)
    for problem in problems:
        print(f"tolerance violated: {problem}", file=sys.stderr)
    if args.gnuplot_hint:
        print(gnuplot_hint(path, "1:5", "F2_ratio", logx=True))
    return EXIT_TOLERANCE if problems else EXIT_OK


def gnuplot_hint(path, columns, title, logx=False):
    log = "set logscale x; " if logx else ""
    return (
        f"gnuplot -p -e \"set datafile separator ','; set key autotitle columnhead; {log}"
        f"plot '{path}' using {columns} with linespoints title '{title}'\""
    )


# ---------------------------------------------------------------------------
# parser


def _add_flow_options(p):
    g = p.add_argument_group("initial profile")
    g.add_argument("--preset", choices=("round", "cos2", "ell-family", "file"))
    g.add_argument("--amp", type=float, help="amplitude A of u = A cos(2 theta), g = exp(2u) g0")
    g.add_argument("--ell", type=float, help="ell of u = -ell s^2, g = exp(2u) g0 (C_1 needs ell < 1/4)")
    g.add_argument("--profile", help="CSV with columns theta (or s) and u")
    g.add_argument("--convention", choices=("minus", "plus"), help="sign convention of a tabulated profile")
    g = p.add_argument_group("flow parameters (override --config)")
    g.add_argument("--config", help="flat key = value file")
    g.add_argument("--n", type=int)
    g.add_argument("--eps", type=float)
    g.add_argument("--grid", dest="grid_size", type=int)
    g.add_argument("--quad", dest="quad_order", type=int)
    g.add_argument("--dt", dest="dt_init", type=float)
    g.add_argument("--dt-policy", choices=("fixed", "adaptive"))
    g.add_argument("--scheme", choices=("rk4", "euler"))
    g.add_argument("--cfl-safety", type=float)
    g.add_argument("--cfl-interval", type=int)
    g.add_argument("--max-time", type=float)
    g.add_argument("--max-steps", type=int)
    g.add_argument("--residual-tol", type=float)
    g.add_argument("--conservation-tol", type=float)
    g.add_argument("--sigma1-floor", type=float)
    p.add_argument("--out", default="sigmaflow-out", help="output directory (default: %(default)s)")
    p.add_argument("--gnuplot-hint", action="store_true", help="print a gnuplot command for the main table")


def build_parser():
    parser = argparse.ArgumentParser(prog="sigmaflow", description="sigma_2 curvature algebra and flow toolkit")
    parser.add_argument("--version", action="version", version=f"sigmaflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sigma = sub.add_parser("sigma", help="elementary symmetric functions")
    sigma_sub = sigma.add_subparsers(dest="action", required=True)
    ev = sigma_sub.add_parser("eval", help="sigma_k and Garding cone membership")
    ev.add_argument("--lambdas", type=parse_list, required=True)
    ev.add_argument("--k", type=int, required=True)
    ci = sigma_sub.add_parser("check-identity", help="randomized check of the quotient Hessian identity")
    ci.add_argument("--n", type=int, default=5)
    ci.add_argument("--trials", type=int, default=100)
    ci.add_argument("--seed", type=int, help="default: $SIGMAFLOW_SEED or 0")

    flow = sub.add_parser("flow", help="the perturbed conformal flow")
    flow_sub = flow.add_subparsers(dest="action", required=True)
    _add_flow_options(flow_sub.add_parser("run", help="integrate one trajectory"))
    sw = flow_sub.add_parser("sweep", help="converged functional values over several eps")
    _add_flow_options(sw)
    sw.add_argument("--eps-list", type=parse_list, default=[0.2, 0.1, 0.05])
    sw.add_argument("--jobs", type=int, default=1)

    family = sub.add_parser("family", help="the explicit concentrating family")
    family_sub = family.add_subparsers(dest="action", required=True)
    fs = family_sub.add_parser("sweep", help="asymptotic ratio table")
    fs.add_argument("--n", type=int, default=5)
    fs.add_argument("--ells", type=parse_list, required=True)
    fs.add_argument("--order", type=int, default=64, help="Gauss-Legendre points per panel")
    fs.add_argument("--jobs", type=int, default=1)
    fs.add_argument("--out", default="sigmaflow-out")
    fs.add_argument("--gnuplot-hint", action="store_true")
    return parser


LIST_FLAGS = ("--lambdas", "--ells", "--eps-list")


def _join_list_flags(argv):
    """Glue list flags to their value so lists starting with a minus sign parse."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] in LIST_FLAGS and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None):
    argv = _join_list_flags(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "sigma":
            return cmd_sigma(args)
        if args.command == "flow":
            return cmd_flow_run(args, argv) if args.action == "run" else cmd_flow_sweep(args, argv)
        return cmd_family(args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sigmaflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
