"""Command-line interface.

Four commands plus a replay:

* ``test``        run one two-sample test on a pair of network stack files
* ``learn-proj``  learn projections and save them with scree diagnostics
* ``simulate``    run a scenario config and write the rejection-rate CSV
* ``power``       oracle power curve of the pooled gaussian projection test
* ``rerun``       replay any of the above from its run manifest

Network stack file format: a header line "n m", then m blocks of n rows
of n whitespace-separated reals.  Hypothesis sets are given either
inline as "rows=a..b,cols=c..d" (1-indexed, inclusive) or as a path to a
pair-list file with one 1-indexed "i j" pair per line.

Exit codes: 0 success, 2 argument error, 3 data-format error,
4 numerical failure.
"""

import argparse
import json
import os
import re
import sys

import numpy as np

from . import __version__
from .errors import ArgumentError, DataFormatError, NumericalError, MesonetError
from .numkit import haar_stiefel, f_quantile, noncentral_f_cdf
from .netmodel import (
    HypothesisSet, NetworkStack, ProjectionPair, TwoSampleData,
    effective_set, family_by_name, general_projection_basis,
    undirected_projection_basis,
)
from . import stattests
from . import projlearn
from . import competitors
from . import simharness


# ---------------------------------------------------------------------------
# File formats.
# ---------------------------------------------------------------------------


def read_network_stack(path):
    """Parse a network stack file; errors carry 1-based line numbers."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read network file {path}: {exc}") from None
    content = [(lineno, line.split()) for lineno, line in enumerate(lines, start=1)
               if line.strip()]
    if not content:
        raise DataFormatError(f"{path}: empty file, expected an 'n m' header")
    lineno, header = content[0]
    if len(header) != 2:
        raise DataFormatError(
            f"{path}:{lineno}: header must be two integers 'n m', got {len(header)} fields"
        )
    try:
        n, m = int(header[0]), int(header[1])
    except ValueError:
        raise DataFormatError(
            f"{path}:{lineno}: header must be two integers 'n m'"
        ) from None
    if n < 1 or m < 1:
        raise DataFormatError(f"{path}:{lineno}: header needs n >= 1 and m >= 1")
    body = content[1:]
    if len(body) != m * n:
        raise DataFormatError(
            f"{path}: expected {m * n} matrix rows for n={n}, m={m}, found {len(body)}"
        )
    layers = np.empty((m, n, n))
    for row_idx, (lineno, fields) in enumerate(body):
        if len(fields) != n:
            raise DataFormatError(
                f"{path}:{lineno}: expected {n} values per row, got {len(fields)}"
            )
        try:
            layers[row_idx // n, row_idx % n] = [float(v) for v in fields]
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric entry") from None
    return NetworkStack(layers)


def write_network_stack(path, stack):
    """Inverse of :func:`read_network_stack` (used by tests and exports)."""
    with open(path, "w") as fh:
        fh.write(f"{stack.n} {stack.m}\n")
        for layer in stack.layers:
            for row in layer:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


_RECT_RE = re.compile(r"^rows=(\d+)\.\.(\d+),cols=(\d+)\.\.(\d+)$")


def parse_hypothesis(spec, undirected=False):
    """Parse the --hypothesis value: inline rectangle or pair-list path.

    Both forms are 1-indexed; the rectangle form is inclusive on both
    ends.
    """
    m = _RECT_RE.match(spec.strip())
    if m:
        a, b, c, d = (int(g) for g in m.groups())
        if a < 1 or c < 1 or b < a or d < c:
            raise ArgumentError(
                f"--hypothesis rectangle {spec!r} needs 1 <= a <= b and 1 <= c <= d"
            )
        return HypothesisSet.rectangle(
            range(a - 1, b), range(c - 1, d), directed=not undirected
        )
    if not os.path.exists(spec):
        raise ArgumentError(
            f"--hypothesis is neither 'rows=a..b,cols=c..d' nor an existing "
            f"pair-list file: {spec!r}"
        )
    pairs = []
    with open(spec) as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2:
                raise DataFormatError(
                    f"{spec}:{lineno}: expected one 'i j' pair per line"
                )
            try:
                i, j = int(fields[0]), int(fields[1])
            except ValueError:
                raise DataFormatError(f"{spec}:{lineno}: non-integer pair") from None
            if i < 1 or j < 1:
                raise DataFormatError(f"{spec}:{lineno}: pairs are 1-indexed")
            pairs.append((i - 1, j - 1))
    if not pairs:
        raise DataFormatError(f"{spec}: pair-list file is empty")
    return HypothesisSet.general(pairs, directed=not undirected)


def _load_matrix(path, name):
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise DataFormatError(f"cannot read {name} file {path}: {exc}") from None
    except ValueError as exc:
        raise DataFormatError(f"{name} file {path} is not a numeric CSV: {exc}") from None
    return M


def _save_matrix(path, M):
    np.savetxt(path, np.asarray(M), delimiter=",", fmt="%.17g")


# ---------------------------------------------------------------------------
# Projection resolution shared by test and learn-proj.
# ---------------------------------------------------------------------------


def _embed_rows(U, rows, n):
    """Place block-local basis rows at global row indices (zero elsewhere)."""
    out = np.zeros((n, U.shape[1]))
    out[np.asarray(rows, dtype=int)] = U
    return out


def _learned_pair(args, data, S):
    kw = {"d": args.d, "trim": args.trim}
    if args.proj == "learned-rect":
        if not S.is_rectangle:
            raise ArgumentError("--proj learned-rect needs a rectangle hypothesis set")
        pair = projlearn.learn_projections_rect(
            data, S, d=args.d, d_star=args.d_star, trim=args.trim,
        )
        if not S.directed:
            ubar = _embed_rows(pair.U, S.rows, data.n)
            basis = undirected_projection_basis(ubar, S, data.n)
            return ProjectionPair(basis=basis, source="learned-rect",
                                  padded=pair.padded, requested_d=args.d)
        return pair
    # learned-impute
    if S.is_rectangle and S.directed:
        return projlearn.learn_projections_impute(
            data, S, center=args.center, **kw
        )
    ubar, vbar, _ = projlearn.learn_full_bases(data, S, center=args.center, **kw)
    if S.directed:
        basis = general_projection_basis(ubar, vbar, S, data.n)
    else:
        basis = undirected_projection_basis(ubar, S, data.n)
    return ProjectionPair(basis=basis, source="learned-impute", requested_d=args.d)


def resolve_projections(args, data, S):
    """Build the ProjectionPair requested by --proj (and --correction)."""
    if args.proj in ("learned-rect", "learned-impute"):
        if args.d is None:
            raise ArgumentError(f"--proj {args.proj} needs --d")
        P = _learned_pair(args, data, S)
    elif args.proj == "random":
        if args.d is None:
            raise ArgumentError("--proj random needs --d")
        if args.seed is None:
            raise ArgumentError("--proj random needs --seed for reproducibility")
        rng = np.random.default_rng(args.seed)
        if S.is_rectangle and S.directed:
            P = ProjectionPair(U=haar_stiefel(S.r, args.d, rng),
                               V=haar_stiefel(S.c, args.d, rng),
                               source="random", requested_d=args.d)
        else:
            p = effective_set(S, data.n).size
            P = ProjectionPair(basis=haar_stiefel(p, args.d, rng),
                               source="random", requested_d=args.d)
    elif args.proj == "block":
        if S.is_rectangle and S.directed:
            P = ProjectionPair(U=np.full((S.r, 1), 1.0 / np.sqrt(S.r)),
                               V=np.full((S.c, 1), 1.0 / np.sqrt(S.c)),
                               source="block", requested_d=1)
        else:
            p = effective_set(S, data.n).size
            P = ProjectionPair(basis=np.full((p, 1), 1.0 / np.sqrt(p)),
                               source="block", requested_d=1)
    elif args.proj == "file":
        if args.proj_basis is not None:
            P = ProjectionPair(basis=_load_matrix(args.proj_basis, "--proj-basis"),
                               source="file")
        elif args.proj_u is not None and args.proj_v is not None:
            P = ProjectionPair(U=_load_matrix(args.proj_u, "--proj-u"),
                               V=_load_matrix(args.proj_v, "--proj-v"),
                               source="file")
        else:
            raise ArgumentError(
                "--proj file needs --proj-basis, or both --proj-u and --proj-v"
            )
    else:
        raise ArgumentError(f"unknown --proj choice {args.proj!r}")

    if args.correction == "density":
        P = projlearn.density_correct(P)
    elif args.correction == "degree":
        P = projlearn.degree_correct(P, S=None if P.is_kronecker else S)
    return P


def _run_statistic(args, data, S, P):
    name = args.stat or competitors.default_statistic(data)
    theta_mode = args.theta_tilde or "pooled_mean"
    if name == "E":
        return stattests.stat_E(data, S, P, theta_tilde_mode=theta_mode, alpha=args.alpha)
    if name == "EUD":
        return stattests.stat_EUD(data, S, P, dispersion_estimator=args.dispersion,
                                  theta_tilde_mode=theta_mode, alpha=args.alpha)
    if name == "G":
        return stattests.stat_G(data, S, P, alpha=args.alpha)
    if name == "GP":
        return stattests.stat_GP(data, S, P, alpha=args.alpha)
    raise ArgumentError(f"unknown --stat {name!r}; expected E, EUD, G or GP")


def _report_json(report):
    d = report.to_dict()
    ref = report.ref_dist
    d["df"] = {"kind": ref.kind}
    if ref.df is not None:
        d["df"]["df"] = ref.df
    if ref.nu1 is not None:
        d["df"]["nu1"] = ref.nu1
        d["df"]["nu2"] = ref.nu2
    return d


def _echo_args(args, fields):
    return {k: getattr(args, k) for k in fields}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------

_TEST_FIELDS = ("sample1", "sample2", "family", "hypothesis", "undirected",
                "stat", "proj", "d", "d_star", "trim", "center", "alpha",
                "correction", "seed", "theta_tilde", "dispersion",
                "proj_u", "proj_v", "proj_basis", "out")


def cmd_test(args):
    stack1 = read_network_stack(args.sample1)
    stack2 = read_network_stack(args.sample2)
    family = family_by_name(args.family)
    data = TwoSampleData(sample1=stack1, sample2=stack2, family=family)
    S = parse_hypothesis(args.hypothesis, undirected=args.undirected)
    S.validate(data.n)
    P = resolve_projections(args, data, S)
    report = _run_statistic(args, data, S, P)
    _write_json(args.out, _report_json(report))
    manifest = simharness.manifest_dict(
        "test", _echo_args(args, _TEST_FIELDS), args.seed
    )
    _write_json(args.out + ".manifest.json", manifest)
    print(f"wrote {args.out}: p={report.p_value:.6g} "
          f"({'reject' if report.reject else 'retain'} at alpha={report.alpha})")
    return 0


_LEARN_FIELDS = ("sample1", "sample2", "family", "hypothesis", "undirected",
                 "proj", "d", "d_star", "trim", "center", "out_dir")


def cmd_learn_proj(args):
    stack1 = read_network_stack(args.sample1)
    stack2 = read_network_stack(args.sample2)
    family = family_by_name(args.family)
    data = TwoSampleData(sample1=stack1, sample2=stack2, family=family)
    S = parse_hypothesis(args.hypothesis, undirected=args.undirected)
    S.validate(data.n)
    os.makedirs(args.out_dir, exist_ok=True)

    if args.proj == "learned-rect":
        if not S.is_rectangle or not S.directed:
            raise ArgumentError(
                "learn-proj with learned-rect needs a directed rectangle set"
            )
        pair = projlearn.learn_projections_rect(
            data, S, d=args.d, d_star=args.d_star, trim=args.trim,
        )
        diag = projlearn.rect_spectral_diag(
            data, S, args.d if args.d_star is None else args.d_star, trim=args.trim,
        )
        _save_matrix(os.path.join(args.out_dir, "U.csv"), pair.U)
        _save_matrix(os.path.join(args.out_dir, "V.csv"), pair.V)
        padded = pair.padded
    elif args.proj == "learned-impute":
        if S.is_rectangle and S.directed:
            pair = projlearn.learn_projections_impute(
                data, S, d=args.d, center=args.center, trim=args.trim,
            )
            diag = projlearn.impute_spectral_diag(
                data, S, d=args.d, center=args.center, trim=args.trim,
            )
            _save_matrix(os.path.join(args.out_dir, "U.csv"), pair.U)
            _save_matrix(os.path.join(args.out_dir, "V.csv"), pair.V)
            padded = pair.padded
        else:
            ubar, vbar, diag = projlearn.learn_full_bases(
                data, S, d=args.d, center=args.center, trim=args.trim,
            )
            _save_matrix(os.path.join(args.out_dir, "U.csv"), ubar)
            _save_matrix(os.path.join(args.out_dir, "V.csv"), vbar)
            padded = False
    else:
        raise ArgumentError("learn-proj supports --proj learned-rect or learned-impute")

    _save_matrix(os.path.join(args.out_dir, "scree.csv"),
                 diag.singular_values.reshape(-1, 1))
    config = _echo_args(args, _LEARN_FIELDS)
    manifest = simharness.manifest_dict("learn-proj", config, None)
    manifest["warning"] = (
        "requested dimension exceeds the numerical rank of the learning "
        "target; basis was padded" if padded else None
    )
    if diag.suggested_d is not None:
        manifest["scree_elbow"] = diag.suggested_d
    _write_json(os.path.join(args.out_dir, "manifest.json"), manifest)
    print(f"wrote projections to {args.out_dir} (padded={padded})")
    return 0


def cmd_simulate(args):
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise DataFormatError(f"cannot read config {args.config}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{args.config}: invalid JSON: {exc}") from None
    raw["seed"] = args.seed  # the CLI seed is authoritative
    cfg = simharness.ScenarioConfig.from_dict(raw)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("MESONET_THREADS", "1"))
    table = simharness.run_experiment(cfg, threads=threads)
    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "rejections.csv")
    simharness.write_csv(table, csv_path)
    manifest = simharness.manifest_dict(
        "simulate",
        {"config": cfg.to_dict(), "config_path": args.config,
         "threads": threads, "out_dir": args.out_dir},
        args.seed,
    )
    _write_json(os.path.join(args.out_dir, "manifest.json"), manifest)
    print(f"wrote {csv_path} ({len(table.rows)} rows, {cfg.reps} reps)")
    return 0


def _power_rows(args):
    alpha = args.alpha
    if args.psi is not None:
        if args.nu1 is None or args.nu2 is None:
            raise ArgumentError("--psi needs explicit --nu1 and --nu2")
        try:
            grid = [float(v) for v in args.psi.split(",") if v.strip()]
        except ValueError:
            raise ArgumentError(f"--psi must be a comma-separated float list, got {args.psi!r}") from None
        if not grid:
            raise ArgumentError("--psi list is empty")
        nu1, nu2 = args.nu1, args.nu2
        return [(psi, stattests.power_oracle_GP(psi, nu1, nu2, alpha)) for psi in grid]
    if args.diff is None:
        raise ArgumentError("power needs either --psi or --diff")
    if args.m is None or args.sigma2 is None:
        raise ArgumentError("--diff needs --m and --sigma2")
    if args.m < 2:
        raise ArgumentError("the pooled test needs --m >= 2")
    diff = _load_matrix(args.diff, "--diff")
    if args.proj_u is not None and args.proj_v is not None:
        P = ProjectionPair(U=_load_matrix(args.proj_u, "--proj-u"),
                           V=_load_matrix(args.proj_v, "--proj-v"), source="file")
    else:
        P = ProjectionPair(U=np.eye(diff.shape[0]), V=np.eye(diff.shape[1]),
                           source="identity")
    psi = stattests.ncp_psi(diff, np.zeros_like(diff), P, args.m, args.sigma2)
    nu2 = 2 * (args.m - 1) * P.q
    return [(psi, stattests.power_oracle_GP(psi, P.q, nu2, alpha))]


_POWER_FIELDS = ("psi", "nu1", "nu2", "diff", "proj_u", "proj_v",
                 "m", "sigma2", "alpha", "out")


def cmd_power(args):
    rows = _power_rows(args)
    with open(args.out, "w") as fh:
        fh.write("psi,power\n")
        for psi, power in rows:
            fh.write(f"{psi!r},{power!r}\n")
    manifest = simharness.manifest_dict("power", _echo_args(args, _POWER_FIELDS), None)
    _write_json(args.out + ".manifest.json", manifest)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def cmd_rerun(args):
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise DataFormatError(f"cannot read manifest {args.manifest}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{args.manifest}: invalid JSON: {exc}") from None
    command = manifest.get("command")
    config = manifest.get("config", {})
    if command == "simulate":
        ns = argparse.Namespace(
            config=config["config_path"], seed=manifest["seed"],
            threads=config.get("threads"), out_dir=args.out_dir or config["out_dir"],
        )
        return cmd_simulate(ns)
    if command in ("test", "learn-proj", "power"):
        ns = argparse.Namespace(**config)
        if args.out_dir is not None:
            if command == "learn-proj":
                ns.out_dir = args.out_dir
            else:
                os.makedirs(args.out_dir, exist_ok=True)
                ns.out = os.path.join(args.out_dir, os.path.basename(ns.out))
        return {"test": cmd_test, "learn-proj": cmd_learn_proj,
                "power": cmd_power}[command](ns)
    raise ArgumentError(f"manifest has unknown command {command!r}")


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------


def _add_data_args(sub):
    sub.add_argument("sample1", help="network stack file for sample 1")
    sub.add_argument("sample2", help="network stack file for sample 2")
    sub.add_argument("--family", choices=("gaussian", "logit"), required=True)
    sub.add_argument("--hypothesis", required=True,
                     help="'rows=a..b,cols=c..d' (1-indexed) or pair-list file")
    sub.add_argument("--undirected", action="store_true",
                     help="treat the set as symmetric; tests use the upper part")


def _add_proj_args(sub, include_all=True):
    choices = ("learned-rect", "learned-impute")
    if include_all:
        choices = choices + ("random", "block", "file")
    sub.add_argument("--proj", choices=choices, default="learned-rect")
    sub.add_argument("--d", type=int, default=None, help="projection dimension")
    sub.add_argument("--d-star", type=int, default=None, dest="d_star",
                     help="truncation rank of the corner block (default: --d)")
    sub.add_argument("--trim", choices=("third", "unit"), default="third",
                     help="trim bound for binary link estimates")
    sub.add_argument("--center", action="store_true",
                     help="remove the global mean before imputation")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mesonet",
        description="Projection-based mesoscale two-sample network tests",
    )
    parser.add_argument("--version", action="version", version=f"mesonet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test one hypothesis set on two samples")
    _add_data_args(t)
    _add_proj_args(t)
    t.add_argument("--stat", choices=("E", "EUD", "G", "GP"), default=None,
                   help="default: GP for gaussian m>1, G at m=1, E for logit")
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--correction", choices=("none", "density", "degree"),
                   default="none")
    t.add_argument("--seed", type=int, default=None,
                   help="required for --proj random")
    t.add_argument("--theta-tilde", choices=("pooled_mean", "shrunk"),
                   default=None, dest="theta_tilde",
                   help="null-estimate mode for E/EUD weights (default: pooled_mean; "
                        "shrunk guards small-m binary runs)")
    t.add_argument("--dispersion", choices=("phi_hat1", "phi_hat2"),
                   default="phi_hat2", help="estimator for --stat EUD")
    t.add_argument("--proj-u", default=None, dest="proj_u")
    t.add_argument("--proj-v", default=None, dest="proj_v")
    t.add_argument("--proj-basis", default=None, dest="proj_basis")
    t.add_argument("--out", default="report.json")
    t.set_defaults(func=cmd_test)

    lp = sub.add_parser("learn-proj", help="learn projections and save them")
    _add_data_args(lp)
    _add_proj_args(lp, include_all=False)
    lp.add_argument("--out-dir", default="projections", dest="out_dir")
    lp.set_defaults(func=cmd_learn_proj)

    sim = sub.add_parser("simulate", help="run a simulation scenario")
    sim.add_argument("--config", required=True, help="scenario JSON file")
    sim.add_argument("--seed", type=int, required=True,
                     help="master seed (required: all randomness flows from it)")
    sim.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: MESONET_THREADS or 1)")
    sim.add_argument("--out-dir", default="simulation", dest="out_dir")
    sim.set_defaults(func=cmd_simulate)

    pw = sub.add_parser("power", help="oracle power of the pooled projection test")
    pw.add_argument("--psi", default=None,
                    help="comma-separated non-centrality grid")
    pw.add_argument("--nu1", type=int, default=None)
    pw.add_argument("--nu2", type=int, default=None)
    pw.add_argument("--diff", default=None,
                    help="CSV of the true hypothesis-block difference")
    pw.add_argument("--proj-u", default=None, dest="proj_u")
    pw.add_argument("--proj-v", default=None, dest="proj_v")
    pw.add_argument("--m", type=int, default=None)
    pw.add_argument("--sigma2", type=float, default=None)
    pw.add_argument("--alpha", type=float, default=0.05)
    pw.add_argument("--out", default="power.csv")
    pw.set_defaults(func=cmd_power)

    rr = sub.add_parser("rerun", help="replay a command from its manifest")
    rr.add_argument("--manifest", required=True)
    rr.add_argument("--out-dir", default=None, dest="out_dir",
                    help="redirect outputs instead of overwriting")
    rr.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ArgumentError as exc:
        print(f"mesonet: argument error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"mesonet: data format error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"mesonet: numerical failure: {exc}", file=sys.stderr)
        return 4
    except MesonetError as exc:  # pragma: no cover - subclass safety net
        print(f"mesonet: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
