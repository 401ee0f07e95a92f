"""Command-line front end.

Subcommands:
  solve     compute k eigenpairs with deflation, write CSV/JSON outputs
  mu-curve  sample all real mu^2 branches over a lambda interval to CSV
  verify    run the independent verification suites

Every flag has a config-file (JSON) equivalent; a flag overrides the file.
Exit codes: 0 success, 1 configuration error, 2 partial results.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .deflation import compute_k_eigenpairs
from .errors import NEPvError
from .mu_functions import BranchPolicy, MuEvaluator, sample_curves
from .nep_solver import NEPOperator, NewtonSettings, format_report_table
from .problem_model import (
    GPEConfig,
    build_gpe_problem,
    load_problem_matrix_market,
    paper_2x2_problem,
    paper_3x3_problem,
)

EXAMPLES = ("paper-2x2", "paper-3x3", "gpe")
DEFAULT_TARGETS = {"paper-2x2": 3.0, "paper-3x3": -5.0, "gpe": 90.0}


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"error: cannot read config {path}: {exc}")


def _merged(cfg: dict, section: str, key: str, flag_value, default=None):
    """Flag value wins; then the config file; then the default."""
    if flag_value is not None:
        return flag_value
    return cfg.get(section, {}).get(key, default)


def _build_problem(cfg: dict, args) -> tuple:
    example = _merged(cfg, "problem", "example", getattr(args, "example", None))
    matrix_dir = _merged(cfg, "problem", "matrix_dir", getattr(args, "problem_dir", None))
    grid = _merged(cfg, "problem", "grid", getattr(args, "grid", None))
    if example is None and matrix_dir is None:
        raise SystemExit("error: need --example or --problem-dir (or config equivalent)")
    if matrix_dir is not None:
        return load_problem_matrix_market(matrix_dir), "custom"
    if example == "paper-2x2":
        return paper_2x2_problem(), example
    if example == "paper-3x3":
        return paper_3x3_problem(), example
    if example == "gpe":
        gpe_cfg = cfg.get("problem", {}).get("gpe", {})
        if grid is not None:
            gpe_cfg = dict(gpe_cfg, N=int(grid))
        if gpe_cfg:
            base = GPEConfig()
            merged = {**json.loads(base.to_json()), **gpe_cfg}
            config = GPEConfig.from_json(json.dumps(merged))
        else:
            config = GPEConfig()
        return build_gpe_problem(config), example
    raise SystemExit(f"error: unknown example {example!r}")


def _build_policy(cfg: dict, args, target_lambda) -> BranchPolicy:
    mode = _merged(cfg, "branch", "mode", getattr(args, "branch", None), "continuity")
    if mode == "continuity":
        return BranchPolicy.continuity()
    if mode == "residual":
        return BranchPolicy.smallest_residual()
    if mode == "target":
        mu_sq = cfg.get("branch", {}).get("target_mu_sq")
        if mu_sq is not None:
            return BranchPolicy.closest_to(target_mu_sq=np.asarray(mu_sq, dtype=float))
        anchor = cfg.get("branch", {}).get("target_lambda", target_lambda)
        return BranchPolicy.closest_to(target_lambda=float(anchor))
    raise SystemExit(f"error: unknown branch mode {mode!r}")


def cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    try:
        problem, name = _build_problem(cfg, args)
    except NEPvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    k = int(_merged(cfg, "solver", "k", args.k, 1))
    tol = float(_merged(cfg, "solver", "tol", args.tol, 5e-12))
    seed = int(_merged(cfg, "solver", "seed", args.seed, 0))
    maxit = int(_merged(cfg, "solver", "maxit", None, 100))
    c_vector = _merged(cfg, "solver", "c_vector", None, "current_iterate")
    target = _merged(cfg, "solver", "target", args.target, DEFAULT_TARGETS.get(name, 0.0))
    out_dir = Path(_merged(cfg, "output", "dir", args.out, "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    policy = _build_policy(cfg, args, target)
    ev = MuEvaluator(problem, policy=policy)
    opr = NEPOperator(problem, ev)
    settings = NewtonSettings(tol_relres=tol, maxit=maxit, c_vector=c_vector, seed=seed)
    result = compute_k_eigenpairs(opr, k, settings=settings, lambda0=float(target))

    with open(out_dir / "eigenpairs.csv", "w") as fh:
        fh.write("index,lambda,relres_nep,relres_nepv\n")
        for i, e in enumerate(result.pairs):
            fh.write("%d,%.17g,%.17g,%.17g\n" % (i, e.lam, e.residual_nep, e.residual_nepv))
    with open(out_dir / "mu_at_eigs.csv", "w") as fh:
        fh.write("index,lambda," + ",".join(f"mu2_{i + 1}" for i in range(problem.m)) + "\n")
        for i, e in enumerate(result.pairs):
            fh.write("%d,%.17g,%s\n" % (i, e.lam, ",".join("%.17g" % x for x in e.mu**2)))
    with open(out_dir / "report.json", "w") as fh:
        json.dump([r.to_dict() for r in result.reports], fh, indent=2)

    print(format_report_table(result.reports))
    if result.failures:
        for idx, errs in result.failures:
            print(f"pair {idx} failed:", file=sys.stderr)
            for start, msg in errs:
                print(f"  start {start}: {msg}", file=sys.stderr)
    if len(result.pairs) == k:
        return 0
    return 2 if result.pairs else 1


def cmd_mu_curve(args) -> int:
    cfg = _load_config(args.config)
    try:
        problem, name = _build_problem(cfg, args)
    except NEPvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    lmin = _merged(cfg, "curve", "lambda_min", args.lambda_min)
    lmax = _merged(cfg, "curve", "lambda_max", args.lambda_max)
    samples = int(_merged(cfg, "curve", "samples", args.samples, 200))
    out_csv = _merged(cfg, "curve", "out", args.out, "mu_curves.csv")
    if lmin is None or lmax is None or not (float(lmin) < float(lmax)) or samples < 1:
        print("error: need a nonempty lambda range and samples >= 1", file=sys.stderr)
        return 1
    ev = MuEvaluator(problem, policy=BranchPolicy.smallest_residual())
    grid = np.linspace(float(lmin), float(lmax), samples)
    table = sample_curves(ev, grid)
    table.write_csv(out_csv)
    print(f"wrote {len(table.rows)} rows ({len(table.errors)} errored points) to {out_csv}")
    return 0


def _verify_equivalence(seed: int) -> list[tuple[str, bool, str]]:
    from .verification import brute_force_nepv, check_equivalence

    out = []
    for name, problem, k, lam0 in (
        ("paper-2x2", paper_2x2_problem(), 2, 3.0),
        ("paper-3x3", paper_3x3_problem(), 3, -5.0),
    ):
        ev = MuEvaluator(problem)
        opr = NEPOperator(problem, ev)
        result = compute_k_eigenpairs(opr, k, settings=NewtonSettings(seed=seed),
                                      lambda0=lam0)
        oracle = brute_force_nepv(problem, n_starts=300, seed=seed)
        rep = check_equivalence(problem, result.pairs, oracle, tol=1e-6)
        detail = f"{len(rep.matched)} matched"
        if not rep.ok:
            detail += f", missing {rep.missing_from_nep}, extra {rep.extra_in_nep}"
        out.append((f"equivalence/{name}", rep.ok, detail))
    return out


def _verify_singularity(seed: int) -> list[tuple[str, bool, str]]:
    from .verification import locate_mu_zero, singularity_fit

    problem = paper_3x3_problem()
    ev = MuEvaluator(problem, policy=BranchPolicy.continuity())
    lam_star = locate_mu_zero(ev, 14.0, 19.0165, comp=1)
    fit = singularity_fit(ev.clone(), lam_star, side=1)
    ok_slope = abs(fit.slope - 2.0 / 3.0) <= 0.05
    ok_lemma = fit.lemma_gap <= 1e-6
    return [
        ("singularity/slope", ok_slope, f"slope {fit.slope:.4f} at lambda*={lam_star:.6f}"),
        ("singularity/analytic-limit", ok_lemma, f"gap {fit.lemma_gap:.2e}"),
    ]


def _verify_jacobian(seed: int) -> list[tuple[str, bool, str]]:
    from .coefficient_eval import eval_gh
    from .polysys import PolySystem
    from .verification import fd_jacobian_suite

    rng = np.random.default_rng(seed)
    instances = []
    problem = paper_3x3_problem()
    gh = eval_gh(problem, 7.5)
    pts = [rng.standard_normal(2) for _ in range(20)]
    instances.append(("paper-3x3", PolySystem.from_gh(gh), pts))
    for m in (3, 5):
        G = rng.standard_normal((m, m))
        G = G @ G.T + m * np.eye(m)
        H = rng.standard_normal((m, m))
        H = 0.5 * (H + H.T)
        from .coefficient_eval import GHPair

        sys_ = PolySystem.from_gh(GHPair(lam=0.0, G=G, H=H, solves_used=m))
        instances.append((f"random-m{m}", sys_, [rng.standard_normal(m) for _ in range(20)]))
    checks = fd_jacobian_suite(instances)
    return [(f"jacobian/{c.label}", c.ok, f"max rel err {c.max_rel_err:.2e}") for c in checks]


def cmd_verify(args) -> int:
    suites = {
        "equivalence": _verify_equivalence,
        "singularity": _verify_singularity,
        "jacobian": _verify_jacobian,
    }
    names = list(suites) if args.suite == "all" else [args.suite]
    seed = args.seed if args.seed is not None else 0
    rows = []
    for name in names:
        rows.extend(suites[name](seed))
    width = max(len(r[0]) for r in rows) + 2
    failures = 0
    for label, ok, detail in rows:
        status = "PASS" if ok else "FAIL"
        failures += not ok
        print(f"{label.ljust(width)} {status}  {detail}")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nepv2nep", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override it")
    common.add_argument("--example", choices=EXAMPLES, help="builtin problem")
    common.add_argument("--problem-dir", help="directory of Matrix Market files "
                                              "(A0.mtx, E.mtx, B.mtx, Am.mtx)")
    common.add_argument("--grid", type=int, help="grid points per axis (gpe example)")

    s = sub.add_parser("solve", parents=[common], help="compute eigenpairs with deflation")
    s.add_argument("-k", type=int, default=None, help="number of eigenpairs")
    s.add_argument("--tol", type=float, default=None, help="relative residual tolerance")
    s.add_argument("--seed", type=int, default=None, help="seed for seeded c-vector mode")
    s.add_argument("--target", type=float, default=None, help="starting lambda")
    s.add_argument("--branch", choices=("target", "continuity", "residual"), default=None)
    s.add_argument("--out", default=None, help="output directory")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("mu-curve", parents=[common], help="sample mu^2 branches to CSV")
    c.add_argument("--lambda-min", type=float, default=None)
    c.add_argument("--lambda-max", type=float, default=None)
    c.add_argument("--samples", type=int, default=None)
    c.add_argument("--out", default=None, help="output CSV path")
    c.set_defaults(func=cmd_mu_curve)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("suite", choices=("equivalence", "singularity", "jacobian", "all"))
    v.add_argument("--seed", type=int, default=None)
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        raise
    except NEPvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
