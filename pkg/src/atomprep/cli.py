"""Command-line runner: ``atomprep <subcommand> [--config PATH] [--out DIR] [--seed N] [--threads N]``.

Each experiment subcommand writes one CSV (first line ``# units: ...``, then a
header row) and ``manifest.json`` into the output directory.  The exit code
is 0 exactly when every gated check passes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import KINDS, ConfigError, ExperimentConfig
from .errors import AtomprepError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_ERROR = 0, 1, 2


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""


@dataclass
class Table:
    name: str
    units: str
    header: list[str]
    rows: list[list] = field(default_factory=list)

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# units: {self.units}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([_fmt(x) for x in r])
        return buf.getvalue()


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


# ----------------------------------------------------------------------------
# experiments
# ----------------------------------------------------------------------------

def _objects(cfg: ExperimentConfig):
    base = Path(cfg.base_dir) if cfg.base_dir else None
    return cfg.atom.build(), cfg.form_factor.build(base), cfg.schedule.build()


def run_validate(cfg):
    from .lindblad import fermi_golden_rule
    from .model import validate_assumptions

    atom, ff, sched = _objects(cfg)
    rep = validate_assumptions(atom, ff, sched)
    fgr = fermi_golden_rule(atom, ff)
    t = Table("validate", "dimensionless (hbar = 1)", ["check", "passed", "value", "detail"])
    checks = []
    for c in rep.checks:
        t.rows.append([c.name, c.passed, "", c.detail])
        checks.append(Check(c.name, c.passed, None, None, c.detail))
    t.rows.append(["fermi_golden_rule", fgr.passed, min(fgr.rates.values(), default=math.nan), ""])
    checks.append(Check("fermi_golden_rule", fgr.passed, min(fgr.rates.values(), default=math.nan)))
    return [t], checks


def run_lindblad(cfg):
    from .lindblad import (fermi_golden_rule, lindbladian_closed_form, lindbladian_direct,
                           spectral_check, stationary_left_vector)

    atom, ff, _ = _objects(cfg)
    p = cfg.params
    gen = lindbladian_closed_form(atom, ff) if p.lindblad_method == "closed" else lindbladian_direct(atom, ff)
    rep = spectral_check(gen)
    n = atom.n
    t = Table("lindblad", "generator entries in units of energy (hbar = 1), Pi_ij basis",
              ["row", "col", "re", "im"])
    Mm = gen.M.matrix
    for r in range(n * n):
        for c in range(n * n):
            t.rows.append([r, c, Mm[r, c].real, Mm[r, c].imag])
    s = Table("spectrum", "eigenvalues in units of energy", ["index", "re", "im"])
    for k, z in enumerate(rep.eigenvalues):
        s.rows.append([k, z.real, z.imag])
    fgr = fermi_golden_rule(atom, ff)
    f = Table("fgr", "rates in units of energy; level is 1-based", ["level", "rate", "passed"])
    for lvl, rate in fgr.rates.items():
        f.rows.append([lvl, rate, rate > fgr.threshold])
    tables = [t, s, f]
    if rep.gap_pass:
        rho = stationary_left_vector(gen)
        st = Table("stationary", "density matrix entries, dimensionless; 1-based indices",
                   ["row", "col", "re", "im"])
        for a in range(n):
            for b in range(n):
                st.rows.append([a + 1, b + 1, rho[a, b].real, rho[a, b].imag])
        tables.append(st)
    checks = [Check("simple_zero_eigenvalue", rep.zero_multiplicity == 1, rep.zero_multiplicity, 1),
              Check("spectral_gap", rep.gap_pass, rep.max_re_nonzero, -1e-9)]
    return tables, checks


def run_dyson_compare(cfg):
    from .dyson import compare_Z0_lindblad, dyson_Z0
    from .lindblad import lindbladian_closed_form, semigroup
    from .superop import op_norm_inf

    atom, ff, _ = _objects(cfg)
    p = cfg.params
    gen = lindbladian_closed_form(atom, ff)
    t = Table("dyson-compare", "lambda dimensionless; tau in units of time x coupling^2; norms of superoperators",
              ["lambda", "tau", "order", "norm_Z0_minus_semigroup", "tail_bound"])
    oracle = []
    for lam in p.lambdas:
        h = p.tau / lam ** 2
        r = compare_Z0_lindblad(atom, ff, lam, p.s, p.tau, M_modes=p.M, r_max=p.r_max,
                                n_max=p.n_max, dt=p.dt, gen=gen)
        t.rows.append([lam, p.tau, -1, r.lhs_norm, math.nan])
        oracle.append((lam, r.lhs_norm))
        if h <= p.dyson_horizon:
            d = dyson_Z0(atom, ff, lam, p.s, p.s + h, p.k_max, seed=p.seed)
            diff = d.Z - semigroup(atom, gen, lam, h)
            t.rows.append([lam, p.tau, p.k_max, op_norm_inf(diff).lower, d.tail_bound])
    checks = []
    for (l1, v1), (l2, v2) in zip(oracle[:-1], oracle[1:]):
        if abs(l1 / l2 - 2) < 1e-9 and v2 > 0:
            ratio = v1 / v2
            checks.append(Check(f"halving_ratio_{l1:g}_{l2:g}", 3.0 <= ratio <= 5.0, ratio, None,
                                "expected in [3, 5]"))
    return [t], checks


def _ground_projector(n):
    O = np.zeros((n, n), dtype=complex)
    O[0, 0] = 1
    return O


def run_prepare(cfg):
    from .fock import InitialStateSpec, build_hamiltonian, discretize_field, mode_profile, prepare_experiment

    atom, ff, sched = _objects(cfg)
    p = cfg.params
    M = p.M or 96
    fld = discretize_field(ff, M, p.r_max)
    level = atom.n - 1 if p.level is None else p.level

    def spec(ham):
        prof = (mode_profile(fld, lambda r: r * np.exp(-r)),) if p.photon else ()
        return InitialStateSpec(level, prof)

    ham = build_hamiltonian(atom, fld, p.n_max)
    tr = prepare_experiment(ham, sched, spec(ham), p.t_end, p.dt, _ground_projector(atom.n))
    t = Table("prepare", "t in units of 1/energy; populations and <O> dimensionless", tr.header())
    t.rows = [list(r) for r in tr.rows()]
    g = float(tr.final_populations()[0])
    checks = [Check("final_ground_population", g >= p.ground_threshold, g, p.ground_threshold)]
    if p.truncation_gate and p.n_max > 1:
        coarse = build_hamiltonian(atom, fld, p.n_max - 1)
        tc = prepare_experiment(coarse, sched, spec(coarse), p.t_end, p.dt, sample_every=p.t_end)
        inc = float(np.abs(tc.final_populations() - tr.final_populations()).max())
        checks.append(Check("truncation_increment", inc < 1e-3, inc, 1e-3))
    return [t], checks


def run_thermal(cfg):
    from .lindblad import gibbs_state, lindbladian_thermal, schrodinger_evolve

    atom, ff, _ = _objects(cfg)
    p = cfg.params
    gen = lindbladian_thermal(atom, ff, p.beta, allow_degenerate=True)
    gibbs = gibbs_state(atom, p.beta)
    n = atom.n
    rho0 = _ground_projector(n) * 0
    rho0[n - 1, n - 1] = 1
    lam = cfg.schedule.lambda0
    t = Table("thermal", "t in units of 1/energy; populations dimensionless",
              ["t"] + [f"pop_{i + 1}" for i in range(n)] + ["dist_to_gibbs"])
    # horizon given in rescaled time lambda^2 t
    times = np.linspace(0.0, p.tau_end / lam ** 2, 11)
    dist = math.nan
    for tt in times:
        rho = schrodinger_evolve(atom, gen, lam, float(tt), rho0)
        dist = float(np.linalg.norm(rho - gibbs, 2))
        t.rows.append([float(tt)] + [float(x) for x in np.real(np.diag(rho))] + [dist])
    left = gen.M.matrix.conj().T @ gibbs.reshape(-1)
    res = float(np.abs(left).max())
    return [t], [Check("gibbs_left_null", res < 1e-8, res, 1e-8),
                 Check("converged_to_gibbs", dist < 1e-6, dist, 1e-6)]


def run_kp_check(cfg):
    from .model import l1_norm_f
    from .polymer import WeightLedger, kp_criterion_check, van_hove_grid

    atom, ff, sched = _objects(cfg)
    p = cfg.params
    grid = van_hove_grid(sched, p.tau, p.N + 1)
    led = WeightLedger.build(grid, ff, atom.coupling_norm(), p.eps0, n_vertices=p.N + 1,
                             l1=l1_norm_f(ff))
    r = kp_criterion_check(grid, led)
    t = Table("kp-check", "dimensionless majorant terms",
              ["vertex", "anchor_sum", "majorant", "q", "pass"])
    for v in range(r.anchor_sums.size):
        t.rows.append([v, r.anchor_sums[v], r.majorant[v], r.q, r.passed])
    checks = [Check("kp_majorant", r.passed, r.lhs_sup, 1.0, r.reason or f"q={r.q:.6g}")]
    return [t], checks


def run_cluster_demo(cfg):
    from .polymer import cluster_identity_check

    p = cfg.params
    rng = np.random.default_rng(p.seed)
    systems = [("config", np.array(p.weights), -np.ones((len(p.weights), len(p.weights))))]
    for k in range(p.n_random):
        P = int(rng.integers(2, 5))
        X = -np.eye(P)
        for i in range(P):
            for j in range(i + 1, P):
                if rng.random() < 0.5:
                    X[i, j] = X[j, i] = -1
        systems.append((f"random_{k}", rng.uniform(0.01, 0.08, P), X))
    t = Table("cluster-demo", "dimensionless",
              ["system", "order", "partial_sum", "log_Z", "abs_error", "tail_bound"])
    ok = True
    for name, w, X in systems:
        r = cluster_identity_check(w, X, n_max=p.series_order)
        for n in range(p.series_order):
            t.rows.append([name, n + 1, r.partial_sums[n], r.log_Z, r.errors[n], r.tail_bounds[n]])
        ok &= bool(np.all(r.errors <= r.tail_bounds))
    return [t], [Check("series_within_tail_bound", ok)]


def run_grid(cfg):
    from .model import coupling_at
    from .polymer import van_hove_grid

    _, _, sched = _objects(cfg)
    p = cfg.params
    g = van_hove_grid(sched, p.tau, p.N)
    t = Table("grid", "t in units of 1/energy; lambda dimensionless",
              ["i", "t_i", "lambda_i", "gap"])
    lam = g.lam()
    worst = 0.0
    for i in range(g.N + 1):
        gap = g.times[i + 1] - g.times[i] if i < g.N else math.nan
        if i < g.N:
            want = p.tau / float(coupling_at(sched, g.times[i])) ** 2
            worst = max(worst, abs(gap - want) / want)
        t.rows.append([i, g.times[i], lam[i], gap])
    return [t], [Check("recursion_exact", worst < 1e-12, worst, 1e-12)]


RUNNERS: dict[str, Callable] = {
    "validate": run_validate,
    "lindblad": run_lindblad,
    "dyson-compare": run_dyson_compare,
    "prepare": run_prepare,
    "thermal": run_thermal,
    "kp-check": run_kp_check,
    "cluster-demo": run_cluster_demo,
    "grid": run_grid,
}


# ----------------------------------------------------------------------------
# manifest and report
# ----------------------------------------------------------------------------

def _versions() -> dict:
    import scipy

    from .kernels import BACKEND

    return {"atomprep": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "kernel_backend": BACKEND}


def run(cfg: ExperimentConfig, out_dir: Path, threads: int | None = None) -> tuple[dict, int]:
    """Execute one experiment, write its CSVs and manifest, return (manifest, exit code)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tables, checks = RUNNERS[cfg.kind](cfg)
    wall = time.perf_counter() - t0
    files = []
    for tab in tables:
        path = out_dir / f"{tab.name}.csv"
        path.write_text(tab.to_text())
        files.append(path.name)
    manifest = {
        "kind": cfg.kind,
        "config_hash": cfg.hash(),
        "config": cfg.to_dict(),
        "seed": cfg.params.seed,
        "threads": threads,
        "versions": _versions(),
        "wall_time_s": wall,
        "warnings": [f"{w.category.__name__}: {w.message}" for w in caught],
        "checks": [c.__dict__ for c in checks],
        "outputs": files,
        "passed": all(c.passed for c in checks),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default))
    return manifest, EXIT_OK if manifest["passed"] else EXIT_CHECK_FAILED


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return str(x)


def _find_manifests(paths: list[str]) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(p.rglob("manifest.json")))
        elif p.is_file():
            found.append(p)
        else:
            raise FileNotFoundError(f"missing manifest path {p}")
    if not found:
        raise FileNotFoundError("no manifest.json found")
    return found


def report(paths: list[str], out_dir: Path | None = None) -> tuple[str, int]:
    rows = []
    for mpath in _find_manifests(paths):
        m = json.loads(mpath.read_text())
        for c in m.get("checks", []):
            rows.append([str(mpath.parent), m.get("kind", ""), c["name"],
                         "PASS" if c["passed"] else "FAIL", c.get("value")])
    rows.sort(key=lambda r: (r[3] != "FAIL", r[0], r[2]))
    tab = Table("report", "check values carry the units of the originating run",
                ["run", "kind", "check", "status", "value"], rows)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.csv").write_text(tab.to_text())
    width = max((len(r[2]) for r in rows), default=5)
    lines = [f"{r[3]}  {r[1]:<14} {r[2]:<{width}}  {_fmt(r[4]) if r[4] is not None else ''}" for r in rows]
    status = EXIT_OK if all(r[3] == "PASS" for r in rows) else EXIT_CHECK_FAILED
    return "\n".join(lines), status


# ----------------------------------------------------------------------------
# argparse
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="atomprep", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"atomprep {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", type=Path, help="YAML experiment config")
        sp.add_argument("--out", type=Path, help="output directory (default: config output or ./out/<kind>)")
        sp.add_argument("--seed", type=int, help="override params.seed")
        sp.add_argument("--threads", type=int, help="BLAS thread count hint (recorded in the manifest)")
    rp = sub.add_parser("report", help="summarize manifests")
    rp.add_argument("paths", nargs="+", help="manifest files or directories")
    rp.add_argument("--out", type=Path, help="directory for report.csv")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        try:
            text, code = report(args.paths, args.out)
        except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        print(text)
        return code
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg = (ExperimentConfig.load(args.config, args.command) if args.config
               else ExperimentConfig.default(args.command))
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = args.out or Path(cfg.output or Path("out") / args.command)
        manifest, code = run(cfg, out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except AtomprepError as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for c in manifest["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  {_fmt(c['value']) if c['value'] is not None else ''}")
    print(f"wrote {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
