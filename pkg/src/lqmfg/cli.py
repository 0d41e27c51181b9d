"""Batch front-end: ``lqmfg solve|verify|sweep <config>``."""

from __future__ import annotations

import argparse
import csv
import os
import sys
import warnings
import zlib
from dataclasses import replace as dc_replace

import numpy as np

from .config import Scenario, parse_config
from .delay import DelayParams, build_delay_problem, segment_refinement_study
from .errors import ConfigError, LQMFGError, NoCertificateError
from .eta import beta_T
from .fbs import contraction_constant, solve_decoupled, solve_picard
from .instances import random_problem
from .linops import HilbertSpace, growth_bound, semigroup_sup
from .montecarlo import MCConfig, monte_carlo_consistency
from .paths import TimeGrid
from .problem import MFGProblem
from .riccati import default_grid, p_bound, riccati_residual, residual_tol, solve_riccati_p
from .verify import check_standing_assumptions, check_uniqueness_conditions, yosida_convergence_study

AGREEMENT_RTOL = 1e-6
RATIO_SLACK = 0.05


def stage_seed(seed: int, stage: str, index: int = 0) -> int:
    """Seed for ``stage`` derived from the scenario seed and a stage index."""
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(stage.encode()), index))
    return int(ss.generate_state(1, np.uint64)[0])


def build_problem(s: Scenario) -> MFGProblem:
    p = s.parameters
    if s.kind == "scalar":
        keys = ("a", "b", "R", "q", "qbar", "qT", "qbarT", "S", "ST", "sigma", "T", "z0", "c", "cT")
        return MFGProblem.scalar(**{k: p[k] for k in keys})
    if s.kind == "random_psd":
        rng = np.random.default_rng(stage_seed(s.seed, "problem"))
        return random_problem(rng, dim=p["dim"], T=p["T"], dissipative=p["dissipative"],
                              contractive=p["contractive"], scale=p["scale"])
    if s.kind == "delay":
        return build_delay_problem(delay_params(s))
    n = len(p["A"])
    zero = np.zeros((n, n))
    get = lambda k, default: np.array(p[k], dtype=float) if k in p else default  # noqa: E731
    space = HilbertSpace(p["weights"]) if "weights" in p else None
    return MFGProblem(
        get("A", None), get("B", None), get("Q", None), get("Qbar", zero), get("QT", None),
        get("QbarT", zero), get("R", None), get("S", zero), get("ST", zero),
        get("sigma", np.zeros((n, 1))), p["T"], get("z0", None),
        affine_c=get("c", None), affine_cT=get("cT", None), space=space,
    )


def delay_params(s: Scenario) -> DelayParams:
    p = s.parameters
    keys = ("d", "b_kernel", "delta_past", "sigma", "r_cost", "beta", "eta_price", "gamma", "T", "k0", "n_seg")
    return DelayParams(**{k: p[k] for k in keys})


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_solution_csv(path, problem, P, sol):
    n = problem.dim
    grid = P.grid
    header = ["t"] + [f"z_{i}" for i in range(n)] + [f"r_{i}" for i in range(n)] + ["P_norm", "s"]
    nan = np.full((len(grid), n), np.nan)
    z = sol.z.values if sol is not None else nan
    r = sol.r.values if sol is not None else nan
    s = sol.s if sol is not None and sol.s is not None else np.full(len(grid), np.nan)
    pn = P.norms(problem.space)
    data = np.column_stack([grid.nodes, z, r, pn, s])
    write_csv(path, header, data)


def write_mc_csv(path, res):
    mean = res.mean_path.values
    header = ["t"] + [f"mean_{i}" for i in range(mean.shape[1])] + ["stderr"]
    write_csv(path, header, np.column_stack([res.mean_path.grid.nodes, mean, res.stderr_path]))


class _Run:
    """State shared by the stages of one scenario run."""

    def __init__(self, s: Scenario, out_dir: str):
        self.s = s
        self.out = out_dir
        self.lines = []
        self.kv = []
        self.failures = []
        self.problem = None
        self.P = None
        self.grid = None
        self.gb = None
        self.dec = None
        self.pic = None

    def put(self, key, value):
        if isinstance(value, float):
            value = _fmt(value)
        elif isinstance(value, (list, tuple)):
            value = ",".join(_fmt(v) for v in value)
        self.kv.append(f"{key} = {value}")

    def fail(self, stage, why):
        self.failures.append(stage)
        self.lines.append(f"[{stage}] FAILED: {why}")

    @property
    def solution(self):
        return self.dec or self.pic

    def need_P(self):
        if self.P is None:
            self.stage_riccati()
        return self.P

    def need_solution(self):
        if self.solution is None:
            self.stage_decoupled()
        return self.solution

    # stages

    def setup(self):
        s = self.s
        self.problem = build_problem(s)
        pr = self.problem
        self.grid = TimeGrid(pr.T, s.steps) if s.steps is not None else default_grid(pr.T, pr)
        self.gb = growth_bound(pr.A, pr.T, space=pr.space)
        self.lines.append(f"scenario: {s.name}")
        self.lines.append(f"kind: {s.kind}, dim: {pr.dim}, T: {pr.T:g}, steps: {self.grid.n_steps}, seed: {s.seed}")
        ct = contraction_constant(pr, self.gb)
        self.put("dim", pr.dim)
        self.put("n_steps", self.grid.n_steps)
        self.put("growth_M", self.gb.M)
        self.put("growth_omega", self.gb.omega)
        self.put("C_T", ct.C_T)
        self.lines.append(f"C_T = {ct.C_T:.6g} ({'contraction' if ct.is_contraction else 'no contraction'})")

    def stage_riccati(self):
        pr = self.problem
        self.P = solve_riccati_p(pr, self.grid)
        res = riccati_residual(self.P, pr)
        bound = p_bound(pr, self.gb)
        sup = float(np.max(self.P.norms(pr.space)))
        self.put("P_sup_norm", sup)
        self.put("P_bound", bound)
        self.put("riccati_residual", res)
        self.put("riccati_tol", residual_tol(pr, self.grid))
        self.put("beta_T", beta_T(pr, self.P, semigroup_sup(pr.A, pr.T, space=pr.space)))
        self.lines.append(f"[riccati] sup ||P|| = {sup:.6g} <= bound {bound:.6g}; residual {res:.3e}")
        if sup > bound * (1 + 1e-6):
            self.fail("riccati", f"sup ||P|| = {sup:.6g} exceeds bound {bound:.6g}")

    def stage_decoupled(self):
        pr = self.problem
        self.dec = solve_decoupled(pr, self.need_P())
        cert = self.dec.diagnostics["eta_certificate"]
        self.put("eta_beta_T", cert.beta_T)
        self.put("eta_segments", len(cert.segments))
        self.put("residual_r", self.dec.diagnostics["residual_r"])
        self.put("residual_z", self.dec.diagnostics["residual_z"])
        self.lines.append(
            f"[decoupled] eta certified on {len(cert.segments)} segment(s), beta_T = {cert.beta_T:.6g}"
        )

    def stage_picard(self):
        pr, p = self.problem, self.s.parameters
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            self.pic, ratios = solve_picard(pr, self.need_P(), tol=p["picard_tol"],
                                            max_iter=p["max_iter"], gb=self.gb)
        d = self.pic.diagnostics
        ct = d["C_T"]
        self.put("picard_iterations", d["iterations"])
        self.put("picard_ratios", ratios or ["nan"])
        self.lines.append(
            f"[picard] {d['iterations']} sweep(s), converged = {d['converged']}, "
            f"ratios = {', '.join(f'{x:.4g}' for x in ratios) or 'none'}"
        )
        if not d["converged"]:
            self.fail("picard", f"no convergence in {d['iterations']} sweeps")
        if ct < 1 and ratios and max(ratios) > ct + RATIO_SLACK:
            self.fail("picard", f"ratio {max(ratios):.4g} exceeds C_T + {RATIO_SLACK} = {ct + RATIO_SLACK:.4g}")
        if ct >= 1:
            self.lines.append("[picard] note: C_T >= 1, uniqueness of the limit rests on the regime check")
        if self.dec is not None:
            sp = pr.space
            gap = float(np.max(sp.norm(self.dec.z.values - self.pic.z.values)
                               + sp.norm(self.dec.r.values - self.pic.r.values)))
            tol = AGREEMENT_RTOL * (1 + float(sp.norm(pr.z0)))
            self.put("picard_decoupled_gap", gap)
            self.lines.append(f"[picard] gap to decoupled solution {gap:.3e} (tol {tol:.1e})")
            if gap > tol:
                self.fail("picard", f"disagrees with decoupled solution by {gap:.3e}")

    def stage_verify(self):
        pr = self.problem
        std = check_standing_assumptions(pr)
        uni = check_uniqueness_conditions(pr, self.gb)
        self.lines.append("[verify] standing assumptions")
        self.lines.extend(std.to_text().splitlines())
        self.lines.append("[verify] uniqueness conditions")
        self.lines.extend(uni.to_text().splitlines())
        self.kv.extend(std.to_kv().splitlines())
        self.kv.extend(uni.to_kv().splitlines())
        if not std.passed:
            self.fail("verify", "standing assumptions violated: "
                      + "; ".join(name for name, _, _ in std.failed()))

    def stage_montecarlo(self):
        pr, p = self.problem, self.s.parameters
        sol = self.need_solution()
        cfg = MCConfig(n_paths=p["mc_paths"], seed=stage_seed(self.s.seed, "montecarlo"),
                       n_steps=p.get("mc_steps"), scheme=p["mc_scheme"], workers=p["workers"])
        res = monte_carlo_consistency(pr, sol, cfg)
        write_mc_csv(os.path.join(self.out, "mc.csv"), res)
        self.put("mc_max_deviation", res.max_deviation)
        self.put("mc_cost_estimate", res.cost_estimate)
        self.put("mc_cost_stderr", res.cost_stderr)
        self.lines.append(
            f"[montecarlo] {res.n_paths} paths, max deviation {res.max_deviation:.3e}, "
            f"cost {res.cost_estimate:.6g} +- {res.cost_stderr:.2g}"
        )
        if not res.contract_ok:
            self.fail("montecarlo", "ensemble mean leaves the 3 stderr + allowance band")

    def stage_yosida_study(self):
        pr, p = self.problem, self.s.parameters
        st = yosida_convergence_study(pr, self.need_P(), p["yosida_ns"], reference=self.need_solution())
        self.put("yosida_ns", list(st.ns))
        self.put("yosida_gaps", st.gaps)
        self.lines.append(
            f"[yosida_study] gaps {', '.join(f'{g:.3e}' for g in st.gaps)}; "
            f"monotone = {st.monotone}; below 1e-4 = {st.below_target}"
        )
        if not st.monotone:
            self.fail("yosida_study", "gaps are not monotone")

    def stage_refine_study(self):
        p = self.s.parameters
        st = segment_refinement_study(delay_params(self.s), p["refine_segs"], n_steps=self.s.steps)
        self.put("refine_segs", list(st.segs))
        self.put("refine_gaps", st.gaps)
        self.lines.append(
            f"[refine_study] gaps {', '.join(f'{g:.3e}' for g in st.gaps)}; "
            f"ratios {', '.join(f'{x:.3f}' for x in st.ratios) or 'none'}; monotone = {st.monotone}"
        )
        if not st.monotone:
            self.fail("refine_study", "gaps are not monotone")


def run_scenario(s: Scenario, out_dir: str | None = None) -> int:
    """Run the stages of ``s`` in order and write the artifacts.

    Writes ``solution.csv`` (when a Riccati path is available),
    ``report.txt`` and, for the montecarlo stage, ``mc.csv``.

    Returns
    -------
    int
        0 when every stage contract held, 1 otherwise.
    """
    out = out_dir or s.output_dir
    os.makedirs(out, exist_ok=True)
    run = _Run(s, out)
    stage = "setup"
    try:
        run.setup()
        for stage in s.run:
            getattr(run, f"stage_{stage}")()
    except NoCertificateError as exc:
        run.fail(stage, f"no-certificate: {exc}" if "no-certificate" not in str(exc) else str(exc))
    except (LQMFGError, ValueError, np.linalg.LinAlgError) as exc:
        run.fail(stage, f"{type(exc).__name__}: {exc}")
    if run.P is not None:
        write_solution_csv(os.path.join(out, "solution.csv"), run.problem, run.P, run.solution)
    status = 1 if run.failures else 0
    run.lines.append(f"status = {'ok' if status == 0 else 'failed'}")
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(run.lines) + "\n\n")
        fh.write("\n".join(run.kv + [f"status = {status}"]) + "\n")
    return status


def _load(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _safe(text):
    return "".join(ch if ch.isalnum() or ch in "-_.+=" else "_" for ch in text)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lqmfg", description="LQ mean-field game solver")
    sub = ap.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", help="run the stages of a scenario")
    p_solve.add_argument("config")
    p_solve.add_argument("--out")
    p_solve.add_argument("--steps", type=int)
    p_solve.add_argument("--seed", type=int)
    p_ver = sub.add_parser("verify", help="run a scenario with the verify stage added")
    p_ver.add_argument("config")
    p_ver.add_argument("--out")
    p_sw = sub.add_parser("sweep", help="re-run a scenario for several values of one key")
    p_sw.add_argument("config")
    p_sw.add_argument("--param", required=True)
    p_sw.add_argument("--values", required=True)
    p_sw.add_argument("--out")
    args = ap.parse_args(argv)

    try:
        s = _load(args.config)
        if args.command == "solve":
            if args.steps is not None:
                s = s.with_value("steps", str(args.steps))
            if args.seed is not None:
                s = s.with_value("seed", str(args.seed))
        elif args.command == "verify" and "verify" not in s.run:
            s = dc_replace(s, run=s.run + ("verify",))
        jobs = [(s, args.out or s.output_dir)]
        if args.command == "sweep":
            base = args.out or s.output_dir
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            if not values:
                raise ConfigError("--values is empty")
            jobs = [(s.with_value(args.param, v), os.path.join(base, _safe(f"{args.param}={v}")))
                    for v in values]
    except (OSError, ConfigError) as exc:
        print(f"lqmfg: {exc}", file=sys.stderr)
        return 2

    status = 0
    for sc, out in jobs:
        st = run_scenario(sc, out)
        print(f"{sc.name}: {'ok' if st == 0 else 'FAILED'} -> {out}")
        status = max(status, st)
    return status


if __name__ == "__main__":
    sys.exit(main())
