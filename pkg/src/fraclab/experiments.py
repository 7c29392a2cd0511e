"""Experiment drivers: one per CLI subcommand, each writing deterministic CSVs.

Float cells use shortest round-trip repr; comment lines carry the tool
version and a config hash but never timestamps, so reruns are byte-identical.
"""
from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import RunConfig, build_domain, build_frac, build_problem, build_weight, lambda_values
from .extension import extension_profile, ks_constant, mode_extension_energy, profile_energy_constant
from .functionals import (closed_form_threshold, critical_exponent,
                          estimate_sigma_d_constant, half_mass_bound,
                          sobolev_constant, threshold_c_star)
from .instanton import (TruncatedInstanton, default_rho, fiber_scalars,
                        lp_rate_experiment, rayleigh_sweep, sup_vs_threshold)
from .nehari import (estimate_lambda_tilde, instanton_seed, minimize_on_nehari,
                     multiplicity_search, ps_diagnostics)
from .spectral import FractionalParams, build_basis


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


class CsvWriter:
    def __init__(self, out_dir: Path, cfg: RunConfig):
        self.out_dir = out_dir
        self.cfg = cfg
        self.files: list[Path] = []

    def write(self, name: str, header: list[str], rows) -> Path:
        path = self.out_dir / name
        lines = [f"# fraclab {__version__}",
                 f"# subcommand={self.cfg.subcommand} config_sha256={self.cfg.sha256}",
                 ",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        self.files.append(path)
        return path


def _dump_coefficients(path: Path, field, basis):
    dom = basis.domain
    head = [
        f"# fraclab {__version__} solution coefficients",
        f"# lengths={','.join(repr(L) for L in dom.lengths)}",
        f"# dirichlet={','.join(sorted(dom.dirichlet_faces))}",
        f"# modes_per_axis={basis.modes_per_axis} quad_points_per_axis={basis.quad_points_per_axis}",
        "# ordering: ascending eigenvalue, lexicographic mode-index tie-break",
    ]
    body = [repr(float(c)) for c in field.coeffs]
    path.write_text("\n".join(head + body) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------


def run_eigen(cfg: RunConfig, out_dir: Path, make_plots: bool, threads: int) -> int:
    diags: list = []
    domain = build_domain(cfg, diags)
    frac = build_frac(cfg, diags)
    assert domain is not None and frac is not None
    modes = cfg.get("numerics", "modes", 16)
    basis = build_basis(domain, modes, cfg.get("numerics", "quad_points"))
    count = min(cfg.get("numerics", "modes_count", 32), basis.n_modes)

    w = CsvWriter(out_dir, cfg)
    header = ["index", "eigenvalue", "frac_eigenvalue"] + [f"k{a}" for a in range(domain.dim)]
    rows = []
    for j in range(count):
        lam = float(basis.eigenvalues[j])
        rows.append([j, lam, lam ** frac.s] + [int(v) for v in basis.mode_indices[j]])
    w.write("eigen.csv", header, rows)

    if make_plots:
        from .plots import plot_eigen
        plot_eigen(basis, frac, count, out_dir / "eigen.png")
    return 0


def run_isometry(cfg: RunConfig, out_dir: Path, make_plots: bool, threads: int) -> int:
    diags: list = []
    domain = build_domain(cfg, diags)
    s_list = cfg.get("problem", "s_list") or [cfg.get("problem", "s")]
    modes = cfg.get("numerics", "modes", 8)
    basis = build_basis(domain, modes, cfg.get("numerics", "quad_points"))
    count = min(cfg.get("numerics", "modes_count", 20), basis.n_modes)

    w = CsvWriter(out_dir, cfg)
    mode_rows = []
    prof_rows = []
    for s in s_list:
        frac = build_frac(cfg, diags, s=s)
        assert frac is not None
        for j in range(count):
            lam = float(basis.eigenvalues[j])
            target = lam ** s
            energy = mode_extension_energy(lam, frac)
            mode_rows.append([s, j, lam, target, energy, abs(energy - target) / target])
        prof = extension_profile(s, t_min=1e-6)
        identity = abs(ks_constant(s) * profile_energy_constant(s) - 1.0)
        prof_rows.append([s, identity, prof.trace_defect()])
    w.write("isometry.csv", ["s", "mode_index", "eigenvalue", "target", "energy", "rel_err"],
            mode_rows)
    w.write("isometry_profile.csv", ["s", "identity_residual", "trace_defect"], prof_rows)

    if make_plots:
        from .plots import plot_isometry
        plot_isometry(mode_rows, out_dir / "isometry.png")
    return 0


def run_sobolev(cfg: RunConfig, out_dir: Path, make_plots: bool, threads: int) -> int:
    n_list = cfg.get("problem", "n_list") or [cfg.get("problem", "n")]
    s_list = cfg.get("problem", "s_list") or [cfg.get("problem", "s")]
    w = CsvWriter(out_dir, cfg)
    rows = []
    for n in n_list:
        for s in s_list:
            rows.append([int(n), float(s), critical_exponent(n, s), ks_constant(s),
                         sobolev_constant(n, s), half_mass_bound(n, s)])
    w.write("sobolev.csv", ["n", "s", "crit_exp", "k_s", "s_sn", "half_mass_bound"], rows)

    status = 0
    domain = None
    if cfg.get("numerics", "estimate") or cfg.get("numerics", "instanton_sweep"):
        diags: list = []
        domain = build_domain(cfg, diags)

    if cfg.get("numerics", "estimate") and domain is not None:
        modes = cfg.get("numerics", "modes", 24)
        basis = build_basis(domain, modes, cfg.get("numerics", "quad_points"))
        est_rows = []
        for n in n_list:
            if n != domain.dim:
                continue
            for s in s_list:
                frac = FractionalParams(float(s), int(n))
                rep = estimate_sigma_d_constant(basis, frac,
                                                restarts=cfg.get("numerics", "restarts", 4),
                                                threads=threads)
                if not rep.converged:
                    status = 2
                est_rows.append([int(n), float(s), modes, rep.s_sigma_d,
                                 half_mass_bound(n, s), rep.s_sigma_d / half_mass_bound(n, s),
                                 rep.regime, threshold_c_star(rep, 1.0), rep.converged])
        w.write("sigma_d.csv",
                ["n", "s", "modes", "estimate", "bound", "ratio", "regime", "c_star", "converged"],
                est_rows)

    if cfg.get("numerics", "instanton_sweep") and domain is not None:
        s = float(s_list[0])
        frac = FractionalParams(s, domain.dim)
        center = cfg.get("instanton", "center") or domain.face_point(
            sorted(domain.neumann_faces)[0])
        rho = cfg.get("instanton", "rho") or default_rho(domain, center)
        pows = cfg.get("instanton", "eps_pows") or list(range(3, 8))
        modes = cfg.get("numerics", "modes", 64)
        basis = build_basis(domain, modes, cfg.get("numerics", "quad_points"))
        template = TruncatedInstanton(frac=frac, domain=domain, center=tuple(center),
                                      eps=rho * 2.0 ** (-max(pows)), rho=rho)
        sweep = rayleigh_sweep(template, [rho * 2.0 ** (-k) for k in pows], basis)
        sw_rows = [[e, e / rho, q, sweep.limit, q / sweep.limit - 1.0]
                   for e, q in zip(sweep.eps, sweep.quotients)]
        w.write("rayleigh.csv", ["eps", "eps_over_rho", "quotient", "limit", "excess"], sw_rows)
        w.write("rayleigh_fit.csv",
                ["extrapolated", "limit", "rel_err", "slope_constant", "monotone"],
                [[sweep.extrapolated, sweep.limit,
                  sweep.extrapolated / sweep.limit - 1.0, sweep.slope_constant,
                  sweep.monotone]])
        if make_plots:
            from .plots import plot_rayleigh
            plot_rayleigh(sweep, out_dir / "rayleigh.png")

    if make_plots:
        from .plots import plot_sobolev
        plot_sobolev(rows, out_dir / "sobolev.png")
    return status


def run_rates(cfg: RunConfig, out_dir: Path, make_plots: bool, threads: int) -> int:
    diags: list = []
    domain = build_domain(cfg, diags)
    frac = build_frac(cfg, diags)
    assert domain is not None and frac is not None
    center = tuple(cfg.get("instanton", "center"))
    rho = cfg.get("instanton", "rho") or default_rho(domain, center)
    pows = cfg.get("instanton", "eps_pows") or list(range(3, 9))
    eps_list = [rho * 2.0 ** (-k) for k in pows]
    p_list = cfg.get("instanton", "p_list") or [2.0, frac.dim / (frac.dim - 2 * frac.s), 6.0]
    modes = cfg.get("numerics", "modes", 64)
    basis = build_basis(domain, modes, cfg.get("numerics", "quad_points"))
    template = TruncatedInstanton(frac=frac, domain=domain, center=center,
                                  eps=min(eps_list), rho=rho)

    from .parallel import parallel_map
    fits = parallel_map(lambda p: lp_rate_experiment(p, eps_list, template, basis),
                        p_list, threads)

    w = CsvWriter(out_dir, cfg)
    rows = []
    for fit in fits:
        for e, v, r in zip(fit.eps, fit.values, fit.residuals):
            theory = (e ** (frac.dim / 2.0) * abs(math.log(e)) if fit.model == "log"
                      else e ** fit.theory_slope)
            rows.append([fit.p, e, v, theory, r])
    w.write("rates.csv", ["p", "eps", "value", "theory", "residual"], rows)
    w.write("rates_fit.csv", ["p", "model", "fitted_slope", "theory_slope", "r_squared"],
            [[f.p, f.model, f.fitted_slope, f.theory_slope, f.r_squared] for f in fits])

    if make_plots:
        from .plots import plot_rates
        plot_rates(fits, out_dir / "rates.png")
    return 0


def run_fiber(cfg: RunConfig, out_dir: Path, make_plots: bool, threads: int) -> int:
    diags: list = []
    domain = build_domain(cfg, diags)
    lams = lambda_values(cfg)
    pp0 = build_problem(cfg, diags, lam=lams[0])
    assert domain is not None and pp0 is not None
    weight = build_weight(cfg, diags, domain, pp0)
    assert weight is not None
    center = cfg.get("instanton", "center")
    center = tuple(center) if center else weight.maxima[0].point
    rho = cfg.get("instanton", "rho") or default_rho(domain, center)
    pows = cfg.get("instanton", "eps_pows") or [6]
    modes = cfg.get("numerics", "modes", 64)
    basis = build_basis(domain, modes, cfg.get("numerics", "quad_points"))
    thr = closed_form_threshold(pp0.frac, weight.q_max)

    w = CsvWriter(out_dir, cfg)
    rows = []
    crossovers = []
    for k in pows:
        eps = rho * 2.0 ** (-k)
        inst = TruncatedInstanton(frac=pp0.frac, domain=domain, center=center,
                                  eps=eps, rho=rho)
        scal = fiber_scalars(inst, pp0, weight, basis)
        crossover = math.inf
        for lam in lams:
            pp = replace(pp0, lam=lam)
            rep = sup_vs_threshold(inst, pp, weight, basis, thr, scalars=scal)
            rows.append([lam, eps, rep.t_max, rep.t0_closed, rep.sup_value,
                         rep.threshold, rep.margin, rep.beta_eps, rep.route])
            if rep.margin > 0 and lam < crossover:
                crossover = lam
        crossovers.append([eps, crossover if math.isfinite(crossover) else "none"])
    w.write("fiber.csv",
            ["lambda", "eps", "t_max", "t0_closed", "sup_value", "threshold",
             "margin", "beta_eps", "route"], rows)
    w.write("fiber_summary.csv", ["eps", "lambda_crossover"], crossovers)

    if make_plots:
        from .plots import plot_fiber
        plot_fiber(rows, thr, out_dir / "fiber.png")
    return 0


def _solution_rows(records, pp, dim):
    rows = []
    for rec in records:
        rows.append([rec.basin_index, pp.lam, pp.q, rec.energy, rec.grad_norm]
                    + [rec.barycenter[a] for a in range(dim)]
                    + [rec.positivity_min, rec.status, rec.iterations])
    return rows


def _solution_header(dim):
    return (["basin", "lambda", "q", "energy", "grad_norm"]
            + [f"beta_x{a}" for a in range(dim)]
            + ["positivity_min", "status", "iterations"])


def run_solve(cfg: RunConfig, out_dir: Path, make_plots: bool, threads: int) -> int:
    diags: list = []
    domain = build_domain(cfg, diags)
    pp = build_problem(cfg, diags)
    assert domain is not None and pp is not None
    weight = build_weight(cfg, diags, domain, pp)
    assert weight is not None
    modes_list = cfg.get("numerics", "modes_list") or [cfg.get("numerics", "modes", 48)]
    budget = cfg.get("numerics", "budget", 2000)
    grad_tol = cfg.get("numerics", "grad_tol", 1e-8)
    seed_eps = cfg.get("numerics", "seed_eps")
    thr = closed_form_threshold(pp.frac, weight.q_max)

    w = CsvWriter(out_dir, cfg)
    status = 0
    rows = []
    last = None
    energies = {}
    for modes in modes_list:
        basis = build_basis(domain, modes, cfg.get("numerics", "quad_points"))
        seed = instanton_seed(pp, weight, basis, 0, eps=seed_eps)
        rec = minimize_on_nehari(seed, 0, pp, weight, basis, budget=budget,
                                 grad_tol=grad_tol)
        if not rec.converged:
            status = 2
        rows.append([modes] + _solution_rows([rec], pp, domain.dim)[0])
        energies[modes] = rec.energy
        last = (rec, basis)
    w.write("solve.csv", ["modes"] + _solution_header(domain.dim), rows)

    rec, basis = last
    w.write("solve_history.csv", ["iter", "energy", "grad_norm"],
            [[i, e, g] for i, (e, g) in enumerate(rec.history)])
    ps = ps_diagnostics(rec.history, thr)
    from .functionals import ProblemFunctional
    res_err = ProblemFunctional(pp, weight, basis).resolution_error(rec.field)
    if res_err > 1e-6:
        status = max(status, 2)
    w.write("solve_ps.csv", ["final_energy", "final_grad_norm", "threshold",
                             "plateaus_above_threshold", "compactness_warning",
                             "resolution_error"],
            [[ps.final_energy, ps.final_grad_norm, thr, len(ps.plateaus),
              ps.compactness_warning, res_err]])
    if len(energies) > 1:
        ms = sorted(energies)
        stab = [[ms[i - 1], ms[i],
                 abs(energies[ms[i]] - energies[ms[i - 1]]) / abs(energies[ms[i]])]
                for i in range(1, len(ms))]
        w.write("solve_refinement.csv", ["modes_coarse", "modes_fine", "rel_change"], stab)
    _dump_coefficients(out_dir / "solution_basin0.txt", rec.field, basis)
    w.files.append(out_dir / "solution_basin0.txt")

    if make_plots:
        from .plots import plot_solution
        plot_solution(rec, basis, out_dir / "solve.png")
    return status


def run_multiplicity(cfg: RunConfig, out_dir: Path, make_plots: bool, threads: int) -> int:
    diags: list = []
    domain = build_domain(cfg, diags)
    pp = build_problem(cfg, diags)
    assert domain is not None and pp is not None
    weight = build_weight(cfg, diags, domain, pp)
    assert weight is not None
    modes = cfg.get("numerics", "modes", 48)
    basis = build_basis(domain, modes, cfg.get("numerics", "quad_points"))
    budget = cfg.get("numerics", "budget", 2000)
    grad_tol = cfg.get("numerics", "grad_tol", 1e-8)
    seed_eps = cfg.get("numerics", "seed_eps")

    result = multiplicity_search(pp, weight, basis, eps_seed=seed_eps, budget=budget,
                                 grad_tol=grad_tol, threads=threads)
    status = 2 if result.partial else 0

    lam_tilde = ""
    if cfg.get("numerics", "lambda_tilde", True) and len(weight.maxima) >= 2:
        lam_tilde = estimate_lambda_tilde(pp, weight, basis, lam_start=pp.lam)

    w = CsvWriter(out_dir, cfg)
    w.write("multiplicity.csv", _solution_header(domain.dim),
            _solution_rows(result.records, pp, domain.dim))
    w.write("multiplicity_summary.csv",
            ["threshold", "min_beta_separation", "min_hs_distance", "energy_spread",
             "distinct", "all_below_threshold", "lambda_tilde"],
            [[result.threshold, result.min_barycenter_separation,
              result.min_hs_distance,
              max(r.energy for r in result.records) - min(r.energy for r in result.records),
              result.distinct, result.all_below_threshold, lam_tilde]])
    for rec in result.records:
        path = out_dir / f"solution_basin{rec.basin_index}.txt"
        _dump_coefficients(path, rec.field, basis)
        w.files.append(path)

    if make_plots:
        from .plots import plot_multiplicity
        plot_multiplicity(result, basis, out_dir / "multiplicity.png")
    return status


RUNNERS = {
    "eigen": run_eigen,
    "isometry": run_isometry,
    "sobolev": run_sobolev,
    "rates": run_rates,
    "fiber": run_fiber,
    "solve": run_solve,
    "multiplicity": run_multiplicity,
}
