"""Nehari-manifold minimization and the multiplicity search.

Critical points of the energy are computed by preconditioned projected
descent: every iterate is made nonnegative on the grid, rescaled onto the
Nehari set (where <E'(u), u> = 0), and moved along the H^s-preconditioned
gradient with an Armijo line search.  Runs targeting different weight
maxima are kept apart through the barycenter map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .functionals import (ProblemFunctional, ProblemParams, WeightModel,
                          closed_form_threshold)
from .instanton import TruncatedInstanton, default_rho, instanton_trace
from .parallel import parallel_map
from .spectral import (EigenBasis, SpectralField, analyze,
                       first_fractional_eigenvalue, synthesize)

__all__ = [
    "NehariPoint",
    "SolutionRecord",
    "MultiplicityResult",
    "PSReport",
    "nehari_project",
    "barycenter",
    "minimize_on_nehari",
    "multiplicity_search",
    "estimate_lambda_tilde",
    "ps_diagnostics",
]


@dataclass(frozen=True)
class NehariPoint:
    field: SpectralField
    t_scale: float
    constraint_residual: float


@dataclass(frozen=True)
class SolutionRecord:
    field: SpectralField
    energy: float
    grad_norm: float
    barycenter: tuple[float, ...]
    basin_index: int
    positivity_min: float
    converged: bool
    basin_escaped: bool
    iterations: int
    history: tuple  # (energy, grad_norm) per iterate

    @property
    def status(self) -> str:
        if self.basin_escaped:
            return "basin-escape"
        return "converged" if self.converged else "budget-exhausted"


def _nehari_scale(hs2: float, m_crit: float, m_sub: float, lam: float,
                  q: float, crit: float) -> float:
    """Unique t > 0 with t^2 hs2 = t^{crit} m_crit + lam t^{q+1} m_sub."""
    if hs2 <= 0 or m_crit <= 0:
        raise ValidationError("cannot project the zero field onto the Nehari set")
    if q == 1.0:
        shifted = hs2 - lam * m_sub
        if shifted <= 0:
            raise ValidationError(
                "no Nehari scaling for q = 1 at this lambda (needs lambda < lambda_1^s)")
        return (shifted / m_crit) ** (1.0 / (crit - 2.0))
    t = (hs2 / m_crit) ** (1.0 / (crit - 2.0))
    for _ in range(200):
        g = hs2 - t ** (crit - 2.0) * m_crit - lam * t ** (q - 1.0) * m_sub
        dg = (-(crit - 2.0) * t ** (crit - 3.0) * m_crit
              - lam * (q - 1.0) * t ** (q - 2.0) * m_sub)
        t_new = t - g / dg
        if t_new <= 0.0:
            t_new = 0.5 * t
        if abs(t_new - t) <= 1e-16 * t:
            return t_new
        t = t_new
    return t


def _guard_linear(pp: ProblemParams, basis: EigenBasis):
    if pp.is_linear_perturbation:
        lam1s = first_fractional_eigenvalue(basis, pp.frac)
        if not pp.lam < lam1s:
            raise ValidationError(
                f"q = 1 requires lambda < lambda_1^s = {lam1s:g}, got {pp.lam:g}")


def nehari_project(u: SpectralField, pp: ProblemParams, Q: WeightModel,
                   basis: EigenBasis) -> NehariPoint:
    """Scale a nonzero field onto the Nehari set; scale-invariant in u."""
    if float(np.max(np.abs(u.coeffs))) == 0.0:
        raise ValidationError("cannot project the zero field onto the Nehari set")
    _guard_linear(pp, basis)
    fn = ProblemFunctional(pp, Q, basis)
    hs2, m_crit, m_sub = fn.pieces(u)
    t = _nehari_scale(hs2, m_crit, m_sub, pp.lam, pp.q, fn.crit)
    scaled = SpectralField(t * u.coeffs)
    hs2_s, mc_s, ms_s = fn.pieces(scaled)
    resid = abs(hs2_s - mc_s - pp.lam * ms_s) / hs2_s
    return NehariPoint(field=scaled, t_scale=t, constraint_residual=resid)


def barycenter(u: SpectralField, basis: EigenBasis, crit_exp: float) -> tuple[float, ...]:
    """L^{2*}-mass centroid int x |u|^{2*} / int |u|^{2*} on the grid.

    The exponent is the critical one for the problem's (s, N); it is passed
    explicitly because the basis alone does not determine s.
    """
    vals = np.abs(synthesize(u, basis))
    if float(np.max(vals)) == 0.0:
        raise ValidationError("barycenter of the zero field is undefined")
    dens = basis.grid_weights * vals ** crit_exp
    total = float(np.sum(dens))
    pts = basis.grid_points
    return tuple(float(np.sum(dens * pts[:, a])) / total for a in range(basis.dim))


@dataclass
class _Workspace:
    """Minimization state shared by the descent loop."""

    fn: ProblemFunctional

    def project(self, coeffs: np.ndarray) -> tuple[np.ndarray, float, float, float, float]:
        """Positivity on the grid, then Nehari rescaling; returns scalars too."""
        vals = np.abs(synthesize(SpectralField(coeffs), self.fn.basis))
        c = analyze(vals, self.fn.basis).coeffs
        hs2 = float(np.sum(c ** 2 * self.fn.lam_s))
        vv = synthesize(SpectralField(c), self.fn.basis)
        a = np.abs(vv)
        m_crit = float(np.sum(self.fn.w_grid_q * a ** self.fn.crit))
        m_sub = float(np.sum(self.fn.w_grid * a ** (self.fn.pp.q + 1.0)))
        t = _nehari_scale(hs2, m_crit, m_sub, self.fn.pp.lam, self.fn.pp.q, self.fn.crit)
        c *= t
        crit, q = self.fn.crit, self.fn.pp.q
        hs2 *= t * t
        m_crit *= t ** crit
        m_sub *= t ** (q + 1.0)
        energy = 0.5 * hs2 - m_crit / crit - self.fn.pp.lam / (q + 1.0) * m_sub
        return c, hs2, m_crit, m_sub, energy


def minimize_on_nehari(seed: SpectralField, basin: int, pp: ProblemParams,
                       Q: WeightModel, basis: EigenBasis, budget: int = 2000,
                       grad_tol: float = 1e-8, r0: float | None = None,
                       enforce_basin: bool = True) -> SolutionRecord:
    """Minimize the energy on the Nehari set near the basin's weight maximum.

    Preconditioned gradient steps with Armijo backtracking; every candidate
    is made nonnegative on the grid and re-projected onto the constraint.
    Terminates when the full (unconstrained) dual gradient norm passes
    `grad_tol`, the budget runs out, or the barycenter leaves the ball of
    radius r0 around the targeted maximum.
    """
    _guard_linear(pp, basis)
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    fn = ProblemFunctional(pp, Q, basis)
    if not 0 <= basin < len(Q.maxima):
        raise ValidationError(f"basin index {basin} out of range")
    target = np.asarray(Q.maxima[basin].point)
    r_ball = Q.r0 if r0 is None else float(r0)
    ws = _Workspace(fn)

    c, hs2, m_crit, m_sub, energy = ws.project(seed.coeffs.copy())
    eta = 1.0
    history: list[tuple[float, float]] = []
    escaped = False
    converged = False
    it = 0
    for it in range(1, budget + 1):
        g = fn.gradient_dual(SpectralField(c))
        gnorm = fn.gradient_norm(g)
        history.append((energy, gnorm))
        if gnorm < grad_tol:
            converged = True
            break
        if enforce_basin and len(Q.maxima) > 1 and math.isfinite(r_ball):
            bc = barycenter(SpectralField(c), basis, fn.crit)
            if math.dist(bc, target) >= r_ball:
                escaped = True
                break
        d = g / fn.lam_s
        slope = float(np.sum(g * d))
        accepted = False
        for _ in range(60):
            c_try, hs2_t, mc_t, ms_t, e_try = ws.project(c - eta * d)
            if e_try <= energy - 1e-4 * eta * slope:
                c, hs2, m_crit, m_sub, energy = c_try, hs2_t, mc_t, ms_t, e_try
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        eta = min(eta * 1.6, 1e4)

    field = SpectralField(c)
    g = fn.gradient_dual(field)
    gnorm = fn.gradient_norm(g)
    vals = synthesize(field, basis)
    bc = barycenter(field, basis, fn.crit)
    return SolutionRecord(
        field=field, energy=energy, grad_norm=gnorm, barycenter=bc,
        basin_index=basin, positivity_min=float(np.min(vals)),
        converged=(gnorm < grad_tol) and not escaped, basin_escaped=escaped,
        iterations=it, history=tuple(history))


def instanton_seed(pp: ProblemParams, Q: WeightModel, basis: EigenBasis,
                   basin: int, eps: float | None = None,
                   rho: float | None = None) -> SpectralField:
    """Projected truncated-instanton trace centered at a basin maximum."""
    center = Q.maxima[basin].point
    rho_eff = default_rho(basis.domain, center) if rho is None else rho
    eps_eff = rho_eff / 8.0 if eps is None else eps
    inst = TruncatedInstanton(frac=pp.frac, domain=basis.domain, center=center,
                              eps=eps_eff, rho=rho_eff)
    return instanton_trace(inst, basis)


@dataclass(frozen=True)
class MultiplicityResult:
    records: tuple[SolutionRecord, ...]
    distinct: bool
    min_barycenter_separation: float
    min_hs_distance: float
    threshold: float
    all_below_threshold: bool
    partial: bool

    @property
    def count_converged(self) -> int:
        return sum(1 for r in self.records if r.converged)


def multiplicity_search(pp: ProblemParams, Q: WeightModel, basis: EigenBasis,
                        eps_seed: float | None = None, budget: int = 2000,
                        grad_tol: float = 1e-8, threshold: float | None = None,
                        threads: int = 1) -> MultiplicityResult:
    """One minimization per weight maximum, seeded along the instanton direction.

    Records are checked pairwise for distinctness (barycenter separation at
    least r0 and H^s distance above 1e-4) and against the compactness
    threshold; any non-converged basin marks the result partial.
    """
    if not Q.is_strict:
        raise ValidationError("multiplicity search needs strict maxima (Q_2-type weight)")
    k = len(Q.maxima)
    thr = closed_form_threshold(pp.frac, Q.q_max) if threshold is None else threshold

    def run(i):
        seed = instanton_seed(pp, Q, basis, i, eps=eps_seed)
        return minimize_on_nehari(seed, i, pp, Q, basis, budget=budget,
                                  grad_tol=grad_tol)

    records = tuple(parallel_map(run, range(k), threads))

    lam_s = basis.eigenvalues ** pp.frac.s
    min_sep = math.inf
    min_dist = math.inf
    for i in range(k):
        for j in range(i + 1, k):
            min_sep = min(min_sep, math.dist(records[i].barycenter, records[j].barycenter))
            diff = records[i].field.coeffs - records[j].field.coeffs
            min_dist = min(min_dist, math.sqrt(float(np.sum(diff ** 2 * lam_s))))
    distinct = (k < 2) or (min_sep >= Q.r0 and min_dist > 1e-4)
    below = all(0.0 < r.energy < thr for r in records)
    partial = any(not r.converged for r in records)
    return MultiplicityResult(records=records, distinct=distinct,
                              min_barycenter_separation=min_sep,
                              min_hs_distance=min_dist, threshold=thr,
                              all_below_threshold=below, partial=partial)


def estimate_lambda_tilde(pp: ProblemParams, Q: WeightModel, basis: EigenBasis,
                          lam_start: float = 0.5, lam_cap: float = 64.0,
                          budget: int = 400, grad_tol: float = 1e-6,
                          bisect_steps: int = 6) -> float:
    """Empirical ceiling on lambda for basin-localized minimization.

    Doubles lambda until some basin run escapes its barycenter ball or fails
    to converge, then bisects the boundary.  Returns lam_cap when no failure
    occurs below the cap.
    """
    if not Q.is_strict or len(Q.maxima) < 2:
        raise ValidationError("lambda-tilde estimation needs at least two strict maxima")

    def ok(lam: float) -> bool:
        pp_l = replace(pp, lam=lam)
        try:
            for i in range(len(Q.maxima)):
                seed = instanton_seed(pp_l, Q, basis, i)
                rec = minimize_on_nehari(seed, i, pp_l, Q, basis, budget=budget,
                                         grad_tol=grad_tol)
                if rec.basin_escaped or not rec.converged:
                    return False
        except ValidationError:
            return False
        return True

    lam = lam_start
    if not ok(lam):
        return 0.0
    while lam < lam_cap:
        nxt = min(2.0 * lam, lam_cap)
        if not ok(nxt):
            lo, hi = lam, nxt
            for _ in range(bisect_steps):
                mid = 0.5 * (lo + hi)
                if ok(mid):
                    lo = mid
                else:
                    hi = mid
            return lo
        lam = nxt
    return lam_cap


@dataclass(frozen=True)
class PSReport:
    energies: tuple[float, ...]
    grad_norms: tuple[float, ...]
    plateaus: tuple[tuple[int, int], ...]   # [start, end) spans above threshold
    compactness_warning: bool
    final_grad_norm: float
    final_energy: float


def ps_diagnostics(history, threshold: float, plateau_len: int = 25,
                   plateau_rtol: float = 1e-5) -> PSReport:
    """Detect descent plateaus above the compactness threshold.

    A long stretch of nearly constant energy above the threshold while the
    gradient has not vanished is the discrete signature of a concentrating
    (compactness-losing) sequence.
    """
    hist = list(history)
    if not hist:
        raise ValidationError("empty iteration history")
    energies = tuple(float(e) for e, _ in hist)
    gnorms = tuple(float(g) for _, g in hist)
    plateaus: list[tuple[int, int]] = []
    start = 0
    for i in range(1, len(energies)):
        scale = max(abs(energies[i - 1]), 1e-300)
        if abs(energies[i] - energies[i - 1]) > plateau_rtol * scale:
            if i - start >= plateau_len and energies[i - 1] > threshold:
                plateaus.append((start, i))
            start = i
    if len(energies) - start >= plateau_len and energies[-1] > threshold:
        plateaus.append((start, len(energies)))
    return PSReport(energies=energies, grad_norms=gnorms, plateaus=tuple(plateaus),
                    compactness_warning=bool(plateaus), final_grad_norm=gnorms[-1],
                    final_energy=energies[-1])
