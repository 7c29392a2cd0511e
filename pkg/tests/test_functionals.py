import math

import numpy as np
import pytest

from fraclab.errors import ValidationError
from fraclab.functionals import (ProblemParams, WeightModel, classical_sobolev_constant,
                                 closed_form_threshold, critical_exponent, embed_field,
                                 energy, estimate_sigma_d_constant, gradient,
                                 half_mass_bound, rayleigh_quotient, required_alpha,
                                 sobolev_constant, threshold_c_star)
from fraclab.spectral import (FractionalParams, MixedRectangleDomain, SpectralField,
                              build_basis, hs_norm, lp_norm, unit_field)

from conftest import band_limited


def sobolev_oracle(N, s, dps=50):
    """Arbitrary-precision evaluation of the constant, independent of libm."""
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = dps
    s = mp.mpf(repr(s))
    N = mp.mpf(N)
    val = (mp.mpf(2) ** (2 * s) * mp.pi ** s
           * mp.gamma((N + 2 * s) / 2) / mp.gamma((N - 2 * s) / 2)
           * (mp.gamma(N / 2) / mp.gamma(N)) ** (2 * s / N))
    return float(val)


# ------------------------------------------------------------ exact constants


def test_critical_exponent_values():
    assert critical_exponent(2, 0.75) == pytest.approx(8.0, abs=0)
    assert critical_exponent(4, 0.75) == pytest.approx(3.2, rel=1e-15)
    assert critical_exponent(3, 1.0) == pytest.approx(6.0, abs=0)  # classical limit
    with pytest.raises(ValidationError):
        critical_exponent(1, 0.75)


@pytest.mark.parametrize("N", [2, 3, 4])
@pytest.mark.parametrize("s", [0.6, 0.75, 0.9])
def test_sobolev_constant_against_high_precision(N, s):
    assert sobolev_constant(N, s) == pytest.approx(sobolev_oracle(N, s), rel=1e-12)


def test_sobolev_constant_classical_limit():
    # at s = 1, N = 3 the formula collapses to the classical constant
    assert sobolev_constant(3, 1.0) == pytest.approx(classical_sobolev_constant(3), rel=1e-13)


def test_sobolev_constant_monotone_in_dimension():
    for s in (0.6, 0.75, 0.9):
        vals = [sobolev_constant(N, s) for N in range(2, 9)]
        assert all(v > 0 for v in vals)
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_half_mass_bound_value():
    assert half_mass_bound(2, 0.75) == pytest.approx(
        2.0 ** -0.75 * sobolev_constant(2, 0.75), rel=1e-15)


# ------------------------------------------------------------ alpha regimes


def _alpha_oracle(N, s, q):
    """Independent rebuild of the growth-regime table for the exhaustive scan."""
    low = (6 * s - N) / (N - 2 * s)
    high = (N + 2 * s) / (N - 2 * s)
    if N >= 4:
        if 1 <= q < high:
            return ("iii", N - (N - 2 * s) * (q + 1) / 2)
        return None
    if N in (2, 3):
        if 1 < q <= low:
            return ("i", None)
        if low < q < high:
            return ("ii", N - (N - 2 * s) * (q + 1) / 2)
    return None


def test_required_alpha_examples():
    req = required_alpha(ProblemParams(0.0, 1.0, FractionalParams(0.75, 4)))
    assert req.regime == "iii"
    assert req.value == pytest.approx(4 - 2.5 * 1.0, rel=1e-15)   # 1.5

    req = required_alpha(ProblemParams(0.0, 2.0, FractionalParams(0.75, 2)))
    assert req.regime == "i"
    assert req.interval == (0.0, 2.0)
    assert req.resolve(1.25) == 1.25
    with pytest.raises(ValidationError):
        req.resolve(None)
    with pytest.raises(ValidationError):
        req.resolve(2.5)

    # q = 5 at N = 3, s = 0.9 is supercritical (2*_s - 1 = 4): rejected upstream
    with pytest.raises(ValidationError):
        ProblemParams(0.0, 5.0, FractionalParams(0.9, 3))


def test_required_alpha_exhaustive_grid():
    for N in (2, 3, 4, 5):
        for s in (0.55, 0.65, 0.75, 0.85, 0.95):
            if N <= 2 * s:
                continue
            crit = critical_exponent(N, s)
            for q in np.arange(1.0, crit - 1.0, 0.25):
                pp = ProblemParams(0.0, float(q), FractionalParams(s, N))
                expect = _alpha_oracle(N, s, float(q))
                if expect is None:
                    with pytest.raises(ValidationError):
                        required_alpha(pp)
                    continue
                req = required_alpha(pp)
                assert req.regime == expect[0]
                if expect[1] is None:
                    assert req.interval == (0.0, float(N))
                else:
                    assert req.value == pytest.approx(expect[1], rel=1e-12)


# ------------------------------------------------------------ weight model


def test_weight_rejects_maximum_on_dirichlet_face(square_domain):
    with pytest.raises(ValidationError):
        WeightModel(square_domain, 1.5, 1.0, 0.2, [((0.0, 0.5), 2.0)], 1.0)


def test_weight_rejects_interior_maximum(square_domain):
    with pytest.raises(ValidationError):
        WeightModel(square_domain, 1.5, 1.0, 0.2, [((0.5, 0.5), 2.0)], 1.0)


def test_weight_rejects_weak_growth(square_domain):
    with pytest.raises(ValidationError):
        WeightModel(square_domain, 1.5, 1.0, 0.2, [((1.0, 0.5), 0.8)], 1.25)


def test_weight_rejects_overlapping_wells(square_domain):
    with pytest.raises(ValidationError):
        WeightModel(square_domain, 1.5, 1.0, 0.3,
                    [((1.0, 0.4), 2.0), ((1.0, 0.6), 2.0)], 1.0)


def test_weight_evaluation(square_domain):
    Q = WeightModel(square_domain, 1.5, 1.0, 0.2, [((1.0, 0.5), 2.0)], 1.25)
    pts = np.array([[1.0, 0.5], [1.0, 0.45], [0.2, 0.5], [0.0 + 1e-9, 0.0]])
    vals = Q.evaluate(pts)
    assert vals[0] == pytest.approx(1.5)
    # exact power law inside r_cut/2
    assert vals[1] == pytest.approx(1.5 - (0.5 / 0.2 ** 2) * 0.05 ** 2, rel=1e-12)
    assert vals[2] == pytest.approx(1.0)                     # saturated background
    assert np.all(vals > 0)
    assert Q.r0 == math.inf                                  # single maximum
    assert Q.coefficients[0] == pytest.approx(0.5 / 0.2 ** 2)


def test_weight_constant_factory(square_domain):
    Q = WeightModel.constant(square_domain, 2.0, (1.0, 0.5))
    assert not Q.is_strict
    pts = np.array([[0.3, 0.7], [1.0, 0.5]])
    assert np.allclose(Q.evaluate(pts), 2.0)


def test_weight_radial_profile_matches_evaluate(square_domain):
    Q = WeightModel(square_domain, 1.5, 1.0, 0.2, [((1.0, 0.5), 2.0)], 1.25)
    r = np.linspace(0.0, 0.3, 50)
    pts = np.stack([np.full_like(r, 1.0), 0.5 + r], axis=-1)
    assert np.allclose(Q.radial_profile(0, r), Q.evaluate(pts), atol=1e-12)


# ------------------------------------------------------------ energy and gradient


@pytest.fixture(scope="module")
def setup16():
    dom = MixedRectangleDomain((1.0, 1.0), ["x0min"])
    basis = build_basis(dom, 16)
    frac = FractionalParams(0.75, 2)
    pp = ProblemParams(lam=1.0, q=2.0, frac=frac)
    Q = WeightModel(dom, 1.5, 1.0, 0.3, [((1.0, 0.5), 2.0)], 1.25)
    return dom, basis, frac, pp, Q


def test_energy_zero_field(setup16):
    _, basis, _, pp, Q = setup16
    assert energy(SpectralField(np.zeros(basis.n_modes)), pp, Q, basis) == 0.0


def test_energy_even(setup16, rng):
    _, basis, _, pp, Q = setup16
    u = band_limited(rng, basis)
    assert energy(u, pp, Q, basis) == pytest.approx(energy(-1.0 * u, pp, Q, basis), rel=1e-14)


def test_energy_scalar_profile_oracle(setup16):
    # lambda = 0, Q = 1: along t*e1 the energy is an explicit scalar function
    dom, basis, frac, _, _ = setup16
    pp0 = ProblemParams(lam=0.0, q=2.0, frac=frac)
    Qc = WeightModel.constant(dom, 1.0, (1.0, 0.5))
    e1 = unit_field(basis, 0)
    lam1 = float(basis.eigenvalues[0])
    mass = lp_norm(e1, 8.0, basis) ** 8
    for t in (0.3, 0.9, 1.7):
        profile = 0.5 * t ** 2 * lam1 ** 0.75 - t ** 8 * mass / 8.0
        assert energy(t * e1, pp0, Qc, basis) == pytest.approx(profile, rel=1e-12)
    # the stationary scale of the profile
    t_star = (lam1 ** 0.75 / mass) ** (1.0 / 6.0)
    h = 1e-6
    d = (energy((t_star + h) * e1, pp0, Qc, basis)
         - energy((t_star - h) * e1, pp0, Qc, basis)) / (2 * h)
    assert abs(d) < 1e-8


def test_energy_negative_for_large_scaling(setup16, rng):
    _, basis, _, pp, Q = setup16
    u = band_limited(rng, basis)
    vals = [energy(float(t) * u, pp, Q, basis) for t in (4.0, 8.0, 16.0)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[-1] < 0


def test_gradient_zero_field(setup16):
    _, basis, _, pp, Q = setup16
    g = gradient(SpectralField(np.zeros(basis.n_modes)), pp, Q, basis)
    assert np.all(g.dual.coeffs == 0)
    assert g.norm == 0.0


def test_gradient_finite_difference_orders(setup16, rng):
    _, basis, _, pp, Q = setup16
    errs = {h: [] for h in (1e-3, 1e-4, 1e-5)}
    for _ in range(10):
        u = band_limited(rng, basis)
        v = band_limited(rng, basis)
        g = float(np.dot(gradient(u, pp, Q, basis).dual.coeffs, v.coeffs))
        for h in errs:
            fd = (energy(u + h * v, pp, Q, basis) - energy(u - h * v, pp, Q, basis)) / (2 * h)
            errs[h].append(abs(fd - g) / max(abs(g), 1e-30))
    # central differences: error drops by ~100x per 10x step reduction
    assert max(errs[1e-4]) < max(errs[1e-3]) * 0.05
    assert max(errs[1e-4]) < 1e-6


def test_gradient_preconditioned_form(setup16, rng):
    _, basis, frac, pp, Q = setup16
    u = band_limited(rng, basis)
    g = gradient(u, pp, Q, basis)
    assert np.allclose(g.preconditioned.coeffs * basis.eigenvalues ** frac.s,
                       g.dual.coeffs, rtol=1e-13, atol=0)


# ------------------------------------------------------------ quotient estimation


def test_sigma_d_estimate_on_small_dirichlet_rectangle():
    # a long rectangle with Dirichlet on one short face: quotient far below
    # the half-mass bound, so the strict regime must be detected
    dom = MixedRectangleDomain((4.0, 1.0), ["x0min"])
    basis = build_basis(dom, 12)
    frac = FractionalParams(0.75, 2)
    rep = estimate_sigma_d_constant(basis, frac, restarts=3, max_iter=400)
    bound = half_mass_bound(2, 0.75)
    assert 0.0 < rep.s_sigma_d < sobolev_constant(2, 0.75)
    assert rep.s_sigma_d <= bound * 1.05
    assert rep.regime == "C<"
    # Hoelder-type sanity: quotient of the first eigenmode bounds it above
    assert rep.s_sigma_d <= rayleigh_quotient(unit_field(basis, 0), frac, basis) + 1e-12


def test_sigma_d_monotone_under_mode_doubling():
    dom = MixedRectangleDomain((4.0, 1.0), ["x0min"])
    frac = FractionalParams(0.75, 2)
    b1 = build_basis(dom, 8)
    rep1 = estimate_sigma_d_constant(b1, frac, restarts=3, max_iter=400)
    b2 = build_basis(dom, 16)
    seed = embed_field(rep1.minimizer, b1, b2)
    rep2 = estimate_sigma_d_constant(b2, frac, restarts=3, max_iter=400,
                                     extra_seeds=[seed])
    assert rep2.s_sigma_d <= rep1.s_sigma_d + 1e-8


def test_trace_inequality_over_random_fields(rng):
    # no random field may beat the estimated quotient infimum
    dom = MixedRectangleDomain((2.0, 1.0), ["x0min"])
    basis = build_basis(dom, 10)
    frac = FractionalParams(0.75, 2)
    rep = estimate_sigma_d_constant(basis, frac, restarts=3, max_iter=400)
    for _ in range(200):
        u = band_limited(rng, basis, decay=0.05)
        assert rep.s_sigma_d * lp_norm(u, frac.crit_exp, basis) ** 2 <= (
            hs_norm(u, frac, basis) ** 2) * (1 + 1e-9)


# ------------------------------------------------------------ threshold


def test_threshold_regimes():
    frac = FractionalParams(0.75, 2)
    # equality regime uses the closed form
    from fraclab.functionals import ThresholdReport
    rep = ThresholdReport(dim=2, s=0.75, s_sigma_d=1.1, s_sN=sobolev_constant(2, 0.75),
                          regime="C=", c_star=0.0, converged=True)
    assert threshold_c_star(rep, 1.0) == pytest.approx(closed_form_threshold(frac, 1.0))
    # strict regime uses the numeric estimate
    rep2 = ThresholdReport(dim=2, s=0.75, s_sigma_d=0.5, s_sN=rep.s_sN,
                           regime="C<", c_star=0.0, converged=True)
    expect = (0.75 / 2) * 0.5 ** (2 / 1.5)
    assert threshold_c_star(rep2, 1.0) == pytest.approx(expect, rel=1e-13)


def test_threshold_weight_scaling():
    frac = FractionalParams(0.75, 2)
    base = closed_form_threshold(frac, 1.0)
    for c in (2.0, 5.0):
        assert closed_form_threshold(frac, c) == pytest.approx(
            base * c ** (-(2 - 1.5) / 1.5), rel=1e-13)


def test_threshold_numeric_composition():
    # N=2, s=0.75, Q_M=1: (s/N) S^{N/2s} / 2 from the formula oracle
    S = sobolev_oracle(2, 0.75)
    expect = (0.75 / 2.0) * S ** (2.0 / 1.5) / 2.0
    assert closed_form_threshold(FractionalParams(0.75, 2), 1.0) == pytest.approx(
        expect, rel=1e-12)
