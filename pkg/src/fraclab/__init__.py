"""fraclab: numerical lab for the spectral fractional Laplacian with mixed
Dirichlet-Neumann boundary conditions.

Core objects: closed-form tensor eigenbases on boxes (`spectral`), the
harmonic-extension isometry check (`extension`), energies, Sobolev constants
and the compactness threshold (`functionals`), truncated boundary-instanton
asymptotics and fibering maps (`instanton`), and Nehari-manifold solvers
with the multiplicity search (`nehari`).  The `cli` module exposes each
experiment as a subcommand writing deterministic CSV output.
"""

__version__ = "0.1.0"

from .spectral import (FractionalParams, MixedRectangleDomain, EigenBasis,
                       SpectralField, build_basis, synthesize, analyze,
                       apply_fractional, hs_norm, lp_norm,
                       first_fractional_eigenvalue)
from .extension import (bessel_k, ks_constant, extension_profile,
                        profile_energy_constant, mode_extension_energy)
from .functionals import (ProblemParams, WeightModel, ThresholdReport,
                          critical_exponent, sobolev_constant,
                          classical_sobolev_constant, half_mass_bound,
                          required_alpha, energy, gradient,
                          estimate_sigma_d_constant, threshold_c_star,
                          closed_form_threshold)
from .instanton import (TruncatedInstanton, FiberingReport, RateFit,
                        instanton_trace, trace_mass, weighted_critical_integral,
                        instanton_hs2, lp_rate_experiment, fibering_g,
                        maximize_fiber, sup_vs_threshold, rayleigh_sweep)
from .nehari import (NehariPoint, SolutionRecord, MultiplicityResult,
                     nehari_project, barycenter, minimize_on_nehari,
                     multiplicity_search, estimate_lambda_tilde, ps_diagnostics)

__all__ = [name for name in dir() if not name.startswith("_")]
