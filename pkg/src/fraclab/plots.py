"""Figure rendering for the report path.

Each experiment gets one PNG next to its CSV output.  The Agg backend is
forced so runs never require a display; figures are a convenience view and
carry no data beyond what the CSVs already pin.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 130,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.markersize": 4,
}


def _new_axes(title: str):
    plt.rcParams.update(_STYLE)
    fig, ax = plt.subplots()
    ax.set_title(title)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_eigen(basis, frac, count, path):
    fig, ax = _new_axes("mixed-BC spectrum and fractional powers")
    j = np.arange(count)
    lam = basis.eigenvalues[:count]
    ax.plot(j, lam, "o-", label=r"$\lambda_j$")
    ax.plot(j, lam ** frac.s, "s-", label=rf"$\lambda_j^s$, s={frac.s}")
    ax.set_xlabel("mode index")
    ax.set_yscale("log")
    ax.legend()
    _save(fig, path)


def plot_isometry(mode_rows, path):
    fig, ax = _new_axes("extension energy vs fractional eigenvalue")
    by_s: dict[float, list] = {}
    for s, j, lam, target, energy, rel in mode_rows:
        by_s.setdefault(s, []).append((lam, rel))
    for s, pts in sorted(by_s.items()):
        lam, rel = zip(*pts)
        ax.semilogy(lam, np.maximum(rel, 1e-18), "o-", label=f"s={s}")
    ax.set_xlabel(r"$\lambda_j$")
    ax.set_ylabel("relative isometry defect")
    ax.legend()
    _save(fig, path)


def plot_sobolev(rows, path):
    fig, ax = _new_axes("Sobolev constants")
    by_n: dict[int, list] = {}
    for n, s, crit, ks, ssn, bound in rows:
        by_n.setdefault(n, []).append((s, ssn, bound))
    for n, pts in sorted(by_n.items()):
        pts.sort()
        s, ssn, bound = zip(*pts)
        line, = ax.plot(s, ssn, "o-", label=f"S(s,N), N={n}")
        ax.plot(s, bound, "s--", color=line.get_color(), alpha=0.6,
                label=f"half-mass bound, N={n}")
    ax.set_xlabel("s")
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_rayleigh(sweep, path):
    fig, ax = _new_axes("instanton Rayleigh quotient vs concentration")
    eps = np.array(sweep.eps)
    ax.semilogx(eps, sweep.quotients, "o-", label="quotient")
    ax.axhline(sweep.limit, color="k", ls="--", label="half-mass limit")
    ax.axhline(sweep.extrapolated, color="C3", ls=":", label="extrapolated")
    ax.set_xlabel(r"$\varepsilon$")
    ax.invert_xaxis()
    ax.legend()
    _save(fig, path)


def plot_rates(fits, path):
    fig, ax = _new_axes("trace L^p mass scaling")
    for fit in fits:
        eps = np.array(fit.eps)
        ax.loglog(eps, fit.values, "o", label=f"p={fit.p:g} (slope {fit.fitted_slope:.3f})")
        if fit.model == "power":
            ref = fit.values[0] * (eps / eps[0]) ** fit.theory_slope
        else:
            N2 = fit.theory_slope  # log model: slope target is 1 in the fitted frame
            ref = np.array([fit.values[0]
                            * (e * abs(math.log(e))) / (eps[0] * abs(math.log(eps[0])))
                            for e in eps])
        ax.loglog(eps, ref, "--", alpha=0.5)
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"$\|z\|_p^p$")
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_fiber(rows, threshold, path):
    fig, ax = _new_axes("fiber suprema vs perturbation strength")
    by_eps: dict[float, list] = {}
    for lam, eps, t, t0, sup, thr, margin, beta, route in rows:
        by_eps.setdefault(eps, []).append((lam, sup))
    for eps, pts in sorted(by_eps.items()):
        pts.sort()
        lam, sup = zip(*pts)
        ax.plot(lam, sup, "o-", label=rf"$\varepsilon$={eps:.4g}")
    ax.axhline(threshold, color="k", ls="--", label="threshold")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("sup of the fiber")
    if max(r[0] for r in rows) / max(min(r[0] for r in rows), 1e-12) > 50:
        ax.set_xscale("log")
    ax.legend(fontsize=7)
    _save(fig, path)


def _field_image(ax, field, basis, title):
    from .spectral import synthesize

    vals = synthesize(field, basis).reshape(basis.grid_shape)
    if basis.dim == 1:
        ax.plot(basis.nodes[0], vals)
    else:
        im = ax.pcolormesh(basis.nodes[0], basis.nodes[1], vals.T, shading="auto")
        ax.figure.colorbar(im, ax=ax, shrink=0.85)
        ax.set_aspect("equal")
    ax.set_title(title, fontsize=8)


def plot_solution(record, basis, path):
    plt.rcParams.update(_STYLE)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.2, 4.0))
    _field_image(ax1, record.field, basis,
                 f"solution, E={record.energy:.6f}")
    e = [h[0] for h in record.history]
    g = [h[1] for h in record.history]
    ax2.semilogy(g, label="gradient norm")
    ax2.set_xlabel("iteration")
    ax2b = ax2.twinx()
    ax2b.plot(e, "C1", label="energy")
    ax2.set_title("descent history", fontsize=8)
    ax2.legend(loc="upper right", fontsize=7)
    _save(fig, path)


def plot_multiplicity(result, basis, path):
    plt.rcParams.update(_STYLE)
    k = len(result.records)
    fig, axes = plt.subplots(1, k, figsize=(4.6 * k, 4.0))
    if k == 1:
        axes = [axes]
    for ax, rec in zip(axes, result.records):
        _field_image(ax, rec.field, basis,
                     f"basin {rec.basin_index}: E={rec.energy:.6f} ({rec.status})")
        if basis.dim == 2:
            ax.plot([rec.barycenter[0]], [rec.barycenter[1]], "r+", markersize=10)
    _save(fig, path)
