"""Figure rendering for the report paths.

Every CLI subcommand that writes delimited output also renders the matching
figures here.  All figures go through the Agg backend so runs work headless.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["figure.figsize"] = (5.5, 3.6)
plt.rcParams["font.size"] = 9
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.35
plt.rcParams["savefig.dpi"] = 150
plt.rcParams["savefig.bbox"] = "tight"

_STAMP = ["specedge"]


def set_run_stamp(text: str):
    """Stamp embedded as PNG metadata in every figure written afterwards."""
    _STAMP[0] = text


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": _STAMP[0]})
    plt.close(fig)
    return str(path)


def save_exp_qq(increments, path, title="W-increments vs Exp(1)"):
    """QQ plot of pooled W-increments against unit-exponential quantiles."""
    w = np.sort(np.asarray(increments))
    n = len(w)
    theo = -np.log(1.0 - (np.arange(1, n + 1) - 0.5) / n)
    fig, ax = plt.subplots()
    ax.plot(theo, w, ".", ms=2.5)
    top = max(theo.max(), w.max())
    ax.plot([0, top], [0, top], "k--", lw=0.8)
    ax.set_xlabel("Exp(1) quantile")
    ax.set_ylabel("empirical quantile")
    ax.set_title(title)
    return _finish(fig, path)


def save_cloud_scatter(clouds, path, title="rescaled point clouds"):
    """Positions vs heights pooled over an ensemble of point clouds."""
    fig, ax = plt.subplots()
    xs = np.concatenate([c.positions()[:, 0] for c in clouds])
    hs = np.concatenate([c.heights() for c in clouds])
    ax.plot(xs, hs, ".", ms=2)
    ax.set_xlabel("position x / L")
    ax.set_ylabel("rescaled height")
    ax.set_title(title)
    return _finish(fig, path)


def save_chi_curve(radii, values, path, title="chi over nested balls"):
    fig, ax = plt.subplots()
    ax.plot(radii, values, "o-", ms=4)
    ax.set_xlabel("ball radius n")
    ax.set_ylabel("chi_{B_n}")
    ax.set_title(title)
    return _finish(fig, path)


def save_margin_hist(margins, path, title="checker margins"):
    """Histogram of rhs - lhs margins; everything must sit right of zero."""
    margins = np.asarray([m for m in margins if np.isfinite(m)])
    fig, ax = plt.subplots()
    if margins.size:
        ax.hist(margins, bins=min(50, max(10, margins.size // 20)))
    ax.axvline(0.0, color="r", lw=1.0)
    ax.set_xlabel("margin (rhs - lhs)")
    ax.set_ylabel("instances")
    ax.set_title(title)
    return _finish(fig, path)


def save_profile(distances, log_abs, fit, path, title="eigenfunction profile"):
    """log |psi| against distance from the center, with the fitted slopes."""
    fig, ax = plt.subplots()
    ax.plot(distances, log_abs, ".", ms=2.5, label="log |psi|")
    xs = np.linspace(0, max(distances) if len(distances) else 1.0, 50)
    ax.plot(xs, math.log(max(fit.c1, 1e-300)) - fit.c2 * xs, "r-", lw=1.0,
            label=f"near slope {fit.c2:.3f}")
    if fit.far_slope is not None:
        ax.plot(xs, math.log(max(fit.c1, 1e-300)) - fit.far_slope * xs, "g--", lw=1.0,
                label=f"far slope {fit.far_slope:.3f}")
    ax.set_xlabel("l1 distance from center")
    ax.set_ylabel("log |psi|")
    ax.legend(fontsize=7)
    ax.set_title(title)
    return _finish(fig, path)


def save_tail_curve(rs, empirical, theoretical, path, title="upper tail"):
    fig, ax = plt.subplots()
    ax.semilogy(rs, empirical, "o", ms=4, label="empirical")
    ax.semilogy(rs, theoretical, "-", lw=1.0, label="exp(-e^{r/rho})")
    ax.set_xlabel("r")
    ax.set_ylabel("P(xi > r)")
    ax.legend(fontsize=7)
    ax.set_title(title)
    return _finish(fig, path)


def save_spectrum_strip(samples_eigenvalues, path, title="top eigenvalues"):
    """Eigenvalue ladders across an ensemble, one column per sample."""
    fig, ax = plt.subplots()
    for i, eigs in enumerate(samples_eigenvalues):
        ax.plot([i] * len(eigs), eigs, "_", ms=8)
    ax.set_xlabel("sample")
    ax.set_ylabel("eigenvalue")
    ax.set_title(title)
    return _finish(fig, path)


def save_ks_trend(Ls, ks_stats, path, title="KS statistic vs scale"):
    fig, ax = plt.subplots()
    ax.semilogx(Ls, ks_stats, "o-", ms=4)
    ax.set_xlabel("L")
    ax.set_ylabel("KS distance to Exp(1)")
    ax.set_title(title)
    return _finish(fig, path)
