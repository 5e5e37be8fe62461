"""Figure rendering for curve and epoch outputs.

Everything renders straight to files (Agg backend); figures sit next to the
CSV they illustrate.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_mse_curves(curves, out_path, fit=None, title="Lyapunov decay"):
    """Log-log plot of the Monte Carlo curves, optional fitted power law."""
    ks = np.asarray(curves.checkpoints, dtype=float)
    pos = ks > 0
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.loglog(ks[pos], curves.lyapunov[pos], "o-", ms=3, label=r"$V_k$")
    ax.loglog(ks[pos], curves.mse_x[pos], "s--", ms=2.5, alpha=0.6,
              label=r"$\|\hat X_k\|^2$")
    ax.loglog(ks[pos], curves.mse_y[pos], "d--", ms=2.5, alpha=0.6,
              label=r"$\|\hat Y_k\|^2$")
    se = curves.se_lyapunov[pos]
    ax.fill_between(ks[pos], np.maximum(curves.lyapunov[pos] - 2 * se, 1e-300),
                    curves.lyapunov[pos] + 2 * se, alpha=0.2)
    if fit is not None:
        lo, hi = fit.window
        kk = np.geomspace(max(lo, 1), hi, 50)
        ax.loglog(kk, np.exp(fit.intercept) * kk ** fit.slope, "k:",
                  label=f"slope {fit.slope:.3f}")
    ax.set_xlabel("k")
    ax.set_ylabel("mean squared error")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def plot_epoch_log(log, out_path, title="Restarted run: epoch targets"):
    """Epoch-boundary estimates against the halving targets."""
    rows = log.rows
    epochs = [r.epoch for r in rows]
    v = np.array([r.v_estimate for r in rows])
    se = np.array([r.v_se for r in rows])
    tgt = np.array([r.delta_target for r in rows])
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.errorbar(epochs, v, yerr=3 * se, fmt="o-", capsize=3,
                label=r"$\hat V$ at epoch end ($\pm 3$SE)")
    ax.semilogy(epochs, tgt, "k--", label=r"target $\Delta_0 2^{-k}$")
    ax.set_xlabel("epoch")
    ax.set_ylabel("Lyapunov estimate")
    ax.set_title(f"{title} [{log.psi_source} $\\Psi$]")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path


def plot_sweep(results, out_path, title="Step-exponent sweep"):
    """Fitted slope per fast-step exponent; results: list of (s, RateFit)."""
    ss = [s for s, _ in results]
    slopes = [f.slope for _, f in results]
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.plot(ss, slopes, "o-")
    ax.axhline(-2.0 / 3.0, color="k", ls="--", lw=1, label="-2/3")
    ax.set_xlabel("fast-step exponent s")
    ax.set_ylabel("fitted log-log slope")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return out_path
