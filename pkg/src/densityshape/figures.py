"""Report figures rendered to files next to the delimited output.

Every CLI report path writes one or more PNGs through these helpers; the
Agg backend and fixed rc settings keep the bytes reproducible across runs.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "figure.figsize": (7.0, 4.4),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "axes.titlesize": 11,
}
_DPI = 110


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def density_figure(path, grid, curve, title, points=None, modes=None, antimodes=None):
    """Density estimate with optional data rug and turning-point markers."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.plot(grid, curve, color="C0", lw=1.5)
        if points is not None:
            ax.plot(points, np.zeros_like(points), "|", color="0.4", ms=8, alpha=0.6)
        if modes is not None and len(modes):
            ax.plot(modes, np.interp(modes, grid, curve), "^", color="C3", label="modes")
        if antimodes is not None and len(antimodes):
            ax.plot(antimodes, np.interp(antimodes, grid, curve), "v", color="C2",
                    label="antimodes")
        if (modes is not None and len(modes)) or (antimodes is not None and len(antimodes)):
            ax.legend(loc="best")
        ax.set_xlabel("x")
        ax.set_ylabel("density")
        ax.set_title(title)
        _save(fig, path)


def mode_count_figure(path, probs, observed, title):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ks = sorted(probs)
        ax.bar(ks, [probs[k] for k in ks], color="C0", width=0.7)
        ax.axvline(observed, color="C3", ls="--", label=f"observed count = {observed}")
        ax.set_xlabel("mode count k")
        ax.set_ylabel("bootstrap probability")
        ax.set_title(title)
        ax.legend(loc="best")
        _save(fig, path)


def excess_curves_figure(path, lambdas, curves, diff, title):
    """E_m curves over lambda, with the order difference on a twin panel."""
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
        for order, values in curves:
            ax1.plot(lambdas, values, lw=1.3, label=f"m={order}")
        ax1.set_xscale("log")
        ax1.set_xlabel("level")
        ax1.set_ylabel("excess mass")
        ax1.legend(loc="best")
        ax2.plot(lambdas, diff, color="C3", lw=1.3)
        ax2.set_xscale("log")
        ax2.set_xlabel("level")
        ax2.set_ylabel("difference")
        fig.suptitle(title)
        _save(fig, path)


def bootstrap_figure(path, values, quantiles, title):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.hist(values, bins=40, color="C0", alpha=0.8)
        for alpha, t in quantiles:
            ax.axvline(t, color="C3", ls="--", lw=1)
            ax.text(t, ax.get_ylim()[1] * 0.95, f"{alpha:g}", rotation=90,
                    va="top", ha="right", fontsize=8, color="C3")
        ax.set_xlabel("replicate statistic")
        ax.set_ylabel("count")
        ax.set_title(title)
        _save(fig, path)


def sharpened_figure(path, grid, base_curve, sharp_curve, title):
    """Sharpened estimate (solid) over the conventional one (dotted)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.plot(grid, base_curve, color="0.3", ls=":", lw=1.4, label="conventional")
        ax.plot(grid, sharp_curve, color="C0", lw=1.6, label="sharpened")
        ax.set_xlabel("x")
        ax.set_ylabel("density")
        ax.set_title(title)
        ax.legend(loc="best")
        _save(fig, path)


def bridge_check_figure(path, t, emp_var, title):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.plot(t, emp_var, color="C0", lw=1.3, label="empirical variance")
        ax.plot(t, t * (1 - t), color="C3", ls="--", lw=1.2, label="t(1-t)")
        ax.set_xlabel("t")
        ax.set_ylabel("variance")
        ax.set_title(title)
        ax.legend(loc="best")
        _save(fig, path)


def z_hist_figure(path, z, title):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.hist(z, bins=60, density=True, color="C0", alpha=0.8)
        ax.set_xlabel("limit variable")
        ax.set_ylabel("density")
        ax.set_title(title)
        _save(fig, path)


def detection_figure(path, rows, title):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        hs = [r.h for r in rows]
        ax.plot(hs, [r.bump_detection_rate for r in rows], "o-", label="bump detected")
        ax.plot(hs, [r.base_unimodal_rate for r in rows], "s-", label="base unimodal")
        ax.plot(hs, [r.base_spurious_shoulder_rate for r in rows], "^-",
                label="spurious near shoulder")
        ax.set_xscale("log")
        ax.set_xlabel("bandwidth")
        ax.set_ylabel("rate")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(title)
        ax.legend(loc="best")
        _save(fig, path)
