"""Static SVG figures for pipeline outputs.

:func:`render_plots` walks an artifact directory and writes one SVG next to
every CSV. The plot style is picked from the CSV header: spectra go on
log-log axes, decay curves on linear axes, RB curves are drawn with their
sibling variant overlaid.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_plots", "plot_csv"]

_RC = {
    "figure.figsize": (5.0, 3.6),
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "tcqpt",
    "svg.fonttype": "none",
}


def _read(path: Path):
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], []
    return rows[0], rows[1:]


def _col(rows, i, cast=float):
    return np.array([cast(r[i]) for r in rows])


def _slope_guide(ax, f, s, slope=-1.0):
    """Dashed power-law guide through the geometric centre of the data."""
    ok = (f > 0) & (s > 0)
    if ok.sum() < 2:
        return
    lf, ls = np.log10(f[ok]), np.log10(s[ok])
    x = np.array([lf.min(), lf.max()])
    y = ls.mean() + slope * (x - lf.mean())
    ax.plot(10**x, 10**y, "k--", lw=0.8, label=f"slope {slope:g}")


def _spectrum(ax, header, rows, name):
    f, s = _col(rows, 0), _col(rows, 1)
    ok = (f > 0) & (s > 0)
    ax.loglog(f[ok], s[ok], "o-" if ok.sum() < 100 else "-", ms=3, lw=1, label="data")
    if name in ("cpmg_spectrum", "noise_psd"):
        _slope_guide(ax, f, s)
    ax.set_xlabel("f (Hz)")
    ax.set_ylabel("S (ueV$^2$/Hz)")


def _element_psd(ax, header, rows, name):
    labels = [r[0] for r in rows]
    for lab in dict.fromkeys(labels):
        sub = [r for r in rows if r[0] == lab]
        f, s = _col(sub, 1), _col(sub, 2)
        ok = (f > 0) & (s > 0)
        if ok.any():
            ax.loglog(f[ok], s[ok], lw=0.8, label=lab)
    ax.set_xlabel("f (Hz)")
    ax.set_ylabel("PSD (1/Hz)")


def _decay(ax, header, rows, name):
    t, p, e = _col(rows, 0), _col(rows, 1), _col(rows, 2)
    ax.errorbar(t, p, yerr=e, fmt="o-", ms=3, lw=1, capsize=0)
    ax.set_xlabel("duration (us)" if name == "rabi" else "delay (us)")
    ax.set_ylabel("$P_0$")


def _cpmg(ax, header, rows, name):
    n = _col(rows, 0, int)
    for k in np.unique(n):
        sub = [r for r, m in zip(rows, n) if m == k]
        ax.errorbar(_col(sub, 1), _col(sub, 2), yerr=_col(sub, 3), fmt="o-", ms=2, lw=1, label=f"n = {k}")
    ax.set_xscale("log")
    ax.set_xlabel("delay (us)")
    ax.set_ylabel("$P_0$")


def _rb(ax, header, rows, name, path: Path):
    paths = sorted(path.parent.glob("rb_*.csv")) or [path]
    for p in paths:
        h, rr = _read(p)
        if h[:4] != ["m", "p_mean", "p_stderr", "variant"] or not rr:
            continue
        ax.errorbar(_col(rr, 0), _col(rr, 1), yerr=_col(rr, 2), fmt="o-", ms=3, lw=1, label=rr[0][3])
    ax.set_xlabel("Clifford length m")
    ax.set_ylabel("return probability")


def _generic(ax, header, rows, name):
    x = []
    try:
        x = _col(rows, 0)
    except ValueError:
        x = np.arange(len(rows))
    for j in range(1, len(header)):
        try:
            ax.plot(x, _col(rows, j), "o-", ms=3, lw=1, label=header[j])
        except ValueError:
            continue
    ax.set_xlabel(header[0])


def plot_csv(path) -> Path:
    """Write ``<name>.svg`` beside ``path``; an empty CSV gives empty axes."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing artifact {path}")
    header, rows = _read(path)
    name = path.stem
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        if rows:
            if header[:2] == ["f_hz", "s_psd"]:
                _spectrum(ax, header, rows, name)
            elif header[:3] == ["element", "f_hz", "s_psd"]:
                _element_psd(ax, header, rows, name)
            elif header[:3] == ["delay_us", "p0", "stderr"]:
                _decay(ax, header, rows, name)
            elif header[:4] == ["n_pi", "delay_us", "p0", "stderr"]:
                _cpmg(ax, header, rows, name)
            elif header[:4] == ["m", "p_mean", "p_stderr", "variant"]:
                _rb(ax, header, rows, name, path)
            else:
                _generic(ax, header, rows, name)
            if ax.get_legend_handles_labels()[0]:
                ax.legend(fontsize=6, frameon=False, ncol=2)
        ax.set_title(name, fontsize=9)
        fig.tight_layout()
        out = path.with_suffix(".svg")
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out


def render_plots(artifact_dir) -> list:
    """One SVG per CSV under ``artifact_dir`` (recursively)."""
    root = Path(artifact_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"artifact directory {root} does not exist")
    csvs = sorted(root.rglob("*.csv"))
    return [plot_csv(p) for p in csvs]
