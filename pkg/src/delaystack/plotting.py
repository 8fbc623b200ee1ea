"""Trajectory figure: |x1(t)|, the x2 window norm and |Y(t)| on a log axis, rendered headless to SVG."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

WIDTH_PX, HEIGHT_PX = 800, 400
_PT_PER_IN = 72.0


def trajectory_curves(traj, max_points: int = 1500) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Plot-ready (t, value) arrays, thinned to at most ``max_points`` per curve."""
    T, X1, X2, Y = traj.table()
    idx = np.unique(np.linspace(0, T.size - 1, min(T.size, max_points)).round().astype(int))
    t = T[idx]
    sys = traj.system
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    if X1.shape[1]:
        out["|x1(t)|"] = (t, np.linalg.norm(X1[idx], axis=1))
    if X2.shape[1]:
        out["x2 window norm"] = (t, np.array([traj.x2.sup_between(s - sys.r2, s) for s in t]))
    if Y.shape[1]:
        out["|Y(t)|"] = (t, np.linalg.norm(Y[idx], axis=1))
    return out


def trajectory_svg(traj, title: str = "") -> str:
    curves = trajectory_curves(traj)
    with plt.rc_context({"svg.hashsalt": "delaystack", "svg.fonttype": "none", "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(WIDTH_PX / _PT_PER_IN, HEIGHT_PX / _PT_PER_IN), dpi=_PT_PER_IN)
        try:
            positive = False
            for label, (t, v) in curves.items():
                v = np.where(np.isfinite(v), v, np.nan)
                if np.any(v > 0):
                    positive = True
                ax.plot(t, np.where(v > 0, v, np.nan), label=label, linewidth=1.2)
            if positive:
                ax.set_yscale("log")
            ax.set_xlabel("t")
            ax.set_title(title or traj.system.name)
            ax.grid(True, which="major", alpha=0.3)
            if curves:
                ax.legend(loc="best", fontsize="small")
            buf = io.StringIO()
            fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        finally:
            plt.close(fig)
    return buf.getvalue()
