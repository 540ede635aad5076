"""Static SVG line charts in the panel layout of the RLC and generator studies.

RLC runs get load / current / voltage / control panels; generator runs get
load / speed / mechanical power / valve panels. Every panel is its own file.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sim import Trajectory  # noqa: E402

# (file stem, column, y label)
RLC_PANELS = (
    ("load", "P_load", "load power [W]"),
    ("current", "x0", "inductor current i1 [A]"),
    ("voltage", "x1", "capacitor voltage v1 [V]"),
    ("control", "u", "control voltage u [V]"),
)
GEN_PANELS = (
    ("load", "P_load", "load power [W]"),
    ("speed", "x0", "rotor speed w1 [rad/s]"),
    ("power", "x1", "mechanical power Pm1 [W]"),
    ("valve", "u", "valve position a1 [cm]"),
)

_STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "energyspace",  # stable element ids, so reruns give identical files
}


def panels_for(plant: str):
    return RLC_PANELS if plant in ("rlc", "RlcSource") else GEN_PANELS


def plot_panels(runs: Mapping[str, Trajectory], plant: str, out_dir: str | Path,
                prefix: str = "fig", reference: float | None = None) -> list[Path]:
    """One SVG per panel with one line per run; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    output_col = "x1" if plant in ("rlc", "RlcSource") else "x0"
    with plt.rc_context(_STYLE):
        for stem, col, label in panels_for(plant):
            fig, ax = plt.subplots(figsize=(4.2, 2.8))
            if stem == "load":
                # the load profile is shared; draw it once
                first = next(iter(runs.values()))
                ax.plot(first.t, first[col], color="k")
            else:
                for name, traj in runs.items():
                    ax.plot(traj.t, traj[col], label=name)
                if reference is not None and col == output_col:
                    ax.axhline(reference, color="0.5", ls="--", lw=0.8)
                if len(runs) > 1:
                    ax.legend(loc="best", frameon=False)
            ax.set_xlabel("time [s]")
            ax.set_ylabel(label)
            fig.tight_layout()
            path = out_dir / f"{prefix}_{stem}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written
