"""
Plot service rendering figures from a stored trace CSV.
"""
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from config import settings  # noqa: E402
from simulation.trace import read_trace_csv  # noqa: E402

logger = logging.getLogger(__name__)

COLUMN = re.compile(r"^([xuy])(\d+)_(\d+)$")
PLOT_KINDS = ("relative_angles", "radii", "paths", "positions")


class TraceTable:
    """Columns of a trace CSV as float arrays; missing entries become NaN."""

    def __init__(self, rows: List[Dict[str, str]]):
        if not rows:
            raise ValueError("trace CSV has no rows")
        self.columns = list(rows[0].keys())
        self.data = {
            name: np.array([float(r[name]) if r.get(name) not in ("", None) else np.nan for r in rows])
            for name in self.columns
            if name != "solver_status"
        }

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "TraceTable":
        return cls(read_trace_csv(path))

    @property
    def t(self) -> np.ndarray:
        return self.data["t"]

    def agents(self, prefix: str = "x") -> List[int]:
        ids = {int(m.group(2)) for m in map(COLUMN.match, self.columns) if m and m.group(1) == prefix}
        return sorted(ids)

    def series(self, prefix: str, agent: int, component: int) -> np.ndarray:
        return self.data[f"{prefix}{agent}_{component}"]

    def has(self, prefix: str, agent: int, component: int) -> bool:
        return f"{prefix}{agent}_{component}" in self.data


class PlotService:
    """
    Figures of closed-loop runs, rendered purely from the trace CSV.

    PNG metadata is stripped and the DPI fixed so that rendering the same
    CSV twice gives identical files.
    """

    def __init__(self, dpi: Optional[int] = None):
        self.dpi = dpi or settings.plot_dpi

    def _save(self, fig, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=self.dpi, format="png", metadata={"Software": None})
        plt.close(fig)
        logger.info(f"plot written to {path}")
        return path

    def relative_angles(self, table: TraceTable, path: Path, reference: int = 2, component: int = 1) -> Path:
        """Angular positions relative to one agent, in degrees as stored in the CSV."""
        fig, ax = plt.subplots(figsize=(10, 6))
        base = table.series("x", reference, component)
        for agent in table.agents():
            if agent == reference:
                continue
            ax.plot(table.t, table.series("x", agent, component) - base, label=f"agent {agent}")
        ax.set_xlabel("time step")
        ax.set_ylabel(f"angle relative to agent {reference} [deg]")
        ax.grid(True)
        ax.legend()
        return self._save(fig, path)

    def radii(self, table: TraceTable, path: Path, component: int = 0) -> Path:
        fig, ax = plt.subplots(figsize=(10, 6))
        for agent in table.agents():
            ax.plot(table.t, table.series("x", agent, component), label=f"agent {agent}")
        ax.set_xlabel("time step")
        ax.set_ylabel("orbital radius [m]")
        ax.ticklabel_format(useOffset=False, axis="y")
        ax.grid(True)
        ax.legend()
        return self._save(fig, path)

    def paths(self, table: TraceTable, path: Path, components: Sequence[int] = (0, 1)) -> Path:
        """Planar paths with start and end markers."""
        fig, ax = plt.subplots(figsize=(8, 8))
        cx, cy = components
        for agent in table.agents():
            xs, ys = table.series("x", agent, cx), table.series("x", agent, cy)
            valid = ~(np.isnan(xs) | np.isnan(ys))
            if not valid.any():
                continue
            line, = ax.plot(xs[valid], ys[valid], label=f"agent {agent}")
            ax.plot(xs[valid][0], ys[valid][0], "o", color=line.get_color())
            ax.plot(xs[valid][-1], ys[valid][-1], "x", color=line.get_color())
        ax.set_xlabel(f"x{cx}")
        ax.set_ylabel(f"x{cy}")
        ax.set_aspect("equal", adjustable="datalim")
        ax.grid(True)
        ax.legend()
        return self._save(fig, path)

    def positions(self, table: TraceTable, path: Path, component: int = 0) -> Path:
        fig, ax = plt.subplots(figsize=(10, 6))
        for agent in table.agents():
            ax.plot(table.t, table.series("x", agent, component), label=f"agent {agent}")
        ax.set_xlabel("time step")
        ax.set_ylabel(f"x{component}")
        ax.grid(True)
        ax.legend()
        return self._save(fig, path)

    def default_kinds(self, model_names: Sequence[str], output_dims: Sequence[int]) -> List[str]:
        """Orbit plots for satellites, planar paths for agents with two or more outputs."""
        if "satellite" in model_names:
            return ["relative_angles", "radii"]
        return ["paths"] if min(output_dims, default=1) >= 2 else ["positions"]

    def render(
        self,
        csv_path: Union[str, Path],
        out_dir: Union[str, Path],
        kinds: Sequence[str],
        reference: int = 2,
    ) -> List[Path]:
        """
        Render the requested figures of one trace.

        Args:
            csv_path: Trace CSV
            out_dir: Directory of the PNG files
            kinds: Any of relative_angles, radii, paths, positions
            reference: Agent the relative angles are measured against

        Returns:
            Written files
        """
        table = TraceTable.from_csv(csv_path)
        out_dir = Path(out_dir)
        written = []
        for kind in kinds:
            if kind not in PLOT_KINDS:
                raise ValueError(f"unknown plot '{kind}', choose from {', '.join(PLOT_KINDS)}")
            target = out_dir / f"{kind}.png"
            if kind == "relative_angles":
                agents = table.agents()
                written.append(self.relative_angles(table, target, reference if reference in agents else agents[0]))
            elif kind == "radii":
                written.append(self.radii(table, target))
            elif kind == "paths":
                written.append(self.paths(table, target))
            else:
                written.append(self.positions(table, target))
        return written


# Global instance
plot_service = PlotService()
