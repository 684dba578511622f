"""Per-model metric tables with lifts relative to a baseline model."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .metrics import lift


@dataclass
class EvalReport:
    """Metrics per model, in insertion order.

    ``rows`` maps model name to a flat ``{metric: value}`` dict. ``primary``
    names the metrics shown with lifts in the Markdown table.
    """

    task: str
    rows: dict[str, dict[str, float]]
    baseline: str = "last_pin"
    primary: tuple[str, ...] = ()

    def metric(self, model: str, name: str) -> float:
        return float(self.rows[model][name])

    def lift(self, model: str, name: str) -> float:
        return lift(self.metric(model, name), self.metric(self.baseline, name))

    def lifts(self, name: str) -> dict[str, float]:
        return {m: self.lift(m, name) for m in self.rows}

    def to_markdown(self, digits: int = 4) -> str:
        cols = list(self.primary)
        head = ["model"] + [c for name in cols for c in (name, f"{name} lift")]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for model in self.rows:
            cells = [model]
            for name in cols:
                cells.append(f"{self.metric(model, name):.{digits}f}")
                cells.append(_percent(self.lift(model, name)))
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        """Raw metrics plus lifts, one row per model, stable column order."""
        metrics = []
        for values in self.rows.values():
            for k in values:
                if k not in metrics:
                    metrics.append(k)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["task", "model"] + metrics + [f"{m}_lift" for m in self.primary])
        for model, values in self.rows.items():
            w.writerow([self.task, model] + [_fmt(values.get(k, "")) for k in metrics]
                       + [_fmt(self.lift(model, m)) for m in self.primary])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def _percent(x: float) -> str:
    return "n/a" if math.isnan(x) else f"{100 * x:+.1f}%"
