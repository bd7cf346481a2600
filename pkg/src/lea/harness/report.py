"""Experiment reports: JSON for machines, aligned text tables for people."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation; (nan, nan) when empty."""
    if len(values) == 0:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


@dataclasses.dataclass
class RunEntry:
    """One (model, seed) result with its clean and per-replica typo F1."""

    model: str
    seed: int
    clean_f1: float
    typo_f1: list[float] = dataclasses.field(default_factory=list)
    alpha: dict[str, list[float]] = dataclasses.field(default_factory=dict)
    runtime_s: float = 0.0
    best_epoch: int = -1


@dataclasses.dataclass
class ExperimentReport:
    config: dict[str, Any]
    runs: list[RunEntry] = dataclasses.field(default_factory=list)
    sweep: list[dict] = dataclasses.field(default_factory=list)
    runtime_s: float = 0.0

    def models(self) -> list[str]:
        return list(dict.fromkeys(r.model for r in self.runs))

    def aggregate(self) -> dict[str, dict[str, float]]:
        """Per model: clean mean/std over seeds, typo mean/std over every (seed, replica)."""
        out = {}
        for name in self.models():
            runs = [r for r in self.runs if r.model == name]
            clean = mean_std([r.clean_f1 for r in runs])
            typo = mean_std([v for r in runs for v in r.typo_f1])
            out[name] = {"clean_mean": clean[0], "clean_std": clean[1],
                         "typo_mean": typo[0], "typo_std": typo[1], "n_runs": len(runs)}
        return out

    def to_dict(self) -> dict:
        return {"config": self.config, "runs": [dataclasses.asdict(r) for r in self.runs],
                "aggregate": self.aggregate(), "sweep": self.sweep, "runtime_s": self.runtime_s}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(d["config"], [RunEntry(**r) for r in d["runs"]], d.get("sweep", []),
                   d.get("runtime_s", 0.0))

    def table(self) -> str:
        rows = []
        for name, agg in self.aggregate().items():
            typo = "-" if np.isnan(agg["typo_mean"]) else f"{100 * agg['typo_mean']:.2f} ± {100 * agg['typo_std']:.2f}"
            rows.append([name, str(agg["n_runs"]),
                         f"{100 * agg['clean_mean']:.2f} ± {100 * agg['clean_std']:.2f}", typo])
        return format_table(["model", "runs", "clean F1", "typo F1"], rows)

    def save(self, stem: str | Path) -> tuple[Path, Path]:
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        js, txt = stem.with_suffix(".json"), stem.with_suffix(".txt")
        js.write_text(self.to_json() + "\n", encoding="utf-8")
        txt.write_text(self.table() + "\n", encoding="utf-8")
        return js, txt


def format_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """Left-aligned text table with a dashed rule under the header."""
    cells = [[str(c) for c in header]] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


SWEEP_HEADER = ("model", "p_word", "f1_mean", "f1_std")


def sweep_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([r["model"], repr(float(r["p_word"])), repr(float(r["f1_mean"])), repr(float(r["f1_std"]))])
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != SWEEP_HEADER:
        raise ValueError(f"sweep CSV header must be {','.join(SWEEP_HEADER)}")
    return [{"model": r["model"], "p_word": float(r["p_word"]),
             "f1_mean": float(r["f1_mean"]), "f1_std": float(r["f1_std"])} for r in reader]


def sweep_gap(rows: Sequence[dict], better: str = "lea", worse: str = "da") -> list[tuple[float, float]]:
    """(p_word, f1_mean[better] - f1_mean[worse]) sorted by p_word."""
    a = {r["p_word"]: r["f1_mean"] for r in rows if r["model"] == better}
    b = {r["p_word"]: r["f1_mean"] for r in rows if r["model"] == worse}
    return [(p, a[p] - b[p]) for p in sorted(set(a) & set(b))]


def non_decreasing_steps(gaps: Sequence[tuple[float, float]]) -> int:
    return sum(1 for (_, g0), (_, g1) in zip(gaps, gaps[1:]) if g1 >= g0)
