"""Score tables and figures computed from run logs alone."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agent import RunLog

RUNSPEC_FILE = "runspec.json"
RUNLOG_FILE = "runlog.jsonl"


@dataclass
class ScoreCell:
    game: str
    variant: str
    avg_score: float | None
    max_score: float | None
    game_max: float
    seeds: list = field(default_factory=list)
    status: str = "ok"
    curves: list = field(default_factory=list)

    @property
    def normalized(self) -> float | None:
        if self.avg_score is None or not self.game_max:
            return None
        return self.avg_score / self.game_max


@dataclass
class ScoreTable:
    cells: list[ScoreCell]

    @property
    def games(self) -> list[str]:
        return list(dict.fromkeys(c.game for c in self.cells))

    @property
    def variants(self) -> list[str]:
        return list(dict.fromkeys(c.variant for c in self.cells))

    def cell(self, game: str, variant: str) -> ScoreCell | None:
        for c in self.cells:
            if c.game == game and c.variant == variant:
                return c
        return None

    def avg_norm(self, variant: str) -> float | None:
        """Mean over games of score / max game score; None if any cell is unusable."""
        vals = []
        for g in self.games:
            c = self.cell(g, variant)
            if c is None or c.normalized is None:
                return None
            vals.append(c.normalized)
        return float(np.mean(vals)) if vals else None

    def to_rows(self) -> list[list[str]]:
        rows = [["game", "max"]]
        for v in self.variants:
            rows[0] += [f"{v}:avg", f"{v}:max", f"{v}:status"]
        for g in self.games:
            first = next(c for c in self.cells if c.game == g)
            row = [g, _fmt(first.game_max)]
            for v in self.variants:
                c = self.cell(g, v)
                if c is None:
                    row += ["", "", "missing"]
                else:
                    row += [_fmt(c.avg_score), _fmt(c.max_score), c.status]
            rows.append(row)
        norm = ["avg norm", ""]
        for v in self.variants:
            n = self.avg_norm(v)
            norm += [_fmt(n, 4), "", "ok" if n is not None else "incomplete"]
        rows.append(norm)
        return rows

    def to_tsv(self) -> str:
        return "".join("\t".join(r) + "\n" for r in self.to_rows())

    def to_json(self) -> dict:
        cells = [{k: v for k, v in asdict(c).items() if k != "curves"} | {"normalized": c.normalized}
                 for c in self.cells]
        return {"cells": cells, "avg_norm": {v: self.avg_norm(v) for v in self.variants}}


def _fmt(x, digits: int = 2) -> str:
    if x is None:
        return ""
    if float(x).is_integer():
        return str(int(x))
    return f"{x:.{digits}f}"


def window_curve(scores, window: int = 100) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        return s
    c = np.cumsum(np.concatenate([[0.0], s]))
    lo = np.maximum(np.arange(1, s.size + 1) - window, 0)
    return (c[1:] - c[lo]) / (np.arange(1, s.size + 1) - lo)


def cell_from_run(run_dir, window: int = 100) -> ScoreCell:
    """Aggregate one training run directory: mean of per-seed final averages, max over seeds."""
    run_dir = Path(run_dir)
    spec = json.loads((run_dir / RUNSPEC_FILE).read_text(encoding="utf-8"))
    game, variant, game_max = spec["game_name"], spec["variant_label"], spec["max_score"]
    expected = spec["train"].get("episodes")
    finals, bests, curves, problems = [], [], [], []
    for seed in spec["seeds"]:
        path = run_dir / f"seed_{seed}" / RUNLOG_FILE
        if not path.exists():
            problems.append(f"seed {seed} missing")
            continue
        try:
            log = RunLog.read(path)
        except (json.JSONDecodeError, OSError) as e:
            problems.append(f"seed {seed} unreadable ({e})")
            continue
        if not log.records or (expected and len(log.records) < expected):
            problems.append(f"seed {seed} partial ({len(log.records)}/{expected} episodes)")
            continue
        finals.append(log.avg_score(window))
        bests.append(log.max_score())
        curves.append(window_curve(log.scores, window).tolist())
    status = "ok" if not problems else "; ".join(problems)
    return ScoreCell(
        game, variant,
        float(np.mean(finals)) if finals else None,
        float(max(bests)) if bests else None,
        game_max, list(spec["seeds"]), status, curves,
    )


def cells_from_tsv(path) -> list[ScoreCell]:
    """Published or hand-entered scores: columns game, variant, score, max_score[, best]."""
    cells = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    need = {"game", "variant", "score", "max_score"}
    if not need <= set(header):
        raise ValueError(f"{path}: expected columns {sorted(need)}, got {header}")
    for r in body:
        d = dict(zip(header, r))
        best = d.get("best") or None
        cells.append(ScoreCell(d["game"], d["variant"], float(d["score"]),
                               float(best) if best else None, float(d["max_score"])))
    return cells


def build_table(sources, window: int = 100) -> ScoreTable:
    """Score table from run directories and/or TSV score files."""
    cells = []
    for src in sources:
        p = Path(src)
        if p.is_dir():
            if (p / RUNSPEC_FILE).exists():
                cells.append(cell_from_run(p, window))
            else:
                subs = sorted(d for d in p.iterdir() if (d / RUNSPEC_FILE).exists())
                if not subs:
                    raise FileNotFoundError(f"{p}: no runs found")
                cells += [cell_from_run(d, window) for d in subs]
        elif p.is_file():
            cells += cells_from_tsv(p)
        else:
            raise FileNotFoundError(f"{p}: no such run directory or score file")
    return ScoreTable(cells)


def plot_table(table: ScoreTable, out_dir) -> list[Path]:
    """Learning curves (if any runs carry them) and normalized-score bars, as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    written = []
    with_curves = [c for c in table.cells if c.curves]
    if with_curves:
        games = list(dict.fromkeys(c.game for c in with_curves))
        fig, axes = plt.subplots(1, len(games), figsize=(5 * len(games), 3.5), squeeze=False)
        for ax, g in zip(axes[0], games):
            for c in (c for c in with_curves if c.game == g):
                n = min(len(x) for x in c.curves)
                arr = np.array([x[:n] for x in c.curves])
                mean = arr.mean(0)
                line, = ax.plot(np.arange(1, n + 1), mean, label=c.variant)
                ax.fill_between(np.arange(1, n + 1), arr.min(0), arr.max(0), alpha=0.2, color=line.get_color())
            ax.set_title(g)
            ax.set_xlabel("episode")
            ax.set_ylabel("windowed score")
            ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / "learning_curves.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)

    variants = table.variants
    games = table.games
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(games) * len(variants)), 3.5))
    width = 0.8 / max(len(variants), 1)
    for k, v in enumerate(variants):
        vals = [(table.cell(g, v).normalized or 0.0) if table.cell(g, v) else 0.0 for g in games]
        ax.bar(np.arange(len(games)) + k * width, vals, width, label=v)
    ax.set_xticks(np.arange(len(games)) + 0.4 - width / 2)
    ax.set_xticklabels(games, rotation=30, ha="right")
    ax.set_ylabel("score / max")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "normalized_scores.png"
    fig.savefig(path, dpi=100)
    plt.close(fig)
    written.append(path)
    return written


def write_report(table: ScoreTable, out_dir, figures: bool = True) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "table.tsv").write_text(table.to_tsv(), encoding="utf-8")
    (out_dir / "table.json").write_text(json.dumps(table.to_json(), indent=2), encoding="utf-8")
    written = [out_dir / "table.tsv", out_dir / "table.json"]
    if figures:
        written += plot_table(table, out_dir)
    return written
