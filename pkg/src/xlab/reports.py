"""Run ledger and table-shaped reports.

Each run writes a single record.json inside its run directory (atomic
rename); `merge_ledger` folds any new records into an append-only
ledger.jsonl.  Tables are pure functions of the ledger rows and are
emitted as TSV plus a rendered PNG figure next to it.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .encoder import EncoderConfig, param_count

TABLE_NAMES = ("runs", "gap", "contribution", "permutation", "frequency",
               "architecture", "retrieval", "losses")

METRIC_PRIORITY = ("xnli_acc", "xnli_acc_target", "ner_f1_mean", "top1", "mlm_loss_final")


# ---------------------------------------------------------------------------
# ledger
# ---------------------------------------------------------------------------

def write_record(runs_root, run_id: str, record: dict) -> Path:
    run_dir = Path(runs_root) / "runs" / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    tmp = run_dir / "record.json.tmp"
    tmp.write_text(json.dumps(record, sort_keys=True, indent=1), encoding="utf-8")
    final = run_dir / "record.json"
    os.replace(tmp, final)
    return final


def merge_ledger(runs_root) -> Path:
    """Fold per-run record files into the append-only ledger (by run id)."""
    root = Path(runs_root)
    root.mkdir(parents=True, exist_ok=True)
    ledger = root / "ledger.jsonl"
    known = set()
    if ledger.exists():
        for line in ledger.read_text(encoding="utf-8").splitlines():
            if line.strip():
                known.add(json.loads(line)["run_id"])
    fresh = []
    for record_file in sorted(root.glob("runs/*/record.json")):
        record = json.loads(record_file.read_text(encoding="utf-8"))
        if record["run_id"] not in known:
            fresh.append(record)
            known.add(record["run_id"])
    if fresh:
        with ledger.open("a", encoding="utf-8") as f:
            for record in fresh:
                f.write(json.dumps(record, sort_keys=True) + "\n")
    elif not ledger.exists():
        ledger.touch()
    return ledger


def load_ledger(runs_root) -> List[dict]:
    ledger = merge_ledger(runs_root)
    rows = []
    for line in ledger.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


# ---------------------------------------------------------------------------
# table construction
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _report_section(record: dict) -> dict:
    return (record.get("config") or {}).get("report") or {}


def _headline_metric(record: dict) -> Tuple[Optional[str], Optional[float]]:
    metrics = record.get("metrics") or {}
    for key in METRIC_PRIORITY:
        if key in metrics:
            return key, metrics[key]
    return None, None


def _grouped_pair_rows(records: Sequence[dict], role_a: str, role_b: str,
                       derived_name: str) -> Tuple[List[List[str]], List[str]]:
    groups: Dict[str, Dict[str, dict]] = {}
    for record in records:
        section = _report_section(record)
        if "group" in section and section.get("role") in (role_a, role_b):
            groups.setdefault(section["group"], {})[section["role"]] = record
    rows: List[List[str]] = []
    warnings: List[str] = []
    for group in sorted(groups):
        pair = groups[group]
        cells: Dict[str, Optional[float]] = {}
        metric_name = ""
        for role in (role_a, role_b):
            if role in pair:
                name, value = _headline_metric(pair[role])
                cells[role] = value
                metric_name = metric_name or (name or "")
            else:
                cells[role] = None
                warnings.append(f"group {group!r}: no {role!r} run in ledger")
        derived = None
        if cells[role_a] is not None and cells[role_b] is not None:
            derived = cells[role_a] - cells[role_b]
        rows.append([group, metric_name, _fmt(cells[role_a]), _fmt(cells[role_b]), _fmt(derived)])
    return rows, warnings


def build_table(records: Sequence[dict], table: str) -> Tuple[List[str], List[List[str]], List[str]]:
    """Returns (header, rows, warnings) for a named table shape."""
    if table == "runs":
        keys = sorted({k for r in records for k in (r.get("metrics") or {})})
        header = ["run_id", "subcommand", "config_hash", "seed", "status", "wall_time_s"] + keys
        rows = [[_fmt(r.get("run_id")), _fmt(r.get("subcommand")), _fmt(r.get("config_hash")),
                 _fmt(r.get("seed")), _fmt(r.get("status")), _fmt(r.get("wall_time_s"))]
                + [_fmt((r.get("metrics") or {}).get(k)) for k in keys]
                for r in sorted(records, key=lambda r: r.get("run_id", ""))]
        return header, rows, []

    if table == "gap":
        header = ["group", "metric", "perf_source", "perf_target", "delta"]
        rows, warnings = _grouped_pair_rows(records, "source", "target", "delta")
        for r in sorted(records, key=lambda r: r.get("run_id", "")):
            metrics = r.get("metrics") or {}
            if "delta" in metrics:
                rows.append([_report_section(r).get("group") or r.get("run_id", ""),
                             "xnli_acc", _fmt(metrics.get("xnli_acc_source")),
                             _fmt(metrics.get("xnli_acc_target")), _fmt(metrics["delta"])])
        return header, rows, warnings

    if table == "contribution":
        header = ["group", "metric", "perf_real", "perf_fake", "wordpiece_contribution"]
        rows, warnings = _grouped_pair_rows(records, "real", "fake", "wordpiece_contribution")
        return header, rows, warnings

    if table == "permutation":
        header = ["group", "permute_p", "xnli_acc", "top1", "top3", "ner_f1_mean", "mlm_loss_final"]
        rows = []
        for r in records:
            p = ((r.get("config") or {}).get("ablation") or {}).get("permute_p")
            if p is None:
                continue
            m = r.get("metrics") or {}
            rows.append([_report_section(r).get("group") or r.get("run_id", ""), _fmt(p),
                         _fmt(m.get("xnli_acc")), _fmt(m.get("top1")), _fmt(m.get("top3")),
                         _fmt(m.get("ner_f1_mean")), _fmt(m.get("mlm_loss_final"))])
        rows.sort(key=lambda row: (row[0], float(row[1]) if row[1] else 0.0))
        return header, rows, []

    if table == "frequency":
        header = ["group", "frequency_only", "xnli_acc", "top1", "ner_f1_mean"]
        rows = []
        for r in records:
            flag = ((r.get("config") or {}).get("ablation") or {}).get("frequency_only")
            if flag is None:
                continue
            m = r.get("metrics") or {}
            rows.append([_report_section(r).get("group") or r.get("run_id", ""),
                         _fmt(bool(flag)), _fmt(m.get("xnli_acc")), _fmt(m.get("top1")),
                         _fmt(m.get("ner_f1_mean"))])
        return header, rows, []

    if table == "architecture":
        header = ["params_millions", "depth", "heads", "hidden",
                  "perf_source", "perf_target", "delta", "top1"]
        rows = []
        warnings = []
        for r in records:
            enc = (r.get("config") or {}).get("encoder")
            if not enc:
                continue
            m = r.get("metrics") or {}
            try:
                cfg = EncoderConfig(**enc)
                millions = param_count(cfg) / 1e6
            except (TypeError, ValueError) as e:
                warnings.append(f"{r.get('run_id')}: encoder config not countable ({e})")
                millions = None
            rows.append([_fmt(round(millions, 2) if millions is not None else None),
                         _fmt(enc.get("depth")), _fmt(enc.get("heads")), _fmt(enc.get("hidden")),
                         _fmt(m.get("xnli_acc_source")), _fmt(m.get("xnli_acc_target")),
                         _fmt(m.get("delta")), _fmt(m.get("top1"))])
        rows.sort(key=lambda row: (int(row[1]) if row[1] else 0, int(row[2]) if row[2] else 0))
        return header, rows, warnings

    if table == "retrieval":
        header = ["group", "top1", "top3", "n_pairs"]
        rows = []
        for r in records:
            m = r.get("metrics") or {}
            if "top1" not in m:
                continue
            rows.append([_report_section(r).get("group") or r.get("run_id", ""),
                         _fmt(m.get("top1")), _fmt(m.get("top3")), _fmt(m.get("n_pairs"))])
        return header, rows, []

    if table == "losses":
        header = ["run_id", "steps", "mlm_loss_final", "nsp_loss_final"]
        rows = []
        for r in sorted(records, key=lambda r: r.get("run_id", "")):
            m = r.get("metrics") or {}
            if "mlm_loss_final" not in m:
                continue
            steps = ((r.get("config") or {}).get("pretrain") or {}).get("steps")
            rows.append([_fmt(r.get("run_id")), _fmt(steps),
                         _fmt(m.get("mlm_loss_final")), _fmt(m.get("nsp_loss_final"))])
        return header, rows, []

    raise ValueError(f"unknown table {table!r}; choose from {TABLE_NAMES}")


def write_tsv(path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    lines = ["\t".join(header)] + ["\t".join(row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _numeric(cell: str) -> Optional[float]:
    try:
        return float(cell)
    except (TypeError, ValueError):
        return None


def render_figure(table: str, header: Sequence[str], rows: Sequence[Sequence[str]],
                  path, records: Sequence[dict] = (), runs_root=None) -> Optional[Path]:
    """Chart for a table; returns None when there is nothing to draw."""
    if table == "losses":
        return _render_loss_curves(records, runs_root, path)
    if not rows:
        return None
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if table == "permutation":
        groups = sorted({row[0] for row in rows})
        for g in groups:
            pts = [(float(r[1]), _numeric(r[2]) if _numeric(r[2]) is not None else _numeric(r[3]))
                   for r in rows if r[0] == g]
            pts = [(x, y) for x, y in pts if y is not None]
            if pts:
                ax.plot(*zip(*sorted(pts)), marker="o", label=g)
        ax.set_xlabel("fraction of token pairs swapped")
        ax.set_ylabel("probe metric")
        if ax.lines:
            ax.legend()
    elif table == "architecture":
        pts = [(float(r[1]), _numeric(r[6])) for r in rows if r[1] and _numeric(r[6]) is not None]
        if not pts:
            plt.close(fig)
            return None
        ax.plot(*zip(*sorted(pts)), marker="o")
        ax.set_xlabel("depth")
        ax.set_ylabel("source - target gap")
    elif table in ("gap", "contribution"):
        labels = [r[0] for r in rows]
        a = [_numeric(r[2]) or 0.0 for r in rows]
        b = [_numeric(r[3]) or 0.0 for r in rows]
        x = range(len(labels))
        width = 0.38
        ax.bar([i - width / 2 for i in x], a, width,
               label="source" if table == "gap" else "real")
        ax.bar([i + width / 2 for i in x], b, width,
               label="target" if table == "gap" else "fake")
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_ylabel("probe metric")
        ax.legend()
    elif table == "retrieval":
        labels = [r[0] for r in rows]
        x = range(len(labels))
        ax.bar([i - 0.19 for i in x], [_numeric(r[1]) or 0.0 for r in rows], 0.38, label="top-1")
        ax.bar([i + 0.19 for i in x], [_numeric(r[2]) or 0.0 for r in rows], 0.38, label="top-3")
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_ylabel("retrieval accuracy")
        ax.set_ylim(0, 1.05)
        ax.legend()
    else:
        # generic fallback: first numeric column as a bar chart per row
        col = None
        for c in range(1, len(header)):
            if any(_numeric(r[c]) is not None for r in rows):
                col = c
                break
        if col is None:
            plt.close(fig)
            return None
        labels = [r[0][-24:] for r in rows]
        ax.bar(range(len(rows)), [(_numeric(r[col]) or 0.0) for r in rows])
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
        ax.set_ylabel(header[col])
    ax.set_title(table)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def _render_loss_curves(records: Sequence[dict], runs_root, path) -> Optional[Path]:
    if runs_root is None:
        return None
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    drew = False
    for r in records:
        curve_name = (r.get("artifacts") or {}).get("curve")
        if not curve_name:
            continue
        curve_path = Path(runs_root) / "runs" / r["run_id"] / curve_name
        if not curve_path.exists():
            continue
        steps, losses = [], []
        for line in curve_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                entry = json.loads(line)
                steps.append(entry["step"])
                losses.append(entry["mlm_loss"])
        if steps:
            ax.plot(steps, losses, label=r["run_id"][-28:], linewidth=1)
            drew = True
    if not drew:
        plt.close(fig)
        return None
    ax.set_xlabel("step")
    ax.set_ylabel("masked-LM loss")
    ax.set_title("training loss")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def report(runs_root, table: str, out_dir=None) -> Tuple[Path, Optional[Path], List[str]]:
    """Emit <table>.tsv (+ <table>.png) from the merged ledger."""
    records = load_ledger(runs_root)
    header, rows, warnings = build_table(records, table)
    out = Path(out_dir) if out_dir is not None else Path(runs_root) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    tsv = out / f"{table}.tsv"
    write_tsv(tsv, header, rows)
    png = render_figure(table, header, rows, out / f"{table}.png", records, runs_root)
    return tsv, png, warnings
