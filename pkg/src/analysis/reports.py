"""
Report Writers
Plain CSV/JSON outputs for external plotting, plus an ASCII summary table.
"""

import csv
import json
from pathlib import Path

from src.analysis.evaluation import EvalReport

ERROR_FIELDS = ["scene_id", "query_id", "ref_id", "pos_err_m", "rot_err_deg", "identity_pos_m", "identity_rot_deg"]
ABLATION_FIELDS = [
    "agg", "rot", "maps", "seed", "scene", "split",
    "median_pos_m", "median_rot_deg", "identity_pos_m", "identity_rot_deg", "final_loss",
]


def write_query_errors(report: EvalReport, output_path):
    """One row per query: model errors next to the identity-predictor errors."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", newline="") as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=ERROR_FIELDS)
        writer.writeheader()
        for err, base in zip(report.errors, report.identity_errors):
            row = err._asdict()
            row["identity_pos_m"] = base.pos_err_m
            row["identity_rot_deg"] = base.rot_err_deg
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_query_errors(path) -> list:
    with open(path, newline="") as f:
        return [
            {k: (int(v) if k.endswith("_id") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(f)
        ]


def write_report_json(report: EvalReport, output_path, extra: dict = None):
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    data = report.to_dict()
    if extra:
        data.update(extra)
    output_path.write_text(json.dumps(data, indent=2, default=str))


def ablation_rows(report: EvalReport, agg: str, rot: str, maps: str, seed: int, final_loss: float) -> list:
    return [
        {
            "agg": agg, "rot": rot, "maps": maps, "seed": seed, "scene": sid, "split": report.split,
            "median_pos_m": s["median_pos_m"], "median_rot_deg": s["median_rot_deg"],
            "identity_pos_m": s["identity_pos_m"], "identity_rot_deg": s["identity_rot_deg"],
            "final_loss": final_loss,
        }
        for sid, s in sorted(report.scenes.items())
    ]


def write_ablation_csv(rows: list, output_path):
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", newline="") as csvfile:
        writer = csv.DictWriter(csvfile, fieldnames=ABLATION_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def format_report(report: EvalReport, title: str = "POSE ERRORS") -> str:
    """Per-scene medians (model vs identity) and the average of medians."""
    lines = []
    lines.append("=" * 64)
    lines.append(f"  {title} ({report.predictor}, split: {report.split})")
    lines.append("=" * 64)
    lines.append(f"  {'scene':>5}  {'queries':>7}  {'pos [m]':>9}  {'rot [deg]':>9}  {'ident m':>8}  {'ident deg':>9}")
    lines.append("  " + "-" * 58)
    for sid, s in sorted(report.scenes.items()):
        lines.append(
            f"  {sid:>5}  {s['queries']:>7}  {s['median_pos_m']:>9.3f}  {s['median_rot_deg']:>9.2f}  "
            f"{s['identity_pos_m']:>8.3f}  {s['identity_rot_deg']:>9.2f}"
        )
    lines.append("  " + "-" * 58)
    lines.append(
        f"  {'avg':>5}  {len(report.errors):>7}  {report.average('median_pos_m'):>9.3f}  "
        f"{report.average('median_rot_deg'):>9.2f}  {report.average('identity_pos_m'):>8.3f}  "
        f"{report.average('identity_rot_deg'):>9.2f}"
    )
    lines.append("=" * 64)
    return "\n".join(lines)


def format_ablation(rows: list) -> str:
    """One line per (agg, rot, maps, seed) run on its evaluation scene."""
    lines = []
    lines.append("=" * 72)
    lines.append("  ABLATION")
    lines.append("=" * 72)
    lines.append(f"  {'agg':<12} {'rot':<5} {'maps':<7} {'seed':>4} {'scene':>5}  {'pos [m]':>8}  {'rot [deg]':>9}  {'loss':>8}")
    for r in rows:
        lines.append(
            f"  {r['agg']:<12} {r['rot']:<5} {r['maps']:<7} {r['seed']:>4} {r['scene']:>5}  "
            f"{r['median_pos_m']:>8.3f}  {r['median_rot_deg']:>9.2f}  {r['final_loss']:>8.4f}"
        )
    lines.append("=" * 72)
    return "\n".join(lines)
