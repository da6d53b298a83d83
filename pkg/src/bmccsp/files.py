"""Readers and writers for draw files, summaries and benchmark tables.

All floats are written with ``repr`` (shortest round-trip form), so equal
numbers always produce equal bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .effects import EffectSummary
from .panel import PanelData
from .sampler import PosteriorDraws

DRAWS_CSV = "draws.csv"
DRAWS_BIN = "draws.bin"
DRAWS_SCHEMA = "draws.schema.json"


def fmt(x) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")


def write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def draw_columns(draws: PosteriorDraws, data: PanelData, atet: np.ndarray) -> tuple[list[str], np.ndarray]:
    rows, cols = data.treated_cells
    names = ["tau", "log_post", "atet"]
    blocks = [draws.tau_draws[:, None], draws.log_post[:, None], atet[:, None]]
    names += [f"beta_{k + 1}" for k in range(draws.beta_draws.shape[1])]
    blocks.append(draws.beta_draws)
    names += [f"y0[{data.unit_labels[j]}|{data.period_labels[t]}]" for j, t in zip(rows, cols)]
    blocks.append(draws.y_miss_draws)
    names += [f"eig_{k + 1}" for k in range(draws.gamma_eig_draws.shape[1])]
    blocks.append(draws.gamma_eig_draws)
    if draws.phi_row_draws is not None:
        n, J, H = draws.phi_row_draws.shape
        names += [f"phi[{data.unit_labels[j]}|{h + 1}]" for j in range(J) for h in range(H)]
        blocks.append(draws.phi_row_draws.reshape(n, J * H))
    return names, np.hstack(blocks)


def write_draws(outdir: Path, draws: PosteriorDraws, data: PanelData, atet: np.ndarray,
                binary: bool = False) -> None:
    """One row per retained draw; a sidecar JSON describes the columns."""
    names, table = draw_columns(draws, data, atet)
    schema = {
        "n_rows": int(table.shape[0]),
        "columns": ["draw"] + names,
        "description": {
            "draw": "index of the retained draw, from 0",
            "tau": "error precision",
            "log_post": "log joint density of the sampler state up to a constant",
            "atet": "per-draw average treatment effect on the treated",
            "beta_k": "coefficient of covariate k",
            "y0[unit|period]": "imputed untreated outcome at a treated cell",
            "eig_k": "k-th largest singular value of Gamma = Phi Psi^T",
            "phi[unit|h]": "loading of unit on column h (only with --keep-phi)",
        },
        "csv": DRAWS_CSV,
    }
    write_rows(outdir / DRAWS_CSV, ["draw"] + names,
               ([i] + [fmt(v) for v in row] for i, row in enumerate(table)))
    if binary:
        # column-major little-endian float64, the draw index column omitted
        np.asfortranarray(table).astype("<f8").T.tofile(outdir / DRAWS_BIN)
        schema["binary"] = {"file": DRAWS_BIN, "dtype": "<f8", "layout": "column-major",
                            "columns": names, "n_rows": int(table.shape[0])}
    write_json(outdir / DRAWS_SCHEMA, schema)


def read_draws_binary(outdir: Path) -> dict[str, np.ndarray]:
    schema = json.loads((outdir / DRAWS_SCHEMA).read_text())["binary"]
    flat = np.fromfile(outdir / schema["file"], dtype=schema["dtype"])
    table = flat.reshape(len(schema["columns"]), schema["n_rows"])
    return dict(zip(schema["columns"], table))


def per_period_header(levels) -> list[str]:
    h = ["period", "realized", "counterfactual_mean"]
    for lev in levels:
        pct = int(round(100 * lev))
        h += [f"low_{pct}", f"high_{pct}"]
    return h + ["n_treated"]


def write_per_period(path: Path, summary: EffectSummary, levels) -> None:
    rows = []
    for r in summary.per_period:
        row = [r.period, r.realized, r.counterfactual_mean]
        for lev in levels:
            row += list(r.bands[lev])
        rows.append(row + [r.n_treated])
    write_rows(path, per_period_header(levels), rows)


def read_per_period(path: Path) -> tuple[list[str], dict[str, np.ndarray]]:
    with open(path, encoding="utf-8") as f:
        rdr = csv.DictReader(f)
        recs = list(rdr)
        fields = rdr.fieldnames or []
    periods = [r["period"] for r in recs]
    cols = {k: np.array([float(r[k]) for r in recs]) for k in fields if k != "period"}
    return periods, cols


def write_benchmark(path: Path, rows: list[dict], columns: list[str]) -> None:
    write_rows(path, columns, ([r[c] for c in columns] for r in rows))
