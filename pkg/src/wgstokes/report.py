"""Run artifacts: CSV/Markdown rate tables, JSON summaries, figures, VTK.

The CSV and the Markdown table carry identical (identically formatted)
numbers: errors in scientific notation with 3 significant digits, observed
orders with one decimal, "-" where there is no coarser level.  The JSON
summary keeps full-precision values plus the configuration that produced
them, so CI can assert on rates without reparsing tables.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .verification import RateTable

CSV_HEADER = ("level,h,ndofs,err_l2,rate_l2,err_energy,rate_energy,"
              "err_pressure,rate_pressure")


def _fmt_err(x: float) -> str:
    return f"{x:.2e}"


def _fmt_rate(r: float | None) -> str:
    if r is None or not math.isfinite(r):
        return "-"
    return f"{r:.1f}"


def table_rows(table: RateTable) -> list[dict[str, str]]:
    """Formatted rows shared by the CSV and Markdown emitters."""
    rows = []
    rates = table.rates()
    for lvl, rate in zip(table.levels, rates):
        rep = lvl.report
        rr = (None, None, None) if rate is None else rate
        rows.append({
            "level": str(lvl.label),
            "h": f"{rep.h:.6e}",
            "ndofs": str(rep.n_dofs),
            "err_l2": _fmt_err(rep.err_l2),
            "rate_l2": _fmt_rate(rr[0]),
            "err_energy": _fmt_err(rep.err_energy),
            "rate_energy": _fmt_rate(rr[1]),
            "err_pressure": _fmt_err(rep.err_pressure),
            "rate_pressure": _fmt_rate(rr[2]),
        })
    return rows


def to_csv(table: RateTable) -> str:
    lines = [CSV_HEADER]
    for row in table_rows(table):
        lines.append(",".join(row[c] for c in CSV_HEADER.split(",")))
    return "\n".join(lines) + "\n"


def to_markdown(table: RateTable) -> str:
    header = ["level", "h", "ndofs", "u L2 err", "rate",
              "energy err", "rate", "pressure err", "rate"]
    body = [[row["level"], row["h"], row["ndofs"],
             row["err_l2"], row["rate_l2"],
             row["err_energy"], row["rate_energy"],
             row["err_pressure"], row["rate_pressure"]]
            for row in table_rows(table)]
    widths = [max(len(header[i]), *(len(r[i]) for r in body)) for i in range(len(header))]
    def fmt(cells):
        return "| " + " | ".join(c.rjust(w) for c, w in zip(cells, widths)) + " |"
    lines = [
        f"### {table.problem} on {table.family} meshes, order k = {table.k}",
        "",
        fmt(header),
        "|" + "|".join("-" * (w + 2) for w in widths) + "|",
    ]
    lines += [fmt(r) for r in body]
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[dict[str, str]]:
    """Reparse an emitted CSV (round-trip check helper)."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    cols = lines[0].split(",")
    return [dict(zip(cols, ln.split(","))) for ln in lines[1:]]


def summary_dict(table: RateTable) -> dict:
    rates = table.rates()
    levels = []
    for lvl, rate in zip(table.levels, rates):
        levels.append({
            "level": lvl.label,
            "n": lvl.n,
            "h": lvl.report.h,
            "ndofs": lvl.report.n_dofs,
            "err_l2": lvl.report.err_l2,
            "err_energy": lvl.report.err_energy,
            "err_pressure": lvl.report.err_pressure,
            "rate_l2": None if rate is None else rate[0],
            "rate_energy": None if rate is None else rate[1],
            "rate_pressure": None if rate is None else rate[2],
            "timings": lvl.timings,
        })
    return {"problem": table.problem, "family": table.family,
            "order": table.k, "levels": levels}


def write_summary_json(path, config: dict, tables=None, probes=None,
                       timings=None) -> None:
    payload = {"config": config}
    if tables:
        payload["tables"] = [summary_dict(t) for t in tables]
    if probes is not None:
        payload["probes"] = probes
    if timings is not None:
        payload["timings"] = timings
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def convergence_figure(table: RateTable, path) -> None:
    """Log-log error-vs-h plot with reference slopes, rendered to a file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    hs = np.array([lvl.report.h for lvl in table.levels])
    series = {
        "velocity L2": np.array([lvl.report.err_l2 for lvl in table.levels]),
        "energy": np.array([lvl.report.err_energy for lvl in table.levels]),
        "pressure": np.array([lvl.report.err_pressure for lvl in table.levels]),
    }
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for name, marker in zip(series, "os^"):
        ax.loglog(hs, series[name], marker=marker, label=name)
    if len(hs) > 1:
        for slope, style in ((table.k + 1, "--"), (table.k, ":")):
            ref = series["velocity L2"][0] * (hs / hs[0]) ** slope
            ax.loglog(hs, ref, style, color="gray", linewidth=0.8,
                      label=f"slope {slope}")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.set_title(f"{table.problem}, {table.family}, k={table.k}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def export_vtk(mesh, result, factory, path) -> None:
    """Legacy ASCII VTK unstructured grid with cell-averaged u and p."""
    n_cells = mesh.n_cells
    vel = np.zeros((n_cells, 2))
    prs = np.zeros(n_cells)
    for cid in range(n_cells):
        ops = factory(cid)
        w = ops.err_weights
        vel[cid] = (ops.interior_values_at_err(result.field.u0[cid]) @ w) / ops.area
        prs[cid] = float(ops.pressure_values_at_err(result.pressure[cid]) @ w) / ops.area
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("wgstokes cell data\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x} {y} 0.0\n")
        cell_size = sum(c.n_edges + 1 for c in mesh.cells)
        fh.write(f"CELLS {n_cells} {cell_size}\n")
        for cell in mesh.cells:
            fh.write(str(cell.n_edges) + " "
                     + " ".join(str(int(v)) for v in cell.vertex_ids) + "\n")
        fh.write(f"CELL_TYPES {n_cells}\n")
        fh.write("\n".join(["7"] * n_cells) + "\n")  # VTK_POLYGON
        fh.write(f"CELL_DATA {n_cells}\n")
        fh.write("VECTORS velocity double\n")
        for vx, vy in vel:
            fh.write(f"{vx} {vy} 0.0\n")
        fh.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
        for p in prs:
            fh.write(f"{p}\n")


def write_run_artifacts(out_dir, table: RateTable, config: dict,
                        probes=None, timings=None, plot: bool = True) -> dict:
    """Write rates.csv / rates.md / summary.json (+ figure); returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, "rates.csv"),
        "markdown": os.path.join(out_dir, "rates.md"),
        "json": os.path.join(out_dir, "summary.json"),
    }
    with open(paths["csv"], "w", encoding="utf-8") as fh:
        fh.write(to_csv(table))
    with open(paths["markdown"], "w", encoding="utf-8") as fh:
        fh.write(to_markdown(table))
    write_summary_json(paths["json"], config, tables=[table], probes=probes,
                       timings=timings)
    if plot:
        paths["figure"] = os.path.join(out_dir, "convergence.png")
        convergence_figure(table, paths["figure"])
    return paths
