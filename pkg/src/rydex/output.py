"""Artifact writers: delimited tables, a structured report, optional SVG.

Data files are deterministic: fixed 17-significant-digit floats, sorted JSON
keys, and stable row order, so re-running with the same config and seeds
reproduces them byte for byte.  Plots are a pure view of the same content
and never feed back into the data files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

UNITS_NOTE = ("angular frequencies in rad/us; rates in 1/us; times in us; "
              "lengths in um")


def format_float(x: float) -> str:
    return "%.17g" % float(x)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format_float(x)
    return str(x)


def _seed_summary(report) -> str:
    seeds = []
    base = report.parameters.get("seed")
    if base is not None:
        seeds.append(f"base={base}")
    for name in sorted(report.ensembles):
        stats = report.ensembles[name]
        lo, hi = min(stats.seeds), max(stats.seeds)
        seeds.append(f"{name}: n={stats.count} seeds={lo}..{hi}")
    return "; ".join(seeds) if seeds else "none"


def _header(report, version: str) -> list[str]:
    return [
        f"# experiment: {report.experiment}",
        f"# code_version: {version}",
        f"# units: {UNITS_NOTE}",
        f"# seeds: {_seed_summary(report)}",
        f"# passed: {_cell(report.passed)}",
    ]


def write_series_table(report, path: Path, version: str) -> None:
    """Tidy long-format table of every one-dimensional series."""
    lines = _header(report, version)
    lines.append("series,index,value")
    for name, value in report.series.items():
        arr = np.asarray(value)
        if arr.ndim != 1 or arr.dtype.kind not in "fiu":
            continue
        for k, v in enumerate(arr):
            lines.append(f"{name},{k},{_cell(v)}")
    path.write_text("\n".join(lines) + "\n")


def write_matrix_tables(report, out_dir: Path, version: str) -> list[Path]:
    paths = []
    for name, value in report.series.items():
        arr = np.asarray(value)
        if arr.ndim != 2 or arr.dtype.kind not in "fiu":
            continue
        path = out_dir / f"{report.experiment}_{name}.csv"
        lines = _header(report, version)
        lines.append(f"# rows: {arr.shape[0]}, columns: {arr.shape[1]}")
        for row in arr:
            lines.append(",".join(_cell(v) for v in row))
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


def write_ensemble_table(report, path: Path, version: str) -> None:
    lines = _header(report, version)
    lines.append("ensemble,index,mean,std")
    for name in sorted(report.ensembles):
        stats = report.ensembles[name]
        mean = np.asarray(stats.mean).reshape(-1)
        std = np.asarray(stats.std).reshape(-1)
        for k in range(mean.size):
            lines.append(f"{name},{k},{_cell(mean[k])},{_cell(std[k])}")
    path.write_text("\n".join(lines) + "\n")


def write_report_json(report, path: Path, version: str) -> None:
    payload = report.to_dict()
    payload["code_version"] = version
    payload["units"] = UNITS_NOTE
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _time_axis(report):
    series = report.series
    for key in ("times", "high_times", "law_times", "dimer_times"):
        if key in series:
            return key, np.asarray(series[key])
    return None, None


def render_svg(report, path: Path) -> None:
    """Render a compact overview figure; requires matplotlib."""
    import matplotlib
    matplotlib.use("SVG", force=True)
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "rydex"
    t_key, t = _time_axis(report)
    curves = []
    if t is not None:
        for name, value in report.series.items():
            arr = np.asarray(value)
            if (name != t_key and arr.ndim == 1 and arr.dtype.kind == "f"
                    and arr.shape == t.shape):
                curves.append((name, arr))
    maps = [(n, np.asarray(v)) for n, v in report.series.items()
            if np.asarray(v).ndim == 2 and np.asarray(v).dtype.kind == "f"]

    n_panels = max(1, (1 if curves else 0) + (1 if maps else 0))
    fig, axes = plt.subplots(1, n_panels, figsize=(5.5 * n_panels, 4.0))
    axes = np.atleast_1d(axes)
    k = 0
    if curves:
        ax = axes[k]
        k += 1
        for name, arr in curves[:8]:
            ax.plot(t, arr, label=name, linewidth=1.2)
        ax.set_xlabel(f"{t_key} (us)")
        ax.legend(fontsize=6, loc="best")
        ax.set_title(report.experiment)
    if maps:
        ax = axes[k]
        name, arr = maps[0]
        im = ax.imshow(arr, aspect="auto", origin="lower",
                       interpolation="nearest")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_title(name, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_artifacts(report, out_dir: str | Path, *, version: str,
                    formats: tuple[str, ...] = ("csv", "json"),
                    plot: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = report.experiment
    paths: list[Path] = []
    if "csv" in formats:
        series_path = out / f"{stem}_series.csv"
        write_series_table(report, series_path, version)
        paths.append(series_path)
        paths.extend(write_matrix_tables(report, out, version))
        if report.ensembles:
            ens_path = out / f"{stem}_ensembles.csv"
            write_ensemble_table(report, ens_path, version)
            paths.append(ens_path)
    if "json" in formats:
        json_path = out / f"{stem}_report.json"
        write_report_json(report, json_path, version)
        paths.append(json_path)
    if plot:
        svg_path = out / f"{stem}.svg"
        render_svg(report, svg_path)
        paths.append(svg_path)
    return paths
