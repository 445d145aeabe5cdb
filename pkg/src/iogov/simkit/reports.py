"""Run reports: delimited tables, a machine-readable document, figures.

Everything written here is deterministic for a given metrics document:
keys are sorted, floats are formatted explicitly, and figures are
rendered without timestamps so byte-identical reruns stay byte
identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import BUCKET_LABELS

_FIG_DPI = 110


def emit_reports(doc: dict, outdir: Path, figures: bool = True) -> list[Path]:
    """Write summary.tsv, histogram.tsv, utilization.tsv, metrics.json."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [
        _write_summary(doc, outdir / "summary.tsv"),
        _write_histogram(doc, outdir / "histogram.tsv"),
        _write_utilization(doc, outdir / "utilization.tsv"),
        _write_json(doc, outdir / "metrics.json"),
    ]
    if figures:
        written.extend(render_figures(doc, outdir))
    return written


def _fmt(value: float, places: int = 3) -> str:
    return f"{value:.{places}f}"


def _write_summary(doc: dict, path: Path) -> Path:
    meta = doc["meta"]
    duration = max(meta["duration_s"] - meta.get("measure_from_s", 0), 0) or 1.0
    lines = [
        "entity\tpath\tops\tops_per_s\tmb_per_s\tread_count\tread_mean_ms\t"
        "read_std_ms\tqtime_mean_ms\tqtime_max_ms\tpromotions"
    ]
    for leaf, ent in sorted(doc["entities"].items()):
        lines.append(
            "\t".join(
                [
                    leaf,
                    ent["path"],
                    str(ent["ops"]),
                    _fmt(ent["ops"] / duration, 1),
                    _fmt(ent["bytes"] / duration / 1e6, 2),
                    str(ent["read_count"]),
                    _fmt(ent["read_mean_us"] / 1000.0),
                    _fmt(ent["read_std_us"] / 1000.0),
                    _fmt(ent["qtime_mean_us"] / 1000.0),
                    _fmt(ent["qtime_max_us"] / 1000.0),
                    str(ent["promotions"]),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_histogram(doc: dict, path: Path) -> Path:
    header = "entity\t" + "\t".join(BUCKET_LABELS) + "\ttotal"
    lines = [header]
    for leaf, ent in sorted(doc["entities"].items()):
        hist = ent["read_hist"]
        total = sum(hist)
        cells = [leaf]
        for count in hist:
            pct = 100.0 * count / total if total else 0.0
            cells.append(f"{count} ({_fmt(pct, 2)}%)")
        cells.append(str(total))
        lines.append("\t".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_utilization(doc: dict, path: Path) -> Path:
    lines = ["t_s\tentity\tutilization\teffective_budget\tthrottled\tcarry_pp"]
    for row in doc["utilization"]:
        lines.append(
            "\t".join(
                [
                    _fmt(row["t_s"], 1),
                    row["entity"],
                    _fmt(row["utilization"], 6),
                    _fmt(row["effective_budget"], 6),
                    "1" if row["throttled"] else "0",
                    _fmt(row["carry_pp"], 4),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_json(doc: dict, path: Path) -> Path:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return path


def render_figures(doc: dict, outdir: Path) -> list[Path]:
    """Latency histogram, throughput timeline, utilization timeline."""
    out = []
    entities = sorted(
        leaf for leaf, ent in doc["entities"].items() if ent["read_count"] > 0
    )
    if entities:
        fig, ax = plt.subplots(figsize=(8, 4.5))
        n = len(entities)
        width = 0.8 / n
        xs = range(len(BUCKET_LABELS))
        for i, leaf in enumerate(entities):
            ent = doc["entities"][leaf]
            total = sum(ent["read_hist"]) or 1
            pct = [100.0 * c / total for c in ent["read_hist"]]
            ax.bar([x + i * width for x in xs], pct, width=width, label=leaf)
        ax.set_xticks([x + 0.4 - width / 2 for x in xs])
        ax.set_xticklabels(BUCKET_LABELS, rotation=45, ha="right", fontsize=8)
        ax.set_ylabel("reads (%)")
        ax.set_title("read latency distribution")
        ax.legend(fontsize=7)
        ax.grid(axis="y", linestyle="--", alpha=0.4)
        fig.tight_layout()
        p = outdir / "latency_histogram.png"
        fig.savefig(p, dpi=_FIG_DPI, metadata={"Software": None})
        plt.close(fig)
        out.append(p)

    series: dict[str, tuple[list, list]] = {}
    for row in doc["intervals"]:
        xs_ys = series.setdefault(row["entity"], ([], []))
        xs_ys[0].append(row["t_s"])
        xs_ys[1].append(row["bytes"] / 1e6)
    if series:
        fig, ax = plt.subplots(figsize=(8, 4))
        for leaf in sorted(series):
            xs, ys = series[leaf]
            ax.plot(xs, ys, label=leaf, linewidth=1.2)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("MB/s")
        ax.set_title("per-entity throughput")
        ax.legend(fontsize=7)
        ax.grid(linestyle="--", alpha=0.4)
        fig.tight_layout()
        p = outdir / "throughput_timeline.png"
        fig.savefig(p, dpi=_FIG_DPI, metadata={"Software": None})
        plt.close(fig)
        out.append(p)

    useries: dict[str, tuple[list, list]] = {}
    for row in doc["utilization"]:
        xs_ys = useries.setdefault(row["entity"], ([], []))
        xs_ys[0].append(row["t_s"])
        xs_ys[1].append(100.0 * row["utilization"])
    if useries:
        fig, ax = plt.subplots(figsize=(8, 4))
        for node in sorted(useries):
            xs, ys = useries[node]
            ax.plot(xs, ys, label=node, linewidth=1.2)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("utilization (%)")
        ax.set_title("per-entity device utilization")
        ax.legend(fontsize=7)
        ax.grid(linestyle="--", alpha=0.4)
        fig.tight_layout()
        p = outdir / "utilization_timeline.png"
        fig.savefig(p, dpi=_FIG_DPI, metadata={"Software": None})
        plt.close(fig)
        out.append(p)
    return out


def compare_runs(dir_a: Path, dir_b: Path) -> str:
    """Throughput-ratio and degradation table across two run directories."""
    with open(Path(dir_a) / "metrics.json") as fh:
        a = json.load(fh)
    with open(Path(dir_b) / "metrics.json") as fh:
        b = json.load(fh)
    dur_a = a["meta"]["duration_s"] or 1.0
    dur_b = b["meta"]["duration_s"] or 1.0
    lines = [
        f"# compare: A={a['meta']['name']} ({a['meta']['scheduler']}) vs "
        f"B={b['meta']['name']} ({b['meta']['scheduler']})",
        "entity\tA_mb_s\tB_mb_s\tratio_A_over_B\tA_mean_ms\tB_mean_ms\tdelta_pct",
    ]
    shared = sorted(set(a["entities"]) & set(b["entities"]))
    for leaf in shared:
        ea, eb = a["entities"][leaf], b["entities"][leaf]
        tput_a = ea["bytes"] / dur_a / 1e6
        tput_b = eb["bytes"] / dur_b / 1e6
        ratio = tput_a / tput_b if tput_b else float("inf")
        lat_a = ea["read_mean_us"] / 1000.0
        lat_b = eb["read_mean_us"] / 1000.0
        delta = 100.0 * (lat_a - lat_b) / lat_b if lat_b else 0.0
        lines.append(
            f"{leaf}\t{tput_a:.2f}\t{tput_b:.2f}\t{ratio:.3f}\t"
            f"{lat_a:.3f}\t{lat_b:.3f}\t{delta:+.1f}"
        )
    return "\n".join(lines) + "\n"
