"""Render static figures from result CSVs.

No computation happens here beyond reading and drawing: every plotted value
comes straight from a CSV column. ``render`` returns the plotted series so
callers (and tests) can confirm the round trip.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("entropy_vs_t", "entropy_vs_u", "width_vs_d", "distortion_bars")

REQUIRED_COLUMNS = {
    "entropy_vs_t": ("t", "H", "H_stderr"),
    "entropy_vs_u": ("u", "H", "H_stderr"),
    "width_vs_d": ("d", "width_t"),
    "distortion_bars": ("t", "delta"),
}


class SchemaError(ValueError):
    """CSV does not match the expected schema for the figure kind."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple
    output: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")
        object.__setattr__(self, "inputs", tuple(self.inputs))


def read_result_csv(path: str) -> tuple[dict, dict]:
    """Parse a result CSV into (columns, comments).

    Comment lines are '# key=value' metadata written by the producer; columns
    are numpy float arrays keyed by header name.
    """
    comments = {}
    data_lines = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("#"):
                    body = line.lstrip("#").strip()
                    if "=" in body:
                        key, val = body.split("=", 1)
                        comments[key.strip()] = val.strip()
                elif line:
                    data_lines.append(line)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not data_lines:
        raise SchemaError(f"{path}: no header row found")
    reader = csv.reader(io.StringIO("\n".join(data_lines)))
    header = next(reader)
    rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: header {header} but no data rows")
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) for r in rows])
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{path}: column {name!r} is not numeric: {exc}") from exc
    return cols, comments


def _check_schema(kind: str, path: str, cols: dict):
    missing = [c for c in REQUIRED_COLUMNS[kind] if c not in cols]
    if missing:
        raise SchemaError(
            f"{path}: missing columns {missing} for kind {kind!r} "
            f"(found {sorted(cols)})"
        )


def _label(comments: dict, path: str) -> str:
    if "d" in comments:
        return f"d={comments['d']}"
    return path.rsplit("/", 1)[-1]


def _save(fig, output: str):
    # strip the Software chunk so identical inputs give identical PNG bytes
    fig.savefig(output, dpi=150, metadata={"Software": None})
    plt.close(fig)


def _entropy_curves(spec: FigureSpec, xcol: str):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    plotted = []
    seen = set()
    for path in spec.inputs:
        cols, comments = read_result_csv(path)
        _check_schema(spec.kind, path, cols)
        x, h, se = cols[xcol], cols["H"], cols["H_stderr"]
        order = np.argsort(x)
        x, h, se = x[order], h[order], se[order]
        label = _label(comments, path)
        if label in seen:
            label = f"{label} ({path.rsplit('/', 1)[-1]})"
        seen.add(label)
        ax.plot(x, h, lw=1.5, label=label)
        ax.fill_between(x, h - 2 * se, h + 2 * se, alpha=0.2)
        plotted.append({"label": label, "x": x, "y": h})
    if spec.kind == "entropy_vs_u":
        ax.axvline(1.0, color="k", ls=":", lw=1.0)
        ax.set_xlabel("u = t / t_s")
    else:
        ax.set_xlabel("t")
    ax.axhline(np.log(2.0), color="gray", ls="--", lw=0.8)
    ax.set_ylabel("H [nats]")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    _save(fig, spec.output)
    return plotted


def _width_vs_d(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(4.4, 3.4))
    plotted = []
    for path in spec.inputs:
        cols, comments = read_result_csv(path)
        _check_schema(spec.kind, path, cols)
        d, w = cols["d"], cols["width_t"]
        order = np.argsort(d)
        d, w = d[order], w[order]
        label = _label(comments, path)
        if "kind" in comments:
            label = comments["kind"]
        ax.loglog(d, w, "o-", label=label)
        plotted.append({"label": label, "x": d, "y": w})
        # sqrt(d) reference anchored at the first point
        ref = w[0] * np.sqrt(d / d[0])
        ax.loglog(d, ref, "k--", lw=0.8, alpha=0.6)
    ax.set_xlabel("d")
    ax.set_ylabel("transition width in t")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    _save(fig, spec.output)
    return plotted


def _distortion_bars(spec: FigureSpec):
    if len(spec.inputs) != 1:
        raise SchemaError("distortion_bars takes exactly one input CSV")
    path = spec.inputs[0]
    cols, _ = read_result_csv(path)
    _check_schema(spec.kind, path, cols)
    t, delta = cols["t"], cols["delta"]
    order = np.argsort(t)
    t, delta = t[order], delta[order]
    fig, ax = plt.subplots(figsize=(5.0, 3.0))
    width = np.min(np.diff(t)) * 0.9 if len(t) > 1 else 0.1
    colors = np.where(delta >= 0, "tab:green", "tab:red")
    ax.bar(t, delta, width=width, color=colors)
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("guided minus base production")
    fig.tight_layout()
    _save(fig, spec.output)
    return [{"label": path.rsplit("/", 1)[-1], "x": t, "y": delta}]


def render(spec: FigureSpec) -> list[dict]:
    """Write the figure and return the plotted series ({label, x, y} dicts)."""
    if spec.kind == "entropy_vs_t":
        return _entropy_curves(spec, "t")
    if spec.kind == "entropy_vs_u":
        return _entropy_curves(spec, "u")
    if spec.kind == "width_vs_d":
        return _width_vs_d(spec)
    return _distortion_bars(spec)
