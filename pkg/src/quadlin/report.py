"""Human-readable candidate tables and portrait bundles."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .detector import CandidateVerdict, Detection


def _num(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return "?"
    return f"{x:.6g}"


def _vec(v) -> str:
    return "[" + ", ".join(_num(float(x)) for x in v) + "]"


def _row(v: CandidateVerdict, n: int) -> list[str]:
    cells = [v.label, _num(v.lam)]
    prop = v.proportionality
    if prop is None:
        cells += ["-"] * n
    else:
        for i in range(n):
            verdict = prop.verdicts[i]
            if verdict == "ratio":
                cells.append(f"w{i + 1}={_num(prop.w[i])}")
            elif verdict == "undetermined":
                cells.append(f"w{i + 1}=free")
            else:
                cells.append("x")
    col = v.column
    if col is None:
        cells += ["-"] * n
    else:
        failed = set(col.failures)
        cells += [f"{_vec(col.rhs[i])} {'x' if i in failed else 'ok'}" for i in range(n)]
    extra = v.stage
    if v.coefficients is not None:
        extra += " coeffs=" + _vec(v.coefficients)
    if v.note:
        extra += f" ({v.note})"
    return cells + [extra]


def candidate_table(detection: Detection) -> str:
    """Plain-text table of proportionality and column verdicts per candidate."""
    n = detection.system.n
    header = (["candidate", "lambda"] + [f"prop {i + 1}" for i in range(n)]
              + [f"column {i + 1}" for i in range(n)] + ["verdict"])
    rows = [header] + [_row(v, n) for v in detection.verdicts]
    widths = [max(len(r[k]) for r in rows) for k in range(len(header))]
    lines = ["  ".join(cell.ljust(wd) for cell, wd in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    cols = np.array([detection.system.A[i][:, i] for i in range(n)])
    lines.append("")
    lines.append("kernel columns a_i: " + "  ".join(_vec(c) for c in cols))
    lines.append(f"route: {detection.analysis.route}; reductions found: {len(detection.reductions)}")
    for note in detection.analysis.notes + detection.diagnostics:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def surface_lines(B, box, samples: int = 101) -> list[np.ndarray]:
    """Points on the lines through the origin where ``x^T B x = 0`` (2-D).

    Each returned array holds ``samples`` points clipped to ``box``.
    """
    B = np.asarray(B, dtype=float)
    lo, hi = box
    mu, Q = np.linalg.eigh(B)
    scale = np.max(np.abs(mu))
    directions = []
    if abs(mu[0]) <= 1e-12 * scale or abs(mu[1]) <= 1e-12 * scale:
        k = 0 if abs(mu[0]) <= abs(mu[1]) else 1
        directions.append(Q[:, k])
    elif mu[0] * mu[1] < 0:
        a, b = np.sqrt(abs(mu[1])), np.sqrt(abs(mu[0]))
        for sign in (1.0, -1.0):
            d = Q @ np.array([a, sign * b])
            directions.append(d / np.linalg.norm(d))
    reach = np.sqrt(2.0) * max(abs(lo), abs(hi))
    s = np.linspace(-reach, reach, samples)
    lines = []
    for d in directions:
        pts = s[:, None] * d[None, :]
        inside = np.all((pts >= lo - 1e-12) & (pts <= hi + 1e-12), axis=1)
        lines.append(pts[inside])
    return lines
