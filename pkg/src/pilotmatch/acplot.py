"""Assignment-Control plot data export and a deterministic SVG renderer.

The AC plot scatters units in (propensity score, prognostic score) space,
controls in one color and treated in another, with dotted segments
joining each treated unit to its matched controls.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import Dataset, Matching


def emit_ac_data(dataset: Dataset, phi: np.ndarray, psi: np.ndarray, path,
                 matching: Matching | None = None,
                 pilot: np.ndarray | None = None) -> None:
    """Write per-unit AC coordinates with set membership and pilot flags."""
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if phi.shape != (dataset.n,) or psi.shape != (dataset.n,):
        raise ValueError("score vectors must have one entry per unit")
    set_id = [""] * dataset.n
    if matching is not None:
        for sid, s in enumerate(matching.sets, start=1):
            set_id[s.treated] = str(sid)
            for c in s.controls:
                set_id[c] = str(sid)
    pilot_flag = np.zeros(dataset.n, dtype=int)
    if pilot is not None:
        pilot_flag[np.asarray(pilot, dtype=int)] = 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit_id", "phi", "psi", "t", "set_id", "pilot_flag"])
        for i in range(dataset.n):
            w.writerow([i + 1, repr(float(phi[i])), repr(float(psi[i])),
                        int(dataset.T[i]), set_id[i], int(pilot_flag[i])])


@dataclass(frozen=True)
class PlotOptions:
    width: int = 800
    height: int = 600
    point_radius: float = 3.0
    control_color: str = "#3366cc"
    treated_color: str = "#cc3333"


def _read_ac_csv(path):
    units = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"unit_id", "phi", "psi", "t", "set_id", "pilot_flag"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: not an AC data file")
        for row in reader:
            units.append({
                "unit_id": int(row["unit_id"]),
                "phi": float(row["phi"]),
                "psi": float(row["psi"]),
                "t": int(row["t"]),
                "set_id": row["set_id"],
                "pilot": row["pilot_flag"] == "1",
            })
    return units


def render_svg(ac_csv_path, out_path, options: PlotOptions | None = None) -> None:
    """Render the AC scatter with dotted match segments as SVG 1.1.

    Output bytes are a pure function of the input CSV and options.
    """
    opt = options or PlotOptions()
    units = _read_ac_csv(ac_csv_path)
    if not units:
        raise ValueError("AC data file has no rows")
    xs = np.array([u["phi"] for u in units])
    ys = np.array([u["psi"] for u in units])
    x_lo, x_hi = xs.min(), xs.max()
    y_lo, y_hi = ys.min(), ys.max()
    x_pad = 0.05 * (x_hi - x_lo) or 1.0
    y_pad = 0.05 * (y_hi - y_lo) or 1.0
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    margin = 45
    w, h = opt.width, opt.height

    def sx(v):
        return margin + (v - x_lo) / (x_hi - x_lo) * (w - 2 * margin)

    def sy(v):
        return h - margin - (v - y_lo) / (y_hi - y_lo) * (h - 2 * margin)

    by_set: dict[str, dict] = {}
    for u in units:
        if u["set_id"]:
            entry = by_set.setdefault(u["set_id"], {"treated": None, "controls": []})
            if u["t"] == 1:
                entry["treated"] = u
            else:
                entry["controls"].append(u)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="0 0 {w} {h}" width="{w}" height="{h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<line x1="{margin}" y1="{h - margin}" x2="{w - margin}" '
        f'y2="{h - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{h - margin}" stroke="black"/>',
        f'<text x="{w // 2}" y="{h - 10}" text-anchor="middle" '
        f'font-size="14">phi (propensity score)</text>',
        f'<text x="15" y="{h // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 15 {h // 2})">psi (prognostic score)</text>',
    ]
    for sid in sorted(by_set, key=int):
        entry = by_set[sid]
        if entry["treated"] is None:
            continue
        t = entry["treated"]
        for c in entry["controls"]:
            lines.append(
                f'<line x1="{sx(t["phi"]):.3f}" y1="{sy(t["psi"]):.3f}" '
                f'x2="{sx(c["phi"]):.3f}" y2="{sy(c["psi"]):.3f}" '
                f'stroke="#555555" stroke-dasharray="3,3" stroke-width="1"/>'
            )
    for u in units:
        color = opt.treated_color if u["t"] == 1 else opt.control_color
        cls = "treated" if u["t"] == 1 else "control"
        lines.append(
            f'<circle class="{cls}" cx="{sx(u["phi"]):.3f}" '
            f'cy="{sy(u["psi"]):.3f}" r="{opt.point_radius}" fill="{color}" '
            f'fill-opacity="0.75"/>'
        )
    lines.append("</svg>")
    with open(out_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
