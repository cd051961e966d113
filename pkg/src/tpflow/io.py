"""File formats: curve CSV, form-matrix CSV with JSON sidecar, SVG renders."""

import csv
import json
import logging
from pathlib import Path

import numpy as np

from .curve import DiscreteCurve
from .errors import DimensionError
from .spectral import MIN_NODES
from .variation import FormMatrix

log = logging.getLogger(__name__)


def save_curve_csv(curve, path):
    """One node per row: x, g1..gn with a header row."""
    N, n = curve.nodes.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"] + [f"g{c + 1}" for c in range(n)])
        for i in range(N):
            w.writerow([repr(i / N)] + [repr(float(v)) for v in curve.nodes[i]])


def load_curve_csv(path, expected_nodes=None, expected_dim=None):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DimensionError(f"{path}: empty curve file")
    header, body = rows[0], rows[1:]
    if not header or header[0].strip() != "x" or len(header) < 3:
        raise DimensionError(f"{path}: header must be x, g1, ..., gn with n >= 2")
    n = len(header) - 1
    data = np.array([[float(v) for v in r] for r in body if r], dtype=float)
    if data.ndim != 2 or data.shape[1] != n + 1:
        raise DimensionError(f"{path}: every row needs {n + 1} columns")
    N = data.shape[0]
    if N < MIN_NODES:
        raise DimensionError(f"{path}: {N} nodes, need at least {MIN_NODES}")
    if not np.allclose(data[:, 0], np.arange(N) / N, atol=1e-12):
        raise DimensionError(f"{path}: x column must be the uniform grid i/N")
    if expected_nodes is not None and N != expected_nodes:
        raise DimensionError(f"{path}: {N} nodes, expected {expected_nodes}")
    if expected_dim is not None and n != expected_dim:
        raise DimensionError(f"{path}: dimension {n}, expected {expected_dim}")
    return DiscreteCurve(data[:, 1:])


def export_form_matrix(form, path):
    """Dense entries as CSV plus a JSON sidecar describing the form."""
    path = Path(path)
    np.savetxt(path, form.entries, delimiter=",", fmt="%.17g")
    side = {
        "kind": form.kind,
        "N": form.n_nodes,
        "n": form.ambient_dim,
        "s": form.s,
        "curve_hash": form.base_curve_id,
        "basis": form.basis,
        "shape": list(form.entries.shape),
    }
    side.update({k: v for k, v in form.meta.items() if isinstance(v, (int, float, str))})
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(side, indent=2))
    return sidecar


def load_form_matrix(path):
    path = Path(path)
    side = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    M = np.loadtxt(path, delimiter=",", ndmin=2)
    return FormMatrix(M, side["kind"], side["curve_hash"], side["s"], side["N"], side["n"], side.get("basis", "nodal"))


def render_svg(curve, path, size=400, margin=20, title=None):
    """Polyline of the first two coordinates, scaled to fit."""
    P = curve.nodes[:, :2]
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = max(float(np.max(hi - lo)), 1e-300)
    scale = (size - 2 * margin) / span
    Q = (P - lo) * scale + margin
    Q[:, 1] = size - Q[:, 1]
    pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in np.vstack([Q, Q[:1]]))
    label = f"<title>{title}</title>" if title else ""
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">{label}'
           f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>'
           f'<circle cx="{Q[0, 0]:.3f}" cy="{Q[0, 1]:.3f}" r="3" fill="red"/></svg>\n')
    Path(path).write_text(svg)
