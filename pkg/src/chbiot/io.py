"""CSV time series and legacy-VTK snapshot writers."""
from __future__ import annotations

from pathlib import Path

import numpy as np

CSV_HEADER = ("t,energy_total,energy_interface,energy_potential,energy_elastic,energy_fluid,"
              "dissipation,production,energy_residual,mass_phi,mass_theta,newton_iters")


def csv_row(rec) -> str:
    e = rec.energy
    vals = (rec.t, e.total, e.interface, e.potential, e.elastic, e.fluid, rec.dissipation,
            rec.production, rec.energy_residual, rec.mass_phi, rec.mass_theta)
    return ",".join("%.17g" % v for v in vals) + ",%d" % rec.newton_iters


def write_csv(records, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(csv_row(rec) + "\n")
    return path


class CsvSink:
    """Streams records to a CSV file as they arrive, so partial runs keep their output."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w")
        self._fh.write(CSV_HEADER + "\n")

    def __call__(self, state, aux, rec):
        self._fh.write(csv_row(rec) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def write_vtk(mesh, fields: dict, path, title="chbiot") -> Path:
    """Legacy ASCII unstructured grid; (nv,) arrays become SCALARS, (nv, 2) arrays VECTORS."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nv, nc = mesh.n_vertices, mesh.n_cells
    for name, arr in fields.items():
        if np.shape(arr)[0] != nv:
            raise ValueError(f"field {name!r} has {np.shape(arr)[0]} values, mesh has {nv} vertices")
    pts = np.column_stack([mesh.vertices, np.zeros(nv)])
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [" ".join("%.17g" % c for c in p) for p in pts]
    lines.append(f"CELLS {nc} {4 * nc}")
    lines += ["3 %d %d %d" % tuple(c) for c in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += ["5"] * nc
    lines.append(f"POINT_DATA {nv}")
    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 1:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += ["%.17g" % v for v in arr]
        else:
            vec = np.column_stack([arr.reshape(nv, -1), np.zeros((nv, 3 - arr.reshape(nv, -1).shape[1]))])
            lines.append(f"VECTORS {name} double")
            lines += [" ".join("%.17g" % c for c in v) for v in vec]
    path.write_text("\n".join(lines) + "\n")
    return path
