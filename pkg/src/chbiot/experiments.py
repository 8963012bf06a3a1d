"""Shipped experiments: convergence study, named runs and the CHB-vs-CHL comparison."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import io
from .assembly import assemble_mass, assemble_stiffness
from .config import ExperimentConfig
from .fespace import interpolate_nodal, prolong, strain
from .material import MaterialParams
from .mesh import build_unit_square_mesh, mesh_hierarchy
from .scheme import RunError, SchemeConfig, State, Trajectory

log = logging.getLogger(__name__)


def scheme_config(cfg: ExperimentConfig, chl_mode=None) -> SchemeConfig:
    sc = cfg.scheme
    return SchemeConfig(tau=cfg.tau, T=cfg.T, newton_tol=sc["newton_tol"],
                        newton_max_iters=sc["newton_max_iters"], quad_points=sc["quad_points"],
                        degree=sc["degree"],
                        chl_mode=cfg.chl_mode if chl_mode is None else chl_mode)


def initial_state(mesh, phi0) -> State:
    nv = mesh.n_vertices
    return State(mesh, 0.0, interpolate_nodal(phi0, mesh), np.zeros((nv, 2)), np.zeros(nv))


def positive_components(mesh, phi) -> int:
    """Number of edge-connected components of cells whose mean phi is positive."""
    pos = np.asarray(phi)[mesh.cells].mean(axis=1) > 0
    nc = mesh.n_cells
    local = np.array([[0, 1], [1, 2], [2, 0]])
    e = np.sort(mesh.cells[:, local], axis=2).reshape(-1, 2)
    key = e[:, 0].astype(np.int64) * mesh.n_vertices + e[:, 1]
    owner = np.repeat(np.arange(nc), 3)
    order = np.argsort(key, kind="stable")
    shared = np.flatnonzero(key[order][1:] == key[order][:-1])
    a, b = owner[order][shared], owner[order][shared + 1]
    keep = pos[a] & pos[b]
    graph = sp.coo_matrix((np.ones(keep.sum()), (a[keep], b[keep])), shape=(nc, nc))
    _, labels = connected_components(graph, directed=False)
    return len(np.unique(labels[pos]))


def _snapshot_steps(cfg: ExperimentConfig, n_steps: int) -> set:
    steps = set()
    if cfg.snapshot_stride > 0:
        steps.update(range(0, n_steps + 1, cfg.snapshot_stride))
    for t in cfg.snapshot_times:
        steps.add(min(max(int(round(t / cfg.tau)), 0), n_steps))
    return steps


def _fields(state, aux):
    out = {"phi": state.phi, "theta": state.theta}
    if aux is not None:
        out.update(mu=aux.mu, p=aux.p)
    out["u"] = state.u
    return out


@dataclass
class ExperimentResult:
    summary: object
    output_dir: Path
    csv_path: Path
    snapshots: list = field(default_factory=list)
    components: list = field(default_factory=list)  # (t, number of positive-phi components)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and self.summary.structure_preserved


def run_named_experiment(cfg: ExperimentConfig, write=True, track_components_every=0,
                         level=None) -> ExperimentResult:
    """Run ``cfg`` writing a per-step CSV and VTK snapshots; partial output survives failures."""
    if level is not None:
        cfg = replace(cfg, level=level)
    mesh = build_unit_square_mesh(cfg.level)
    params = cfg.material_params()
    traj = Trajectory(initial_state(mesh, cfg.initial_phi()), params, scheme_config(cfg))
    outdir = cfg.output_path()
    csv_path = outdir / "timeseries.csv"
    snaps = _snapshot_steps(cfg, traj.n_steps)
    res = ExperimentResult(traj.summary, outdir, csv_path)
    sink = io.CsvSink(csv_path) if write else None
    if write:
        (outdir / "config.yaml").write_text(cfg.to_yaml())
    try:
        for k, (state, aux, rec) in enumerate(traj):
            if sink:
                sink(state, aux, rec)
            if write and k in snaps:
                path = outdir / f"snapshot_{k:06d}.vtk"
                io.write_vtk(mesh, _fields(state, aux), path, title=f"t={state.t:.6g}")
                res.snapshots.append((state.t, path))
            if track_components_every and k % track_components_every == 0:
                res.components.append((state.t, positive_components(mesh, state.phi)))
    except RunError as exc:
        res.error = str(exc)
        log.error("%s", exc)
    finally:
        if sink:
            sink.close()
    return res


@dataclass
class ChlComparison:
    times: list
    max_difference: list  # max nodal |phi_CHB - phi_CHL| per step
    snapshots: dict  # t -> nodal difference field
    chb: object
    chl: object
    output_dir: Path | None = None

    @property
    def max_over_time(self) -> float:
        return float(max(self.max_difference))

    @property
    def final_difference(self) -> float:
        return float(self.max_difference[-1])


def compare_chb_chl(cfg: ExperimentConfig, write=True, level=None) -> ChlComparison:
    """Run the CHB and CHL variants side by side from identical data."""
    if level is not None:
        cfg = replace(cfg, level=level)
    mesh = build_unit_square_mesh(cfg.level)
    params = cfg.material_params()
    init = initial_state(mesh, cfg.initial_phi())
    a = Trajectory(init, params, scheme_config(cfg, chl_mode=False))
    b = Trajectory(init.copy(), params, scheme_config(cfg, chl_mode=True))
    snaps = _snapshot_steps(cfg, a.n_steps)
    outdir = cfg.output_path() / "chb_vs_chl" if write else None
    times, diffs, fields = [], [], {}
    for k, ((sa, _, _), (sb, _, _)) in enumerate(zip(a, b)):
        d = np.abs(sa.phi - sb.phi)
        times.append(sa.t)
        diffs.append(float(d.max()))
        if k in snaps:
            fields[sa.t] = d
            if write:
                io.write_vtk(mesh, {"phi_difference": d, "phi_chb": sa.phi, "phi_chl": sb.phi},
                             outdir / f"difference_{k:06d}.vtk", title=f"t={sa.t:.6g}")
    if write:
        io.write_csv(a.summary.records, outdir / "chb.csv")
        io.write_csv(b.summary.records, outdir / "chl.csv")
        with (outdir / "difference.csv").open("w") as fh:
            fh.write("t,max_abs_phi_difference\n")
            for t, m in zip(times, diffs):
                fh.write("%.17g,%.17g\n" % (t, m))
    return ChlComparison(times, diffs, fields, a.summary, b.summary, outdir)


# --- convergence study -------------------------------------------------------

ERROR_KEYS = ("phi", "mu", "u", "theta", "p")


@dataclass
class ConvergenceReport:
    """Rows ``{"k", "e", "eoc", "phi", "eoc_phi", ...}``; eoc is log2(e_{k-1} / e_k)."""
    rows: list
    tau: float
    T: float
    structure_preserved: bool = True

    def column(self, key):
        return [r[key] for r in self.rows]

    def to_csv(self, path) -> Path:
        keys = ["k", "e", "eoc"] + [x for k in ERROR_KEYS for x in (k, f"eoc_{k}")]
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            fh.write(",".join("e_" + k if k in ERROR_KEYS else k for k in keys) + "\n")
            for r in self.rows:
                fh.write(",".join("" if r[k] is None else
                                  (str(r[k]) if k == "k" else "%.17g" % r[k]) for k in keys)
                         + "\n")
        return path

    def format_table(self) -> str:
        head = f"{'k':>2} {'e_h':>10} {'eoc':>6}" + "".join(
            f" {'e_' + k:>10} {'eoc':>6}" for k in ERROR_KEYS)
        lines = [head]
        for r in self.rows:
            def eoc(v):
                return f"{'--':>6}" if v is None else f"{v:6.2f}"
            line = f"{r['k']:>2} {r['e']:10.3e} {eoc(r['eoc'])}"
            line += "".join(f" {r[k]:10.3e} {eoc(r['eoc_' + k])}" for k in ERROR_KEYS)
            lines.append(line)
        return "\n".join(lines)


def squared_errors(coarse, coarse_aux, fine, fine_aux) -> dict:
    """Squared norms of (prolonged coarse - fine) on the fine mesh."""
    mesh = fine.mesh
    M = assemble_mass(mesh)
    K = assemble_stiffness(mesh)

    def l2(v):
        return float(v @ (M @ v))

    def h1(v):
        return l2(v) + float(v @ (K @ v))

    d_eps = strain(prolong(coarse.u, mesh), mesh) - strain(fine.u, mesh)
    frob = d_eps[:, 0] ** 2 + d_eps[:, 1] ** 2 + 0.5 * d_eps[:, 2] ** 2
    return {
        "phi": h1(prolong(coarse.phi, mesh) - fine.phi),
        "mu": h1(prolong(coarse_aux.mu, mesh) - fine_aux.mu),
        "u": float(mesh.areas @ frob),
        "theta": l2(prolong(coarse.theta, mesh) - fine.theta),
        "p": h1(prolong(coarse_aux.p, mesh) - fine_aux.p),
    }


def _eoc(prev, cur):
    if prev is None or cur <= 0 or prev <= 0:
        return None
    return math.log2(prev / cur)


def convergence_rows(errors_by_level: list) -> list:
    """Attach combined errors and eocs to ``[(k, {field: squared error}), ...]``."""
    rows, prev = [], None
    for k, errs in errors_by_level:
        row = {"k": k, "e": sum(errs[f] for f in ERROR_KEYS)}
        row["eoc"] = _eoc(prev and prev["e"], row["e"])
        for f in ERROR_KEYS:
            row[f] = errs[f]
            row["eoc_" + f] = _eoc(prev and prev[f], errs[f])
        rows.append(row)
        prev = row
    return rows


def run_convergence(levels, tau=1e-5, T=0.01, params: MaterialParams | None = None,
                    phi0=None, output_dir=None, scheme_overrides=None) -> ConvergenceReport:
    """Errors between consecutive nested levels; needs runs on ``levels`` plus one finer."""
    levels = list(levels)
    if levels != list(range(levels[0], levels[0] + len(levels))):
        raise ValueError(f"levels must be consecutive, got {levels}")
    params = params or MaterialParams()
    if phi0 is None:
        def phi0(x, y):
            return -0.1 + 0.01 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    config = SchemeConfig(tau=tau, T=T, **(scheme_overrides or {}))
    meshes = mesh_hierarchy(levels[0], levels[-1] + 1)
    finals, rows_in, ok = [], [], True
    for mesh in meshes:
        log.info("convergence run on level %d", mesh.level)
        traj = Trajectory(initial_state(mesh, phi0), params, config)
        try:
            for _ in traj:
                pass
        except RunError:
            report = ConvergenceReport(convergence_rows(rows_in), tau, T, False)
            if output_dir:
                report.to_csv(Path(output_dir) / "convergence.csv")
            raise
        finals.append((traj.summary.final, traj.summary.aux))
        ok = ok and traj.summary.structure_preserved
        if len(finals) >= 2:
            (c, ca), (f, fa) = finals[-2], finals[-1]
            rows_in.append((c.mesh.level, squared_errors(c, ca, f, fa)))
    report = ConvergenceReport(convergence_rows(rows_in), tau, T, ok)
    if output_dir:
        report.to_csv(Path(output_dir) / "convergence.csv")
    return report
