"""Diagnostic experiments: energy-wall scans, the sliding block and the annulus sweeps.

Every experiment returns a :class:`Table` whose CSV form is byte-stable:
floats are written with ``repr`` and no timing data enters the file.
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .contact.barrier import BarrierParams, barrier_derivatives
from .contact.formulation import ContactFormulation, Kind, contact_energy
from .contact.imls import ImlsParams
from .elasticity import DeformableBody, Material, Obstacle, Scene
from .errors import SolverError
from .geometry import Polyline, box_mesh, line_polyline
from .inverse import Annulus, DesignProblem, solve_inverse
from .simulation import centroid, implicit_euler_step


def format_float(v):
    v = float(v)
    return "nan" if np.isnan(v) else repr(v)


@dataclass
class Table:
    """Column-oriented result with units and header metadata."""

    columns: list
    units: list
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, len(self.columns))

    def column(self, name):
        return self.data[:, self.columns.index(name)]

    def to_csv(self):
        buf = io.StringIO()
        schema = ",".join(f"{c}[{u}]" for c, u in zip(self.columns, self.units))
        buf.write(f"# schema: {schema}\n")
        for key in sorted(self.meta):
            buf.write(f"# {key}: {self.meta[key]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.data:
            w.writerow([format_float(v) for v in row])
        return buf.getvalue()


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# -- energy walls -------------------------------------------------------------

def energy_wall_scan(poly, height, formulation, n_samples, x_range=None):
    """Slide one probe at constant height over a flat polyline.

    Parameters
    ----------
    poly : Polyline
        Flat line (normals facing +y).
    height : float
        Vertical offset of the probe above the line, ``0 < height < d_hat``.
    x_range : (float, float), optional
        Scan interval; defaults to the middle half of the polyline.

    Returns
    -------
    Table with columns ``x, energy, f_t, f_n`` where the forces are minus the
    horizontal and vertical energy derivatives at the probe.
    """
    if not 0.0 < height < formulation.barrier.d_hat:
        raise ValueError("scan height must lie in (0, d_hat)")
    v = poly.vertices
    y0 = float(v[0, 1])
    if x_range is None:
        lo, hi = float(v[:, 0].min()), float(v[:, 0].max())
        x_range = (lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo))
    xs = np.linspace(x_range[0], x_range[1], n_samples)
    rows = np.empty((n_samples, 4))
    for i, x in enumerate(xs):
        e = contact_energy([[x, y0 + height]], poly, formulation, order=1)
        rows[i] = (x, e.value, -e.gradient[0], -e.gradient[1])
    return Table(["x", "energy", "f_t", "f_n"], ["m", "J", "N", "N"], rows,
                 {"formulation": formulation.kind.value, "height": format_float(height),
                  "d_hat": format_float(formulation.barrier.d_hat)})


def local_maxima(values):
    """Indices of strict interior local maxima (plateaus count once, at their center)."""
    idx = []
    n = len(values)
    i = 1
    while i < n - 1:
        j = i
        while j + 1 < n - 1 and values[j + 1] == values[i]:
            j += 1
        if values[i] > values[i - 1] and values[j] > values[j + 1]:
            idx.append((i + j) // 2)
        i = j + 1
    return np.array(idx, dtype=int)


def wall_metrics(table, vertex_x):
    """Summary numbers for a scan table.

    ``peak_offset`` is the largest distance from an energy local maximum to
    the nearest polyline vertex abscissa.
    """
    x, e = table.column("x"), table.column("energy")
    ft, fn = table.column("f_t"), table.column("f_n")
    peaks = local_maxima(e)
    vertex_x = np.asarray(vertex_x)
    inside = vertex_x[(vertex_x > x[0]) & (vertex_x < x[-1])]
    offset = (max(np.min(np.abs(inside - x[p])) for p in peaks)
              if len(peaks) and len(inside) else float("inf"))
    work = -trapezoid(ft, x)  # integral of dE/dx
    delta = e[-1] - e[0]
    scale = max(np.max(np.abs(e)), np.finfo(float).tiny)
    return {
        "energy_ratio": float(e.max() / e.min()) if e.min() > 0 else float("inf"),
        "n_peaks": int(len(peaks)),
        "n_vertices": int(len(inside)),
        "peak_offset": float(offset),
        "tangential_ratio": float(np.max(np.abs(ft)) / np.mean(np.abs(fn))),
        "work_error": float(abs(work - delta) / scale),
    }


def nts_wedge_scan(distance, formulation, n_samples, half_width=0.2, slope=1.0):
    """NTS energy along the constant-distance path over a concave corner.

    The polyline is the valley ``(-1, slope), (0, 0), (1, slope)`` with normals
    facing up. The probe follows the two lines parallel to the segments at
    ``distance``, which meet on the bisector above the vertex. The energy is
    then constant while the horizontal force flips sign on the bisector.
    """
    poly = Polyline(np.array([[-1.0, slope], [0.0, 0.0], [1.0, slope]]), closed=False)
    c = np.sqrt(1.0 + slope**2)
    xs = np.linspace(-half_width, half_width, n_samples)
    rows = np.empty((n_samples, 4))
    for i, x in enumerate(xs):
        y = slope * abs(x) + distance * c
        e = contact_energy([[x, y]], poly, formulation, order=1)
        rows[i] = (x, e.value, -e.gradient[0], -e.gradient[1])
    return Table(["x", "energy", "f_t", "f_n"], ["m", "J", "N", "N"], rows,
                 {"formulation": formulation.kind.value, "distance": format_float(distance)})


# -- sliding block -------------------------------------------------------------

@dataclass
class SlidingBlock:
    """Soft square pushed across a frictionless floor.

    The block is tested for contact against the floor only (one-way). The
    barrier stiffness defaults to the value that carries the block's weight
    at gap ``d_hat / 2`` on its bottom vertices.
    """

    size: float = 0.2
    cells: int = 2
    start_x: float = 0.75
    floor_length: float = 10.0
    floor_segments: int = 10
    d_hat: float = 0.02
    kappa: float | None = None
    support_radius: float = 1.5
    gravity: float = 9.81
    h: float = 0.05
    material: Material = field(default_factory=Material)

    def __post_init__(self):
        mesh = box_mesh(self.size, self.size, self.cells, self.cells,
                        origin=(self.start_x, 0.5 * self.d_hat))
        self.body = DeformableBody(mesh, self.material, name="block")
        floor = line_polyline(0.0, self.floor_length, self.floor_segments)
        self.scene = Scene([self.body], [Obstacle(floor, name="floor")],
                           contact_pairs=[("block", "floor")])
        self.mass = float(self.scene.mass[0::2].sum())
        if self.kappa is None:
            weight = self.mass * self.gravity
            self.kappa = weight / ((self.cells + 1)
                                   * abs(barrier_derivatives(0.5 * self.d_hat, self.d_hat)[1]))

    @property
    def floor_vertex_x(self):
        return self.scene.obstacles[0].polyline.vertices[:, 0]

    def formulation(self, kind):
        return ContactFormulation(Kind.parse(kind), BarrierParams(self.d_hat, self.kappa),
                                  ImlsParams(self.support_radius))

    def forces(self, lateral_force):
        """Gravity plus a lateral force spread in proportion to vertex mass."""
        f = self.scene.gravity_force((0.0, -self.gravity))
        sl = self.scene.body_slice("block")
        m = self.scene.mass[sl][0::2]
        f[sl][0::2] += lateral_force * m / m.sum()
        return f

    def free_slide(self, lateral_force, t):
        """Frictionless rigid-body displacement ``F t^2 / (2 m)``."""
        return 0.5 * lateral_force / self.mass * t**2


@dataclass
class SlideResult:
    table: Table
    iterations: list
    setup: SlidingBlock
    lateral_force: float
    failure: str | None = None

    @property
    def displacement(self):
        return self.table.column("dx")

    def halt_ratio(self):
        """Displacement over the last half of the run relative to the first half."""
        d = self.displacement
        mid = (len(d) - 1) // 2
        first = abs(d[mid] - d[0])
        return abs(d[-1] - d[mid]) / first if first > 0 else float("inf")

    def free_slide_error(self):
        t = self.table.column("t")[-1]
        ref = self.setup.free_slide(self.lateral_force, t)
        return abs(self.displacement[-1] - ref) / abs(ref) if ref else float("inf")


def sliding_block(formulation, lateral_force, steps, setup=None, config=None, stream=None):
    """Time-step the block and record its mass centroid.

    ``formulation`` is a :class:`ContactFormulation` or a kind name, in which
    case the setup's default parameters are used. A solver failure ends the
    run early; the step is reported in ``failure``.
    """
    setup = setup or SlidingBlock()
    if not isinstance(formulation, ContactFormulation):
        formulation = setup.formulation(formulation)
    scene = setup.scene
    f = setup.forces(lateral_force)
    state = scene.initial_state()
    c0 = centroid(scene, state, "block")
    rows = [(0.0, 0.0, 0.0, c0[1])]
    iterations = []
    failure = None
    for k in range(steps):
        try:
            state, stats = implicit_euler_step(
                scene, state, setup.h, f, formulation, config,
                None if stream is None else _StepStream(stream, k))
        except SolverError as exc:
            failure = f"step {k}: {exc}"
            break
        iterations.append(stats.iterations)
        c = centroid(scene, state, "block")
        rows.append((state.time, c[0] - c0[0], c[1] - c0[1], c[1]))
    meta = {"formulation": formulation.kind.value, "kappa": format_float(setup.kappa),
            "lateral_force": format_float(lateral_force), "mass": format_float(setup.mass),
            "h": format_float(setup.h), "d_hat": format_float(setup.d_hat),
            "resting_gap": format_float(0.5 * setup.d_hat)}
    table = Table(["t", "dx", "dy", "y"], ["s", "m", "m", "m"], rows, meta)
    return SlideResult(table, iterations, setup, lateral_force, failure)


class _StepStream:
    """Prefixes solver CSV rows with a step index."""

    def __init__(self, stream, step):
        self.stream, self.step = stream, step

    def write(self, text):
        self.stream.write(f"{self.step},{text}")


# -- annulus -------------------------------------------------------------------

@dataclass
class ForwardResult:
    table: Table
    failures: list

    @property
    def errors(self):
        return self.table.column("error")

    def max_error(self):
        e = np.abs(self.errors)
        return float(np.nanmax(e)) if np.any(np.isfinite(e)) else float("nan")


def annulus_forward(formulation, thetas, annulus=None, config=None, stream=None):
    """Equilibrium angle of A for each scheduled ``theta_B`` (warm-started sweep).

    A failed sample is recorded as NaN and the sweep continues from the last
    good state.
    """
    model = annulus or Annulus()
    if not isinstance(formulation, ContactFormulation):
        formulation = model.formulation(formulation)
    x = None
    rows, failures = [], []
    for th in thetas:
        try:
            x_new, stats = model.equilibrium(
                th, formulation, x0=x, config=config,
                stream=None if stream is None else _StepStream(stream, len(rows)))
        except SolverError as exc:
            failures.append((float(th), str(exc)))
            rows.append((th, np.nan, np.nan, np.nan))
            continue
        x = x_new
        ta = Annulus.angle(x)
        rows.append((th, ta, ta - th, stats.iterations))
    meta = {"formulation": formulation.kind.value, "r1": format_float(model.r1),
            "r2": format_float(model.r2), "kappa": format_float(model.kappa),
            "d_hat": format_float(model.d_hat),
            "segments_per_quarter": str(model.segments_per_quarter)}
    table = Table(["theta_B", "theta_A", "error", "iterations"], ["rad", "rad", "rad", "-"],
                  rows, meta)
    return ForwardResult(table, failures)


def annulus_inverse(formulation, problem, annulus=None):
    """Run the design descent and tabulate the objective trajectory."""
    model = annulus or Annulus(problem.r1, problem.r2, problem.spring_stiffness)
    if not isinstance(formulation, ContactFormulation):
        formulation = model.formulation(formulation)
    result = solve_inverse(problem, formulation, model)
    rows = [(k, th, o) for k, (th, o) in enumerate(zip(result.thetas, result.objectives))]
    meta = {"formulation": formulation.kind.value,
            "target_theta_A": format_float(problem.target_theta_A),
            "converged": str(result.converged).lower()}
    return result, Table(["step", "theta_B", "objective"], ["-", "rad", "m^2"], rows, meta)


__all__ = [
    "Table", "write_atomic", "energy_wall_scan", "wall_metrics", "local_maxima",
    "nts_wedge_scan", "SlidingBlock", "SlideResult", "sliding_block", "ForwardResult",
    "annulus_forward", "annulus_inverse", "DesignProblem",
]
