"""Legacy ASCII VTK output of triangulations with point and cell fields."""
import numpy as np

_VTK_TRIANGLE = 5


def _field_lines(name, values):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [f"{v:.17g}" for v in values]
    if values.shape[1] == 2:
        values = np.column_stack([values, np.zeros(len(values))])
    return [f"VECTORS {name} double"] + [" ".join(f"{c:.17g}" for c in row) for row in values]


def vtk_text(mesh, point_data=None, cell_data=None, title="stokes_roughbc"):
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.nv} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {mesh.nt} {4 * mesh.nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {mesh.nt}")
    lines += [str(_VTK_TRIANGLE)] * mesh.nt
    if point_data:
        lines.append(f"POINT_DATA {mesh.nv}")
        for name, v in point_data.items():
            lines += _field_lines(name, v)
    if cell_data:
        lines.append(f"CELL_DATA {mesh.nt}")
        for name, v in cell_data.items():
            lines += _field_lines(name, v)
    return "\n".join(lines) + "\n"


def write_vtk(path, mesh, point_data=None, cell_data=None):
    with open(path, "w") as fh:
        fh.write(vtk_text(mesh, point_data, cell_data))


def write_solution_vtk(path, sol, ind=None):
    """Vertex velocity and pressure as point data; eta_T (when given) as cell data."""
    point = {"velocity": sol.vertex_velocity(), "pressure": sol.p[:sol.mesh.nv]}
    cell = {"eta": ind.eta_T} if ind is not None else None
    write_vtk(path, sol.mesh, point, cell)
