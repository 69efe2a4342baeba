"""Legacy ASCII VTK output for unstructured 2D meshes."""

import numpy as np

_CELL_TYPE = {"triangle": 5, "quad": 9}


def _fmt(x):
    return format(float(x), ".17g")


def write_vtk(path, mesh, point_scalars=None, point_vectors=None, cell_scalars=None, cell_vectors=None, title="tdnn"):
    """Write a legacy ``UNSTRUCTURED_GRID``.

    Each data argument is a dict name -> array; vectors are (N, 2) and get
    a zero z component.
    """
    el = mesh.elements
    nloc = el.shape[1]
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    out += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes]
    out.append(f"CELLS {len(el)} {len(el) * (nloc + 1)}")
    out += [" ".join([str(nloc), *map(str, row)]) for row in el]
    out.append(f"CELL_TYPES {len(el)}")
    out += [str(_CELL_TYPE[mesh.element_kind])] * len(el)

    def block(kind, count, scalars, vectors):
        scalars, vectors = scalars or {}, vectors or {}
        if not scalars and not vectors:
            return
        out.append(f"{kind} {count}")
        for name, vals in scalars.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != (count,):
                raise ValueError(f"{name} has shape {vals.shape}, expected ({count},)")
            out.extend([f"SCALARS {name} double 1", "LOOKUP_TABLE default"])
            out.extend(_fmt(v) for v in vals)
        for name, vals in vectors.items():
            vals = np.asarray(vals, dtype=float)
            if vals.shape != (count, 2):
                raise ValueError(f"{name} has shape {vals.shape}, expected ({count}, 2)")
            out.append(f"VECTORS {name} double")
            out.extend(f"{_fmt(a)} {_fmt(b)} 0" for a, b in vals)

    block("POINT_DATA", mesh.n_nodes, point_scalars, point_vectors)
    block("CELL_DATA", len(el), cell_scalars, cell_vectors)
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def rt0_centroid_flux(mesh, edges, v):
    """RT0 flux field evaluated at element centroids, (M, 2)."""
    coords = mesh.nodes[mesh.elements]
    area = mesh.areas
    cen = coords.mean(axis=1)
    dof = edges.signs * np.asarray(v, dtype=float)[edges.edge_of_element]  # (M, 3)
    rel = cen[:, None, :] - coords  # x - p_i
    return np.einsum("ma,mai->mi", dof, rel) / (2.0 * area)[:, None]
