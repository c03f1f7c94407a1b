"""On-disk formats: coefficient field files and viewer dumps.

Field files are plain text for bit-exact round-trips:

    PFFIELD v1 <elements_per_side> <degree> <domain_side>
    # config_hash=<hex>          (optional comment lines)
    <coefficient>                (one per line, %.17g)

Coefficients are listed in lexicographic row-major basis order
(A = ix * n1d + iy, ix outer).  Viewer dumps use the legacy ASCII
structured-points volume format on a uniform (4*elements+1)^2 point grid.
"""

import hashlib

import numpy as np

from .splines import Field, SplineSpace


def config_hash(text):
    """Provenance tag embedded in every output file."""
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()[:16]


def write_field(path, field, config_hash=None):
    space = field.space
    with open(path, "w") as fh:
        fh.write(f"PFFIELD v1 {space.elements_per_side} {space.degree} "
                 f"{space.domain_side!r}\n")
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        for c in field.coeffs:
            fh.write(f"{c:.17g}\n")


def read_field(path, space=None):
    """Load a field file; reuses `space` when it matches the header."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != "PFFIELD" or header[1] != "v1":
            raise ValueError(f"{path}: not a PFFIELD v1 file")
        elements, degree = int(header[2]), int(header[3])
        side = float(header[4])
        coeffs = []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            coeffs.append(float(line))
    if space is None or space.elements_per_side != elements \
            or abs(space.domain_side - side) > 1e-12 * side:
        space = SplineSpace(elements, side, degree=degree)
    coeffs = np.asarray(coeffs)
    if coeffs.size != space.n_f:
        raise ValueError(
            f"{path}: {coeffs.size} coefficients, expected {space.n_f}")
    return Field(space, coeffs)


def write_vtk(path, field, name="phi", config_hash=None, factor=4):
    """Legacy ASCII structured-points dump sampled on a uniform grid."""
    space = field.space
    n = factor * space.elements_per_side + 1
    grid = np.linspace(0.0, space.domain_side, n)
    vals = space.evaluate_grid(field.coeffs, grid, grid)
    spacing = space.domain_side / (n - 1)
    title = f"phaserec field dump"
    if config_hash is not None:
        title += f" config_hash={config_hash}"
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {n} {n} 1\n")
        fh.write("ORIGIN 0 0 0\n")
        fh.write(f"SPACING {spacing!r} {spacing!r} 1\n")
        fh.write(f"POINT_DATA {n * n}\n")
        fh.write(f"SCALARS {name} float 1\nLOOKUP_TABLE default\n")
        # VTK structured points vary x fastest
        for j in range(n):
            for i in range(n):
                fh.write(f"{vals[i, j]:.9g}\n")
