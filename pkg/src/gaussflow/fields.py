"""sphere-field v1 text format.

Layout:
    sphere-field v1 dim=<2|3> res=<N|NTxNP>
    # optional comment lines
    <value>          (one per line, node order, repr round-trip precision)
    ...
    key=value        (optional trailing metadata, e.g. checkpoint t=, dt=, step=)

Comment lines start with '#' and may appear anywhere after the header.
"""
from __future__ import annotations

import numpy as np

from .grid import GridError, ScalarField, SphereGrid, build_grid


class FieldFormatError(ValueError):
    pass


def _res_of(grid):
    return grid.res_label


def parse_res(dim, text):
    if dim == 2:
        return int(text)
    a, _, b = text.partition("x")
    return (int(a), int(b))


def write_field(path, field, comments=(), meta=None):
    """Write a ScalarField (or (grid, values)) to a sphere-field v1 file."""
    grid, values = (field.grid, field.values) if isinstance(field, ScalarField) \
        else (field[0], np.asarray(field[1]).ravel())
    lines = ["sphere-field v1 dim=%d res=%s" % (grid.dim, _res_of(grid))]
    for c in comments:
        lines.append("# " + c)
    lines.extend(repr(float(v)) for v in values)
    if meta:
        lines.extend("%s=%s" % (k, _fmt_meta(v)) for k, v in meta.items())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt_meta(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def read_field(path, grid=None):
    """Read a sphere-field v1 file.

    Returns (field: ScalarField, meta: dict of trailing key=value strings).
    If grid is given, the header must match it; otherwise a grid is built
    from the header.
    """
    with open(path) as fh:
        header = fh.readline().strip()
        parts = header.split()
        if parts[:2] != ["sphere-field", "v1"]:
            raise FieldFormatError("%s: bad header %r" % (path, header))
        kv = dict(p.split("=", 1) for p in parts[2:])
        try:
            dim = int(kv["dim"])
            res = parse_res(dim, kv["res"])
        except (KeyError, ValueError):
            raise FieldFormatError("%s: malformed header %r" % (path, header)) from None
        if grid is None:
            grid = build_grid(dim, res)
        else:
            if grid.dim != dim or parse_res(grid.dim, grid.res_label) != res:
                raise GridError("%s: field is dim=%d res=%s, grid wants dim=%d res=%s"
                                % (path, dim, kv["res"], grid.dim, grid.res_label))
        n = grid.nnodes
        values = np.empty(n)
        meta = {}
        count = 0
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if count < n:
                try:
                    values[count] = float(line)
                except ValueError:
                    raise FieldFormatError("%s:%d: expected a number, got %r"
                                           % (path, lineno, line)) from None
                count += 1
            else:
                key, sep, val = line.partition("=")
                if not sep:
                    raise FieldFormatError("%s:%d: unexpected trailing line %r"
                                           % (path, lineno, line))
                meta[key.strip()] = val.strip()
        if count != n:
            raise FieldFormatError("%s: expected %d values, found %d" % (path, n, count))
    return ScalarField(grid, values), meta
