"""On-disk field format: header, values, metadata, and error reporting."""
import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

import gaussflow as gf
from gaussflow.fields import FieldFormatError


def test_roundtrip_circle(tmp_path):
    g = gf.build_grid(2, 64)
    values = np.exp(np.sin(g.theta)) / 3.0
    path = tmp_path / "h.field"
    gf.write_field(path, gf.ScalarField(g, values),
                   comments=("support function",),
                   meta={"t": repr(0.1), "step": "7"})
    field, meta = gf.read_field(path)
    assert field.grid.dim == 2 and field.grid.nnodes == 64
    assert_array_equal(field.values, values)
    assert meta == {"t": "0.1", "step": "7"}


def test_roundtrip_sphere(tmp_path):
    g = gf.build_grid(3, (16, 32))
    values = 1.0 + 0.1 * g.nodes[:, 2]
    path = tmp_path / "h.field"
    gf.write_field(path, (g, values))
    field, meta = gf.read_field(path, grid=g)
    assert_array_equal(field.values, values)
    assert meta == {}
    header = path.read_text().splitlines()[0]
    assert header == "sphere-field v1 dim=3 res=16x32"


def test_values_survive_repr_precision(tmp_path):
    g = gf.build_grid(2, 16)
    rng = np.random.default_rng(7)
    values = rng.uniform(0.5, 2.0, 16)
    path = tmp_path / "h.field"
    gf.write_field(path, (g, values))
    back, _ = gf.read_field(path)
    assert_array_equal(back.values, values)


def test_bad_header(tmp_path):
    path = tmp_path / "h.field"
    path.write_text("sphere-field v2 dim=2 res=16\n" + "1.0\n" * 16)
    with pytest.raises(FieldFormatError):
        gf.read_field(path)


def test_bad_value_reports_line(tmp_path):
    path = tmp_path / "h.field"
    lines = ["sphere-field v1 dim=2 res=4", "1.0", "oops", "1.0", "1.0"]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FieldFormatError, match=r":3: expected a number"):
        gf.read_field(path)


def test_wrong_count(tmp_path):
    path = tmp_path / "h.field"
    path.write_text("sphere-field v1 dim=2 res=8\n" + "1.0\n" * 5)
    with pytest.raises(FieldFormatError):
        gf.read_field(path)


def test_meta_requires_key_value(tmp_path):
    path = tmp_path / "h.field"
    path.write_text("sphere-field v1 dim=2 res=4\n" + "1.0\n" * 4
                    + "justtext\n")
    with pytest.raises(FieldFormatError):
        gf.read_field(path)


def test_grid_mismatch(tmp_path):
    g = gf.build_grid(2, 16)
    path = tmp_path / "h.field"
    gf.write_field(path, (g, np.ones(16)))
    with pytest.raises(gf.GridError):
        gf.read_field(path, grid=gf.build_grid(2, 32))
    with pytest.raises(gf.GridError):
        gf.read_field(path, grid=gf.build_grid(3, (16, 32)))


def test_comments_ignored_on_read(tmp_path):
    g = gf.build_grid(2, 8)
    path = tmp_path / "h.field"
    gf.write_field(path, (g, np.full(8, math.pi)),
                   comments=("alpha", "beta"))
    text = path.read_text().splitlines()
    assert text[1] == "# alpha" and text[2] == "# beta"
    field, _ = gf.read_field(path)
    assert_array_equal(field.values, np.full(8, math.pi))
