import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from asdglue.cohom_one import compactified_eh_body, eguchi_hanson_profile
from asdglue.errors import ValidationError
from asdglue.frame_curvature import ChartMetric4
from asdglue.serialize import load_chart, load_profile, read_grid, save_chart, save_profile, write_grid


def test_grid_roundtrip_is_lossless(tmp_path):
    rng = np.random.default_rng(3)
    axes = [np.linspace(0, 1, 3), np.linspace(-1, 1, 4), np.array([0.5]), np.linspace(2, 3, 2)]
    fields = {"a": rng.standard_normal((3, 4, 1, 2)), "b": rng.standard_normal((3, 4, 1, 2, 3, 3))}
    j, b = write_grid(tmp_path / "g", axes, fields, {"note": "x"})
    header = json.loads(j.read_text())
    assert header["dimensions"] == [3, 4, 1, 2]
    assert header["dtype"] == "<f8"
    assert [f["name"] for f in header["fields"]] == ["a", "b"]
    ax, fl, meta = read_grid(tmp_path / "g.json")
    for u, v in zip(axes, ax):
        assert_array_equal(u, v)
    for k in fields:
        assert_array_equal(fields[k], fl[k])
    assert meta == {"note": "x"}


def test_grid_rejects_bad_shapes_and_truncation(tmp_path):
    axes = [np.arange(2.0)] * 4
    with pytest.raises(ValidationError):
        write_grid(tmp_path / "g", axes, {"a": np.zeros((2, 2, 2))})
    write_grid(tmp_path / "g", axes, {"a": np.zeros((2, 2, 2, 2))})
    b = tmp_path / "g.bin"
    b.write_bytes(b.read_bytes()[:-8])
    with pytest.raises(ValidationError):
        read_grid(tmp_path / "g")


def test_chart_roundtrip(tmp_path):
    axes = tuple(np.linspace(0.1, 0.5, 5) for _ in range(4))
    g = np.broadcast_to(np.diag([1.0, 2.0, 3.0, 4.0]), (5, 5, 5, 5, 4, 4)).copy()
    save_chart(ChartMetric4(axes, g, -1), tmp_path / "c")
    m = load_chart(tmp_path / "c")
    assert m.orientation == -1
    assert_array_equal(m.g, g)


@pytest.mark.parametrize("kind", ["coframe", "ce"])
def test_profile_roundtrip(tmp_path, kind):
    p = eguchi_hanson_profile(1.0, 3.0, 31) if kind == "coframe" else compactified_eh_body(np.linspace(0, 4, 41))
    save_profile(p, tmp_path / "p.json")
    q = load_profile(tmp_path / "p.json")
    base_p = p if kind == "coframe" else p.base
    base_q = q if kind == "coframe" else q.base
    for name in ("t", "q", "a", "da", "d2a"):
        assert_array_equal(getattr(base_p, name), getattr(base_q, name))
    assert (base_q.quotient_k, base_q.orientation) == (base_p.quotient_k, base_p.orientation)
    if kind == "ce":
        assert_array_equal(p.limit_h0, q.limit_h0)
        assert p.eta == q.eta


def test_profile_kind_checked(tmp_path):
    (tmp_path / "x.json").write_text('{"kind": "other"}')
    with pytest.raises(ValidationError):
        load_profile(tmp_path / "x.json")
