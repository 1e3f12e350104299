import json

import numpy as np
import pytest

from geobeam.conormal import Submanifold
from geobeam.cover import build_good_cover
from geobeam.harness import build_model, build_submanifold
from geobeam.io import FormatError, load_cover, read_csv, save_cover, write_csv


def test_csv_header_and_format(tmp_path):
    p = write_csv(tmp_path / "a.csv", [("t", "time"), ("n", "count"), ("ok", "flag")],
                  [[0.1, 3, True], [np.nan, 4, False], [np.inf, 5, np.True_]], "abc123")
    lines = p.read_text().splitlines()
    assert lines[0] == "# scenario_hash=abc123"
    assert lines[1] == "t [time],n [count],ok [flag]"
    assert lines[2] == "1.000000000000e-01,3,1"
    assert lines[3] == "nan,4,0" and lines[4] == "inf,5,1"
    h, header, rows = read_csv(p)
    assert h == "abc123" and header[0] == "t [time]" and len(rows) == 3


def test_read_csv_requires_hash_line(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("x [u]\n1\n")
    with pytest.raises(FormatError):
        read_csv(p)


def test_cover_roundtrip(tmp_path):
    model_spec = {"name": "flat_torus", "params": {"dim": 2}}
    H_spec = {"kind": "point", "x": [1.0, 2.0]}
    H = build_submanifold(build_model(model_spec), H_spec)
    cov = build_good_cover(H, 0.5, 0.1)
    p = save_cover(tmp_path / "cover.json", cov, model_spec, H_spec)
    back = load_cover(p, lambda m, h: build_submanifold(build_model(m), h))
    assert back.N == cov.N and back.D == cov.D
    np.testing.assert_array_equal(back.colors, cov.colors)
    np.testing.assert_allclose(back.X, cov.X)
    np.testing.assert_allclose(back.V, cov.V)
    assert [t.center.w for t in back.tubes] == [t.center.w for t in cov.tubes]


def test_cover_version_checked(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"version": 99}))
    with pytest.raises(FormatError):
        load_cover(p, None)
