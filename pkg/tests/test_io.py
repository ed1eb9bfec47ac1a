import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from PIL import Image

from geopose.errors import InvalidArgumentError
from geopose.io import (
    decode_gpr,
    encode_gpr,
    file_digest,
    read_gpr,
    read_pose,
    write_gpr,
    write_manifest,
    write_png,
    write_pose,
)
from geopose.raster import Raster


@settings(max_examples=100, deadline=None)
@given(
    hnp.arrays(
        np.float32,
        hnp.array_shapes(min_dims=3, max_dims=3, min_side=1, max_side=8),
        elements=st.floats(width=32, allow_infinity=False),
    )
)
def test_gpr_round_trip_bit_exact(a):
    r = Raster(a)
    back = decode_gpr(encode_gpr(r))
    assert back.data.dtype == np.float32
    # invalidity is joint across channels, so compare with the normalised raster
    assert back.data.tobytes() == np.ascontiguousarray(r.data, dtype="<f4").tobytes()


def test_gpr_header_layout(tmp_path):
    r = Raster(np.arange(6, dtype=np.float32).reshape(2, 3))
    p = tmp_path / "a.gpr"
    write_gpr(p, r)
    buf = p.read_bytes()
    assert buf[:4] == b"GPR1"
    assert np.frombuffer(buf[4:16], "<u4").tolist() == [3, 2, 1]
    assert np.frombuffer(buf[16:], "<f4").tolist() == [0, 1, 2, 3, 4, 5]
    assert read_gpr(p).identical(Raster(r.data.astype(np.float32)))


def test_gpr_rejects_bad_input():
    buf = encode_gpr(Raster(np.zeros((2, 2))))
    with pytest.raises(InvalidArgumentError):
        decode_gpr(b"GPR2" + buf[4:])
    with pytest.raises(InvalidArgumentError):
        decode_gpr(buf[:-1])
    with pytest.raises(InvalidArgumentError):
        decode_gpr(buf[:8])


def test_pose_sidecar(tmp_path):
    p = tmp_path / "pose.json"
    write_pose(p, 0.5, -1.25)
    assert read_pose(p) == (0.5, -1.25)
    doc = json.loads(p.read_text())
    assert doc["convention"] == "ground-to-surface" and doc["frame"] == "y-down"
    for key, bad in [("frame", "y-up"), ("convention", "surface-to-ground"), ("scale", -1.0)]:
        d = dict(doc, **{key: bad})
        p.write_text(json.dumps(d))
        with pytest.raises(InvalidArgumentError):
            read_pose(p)
    p.write_text(json.dumps({"scale": 1.0}))
    with pytest.raises(InvalidArgumentError):
        read_pose(p)


def test_png_preview(tmp_path):
    a = np.linspace(0, 1, 16).reshape(4, 4)
    a[0, 0] = np.nan
    mask = np.zeros((4, 4), bool)
    mask[3, 3] = True
    p = tmp_path / "x.png"
    write_png(p, Raster(a), mask=mask)
    img = np.asarray(Image.open(p))
    assert img.shape == (4, 4, 3)
    assert img[0, 0].tolist() == [0, 0, 0]
    assert img[3, 3].tolist() == [0, 0, 255]
    assert img[0, 1, 0] == 0 and img[3, 2, 0] > 200


def test_manifest(tmp_path):
    src = tmp_path / "in.gpr"
    write_gpr(src, Raster(np.zeros((2, 2))))
    out_dir = tmp_path / "out"
    out_dir.mkdir()
    m = write_manifest(out_dir, "rectify", {"raster": src}, {"mode": "continuous"}, seed=3)
    assert m == out_dir / "manifest.json"
    doc = json.loads(m.read_text())
    assert doc["inputs"]["raster"]["sha256"] == file_digest(src)
    assert doc["seed"] == 3 and "threads" not in doc["parameters"]
    m2 = write_manifest(tmp_path / "out.gpr", "ortho", {}, {})
    assert m2.name == "out.gpr.manifest.json"
