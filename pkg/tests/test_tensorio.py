import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forgescore import tensorio
from forgescore.tensorio import (
    BadMagicError,
    DimOverflowError,
    ManifestError,
    NonFiniteValueError,
    TrailingBytesError,
    TruncatedPayloadError,
    load_cohort,
    load_manifest,
    read_tensor,
    write_tensor,
)


def test_round_trip_zeros(tmp_path):
    t = np.zeros((2, 3))
    write_tensor(t, tmp_path / "t.fvt")
    back = read_tensor(tmp_path / "t.fvt")
    assert back.shape == (2, 3)
    assert np.array_equal(back, t)


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.fvt"
    p.write_bytes(b"FVT2")
    with pytest.raises(BadMagicError):
        read_tensor(p)


def test_payload_is_exact_ieee754(tmp_path):
    # oracle: an independent encoder for the same value
    value = 1.0 / 3.0
    p = tmp_path / "third.fvt"
    write_tensor(np.array([value]), p)
    blob = p.read_bytes()
    assert blob[:4] == b"FVT1"
    assert blob[4:8] == struct.pack("<I", 1)
    assert blob[8:12] == struct.pack("<I", 1)
    assert blob[12:] == struct.pack("<d", value)


def test_golden_bytes_decode(tmp_path):
    # frozen little-endian encoding of [[1.0, 2.0], [3.0, 4.0]]
    golden = (
        b"FVT1"
        + struct.pack("<I", 2)
        + struct.pack("<II", 2, 2)
        + struct.pack("<4d", 1.0, 2.0, 3.0, 4.0)
    )
    p = tmp_path / "golden.fvt"
    p.write_bytes(golden)
    assert np.array_equal(read_tensor(p), [[1.0, 2.0], [3.0, 4.0]])


def test_truncated_payload(tmp_path):
    p = tmp_path / "trunc.fvt"
    write_tensor(np.ones((2, 2)), p)
    blob = p.read_bytes()
    p.write_bytes(blob[:-5])
    with pytest.raises(TruncatedPayloadError):
        read_tensor(p)
    p.write_bytes(blob[:6])
    with pytest.raises(TruncatedPayloadError):
        read_tensor(p)
    p.write_bytes(blob[:2])
    with pytest.raises(TruncatedPayloadError):
        read_tensor(p)


def test_trailing_bytes(tmp_path):
    p = tmp_path / "trail.fvt"
    write_tensor(np.ones(3), p)
    p.write_bytes(p.read_bytes() + b"x")
    with pytest.raises(TrailingBytesError):
        read_tensor(p)


def test_dim_overflow(tmp_path):
    p = tmp_path / "dim.fvt"
    p.write_bytes(b"FVT1" + struct.pack("<I", 0))
    with pytest.raises(DimOverflowError):
        read_tensor(p)
    p.write_bytes(b"FVT1" + struct.pack("<I", 2) + struct.pack("<II", 1 << 20, 1 << 20))
    with pytest.raises(DimOverflowError):
        read_tensor(p)
    p.write_bytes(b"FVT1" + struct.pack("<I", 1) + struct.pack("<I", 0))
    with pytest.raises(DimOverflowError):
        read_tensor(p)
    with pytest.raises(DimOverflowError):
        write_tensor(np.float64(3.0), p)  # rank 0


def test_non_finite(tmp_path):
    p = tmp_path / "nan.fvt"
    with pytest.raises(NonFiniteValueError):
        write_tensor(np.array([np.nan]), p)
    p.write_bytes(
        b"FVT1" + struct.pack("<I", 1) + struct.pack("<I", 1)
        + struct.pack("<d", float("inf"))
    )
    with pytest.raises(NonFiniteValueError):
        read_tensor(p)


@settings(max_examples=60, deadline=None)
@given(
    shape=st.lists(st.integers(1, 16), min_size=1, max_size=4),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_identity_property(tmp_path_factory, shape, seed):
    rng = np.random.default_rng(seed)
    t = rng.normal(0, 1e3, size=shape)
    p = tmp_path_factory.mktemp("rt") / "t.fvt"
    write_tensor(t, p)
    back = read_tensor(p)
    assert back.shape == tuple(shape)
    assert np.array_equal(back, t)


# manifests ----------------------------------------------------------------


def _write_manifest(tmp_path, vid, cohort="c0", artifacts=None, is_real=False,
                    planted=None):
    art_dir = tmp_path / "artifacts"
    art_dir.mkdir(exist_ok=True)
    man_dir = tmp_path / "manifests"
    man_dir.mkdir(exist_ok=True)
    rel = {}
    for key in artifacts or ["frames"]:
        write_tensor(np.zeros((2, 4, 4, 3)), art_dir / f"{vid}_{key}.fvt")
        rel[key] = f"../artifacts/{vid}_{key}.fvt"
    doc = {
        "video_id": vid,
        "cohort_id": cohort,
        "is_real": is_real,
        "artifacts": rel,
    }
    if planted is not None:
        doc["planted_label"] = planted
    path = man_dir / f"{vid}.json"
    path.write_text(json.dumps(doc))
    return path


def test_cohort_sorted_by_video_id(tmp_path):
    _write_manifest(tmp_path, "v2")
    _write_manifest(tmp_path, "v1")
    cohort = load_cohort(tmp_path)
    assert [m.video_id for m in cohort] == ["v1", "v2"]


def test_missing_frames_field_named(tmp_path):
    path = _write_manifest(tmp_path, "v1", artifacts=["depth"])
    # rewrite without frames but keep a valid file for depth
    doc = json.loads(path.read_text())
    doc["artifacts"].pop("frames", None)
    path.write_text(json.dumps(doc))
    with pytest.raises(ManifestError, match="frames"):
        load_manifest(path)


def test_duplicate_video_id(tmp_path):
    _write_manifest(tmp_path, "v1")
    # same video_id under a different file name
    path = _write_manifest(tmp_path, "v1b")
    doc = json.loads(path.read_text())
    doc["video_id"] = "v1"
    path.write_text(json.dumps(doc))
    with pytest.raises(ManifestError, match="duplicate"):
        load_cohort(tmp_path)


def test_dangling_artifact_path(tmp_path):
    path = _write_manifest(tmp_path, "v1")
    doc = json.loads(path.read_text())
    doc["artifacts"]["frames"] = "../artifacts/nope.fvt"
    path.write_text(json.dumps(doc))
    with pytest.raises(ManifestError, match="v1"):
        load_manifest(path)


def test_depth_normalized_per_video(tmp_path):
    art = tmp_path / "d.fvt"
    write_tensor(np.stack([np.full((4, 4), 5.0), np.full((4, 4), 9.0)]), art)
    frames = tmp_path / "f.fvt"
    write_tensor(np.zeros((2, 4, 4, 3)), frames)
    m = tensorio.VideoManifest(
        video_id="v", cohort_id="c", is_real=False,
        artifacts={"depth": art, "frames": frames},
    )
    d = tensorio.load_depth(m)
    assert d.min() == 0.0 and d.max() == 1.0
    assert np.all(d[0] == 0.0) and np.all(d[1] == 1.0)
