"""SIGF container round-trip checks."""

import numpy as np
import pytest

from modrec.preprocess import to_ap_dataset
from modrec.sigfile import meta_path, read_meta, read_sigf, write_sigf
from modrec.siggen import GenSpec, generate_dataset


@pytest.fixture()
def dataset():
    spec = GenSpec(schemes=("BPSK", "QPSK"), snr_grid_db=(-6, 0), frames_per_class_per_snr=5,
                   frame_len=32, seed=21)
    return spec, generate_dataset(spec)


def test_iq_round_trip(tmp_path, dataset):
    spec, ds = dataset
    path = tmp_path / "data.sigf"
    write_sigf(path, ds, spec=spec, seed=spec.seed)
    back = read_sigf(path)
    assert back.domain == "iq"
    assert back.class_names == ds.class_names
    assert back.split == ds.split
    for a, b in zip(ds.frames, back.frames):
        assert np.array_equal(a.samples, b.samples)  # generator emits complex64 already
        assert (a.label, a.frame_id) == (b.label, b.frame_id)
        assert a.snr_db == b.snr_db


def test_ap_round_trip(tmp_path, dataset):
    _, ds = dataset
    ap = to_ap_dataset(ds)
    path = tmp_path / "ap.sigf"
    write_sigf(path, ap)
    back = read_sigf(path)
    assert back.domain == "ap"
    for a, b in zip(ap.frames, back.frames):
        assert np.array_equal(a.data, b.data)


def test_rewrite_is_byte_identical(tmp_path, dataset):
    spec, ds = dataset
    p1, p2 = tmp_path / "a.sigf", tmp_path / "b.sigf"
    write_sigf(p1, ds, spec=spec, seed=spec.seed)
    write_sigf(p2, read_sigf(p1), spec=spec, seed=spec.seed)
    assert p1.read_bytes() == p2.read_bytes()


def test_meta_sidecar_contents(tmp_path, dataset):
    spec, ds = dataset
    path = tmp_path / "data.sigf"
    write_sigf(path, ds, spec=spec, seed=spec.seed)
    assert meta_path(path).exists()
    meta = read_meta(path)
    assert meta["class_names"] == ["BPSK", "QPSK"]
    assert meta["seed"] == spec.seed
    assert meta["spec"]["frame_len"] == 32
    assert set(meta["split"].values()) <= {"train", "val", "test"}
    assert "created_utc" in meta


def test_missing_sidecar_rejected(tmp_path, dataset):
    _, ds = dataset
    path = tmp_path / "data.sigf"
    write_sigf(path, ds)
    meta_path(path).unlink()
    with pytest.raises(FileNotFoundError):
        read_sigf(path)


def test_bad_magic_rejected(tmp_path, dataset):
    _, ds = dataset
    path = tmp_path / "data.sigf"
    write_sigf(path, ds)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"JUNK"
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="not a SIGF"):
        read_sigf(path)
