"""A/P conversion and normalization checks."""

import numpy as np
import pytest

from modrec.preprocess import iq_to_ap, normalize_amplitude, to_ap_dataset, to_input_matrix
from modrec.siggen import Dataset, GenSpec, IqFrame, generate_dataset


def _frame(samples, label=0, snr=0.0, fid=0):
    return IqFrame(np.asarray(samples, dtype=np.complex128), label, snr, fid)


def test_iq_to_ap_axis_points():
    amp, phase = iq_to_ap(_frame([1 + 0j, 0 + 1j, -1 + 0j]))
    assert np.allclose(amp, [1.0, 1.0, 1.0])
    assert np.allclose(phase, [0.0, 0.5, 1.0])


def test_normalize_affine_map():
    assert np.allclose(normalize_amplitude([0.0, 1.0, 2.0]), [0.0, 0.5, 1.0])
    assert np.allclose(normalize_amplitude([3.0, 1.0, 2.0]), [1.0, 0.0, 0.5])


def test_normalize_constant_array_degenerates_to_zeros():
    assert np.array_equal(normalize_amplitude([2.5, 2.5, 2.5]), [0.0, 0.0, 0.0])


def test_normalize_scale_invariance():
    rng = np.random.default_rng(1)
    a = rng.uniform(0.1, 5.0, 100)
    for k in (0.5, 2.0, 1e3):
        assert np.allclose(normalize_amplitude(k * a), normalize_amplitude(a), atol=1e-12)


def test_input_matrix_shape_128x2():
    rng = np.random.default_rng(2)
    frame = _frame(rng.standard_normal(128) + 1j * rng.standard_normal(128))
    mat = to_input_matrix(frame)
    assert mat.data.shape == (128, 2)
    assert mat.label == frame.label and mat.snr_db == frame.snr_db


def test_input_matrix_composed_example():
    mat = to_input_matrix(_frame([1 + 0j, 0 + 1j]))
    # both samples have amplitude 1 -> degenerate column of zeros
    assert np.allclose(mat.data, [[0.0, 0.0], [0.0, 0.5]])


def test_ranges_hold_on_random_frames():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(2, 64))
        frame = _frame(rng.standard_normal(n) + 1j * rng.standard_normal(n))
        mat = to_input_matrix(frame)
        assert mat.data[:, 0].min() >= 0.0 and mat.data[:, 0].max() <= 1.0
        assert mat.data[:, 1].min() >= -1.0 and mat.data[:, 1].max() <= 1.0


def test_phase_rotation_shifts_phase_column_only():
    rng = np.random.default_rng(4)
    samples = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    base = to_input_matrix(_frame(samples))
    for phi in (0.3, -1.2, 2.9):
        rotated = to_input_matrix(_frame(samples * np.exp(1j * phi)))
        assert np.allclose(rotated.data[:, 0], base.data[:, 0], atol=1e-6)
        # compare on the unit circle to absorb the [-1, 1] wrap
        expected = np.exp(1j * np.pi * (base.data[:, 1].astype(np.float64) + phi / np.pi))
        got = np.exp(1j * np.pi * rotated.data[:, 1].astype(np.float64))
        assert np.allclose(got, expected, atol=1e-5)


def test_to_ap_dataset_preserves_split_and_names():
    ds = generate_dataset(GenSpec(schemes=("BPSK", "QPSK"), snr_grid_db=(0,),
                                  frames_per_class_per_snr=10, frame_len=32, seed=7))
    ap = to_ap_dataset(ds)
    assert ap.domain == "ap"
    assert ap.class_names == ds.class_names
    assert ap.split == ds.split
    assert all(m.data.shape == (32, 2) for m in ap.frames)
    assert to_ap_dataset(ap) is ap


def test_empty_amplitude_rejected():
    with pytest.raises(ValueError):
        normalize_amplitude([])
