"""Shared fixtures-in-spirit: small synthetic A/P datasets for fast tests."""

import numpy as np

from modrec.preprocess import ApMatrix
from modrec.siggen import Dataset


def make_ap_dataset(n_classes=2, snrs=(0.0,), per_cell=50, n=16, seed=0,
                    ratios=(0.6, 0.2, 0.2), separable=True):
    """Labeled A/P dataset; class k gets a distinct phase offset when separable."""
    rng = np.random.default_rng(seed)
    frames, labels, snr_tags, ids = [], [], [], []
    fid = 0
    for label in range(n_classes):
        for snr in snrs:
            for _ in range(per_cell):
                amp = rng.uniform(0.0, 1.0, n)
                if separable:
                    center = -0.8 + 1.6 * label / max(1, n_classes - 1)
                    phase = np.clip(center + 0.1 * rng.standard_normal(n), -1.0, 1.0)
                else:
                    phase = rng.uniform(-1.0, 1.0, n)
                data = np.column_stack([amp, phase]).astype(np.float32)
                frames.append(ApMatrix(data, label, float(snr), fid))
                labels.append(label)
                snr_tags.append(float(snr))
                ids.append(fid)
                fid += 1
    from modrec.splits import stratified_split
    split = stratified_split(ids, labels, snr_tags, ratios=ratios, seed=seed)
    names = [f"class{i}" for i in range(n_classes)]
    return Dataset(frames, names, split, domain="ap").validate()
