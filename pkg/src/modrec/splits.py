"""Stratified train/val/test assignment over (label, SNR) cells."""

import numpy as np

from .seeding import substream


def stratified_split(frame_ids, labels, snrs, ratios=(0.6, 0.2, 0.2), seed=0):
    """Shuffle each (label, snr) cell and cut it at the given ratios.

    Rounding keeps every cell within one frame of the exact ratios. The cell
    iteration order is sorted, so the assignment depends only on the cell
    contents and the seed, not on input ordering.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    cells = {}
    for fid, label, snr in zip(frame_ids, labels, snrs):
        cells.setdefault((int(label), float(snr)), []).append(fid)

    assignment = {}
    for key in sorted(cells):
        ids = sorted(cells[key])
        rng = substream(seed, "cell", key[0], int(round(key[1] * 100)))
        rng.shuffle(ids)
        n = len(ids)
        n_train = int(round(ratios[0] * n))
        n_val = int(round((ratios[0] + ratios[1]) * n)) - n_train
        for fid in ids[:n_train]:
            assignment[fid] = "train"
        for fid in ids[n_train:n_train + n_val]:
            assignment[fid] = "val"
        for fid in ids[n_train + n_val:]:
            assignment[fid] = "test"
    return assignment
