"""Training-time augmentation: segment substitution and the noise baseline.

Segment substitution replaces l = round(ratio * N) sample rows of a frame
with rows from a donor of the same class and lower-or-equal SNR, either at
scattered indices (discrete) or as one contiguous window (continuous).
Substitution happens in the normalized A/P domain, both columns together,
and never touches the label. Donors come from a small per-(class, SNR) pool
drawn from the train split once per experiment.
"""

from dataclasses import dataclass

import numpy as np

from .preprocess import ApMatrix
from .seeding import substream
from .siggen import Dataset

STRATEGIES = ("none", "discrete_ss", "continuous_ss", "noise_add")


@dataclass
class AugmentConfig:
    strategy: str = "none"
    ratio: float = 1.0 / 16.0
    sigma: float = 0.0001
    seed: int = 0
    pool_per_class: int = 32

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown augmentation strategy {self.strategy!r}; "
                             f"known: {STRATEGIES}")
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"substitution ratio must be in (0, 1], got {self.ratio}")
        if self.sigma < 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")
        if self.pool_per_class < 1:
            raise ValueError("pool_per_class must be >= 1")
        return self

    def to_dict(self):
        return {"strategy": self.strategy, "ratio": self.ratio, "sigma": self.sigma,
                "seed": self.seed, "pool_per_class": self.pool_per_class}

    @classmethod
    def from_dict(cls, data):
        return cls(**data).validate()


class SubstitutionPool:
    """Donor frames indexed by (class, snr); lookups see only snr' <= snr."""

    def __init__(self, donors):
        self._donors = donors  # {(label, snr): [ApMatrix, ...]}
        self._snrs_by_label = {}
        for label, snr in donors:
            self._snrs_by_label.setdefault(label, []).append(snr)
        for snrs in self._snrs_by_label.values():
            snrs.sort()
        self._eligible_cache = {}

    def __len__(self):
        return sum(len(v) for v in self._donors.values())

    def eligible(self, label, snr_db):
        """All donors for this class at SNR less than or equal to snr_db."""
        key = (label, float(snr_db))
        cached = self._eligible_cache.get(key)
        if cached is None:
            cached = []
            for snr in self._snrs_by_label.get(label, ()):
                if snr <= snr_db:
                    cached.extend(self._donors[(label, snr)])
            self._eligible_cache[key] = cached
        return cached

    def draw(self, label, snr_db, rng) -> ApMatrix:
        candidates = self.eligible(label, snr_db)
        if not candidates:
            raise ValueError(f"no donors for class {label} at snr <= {snr_db}")
        return candidates[rng.integers(0, len(candidates))]


def build_pool(dataset: Dataset, per_class: int, seed=0) -> SubstitutionPool:
    """Pick per_class donor frames per (class, snr) cell from the train split."""
    if dataset.domain != "ap":
        raise ValueError("substitution pool must be built from an A/P dataset")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    cells = {}
    for frame in dataset.frames:
        if dataset.split[frame.frame_id] != "train":
            continue
        cells.setdefault((frame.label, float(frame.snr_db)), []).append(frame)
    donors = {}
    for key in sorted(cells):
        frames = cells[key]
        if len(frames) < per_class:
            raise ValueError(f"cell (class={key[0]}, snr={key[1]}) has {len(frames)} "
                             f"train frames, need {per_class}")
        rng = substream(seed, "pool", key[0], int(round(key[1] * 100)))
        picks = rng.choice(len(frames), size=per_class, replace=False)
        donors[key] = [frames[i] for i in sorted(picks)]
    if not donors:
        raise ValueError("no train frames to build a pool from")
    return SubstitutionPool(donors)


def _check_pair(x: ApMatrix, donor: ApMatrix, l: int):
    if x.data.shape != donor.data.shape:
        raise ValueError(f"length mismatch: {x.data.shape} vs {donor.data.shape}")
    if x.label != donor.label:
        raise ValueError(f"label mismatch: {x.label} vs {donor.label}")
    if donor.snr_db > x.snr_db:
        raise ValueError(f"donor snr {donor.snr_db} exceeds target snr {x.snr_db}")
    if not 0 <= l <= x.n:
        raise ValueError(f"substitution length {l} outside [0, {x.n}]")


def discrete_ss(x: ApMatrix, donor: ApMatrix, l: int, rng) -> ApMatrix:
    """Replace l scattered rows of x with l scattered donor rows.

    Both index sets are drawn uniformly without replacement and paired in
    ascending order, which preserves the donor's temporal order.
    """
    _check_pair(x, donor, l)
    out = x.data.copy()
    if l:
        targets = np.sort(rng.choice(x.n, size=l, replace=False))
        sources = np.sort(rng.choice(x.n, size=l, replace=False))
        out[targets] = donor.data[sources]
    return ApMatrix(out, x.label, x.snr_db, x.frame_id)


def continuous_ss(x: ApMatrix, donor: ApMatrix, l: int, rng) -> ApMatrix:
    """Replace one window x[i:i+l] with donor[j:j+l], i and j independent."""
    _check_pair(x, donor, l)
    out = x.data.copy()
    if l:
        i = int(rng.integers(0, x.n - l + 1))
        j = int(rng.integers(0, x.n - l + 1))
        out[i:i + l] = donor.data[j:j + l]
    return ApMatrix(out, x.label, x.snr_db, x.frame_id)


def noise_add(x: ApMatrix, sigma: float, rng) -> ApMatrix:
    """Add i.i.d. Gaussian(0, sigma^2) to every entry; may leave [0,1]/[-1,1]."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return ApMatrix(x.data.copy(), x.label, x.snr_db, x.frame_id)
    out = x.data + rng.normal(0.0, sigma, x.data.shape).astype(x.data.dtype)
    return ApMatrix(out, x.label, x.snr_db, x.frame_id)


def augment_batch(batch, pool, config: AugmentConfig, epoch_seed: int):
    """Apply the configured strategy to each sample with its own substream.

    SS strategies draw a fresh donor per sample. Per-sample streams are keyed
    by (epoch_seed, position), so the result depends only on (seed, batch,
    pool), never on evaluation order.
    """
    config.validate()
    if config.strategy == "none":
        return list(batch)
    if config.strategy in ("discrete_ss", "continuous_ss") and pool is None:
        raise ValueError(f"strategy {config.strategy} needs a substitution pool")
    out = []
    for position, x in enumerate(batch):
        rng = substream(epoch_seed, "sample", position)
        if config.strategy == "noise_add":
            out.append(noise_add(x, config.sigma, rng))
            continue
        donor = pool.draw(x.label, x.snr_db, rng)
        l = int(round(config.ratio * x.n))
        if config.strategy == "discrete_ss":
            out.append(discrete_ss(x, donor, l, rng))
        else:
            out.append(continuous_ss(x, donor, l, rng))
    return out
