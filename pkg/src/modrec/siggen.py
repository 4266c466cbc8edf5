"""Synthetic modulated-signal generator with a parametric impairment channel.

Produces labeled complex baseband frames at desk scale: Gray-coded linear
schemes (PSK/PAM/QAM) with rect or root-raised-cosine pulses, plus
constant-envelope GFSK/CPFSK, passed through a channel applying multipath
taps, carrier frequency offset, sampling-rate offset and calibrated AWGN.
All draws are keyed substreams of one master seed, so generation is
deterministic and per-frame order-independent.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .seeding import substream, child_seed
from .splits import stratified_split

LINEAR_KINDS = ("BPSK", "QPSK", "8PSK", "PAM4", "QAM16", "QAM64")
FSK_KINDS = ("GFSK", "CPFSK")
SCHEME_KINDS = LINEAR_KINDS + FSK_KINDS

FSK_MOD_INDEX = 0.5
GFSK_BT = 0.3
RRC_SPAN_SYMBOLS = 8


@dataclass(frozen=True)
class ModScheme:
    """One modulation scheme: bit width plus (for linear kinds) its constellation."""

    kind: str
    bits_per_symbol: int
    constellation: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown modulation kind {self.kind!r}; known: {SCHEME_KINDS}")
        if self.constellation is not None:
            points = np.asarray(self.constellation, dtype=np.complex128)
            if points.size != 2 ** self.bits_per_symbol:
                raise ValueError(f"{self.kind}: constellation size {points.size} != "
                                 f"2^{self.bits_per_symbol}")
            mean_power = np.mean(np.abs(points) ** 2)
            if abs(mean_power - 1.0) > 1e-9:
                raise ValueError(f"{self.kind}: constellation average power {mean_power} != 1")

    @property
    def is_linear(self):
        return self.constellation is not None


def _gray(k: int) -> int:
    return k ^ (k >> 1)


def _psk_constellation(order, phase_offset=0.0):
    points = np.empty(order, dtype=np.complex128)
    for position in range(order):
        points[_gray(position)] = np.exp(1j * (2 * np.pi * position / order + phase_offset))
    return points


def _gray_pam_levels(order):
    """Gray-indexed odd-integer levels -order+1 .. order-1 (unnormalized)."""
    levels = np.empty(order)
    for position in range(order):
        levels[_gray(position)] = 2 * position - order + 1
    return levels


def _square_qam_constellation(order):
    side = int(round(math.sqrt(order)))
    levels = _gray_pam_levels(side)
    points = np.empty(order, dtype=np.complex128)
    bits_q = int(math.log2(side))
    for vi in range(side):
        for vq in range(side):
            points[(vi << bits_q) | vq] = levels[vi] + 1j * levels[vq]
    return points / math.sqrt(np.mean(np.abs(points) ** 2))


def _build_schemes():
    pam4 = _gray_pam_levels(4)
    return {
        "BPSK": ModScheme("BPSK", 1, np.array([1.0 + 0j, -1.0 + 0j])),
        "QPSK": ModScheme("QPSK", 2, _psk_constellation(4, np.pi / 4)),
        "8PSK": ModScheme("8PSK", 3, _psk_constellation(8)),
        "PAM4": ModScheme("PAM4", 2, (pam4 / math.sqrt(np.mean(pam4 ** 2))).astype(np.complex128)),
        "QAM16": ModScheme("QAM16", 4, _square_qam_constellation(16)),
        "QAM64": ModScheme("QAM64", 6, _square_qam_constellation(64)),
        "GFSK": ModScheme("GFSK", 1),
        "CPFSK": ModScheme("CPFSK", 1),
    }


SCHEMES = _build_schemes()


def get_scheme(name: str) -> ModScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown modulation scheme {name!r}; known: {sorted(SCHEMES)}") from None


def rrc_taps(sps, rolloff, span_symbols=RRC_SPAN_SYMBOLS):
    """Unit-energy root-raised-cosine taps spanning span_symbols symbols."""
    n = span_symbols * sps + 1
    t = (np.arange(n) - (n - 1) / 2) / sps
    taps = np.empty(n)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[i] = 1.0 + rolloff * (4.0 / np.pi - 1.0)
        elif rolloff > 0 and abs(abs(ti) - 1.0 / (4 * rolloff)) < 1e-12:
            taps[i] = (rolloff / math.sqrt(2)) * (
                (1 + 2 / np.pi) * math.sin(np.pi / (4 * rolloff))
                + (1 - 2 / np.pi) * math.cos(np.pi / (4 * rolloff)))
        else:
            num = (math.sin(np.pi * ti * (1 - rolloff))
                   + 4 * rolloff * ti * math.cos(np.pi * ti * (1 + rolloff)))
            taps[i] = num / (np.pi * ti * (1 - (4 * rolloff * ti) ** 2))
    return taps / math.sqrt(np.sum(taps ** 2))


def _bits_to_values(bits, bits_per_symbol):
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % bits_per_symbol:
        raise ValueError(f"bit count {bits.size} not divisible by "
                         f"bits_per_symbol={bits_per_symbol}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0/1")
    groups = bits.reshape(-1, bits_per_symbol)
    weights = 1 << np.arange(bits_per_symbol - 1, -1, -1)
    return groups @ weights


def modulate(bits, scheme: ModScheme, samples_per_symbol: int, pulse="rect", rolloff=0.35):
    """Map a bit sequence to complex baseband samples.

    Linear schemes Gray-map bit groups onto the constellation then pulse-shape
    (rect or RRC with the given rolloff); GFSK/CPFSK integrate the frequency
    pulse to phase, giving an exactly constant envelope (the `pulse` argument
    does not apply to them). Output length is symbol_count * samples_per_symbol.
    """
    if samples_per_symbol < 1:
        raise ValueError("samples_per_symbol must be >= 1")
    if scheme.kind in FSK_KINDS:
        return _modulate_fsk(bits, scheme, samples_per_symbol)
    values = _bits_to_values(bits, scheme.bits_per_symbol)
    symbols = scheme.constellation[values]
    n_out = symbols.size * samples_per_symbol
    if pulse == "rect":
        return np.repeat(symbols, samples_per_symbol)
    if pulse == "rrc":
        upsampled = np.zeros(n_out, dtype=np.complex128)
        upsampled[::samples_per_symbol] = symbols * math.sqrt(samples_per_symbol)
        taps = rrc_taps(samples_per_symbol, rolloff)
        delay = (taps.size - 1) // 2
        shaped = np.convolve(upsampled, taps)
        return shaped[delay:delay + n_out]
    raise ValueError(f"unknown pulse {pulse!r}; use 'rect' or 'rrc'")


def _modulate_fsk(bits, scheme, sps):
    values = _bits_to_values(bits, scheme.bits_per_symbol)
    nrz = 2.0 * values - 1.0
    freq = np.repeat(nrz, sps)
    if scheme.kind == "GFSK":
        sigma = math.sqrt(math.log(2)) / (2 * np.pi * GFSK_BT) * sps
        half = int(math.ceil(2 * sps))
        t = np.arange(-half, half + 1)
        g = np.exp(-0.5 * (t / sigma) ** 2)
        g /= g.sum()
        freq = np.convolve(freq, g, mode="same")
    phase = np.pi * FSK_MOD_INDEX * np.cumsum(freq) / sps
    return np.exp(1j * phase)


@dataclass(frozen=True)
class ChannelParams:
    """Impairments applied to one frame; +inf snr_db means noiseless."""

    snr_db: float = math.inf
    cfo_norm: float = 0.0
    sro_ppm: float = 0.0
    fading_taps: tuple = ()
    rng_seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError("snr_db must be finite (or +inf for noiseless)")
        if len(self.fading_taps) and not np.sum(np.abs(np.asarray(self.fading_taps)) ** 2) > 0:
            raise ValueError("fading_taps must have total power > 0")


def apply_channel(samples, ch: ChannelParams):
    """Multipath + CFO + SRO + calibrated AWGN, deterministic given ch.rng_seed.

    SNR is defined over the frame: noise power is set from the measured
    post-impairment signal power so the requested ratio holds in expectation.
    Stages that are exactly neutral (no taps, zero offsets, infinite SNR) are
    skipped, so an identity channel returns the input bit-for-bit.
    """
    y = np.asarray(samples, dtype=np.complex128)
    if y.size == 0:
        raise ValueError("samples must be non-empty")
    n = y.size
    if len(ch.fading_taps):
        y = np.convolve(y, np.asarray(ch.fading_taps, dtype=np.complex128))[:n]
    if ch.cfo_norm != 0.0:
        y = y * np.exp(2j * np.pi * ch.cfo_norm * np.arange(n))
    if ch.sro_ppm != 0.0:
        positions = np.clip(np.arange(n) * (1.0 + ch.sro_ppm * 1e-6), 0.0, n - 1.0)
        grid = np.arange(n)
        y = np.interp(positions, grid, y.real) + 1j * np.interp(positions, grid, y.imag)
    if ch.snr_db != math.inf:
        signal_power = np.mean(np.abs(y) ** 2)
        noise_power = signal_power / (10.0 ** (ch.snr_db / 10.0))
        rng = np.random.default_rng(ch.rng_seed)
        scale = math.sqrt(noise_power / 2.0)
        y = y + scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return y


@dataclass
class IqFrame:
    """One complex baseband signal with its class label and SNR tag."""

    samples: np.ndarray
    label: int
    snr_db: float
    frame_id: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.size == 0:
            raise ValueError("frame must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("frame samples must be finite")


@dataclass
class Dataset:
    """Ordered frame collection with class names and a train/val/test split."""

    frames: list
    class_names: list
    split: dict
    domain: str = "iq"

    def validate(self):
        ids = [f.frame_id for f in self.frames]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate frame_id in dataset")
        if set(self.split) != set(ids):
            raise ValueError("split must cover every frame_id exactly once")
        for value in self.split.values():
            if value not in ("train", "val", "test"):
                raise ValueError(f"bad split value {value!r}")
        for f in self.frames:
            if not 0 <= f.label < len(self.class_names):
                raise ValueError(f"frame {f.frame_id}: label {f.label} out of range")
        return self

    def frame_ids(self, which=None):
        if which is None:
            return [f.frame_id for f in self.frames]
        return [f.frame_id for f in self.frames if self.split[f.frame_id] == which]

    def subset(self, which):
        return [f for f in self.frames if self.split[f.frame_id] == which]

    @property
    def snr_grid(self):
        return sorted({float(f.snr_db) for f in self.frames})


def default_snr_grid():
    return tuple(range(-20, 20, 2))


@dataclass(frozen=True)
class GenSpec:
    """Everything generate_dataset needs; serializable for meta sidecars."""

    schemes: tuple = tuple(SCHEME_KINDS)
    snr_grid_db: tuple = default_snr_grid()
    frames_per_class_per_snr: int = 100
    frame_len: int = 128
    samples_per_symbol: int = 8
    pulse: str = "rrc"
    rolloff: float = 0.35
    cfo_range: tuple = (-0.005, 0.005)
    sro_ppm_range: tuple = (-50.0, 50.0)
    fading_choices: tuple = ()
    split_ratios: tuple = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        if not self.schemes:
            raise ValueError("scheme list must be non-empty")
        for name in self.schemes:
            get_scheme(name)
        if self.frames_per_class_per_snr < 1 or self.frame_len < 1 or self.samples_per_symbol < 1:
            raise ValueError("counts must be positive")
        if not self.snr_grid_db:
            raise ValueError("snr grid must be non-empty")

    def to_dict(self):
        return {
            "schemes": list(self.schemes),
            "snr_grid_db": [float(s) for s in self.snr_grid_db],
            "frames_per_class_per_snr": self.frames_per_class_per_snr,
            "frame_len": self.frame_len,
            "samples_per_symbol": self.samples_per_symbol,
            "pulse": self.pulse,
            "rolloff": self.rolloff,
            "cfo_range": list(self.cfo_range),
            "sro_ppm_range": list(self.sro_ppm_range),
            "fading_choices": [[[c.real, c.imag] for c in map(complex, taps)]
                               for taps in self.fading_choices],
            "split_ratios": list(self.split_ratios),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "fading_choices" in data:
            data["fading_choices"] = tuple(
                tuple(complex(re, im) for re, im in taps) for taps in data["fading_choices"])
        for key in ("schemes", "snr_grid_db", "cfo_range", "sro_ppm_range", "split_ratios"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


def generate_dataset(spec: GenSpec) -> Dataset:
    """Deterministic labeled dataset: schemes x SNR grid x repeats frames.

    Frame i draws its bits and channel parameters from substream(seed, "frame", i),
    so frames can be produced in any order or in parallel with identical results.
    Samples are quantized to complex64, matching the on-disk precision.
    """
    frames = []
    n_symbols = -(-spec.frame_len // spec.samples_per_symbol)  # ceil
    frame_id = 0
    for label, scheme_name in enumerate(spec.schemes):
        scheme = get_scheme(scheme_name)
        for snr_db in spec.snr_grid_db:
            for _ in range(spec.frames_per_class_per_snr):
                rng = substream(spec.seed, "frame", frame_id)
                bits = rng.integers(0, 2, n_symbols * scheme.bits_per_symbol)
                clean = modulate(bits, scheme, spec.samples_per_symbol,
                                 pulse=spec.pulse, rolloff=spec.rolloff)[:spec.frame_len]
                taps = ()
                if spec.fading_choices:
                    taps = spec.fading_choices[rng.integers(0, len(spec.fading_choices))]
                ch = ChannelParams(
                    snr_db=float(snr_db),
                    cfo_norm=float(rng.uniform(*spec.cfo_range)),
                    sro_ppm=float(rng.uniform(*spec.sro_ppm_range)),
                    fading_taps=taps,
                    rng_seed=child_seed(spec.seed, "chan", frame_id),
                )
                received = apply_channel(clean, ch).astype(np.complex64)
                frames.append(IqFrame(received, label, float(snr_db), frame_id))
                frame_id += 1
    split = stratified_split(
        [f.frame_id for f in frames],
        [f.label for f in frames],
        [f.snr_db for f in frames],
        ratios=spec.split_ratios,
        seed=child_seed(spec.seed, "split"),
    )
    return Dataset(frames, list(spec.schemes), split).validate()
