"""Hybrid modulation classifier: conv embedding + SE recalibration, transformer
encoder with talking-heads attention and a ReGLU feed-forward, a stacked LSTM,
and a three-layer dense head. Every stage can be toggled off for ablations.

Input is a (batch, N, 2) normalized A/P matrix. The conv stack halves the
sequence each layer, so the token length is L = floor(N / 2^K). Parameters
live in a flat name -> Tensor store; `count_params` / `count_macs` derive
complexity analytically from the same shape manifest the initializer uses.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .seeding import substream

CLASSIFIER_HIDDEN = (128, 64)


def conv_out_len(length, kernel, stride, padding):
    return (length + 2 * padding - kernel) // stride + 1


@dataclass
class ModelConfig:
    """Architecture hyperparameters and ablation toggles."""

    input_len: int = 128
    conv_layers: int = 2
    embed_dim: int = 64
    kernel_size: int = 4
    se_reduction: int = 4
    tf_layers: int = 2
    heads: int = 8
    ffn_dim: int = 128
    lstm_layers: int = 4
    lstm_hidden: int = 64
    num_classes: int = 11
    dropout: float = 0.1
    use_se: bool = True
    use_transformer: bool = True
    use_lstm: bool = True
    use_talking_heads: bool = True
    use_reglu: bool = True

    @property
    def conv_padding(self):
        return (self.kernel_size - 1) // 2

    @property
    def seq_len(self):
        length = self.input_len
        for _ in range(self.conv_layers):
            length = conv_out_len(length, self.kernel_size, 2, self.conv_padding)
        return length

    @property
    def head_dim(self):
        return self.embed_dim // self.heads

    @property
    def mlp_ffn_dim(self):
        # width matching the ReGLU parameter count to within 2%
        return int(round(1.5 * self.ffn_dim))

    @property
    def classifier_in(self):
        return self.lstm_hidden if self.use_lstm else self.embed_dim

    def validate(self):
        if self.conv_layers < 1:
            raise ValueError("conv_layers must be >= 1")
        if self.input_len < 1 or self.seq_len < 1:
            raise ValueError(f"input_len {self.input_len} too short for "
                             f"{self.conv_layers} halving conv layers")
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.use_se and self.embed_dim % self.se_reduction:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by "
                             f"se_reduction {self.se_reduction}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if min(self.tf_layers, self.lstm_layers) < 0:
            raise ValueError("layer counts must be >= 0")
        if min(self.embed_dim, self.kernel_size, self.ffn_dim, self.lstm_hidden,
               self.heads, self.se_reduction) < 1:
            raise ValueError("dimensions must be positive")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data).validate()


# ---------------------------------------------------------------------------
# parameter manifest and initialization


def param_specs(config: ModelConfig):
    """Ordered (name, shape, init) manifest; init is ('uniform', bound),
    ('normal', std), ('eye',), ('ones',) or ('zeros',)."""
    cfg = config
    d = cfg.embed_dim
    specs = []

    def dense(prefix, fan_in, fan_out):
        bound = 1.0 / math.sqrt(fan_in)
        specs.append((f"{prefix}.w", (fan_in, fan_out), ("uniform", bound)))
        specs.append((f"{prefix}.b", (fan_out,), ("uniform", bound)))

    in_ch = 2
    for i in range(cfg.conv_layers):
        bound = 1.0 / math.sqrt(in_ch * cfg.kernel_size)
        specs.append((f"embed.conv{i}.w", (cfg.kernel_size, in_ch, d), ("uniform", bound)))
        specs.append((f"embed.conv{i}.b", (d,), ("uniform", bound)))
        in_ch = d

    if cfg.use_se:
        dense("se.fc1", d, d // cfg.se_reduction)
        dense("se.fc2", d // cfg.se_reduction, d)

    if cfg.use_transformer:
        specs.append(("pos", (cfg.seq_len, d), ("normal", 0.02)))
        for i in range(cfg.tf_layers):
            for proj in ("wq", "wk", "wv", "wo"):
                bound = 1.0 / math.sqrt(d)
                specs.append((f"tf{i}.{proj}", (d, d), ("uniform", bound)))
                specs.append((f"tf{i}.{proj.replace('w', 'b')}", (d,), ("uniform", bound)))
            if cfg.use_talking_heads:
                specs.append((f"tf{i}.pl", (cfg.heads, cfg.heads), ("eye",)))
                specs.append((f"tf{i}.pw", (cfg.heads, cfg.heads), ("eye",)))
            specs.append((f"tf{i}.ln1.g", (d,), ("ones",)))
            specs.append((f"tf{i}.ln1.b", (d,), ("zeros",)))
            if cfg.use_reglu:
                dense(f"tf{i}.ffn.gate", d, cfg.ffn_dim)
                dense(f"tf{i}.ffn.lin", d, cfg.ffn_dim)
                dense(f"tf{i}.ffn.out", cfg.ffn_dim, d)
            else:
                dense(f"tf{i}.ffn.fc1", d, cfg.mlp_ffn_dim)
                dense(f"tf{i}.ffn.fc2", cfg.mlp_ffn_dim, d)
            specs.append((f"tf{i}.ln2.g", (d,), ("ones",)))
            specs.append((f"tf{i}.ln2.b", (d,), ("zeros",)))

    if cfg.use_lstm:
        h = cfg.lstm_hidden
        din = d
        for i in range(cfg.lstm_layers):
            specs.append((f"lstm{i}.w_ih", (din, 4 * h), ("uniform", 1.0 / math.sqrt(din))))
            specs.append((f"lstm{i}.w_hh", (h, 4 * h), ("uniform", 1.0 / math.sqrt(h))))
            specs.append((f"lstm{i}.b_ih", (4 * h,), ("uniform", 1.0 / math.sqrt(h))))
            specs.append((f"lstm{i}.b_hh", (4 * h,), ("uniform", 1.0 / math.sqrt(h))))
            din = h

    widths = (cfg.classifier_in,) + CLASSIFIER_HIDDEN + (cfg.num_classes,)
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        dense(f"head.fc{i}", fan_in, fan_out)
    return specs


def init_params(config: ModelConfig, seed=0):
    """Fresh parameter store; every tensor drawn from its own named substream."""
    params = {}
    dtype = ad.get_default_dtype()
    for name, shape, init in param_specs(config):
        rng = substream(seed, "init", name)
        kind = init[0]
        if kind == "uniform":
            data = rng.uniform(-init[1], init[1], shape)
        elif kind == "normal":
            data = rng.normal(0.0, init[1], shape)
        elif kind == "eye":
            data = np.eye(shape[0])
        elif kind == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True)
    return params


def count_params(config: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape, _ in param_specs(config))


# ---------------------------------------------------------------------------
# forward stages


def feature_embedding(params, cfg: ModelConfig, x: Tensor) -> Tensor:
    """K stride-2 conv layers with ReLU; (B, N, 2) -> (B, L, d)."""
    out = x
    for i in range(cfg.conv_layers):
        out = ad.relu(ad.conv1d(out, params[f"embed.conv{i}.w"], params[f"embed.conv{i}.b"],
                                stride=2, padding=cfg.conv_padding))
    return out


def se_block(params, cfg: ModelConfig, x: Tensor, train=False, rng=None) -> Tensor:
    """Squeeze over time, excite through a d -> d/r -> d bottleneck, rescale."""
    batch, _, d = x.shape
    z = x.mean(axis=1)
    s = ad.relu(ad.matmul(z, params["se.fc1.w"]) + params["se.fc1.b"])
    s = ad.sigmoid(ad.matmul(s, params["se.fc2.w"]) + params["se.fc2.b"])
    out = x * s.reshape(batch, 1, d)
    return ad.dropout(out, cfg.dropout, train, rng)


def _mix_heads(t: Tensor, m: Tensor) -> Tensor:
    # (B, h, L, L) mixed across the head axis by an (h, h) matrix
    return ad.transpose(ad.matmul(ad.transpose(t, (0, 2, 3, 1)), m), (0, 3, 1, 2))


def talking_heads_attention(params, cfg: ModelConfig, x: Tensor, prefix,
                            train=False, rng=None, collect=None) -> Tensor:
    """Multi-head self-attention with optional h x h logit/weight mixing.

    With use_talking_heads off, both mixes are skipped (identity projections),
    giving vanilla multi-head attention. `collect` receives the post-softmax
    attention map of each call.
    """
    batch, length, d = x.shape
    h, dt = cfg.heads, cfg.head_dim

    def project(which):
        out = ad.matmul(x, params[f"{prefix}.w{which}"]) + params[f"{prefix}.b{which}"]
        return ad.transpose(out.reshape(batch, length, h, dt), (0, 2, 1, 3))

    q, k, v = project("q"), project("k"), project("v")
    logits = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dt))
    if cfg.use_talking_heads:
        logits = _mix_heads(logits, params[f"{prefix}.pl"])
    attn = ad.softmax(logits, axis=-1)
    if collect is not None:
        collect.append(attn.data)
    if cfg.use_talking_heads:
        attn = _mix_heads(attn, params[f"{prefix}.pw"])
    attn = ad.dropout(attn, cfg.dropout, train, rng)
    ctx = ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3)).reshape(batch, length, d)
    return ad.matmul(ctx, params[f"{prefix}.wo"]) + params[f"{prefix}.bo"]


def reglu_ffn(params, cfg: ModelConfig, x: Tensor, prefix, train=False, rng=None) -> Tensor:
    """Gated feed-forward (relu(XW1) * XW2) W3, or a width-matched plain MLP."""
    if cfg.use_reglu:
        gate = ad.relu(ad.matmul(x, params[f"{prefix}.gate.w"]) + params[f"{prefix}.gate.b"])
        lin = ad.matmul(x, params[f"{prefix}.lin.w"]) + params[f"{prefix}.lin.b"]
        out = ad.matmul(gate * lin, params[f"{prefix}.out.w"]) + params[f"{prefix}.out.b"]
    else:
        mid = ad.relu(ad.matmul(x, params[f"{prefix}.fc1.w"]) + params[f"{prefix}.fc1.b"])
        out = ad.matmul(mid, params[f"{prefix}.fc2.w"]) + params[f"{prefix}.fc2.b"]
    return ad.dropout(out, cfg.dropout, train, rng)


def transformer_encoder(params, cfg: ModelConfig, x: Tensor, train=False, rng=None,
                        collect=None) -> Tensor:
    """Learnable positional table added once, then M_t post-norm encoder layers."""
    out = ad.embedding_add(x, params["pos"])
    for i in range(cfg.tf_layers):
        attn = talking_heads_attention(params, cfg, out, f"tf{i}", train, rng, collect)
        out = ad.layer_norm(out + attn, params[f"tf{i}.ln1.g"], params[f"tf{i}.ln1.b"])
        ffn = reglu_ffn(params, cfg, out, f"tf{i}.ffn", train, rng)
        out = ad.layer_norm(out + ffn, params[f"tf{i}.ln2.g"], params[f"tf{i}.ln2.b"])
    return out


def lstm_stack(params, cfg: ModelConfig, x: Tensor) -> Tensor:
    """M_l unidirectional LSTM layers, zero initial states, gate order i,f,g,o."""
    for layer in range(cfg.lstm_layers):
        x = ad.lstm_layer(x, params[f"lstm{layer}.w_ih"], params[f"lstm{layer}.w_hh"],
                          params[f"lstm{layer}.b_ih"], params[f"lstm{layer}.b_hh"])
    return x


def classifier(params, cfg: ModelConfig, x: Tensor) -> Tensor:
    """Last timestep through three dense layers with ReLU between; raw logits."""
    out = x[:, -1, :]
    out = ad.relu(ad.matmul(out, params["head.fc0.w"]) + params["head.fc0.b"])
    out = ad.relu(ad.matmul(out, params["head.fc1.w"]) + params["head.fc1.b"])
    return ad.matmul(out, params["head.fc2.w"]) + params["head.fc2.b"]


def forward(params, cfg: ModelConfig, x, train=False, rng=None, collect_attention=None):
    """Full composition with toggles; disabled stages pass through unchanged."""
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=ad.get_default_dtype()))
    out = feature_embedding(params, cfg, x)
    if cfg.use_se:
        out = se_block(params, cfg, out, train, rng)
    if cfg.use_transformer:
        out = transformer_encoder(params, cfg, out, train, rng, collect_attention)
    if cfg.use_lstm:
        out = lstm_stack(params, cfg, out)
    return classifier(params, cfg, out)


class Model:
    """Config + parameter store with a convenient forward/predict interface."""

    def __init__(self, config: ModelConfig, seed=0, params=None):
        config.validate()
        self.config = config
        self.params = params if params is not None else init_params(config, seed)

    def forward(self, x, train=False, rng=None, collect_attention=None):
        return forward(self.params, self.config, x, train, rng, collect_attention)

    def predict(self, x, batch_size=512):
        """Argmax class indices; ties resolve to the lowest index."""
        x = np.asarray(x, dtype=ad.get_default_dtype())
        out = np.empty(x.shape[0], dtype=np.int64)
        with ad.no_grad():
            for start in range(0, x.shape[0], batch_size):
                logits = self.forward(x[start:start + batch_size]).data
                out[start:start + batch_size] = np.argmax(logits, axis=1)
        return out

    def state_arrays(self):
        return {name: tensor.data for name, tensor in self.params.items()}

    def load_state(self, arrays):
        for name, tensor in self.params.items():
            if name not in arrays:
                raise ValueError(f"checkpoint missing parameter {name}")
            if tuple(arrays[name].shape) != tensor.data.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{arrays[name].shape} vs {tensor.data.shape}")
            tensor.data = np.ascontiguousarray(arrays[name], dtype=tensor.data.dtype)
        return self


# ---------------------------------------------------------------------------
# analytic complexity accounting


def mac_breakdown(config: ModelConfig):
    """Per-frame multiply-accumulates per stage.

    Counts one MAC per connection in conv, dense, LSTM-gate and attention
    matmuls (including the talking-heads mixes); elementwise ops, softmax and
    normalization are excluded. Double the numbers for a FLOP convention.
    """
    cfg = config
    d, length = cfg.embed_dim, cfg.input_len
    macs = {}

    embed = 0
    in_ch = 2
    for _ in range(cfg.conv_layers):
        length = conv_out_len(length, cfg.kernel_size, 2, cfg.conv_padding)
        embed += length * d * in_ch * cfg.kernel_size
        in_ch = d
    macs["embed"] = embed

    if cfg.use_se:
        macs["se"] = 2 * d * (d // cfg.se_reduction)

    if cfg.use_transformer:
        seq = cfg.seq_len
        per_layer = 4 * seq * d * d          # q, k, v, o projections
        per_layer += 2 * seq * seq * d       # logits and attention-times-value
        if cfg.use_talking_heads:
            per_layer += 2 * seq * seq * cfg.heads * cfg.heads
        if cfg.use_reglu:
            per_layer += 3 * seq * d * cfg.ffn_dim
        else:
            per_layer += 2 * seq * d * cfg.mlp_ffn_dim
        macs["transformer"] = cfg.tf_layers * per_layer

    if cfg.use_lstm:
        seq, h = cfg.seq_len, cfg.lstm_hidden
        total = 0
        din = d
        for _ in range(cfg.lstm_layers):
            total += seq * 4 * (din * h + h * h)
            din = h
        macs["lstm"] = total

    widths = (cfg.classifier_in,) + CLASSIFIER_HIDDEN + (cfg.num_classes,)
    macs["classifier"] = sum(a * b for a, b in zip(widths[:-1], widths[1:]))
    return macs


def count_macs(config: ModelConfig) -> int:
    return sum(mac_breakdown(config).values())


def param_breakdown(config: ModelConfig):
    """Per-stage parameter counts grouped by manifest name prefix."""
    groups = {}
    for name, shape, _ in param_specs(config):
        stage = name.split(".")[0].rstrip("0123456789")
        if name == "pos":
            stage = "transformer"
        elif stage == "tf":
            stage = "transformer"
        elif stage == "head":
            stage = "classifier"
        groups[stage] = groups.get(stage, 0) + int(np.prod(shape))
    return groups
