"""Multistream TDNN-F acoustic model: configuration, presets, forward and
backward passes, parameter audit and checkpoints.

Topology::

    features (T x B)
      -> 2-D 3x3 conv stack (ReLU, height stride 2 on flagged layers)
      -> keep every ``subsample_factor``-th frame, flatten (C * H) per frame
      -> undilated 1-D conv, taps {-1, 0, +1} (ReLU)               = h
      -> K parallel streams of N_k TDNN-F layers with dilation tau_k  = z_k
      -> concat -> FC (ReLU) -> FC (ReLU) -> output affine -> softmax

A TDNN-F layer is a linear bottleneck factor with taps {-tau, 0} followed by an
affine layer with taps {0, +tau} and a ReLU, so each layer reaches tau frames
either side and a stream of N layers sees 2 * N * tau subsampled frames.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .kernels import (
    LayerParams,
    affine_backward,
    affine_relu,
    conv1d_dilated,
    conv1d_dilated_backward,
    conv2d_3x3,
    conv2d_3x3_backward,
    glorot_uniform,
    relu,
    relu_backward,
    softmax_rows,
)

FACTOR_CONTEXT = (-1, 0)
AFFINE_CONTEXT = (0, 1)
PRESTREAM_CONTEXT = (-1, 0, 1)
CHECKPOINT_MAGIC = b"MSTR"
BIAS_INIT = 0.01


def receptive_field_ms(l: float, dilation: int, num_layers: int) -> float:
    """Receptive field of the top layer of a stream: ``2 * l * tau * N``."""
    if l <= 0 or dilation <= 0 or num_layers <= 0:
        raise ValueError("receptive field arguments must be positive")
    return 2 * l * dilation * num_layers


@dataclass(frozen=True)
class StreamSpec:
    dilation: int
    num_layers: int
    hidden_dim: int = 512
    bottleneck_dim: int = 128

    def __post_init__(self):
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")
        if self.num_layers < 1:
            raise ValueError("a stream needs at least one layer")
        if self.hidden_dim < 1 or self.bottleneck_dim < 1:
            raise ValueError("dimensions must be >= 1")
        if self.bottleneck_dim >= self.hidden_dim:
            raise ValueError("bottleneck_dim must be smaller than hidden_dim")


DEFAULT_FRONTEND = ((32, False), (32, True), (64, False), (64, True), (128, False), (128, True))


@dataclass(frozen=True)
class MstreConfig:
    streams: tuple[StreamSpec, ...]
    input_bands: int = 40
    frontend_layers: tuple[tuple[int, bool], ...] = DEFAULT_FRONTEND
    pre_stream_conv_dim: int = 512
    fc_dim: int = 512
    num_states: int = 42
    frame_length_ms: float = 30.0
    subsample_factor: int = 3

    def __post_init__(self):
        streams = tuple(s if isinstance(s, StreamSpec) else StreamSpec(*s) for s in self.streams)
        object.__setattr__(self, "streams", streams)
        object.__setattr__(self, "frontend_layers",
                           tuple((int(c), bool(sub)) for c, sub in self.frontend_layers))
        if not streams:
            raise ValueError("at least one stream is required")
        dilations = [s.dilation for s in streams]
        if len(set(dilations)) != len(dilations):
            raise ValueError("streams must be distinct")
        if self.num_states < 2:
            raise ValueError("num_states must be >= 2")
        if self.subsample_factor < 1 or self.input_bands < 1:
            raise ValueError("subsample_factor and input_bands must be >= 1")
        if not math.isclose(self.frame_length_ms, 10.0 * self.subsample_factor):
            raise ValueError("frame_length_ms must equal 10 ms x subsample_factor")

    @property
    def frontend_height(self) -> int:
        h = self.input_bands
        for _, sub in self.frontend_layers:
            if sub:
                h = (h + 1) // 2
        return h

    @property
    def frontend_channels(self) -> int:
        return self.frontend_layers[-1][0] if self.frontend_layers else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frontend_layers"] = [list(x) for x in self.frontend_layers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MstreConfig":
        d = dict(d)
        d["streams"] = tuple(StreamSpec(**s) for s in d["streams"])
        d["frontend_layers"] = tuple(tuple(x) for x in d["frontend_layers"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _preset_stream(dilation: int, layers: int, dim: int) -> StreamSpec:
    return StreamSpec(dilation, layers, dim, round(dim / 4))


PRESET_STREAMS = {
    **{f"M_single_{n}": ((3, n, 512),) for n in (7, 8, 9, 10)},
    "M_multi_9a": ((3, 9, 512), (6, 9, 512), (9, 9, 512)),
    "M_multi_9b": ((3, 9, 512), (6, 4, 512), (9, 3, 512)),
    "M_multi_9c": ((3, 9, 512), (6, 9, 256), (9, 9, 172)),
    "M_multi_9d": ((3, 9, 512), (6, 4, 256), (9, 3, 172)),
}
PRESETS = tuple(PRESET_STREAMS) + ("tiny",)


def preset_config(name: str, **overrides) -> MstreConfig:
    """Named topology.  ``tiny`` is a desk-test model with a few thousand weights."""
    if name == "tiny":
        base = MstreConfig(
            streams=(StreamSpec(1, 2, 12, 4), StreamSpec(2, 1, 12, 4)),
            input_bands=8,
            frontend_layers=((3, False), (3, True)),
            pre_stream_conv_dim=12,
            fc_dim=16,
            num_states=8,
        )
    elif name in PRESET_STREAMS:
        base = MstreConfig(streams=tuple(_preset_stream(*s) for s in PRESET_STREAMS[name]))
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return replace(base, **overrides) if overrides else base


@dataclass
class MstreModel:
    config: MstreConfig
    params: dict[str, np.ndarray] = field(repr=False)

    def layer(self, name: str) -> LayerParams:
        return LayerParams(self.params[f"{name}.weight"], self.params.get(f"{name}.bias"))

    def copy(self) -> "MstreModel":
        return MstreModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def factor_names(self) -> list[str]:
        return [k for k in self.params if k.endswith(".factor.weight")]


def param_shapes(config: MstreConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Every parameter array in declaration order."""
    shapes = []
    c_in = 1
    for i, (c_out, _) in enumerate(config.frontend_layers):
        shapes += [(f"frontend.{i}.weight", (c_out, c_in, 3, 3)), (f"frontend.{i}.bias", (c_out,))]
        c_in = c_out
    flat = config.frontend_channels * config.frontend_height
    p = config.pre_stream_conv_dim
    shapes += [("prestream.weight", (3, flat, p)), ("prestream.bias", (p,))]
    for k, s in enumerate(config.streams):
        d_in = p
        for j in range(s.num_layers):
            pre = f"stream{k}.layer{j}"
            shapes += [
                (f"{pre}.factor.weight", (2, d_in, s.bottleneck_dim)),
                (f"{pre}.affine.weight", (2, s.bottleneck_dim, s.hidden_dim)),
                (f"{pre}.affine.bias", (s.hidden_dim,)),
            ]
            d_in = s.hidden_dim
    concat = sum(s.hidden_dim for s in config.streams)
    f = config.fc_dim
    shapes += [
        ("head.fc1.weight", (concat, f)), ("head.fc1.bias", (f,)),
        ("head.fc2.weight", (f, f)), ("head.fc2.bias", (f,)),
        ("head.out.weight", (f, config.num_states)), ("head.out.bias", (config.num_states,)),
    ]
    return shapes


def build_model(config: MstreConfig | str, seed: int = 0) -> MstreModel:
    """Glorot-uniform weights and small positive biases, seeded.

    The bias offset keeps zero-padded frames off the ReLU kink.
    """
    if isinstance(config, str):
        config = preset_config(config)
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config):
        if name.endswith(".bias"):
            params[name] = np.full(shape, BIAS_INIT)
            continue
        if len(shape) == 4:
            fan_in, fan_out = shape[1] * 9, shape[0] * 9
        elif len(shape) == 3:
            fan_in, fan_out = shape[0] * shape[1], shape[0] * shape[2]
        else:
            fan_in, fan_out = shape
        params[name] = glorot_uniform(rng, shape, fan_in, fan_out)
    return MstreModel(config, params)


def count_params(model: MstreModel) -> int:
    return int(sum(v.size for v in model.params.values()))


def param_audit(config: MstreConfig) -> list[tuple[str, int]]:
    """Closed-form parameter counts per submodule.

    * conv layer i: ``9 * C_{i-1} * C_i + C_i`` with ``C_0 = 1``
    * pre-stream conv: ``3 * (C_last * H_last) * P + P``
    * TDNN-F layer: ``2 * D_in * b + 2 * b * d + d``, ``D_in = P`` for the
      first layer of a stream and ``d`` after that
    * head: ``(sum d_k) * F + F + F * F + F + F * S + S``
    """
    rows = []
    c_in = 1
    front = 0
    for c_out, _ in config.frontend_layers:
        front += 9 * c_in * c_out + c_out
        c_in = c_out
    rows.append(("frontend", front))
    p = config.pre_stream_conv_dim
    rows.append(("prestream", 3 * config.frontend_channels * config.frontend_height * p + p))
    for k, s in enumerate(config.streams):
        b, d = s.bottleneck_dim, s.hidden_dim
        first = 2 * p * b + 2 * b * d + d
        rest = 2 * d * b + 2 * b * d + d
        rows.append((f"stream{k}(tau={s.dilation},N={s.num_layers},dim={d})",
                     first + (s.num_layers - 1) * rest))
    f, S = config.fc_dim, config.num_states
    concat = sum(s.hidden_dim for s in config.streams)
    rows.append(("head", concat * f + f + f * f + f + f * S + S))
    return rows


def _as_frames(features) -> np.ndarray:
    return np.asarray(getattr(features, "frames", features), dtype=np.float64)


def _frontend(model: MstreModel, frames: np.ndarray, cache: dict | None):
    cfg = model.config
    if frames.ndim != 2 or frames.shape[1] != cfg.input_bands:
        raise ValueError(f"expected features with {cfg.input_bands} bands, got shape {frames.shape}")
    x = frames.T[None]
    acts = [x]
    for i, (_, sub) in enumerate(cfg.frontend_layers):
        x = relu(conv2d_3x3(x, model.layer(f"frontend.{i}"), sub))
        acts.append(x)
    full_T = x.shape[2]
    x = x[:, :, ::cfg.subsample_factor]
    flat = np.ascontiguousarray(x.transpose(2, 0, 1).reshape(x.shape[2], -1))
    h = relu(conv1d_dilated(flat, model.layer("prestream"), 1, PRESTREAM_CONTEXT))
    if cache is not None:
        cache.update(front_acts=acts, front_shape=x.shape, full_T=full_T, flat=flat, h=h)
    return h


def frontend_forward(model: MstreModel, features) -> np.ndarray:
    """Compact embeddings ``h``: ``ceil(T / subsample_factor)`` rows of width P."""
    return _frontend(model, _as_frames(features), None)


def _stream(model: MstreModel, h: np.ndarray, k: int, cache: list | None):
    cfg = model.config
    if not 0 <= k < len(cfg.streams):
        raise IndexError(f"stream index {k} out of range for {len(cfg.streams)} streams")
    s = cfg.streams[k]
    x = h
    for j in range(s.num_layers):
        pre = f"stream{k}.layer{j}"
        u = conv1d_dilated(x, model.layer(f"{pre}.factor"), s.dilation, FACTOR_CONTEXT)
        y = relu(conv1d_dilated(u, model.layer(f"{pre}.affine"), s.dilation, AFFINE_CONTEXT))
        if cache is not None:
            cache.append((x, u, y))
        x = y
    return x


def stream_forward(model: MstreModel, h: np.ndarray, stream_index: int) -> np.ndarray:
    return _stream(model, h, stream_index, None)


def _head_logits(model: MstreModel, zs, cache: dict | None):
    lengths = {z.shape[0] for z in zs}
    if len(lengths) != 1:
        raise ValueError(f"stream outputs disagree on time length: {sorted(lengths)}")
    cat = np.concatenate(zs, axis=1)
    a1 = affine_relu(cat, model.layer("head.fc1"), True)
    a2 = affine_relu(a1, model.layer("head.fc2"), True)
    logits = affine_relu(a2, model.layer("head.out"), False)
    if cache is not None:
        cache.update(cat=cat, a1=a1, a2=a2)
    return logits


def head_forward(model: MstreModel, stream_outputs) -> np.ndarray:
    return softmax_rows(_head_logits(model, list(stream_outputs), None))


def forward_logits(model: MstreModel, features, cache: dict | None = None) -> np.ndarray:
    h = _frontend(model, _as_frames(features), cache)
    zs = []
    for k in range(len(model.config.streams)):
        sc = [] if cache is not None else None
        zs.append(_stream(model, h, k, sc))
        if cache is not None:
            cache[f"stream{k}"] = sc
    return _head_logits(model, zs, cache)


def model_forward(model: MstreModel, features) -> np.ndarray:
    """State posteriors, one row per subsampled frame."""
    return softmax_rows(forward_logits(model, features))


def backward(model: MstreModel, cache: dict, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given d loss / d logits."""
    cfg = model.config
    grads: dict[str, np.ndarray] = {}

    def put(name, gw, gb):
        grads[f"{name}.weight"] = gw
        if gb is not None:
            grads[f"{name}.bias"] = gb

    g, gw, gb = affine_backward(cache["a2"], model.layer("head.out"), grad_logits)
    put("head.out", gw, gb)
    g = relu_backward(cache["a2"], g)
    g, gw, gb = affine_backward(cache["a1"], model.layer("head.fc2"), g)
    put("head.fc2", gw, gb)
    g = relu_backward(cache["a1"], g)
    g, gw, gb = affine_backward(cache["cat"], model.layer("head.fc1"), g)
    put("head.fc1", gw, gb)

    grad_h = np.zeros_like(cache["h"])
    col = 0
    for k, s in enumerate(cfg.streams):
        gz = g[:, col:col + s.hidden_dim]
        col += s.hidden_dim
        for j in range(s.num_layers - 1, -1, -1):
            pre = f"stream{k}.layer{j}"
            x, u, y = cache[f"stream{k}"][j]
            gz = relu_backward(y, gz)
            gu, gw, gb = conv1d_dilated_backward(u, model.layer(f"{pre}.affine"), s.dilation,
                                                 AFFINE_CONTEXT, gz)
            put(f"{pre}.affine", gw, gb)
            gz, gw, _ = conv1d_dilated_backward(x, model.layer(f"{pre}.factor"), s.dilation,
                                                FACTOR_CONTEXT, gu)
            put(f"{pre}.factor", gw, None)
        grad_h += gz

    g = relu_backward(cache["h"], grad_h)
    g, gw, gb = conv1d_dilated_backward(cache["flat"], model.layer("prestream"), 1,
                                        PRESTREAM_CONTEXT, g)
    put("prestream", gw, gb)
    C, H, Tsub = cache["front_shape"]
    acts = cache["front_acts"]
    g_sub = g.reshape(Tsub, C, H).transpose(1, 2, 0)
    g = np.zeros((C, H, cache["full_T"]))
    g[:, :, ::cfg.subsample_factor] = g_sub
    for i in range(len(cfg.frontend_layers) - 1, -1, -1):
        g = relu_backward(acts[i + 1], g)
        g, gw, gb = conv2d_3x3_backward(acts[i], model.layer(f"frontend.{i}"),
                                        cfg.frontend_layers[i][1], g)
        put(f"frontend.{i}", gw, gb)
    return {name: grads[name] for name in model.params}


def save_checkpoint(path, model: MstreModel) -> None:
    text = model.config.to_json().encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC + struct.pack("<I", len(text)) + text)
        for name, _ in param_shapes(model.config):
            f.write(model.params[name].astype("<f4").tobytes())


def load_checkpoint(path) -> MstreModel:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an MSTR checkpoint")
    (n,) = struct.unpack("<I", data[4:8])
    config = MstreConfig.from_dict(json.loads(data[8:8 + n].decode("utf-8")))
    offset = 8 + n
    params = {}
    for name, shape in param_shapes(config):
        count = int(np.prod(shape))
        blob = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        params[name] = blob.astype(np.float64).reshape(shape)
        offset += 4 * count
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    return MstreModel(config, params)
