"""The full forecasting network and its differentiable-computation contract.

Architecture per block: LayerNorm, multi-head multi-scale learnable wavelet
mixing, linear projection back to the model width, residual sum after
trailing-end trimming to the common length, then LayerNorm + two-layer FFN
with exact (erf-based) GELU, again residual. A variate embedding maps the C
raw channels to the model width before block 1; a forecast head maps the
encoded sequence to the horizon (an affine map along time shared across
features, then a per-step affine map from model width to channels). Optional
reversible instance normalization z-scores each input window per channel and
restores the statistics on the forecast.

Every stage has a hand-written reverse-mode pass; forward caches carry the
intermediates the backward pass needs. All math is float64.

Parameters live in a flat name -> array registry so the optimizer, the
finite-difference harness, and the checkpoint format all see one ordered
namespace.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import erf

from . import wavelet_layer as wl
from .wavelet_layer import LearnableWaveletParams

__all__ = [
    "ModelConfig",
    "Checkpoint",
    "SeriesBatch",
    "layer_norm",
    "gelu",
    "embed",
    "mldb_block_forward",
    "forecast_head",
    "model_forward",
    "model_backward",
    "init_model_params",
    "block_sequence_lengths",
    "save_checkpoint",
    "load_checkpoint",
]

LAYERNORM_EPS = 1e-5
INSTANCE_NORM_EPS = 1e-5
CHECKPOINT_MAGIC = "WAVECASTCKPT"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    lookback: int
    horizon: int
    channels: int
    model_dim: int = 32
    heads: int = 4
    levels: int = 1
    depth: int = 2
    ffn_dim: int = 128
    init_sigma: float = 0.0
    instance_norm: bool = True

    def __post_init__(self):
        for name in ("lookback", "horizon", "channels", "model_dim", "heads", "levels", "depth", "ffn_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"ModelConfig.{name} must be >= 1, got {getattr(self, name)}")
        if self.model_dim % self.heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} must be divisible by heads {self.heads}"
            )
        if self.init_sigma < 0:
            raise ValueError("init_sigma must be >= 0")
        wl.level_lengths(self.lookback, self.levels)  # raises if levels too deep

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


@dataclass
class SeriesBatch:
    """A rank-3 slab of series values, [batch, time, channels]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"SeriesBatch expects [batch, time, channels], got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("SeriesBatch contains non-finite values")


@dataclass
class Checkpoint:
    config: ModelConfig
    parameters: dict[str, np.ndarray]
    format_version: int = CHECKPOINT_VERSION
    rng_seed: int = 0


def block_sequence_lengths(config: ModelConfig) -> list[int]:
    """Dry-run sizing pass: sequence length entering each block, plus the final length.

    Mixing can only lengthen a sequence (ceil halving), and the residual trim
    cuts back to the shorter side, so the length list is computed exactly
    before any array is allocated.
    """
    lengths = [config.lookback]
    t = config.lookback
    for _ in range(config.depth):
        t = min(t, wl.output_length(t, config.levels))
        lengths.append(t)
    return lengths


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """The full registry as name -> shape, in registry order."""
    D, F, C = config.model_dim, config.ffn_dim, config.channels
    t_final = block_sequence_lengths(config)[-1]
    wshape = (config.levels, config.heads, 4, config.head_dim)
    shapes: dict[str, tuple[int, ...]] = {"embed.W": (C, D), "embed.b": (D,)}
    for i in range(config.depth):
        p = f"block{i}."
        shapes.update({
            p + "ln1.gain": (D,), p + "ln1.bias": (D,),
            p + "wavelet.alpha": wshape, p + "wavelet.beta": wshape,
            p + "proj.W": (D, D), p + "proj.b": (D,),
            p + "ln2.gain": (D,), p + "ln2.bias": (D,),
            p + "ffn.W1": (D, F), p + "ffn.b1": (F,),
            p + "ffn.W2": (F, D), p + "ffn.b2": (D,),
        })
    shapes.update({
        "head.W_time": (t_final, config.horizon), "head.b_time": (config.horizon,),
        "head.W_out": (D, C), "head.b_out": (C,),
    })
    return shapes


def init_model_params(config: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded parameter registry. Linear layers draw uniform +-1/sqrt(fan_in);
    wavelet taps start at the classical DB2 values plus the configured sigma
    perturbation; norm gains are 1 and biases 0."""
    rng = np.random.default_rng(seed)
    D, F, C = config.model_dim, config.ffn_dim, config.channels
    t_final = block_sequence_lengths(config)[-1]

    params: dict[str, np.ndarray] = {}

    def linear(name: str, fan_in: int, shape: tuple[int, ...]):
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)

    linear("embed.W", C, (C, D))
    linear("embed.b", C, (D,))
    for i in range(config.depth):
        p = f"block{i}."
        params[p + "ln1.gain"] = np.ones(D)
        params[p + "ln1.bias"] = np.zeros(D)
        w = wl.init_params(
            config.levels, config.heads, config.head_dim,
            sigma=config.init_sigma, seed=int(rng.integers(0, 2**31 - 1)),
        )
        params[p + "wavelet.alpha"] = w.alpha
        params[p + "wavelet.beta"] = w.beta
        linear(p + "proj.W", D, (D, D))
        linear(p + "proj.b", D, (D,))
        params[p + "ln2.gain"] = np.ones(D)
        params[p + "ln2.bias"] = np.zeros(D)
        linear(p + "ffn.W1", D, (D, F))
        linear(p + "ffn.b1", D, (F,))
        linear(p + "ffn.W2", F, (F, D))
        linear(p + "ffn.b2", F, (D,))
    linear("head.W_time", t_final, (t_final, config.horizon))
    linear("head.b_time", t_final, (config.horizon,))
    linear("head.W_out", D, (D, C))
    linear("head.b_out", D, (C,))
    assert {k: v.shape for k, v in params.items()} == parameter_shapes(config)
    return params


def _wavelet_params(params: dict[str, np.ndarray], prefix: str, config: ModelConfig) -> LearnableWaveletParams:
    return LearnableWaveletParams(
        alpha=params[prefix + "wavelet.alpha"],
        beta=params[prefix + "wavelet.beta"],
        L=config.levels,
        H=config.heads,
        d_h=config.head_dim,
    )


# ---------------------------------------------------------------------------
# elementary layers, each as (forward -> out, cache) and backward(cache, grad)


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = LAYERNORM_EPS) -> np.ndarray:
    """Normalize each (batch, timestep) vector over the feature axis."""
    out, _ = _layer_norm_fwd(x, gain, bias, eps)
    return out


def _layer_norm_fwd(x, gain, bias, eps=LAYERNORM_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return xhat * gain + bias, (xhat, inv, gain)


def _layer_norm_bwd(cache, grad):
    xhat, inv, gain = cache
    D = xhat.shape[-1]
    dgain = (grad * xhat).reshape(-1, D).sum(axis=0)
    dbias = grad.reshape(-1, D).sum(axis=0)
    gy = grad * gain
    gx = inv / D * (D * gy - gy.sum(axis=-1, keepdims=True)
                    - xhat * (gy * xhat).sum(axis=-1, keepdims=True))
    return gx, dgain, dbias


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact Gaussian-error linear unit x * Phi(x), erf form."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    phi = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    return cdf + x * phi


def embed(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-timestep affine map of the raw variates onto the model width."""
    return x @ W + b


def _affine_bwd(x, W, grad):
    # shared backward for the timestep-wise affine maps (embed, proj, ffn halves)
    dW = np.einsum("btd,bte->de", x, grad)
    db = grad.reshape(-1, grad.shape[-1]).sum(axis=0)
    gx = grad @ W.T
    return gx, dW, db


def _block_fwd(x, params, prefix, config):
    g1, b1 = params[prefix + "ln1.gain"], params[prefix + "ln1.bias"]
    y1, ln1_cache = _layer_norm_fwd(x, g1, b1)
    wparams = _wavelet_params(params, prefix, config)
    mix_out, wcache = wl.forward_with_cache(y1, wparams)
    mixed = mix_out.mixed
    Wp, bp = params[prefix + "proj.W"], params[prefix + "proj.b"]
    O = mixed @ Wp + bp
    t_out = min(x.shape[1], O.shape[1])
    if t_out < 1:
        raise ValueError("block residual length underflow")
    z = x[:, :t_out] + O[:, :t_out]
    g2, b2 = params[prefix + "ln2.gain"], params[prefix + "ln2.bias"]
    y2, ln2_cache = _layer_norm_fwd(z, g2, b2)
    W1, c1 = params[prefix + "ffn.W1"], params[prefix + "ffn.b1"]
    W2, c2 = params[prefix + "ffn.W2"], params[prefix + "ffn.b2"]
    hpre = y2 @ W1 + c1
    hact = gelu(hpre)
    out = z + (hact @ W2 + c2)
    cache = (x.shape[1], t_out, ln1_cache, y1, wcache, wparams, mixed, ln2_cache, y2, hpre, hact)
    return out, cache


def _block_bwd(grad, cache, params, prefix, config):
    t_in, t_out, ln1_cache, y1, wcache, wparams, mixed, ln2_cache, y2, hpre, hact = cache
    grads: dict[str, np.ndarray] = {}
    W1, W2 = params[prefix + "ffn.W1"], params[prefix + "ffn.W2"]
    Wp = params[prefix + "proj.W"]

    # out = z + ffn(ln2(z))
    ghact, grads[prefix + "ffn.W2"], grads[prefix + "ffn.b2"] = _affine_bwd(hact, W2, grad)
    ghpre = ghact * _gelu_grad(hpre)
    gy2, grads[prefix + "ffn.W1"], grads[prefix + "ffn.b1"] = _affine_bwd(y2, W1, ghpre)
    gz_ln, grads[prefix + "ln2.gain"], grads[prefix + "ln2.bias"] = _layer_norm_bwd(ln2_cache, gy2)
    gz = grad + gz_ln

    # z = trim(x) + trim(proj(mixed))
    B, _, D = gz.shape
    t_mix = mixed.shape[1]
    gO = np.zeros((B, t_mix, D))
    gO[:, :t_out] = gz
    gmixed, grads[prefix + "proj.W"], grads[prefix + "proj.b"] = _affine_bwd(mixed, Wp, gO)
    gy1, ga, gb = wl.backward_from_cache(gmixed, wparams, wcache)
    grads[prefix + "wavelet.alpha"] = ga
    grads[prefix + "wavelet.beta"] = gb
    gx_ln, grads[prefix + "ln1.gain"], grads[prefix + "ln1.bias"] = _layer_norm_bwd(ln1_cache, gy1)

    gx = gx_ln
    gx[:, :t_out] += gz
    return gx, grads


def mldb_block_forward(x: np.ndarray, params: dict[str, np.ndarray], config: ModelConfig,
                       prefix: str = "block0.") -> np.ndarray:
    """One mixing block: LN -> wavelet heads -> projection -> trimmed residual -> FFN."""
    out, _ = _block_fwd(np.asarray(x, dtype=np.float64), params, prefix, config)
    return out


def forecast_head(x: np.ndarray, W_time: np.ndarray, W_out: np.ndarray,
                  b_time: np.ndarray, b_out: np.ndarray) -> np.ndarray:
    """Affine map along time (shared across features), then per-step feature map."""
    u = np.einsum("btd,tp->bpd", x, W_time) + b_time[None, :, None]
    return u @ W_out + b_out


def _head_fwd(x, params):
    W_time, b_time = params["head.W_time"], params["head.b_time"]
    W_out, b_out = params["head.W_out"], params["head.b_out"]
    u = np.einsum("btd,tp->bpd", x, W_time) + b_time[None, :, None]
    y = u @ W_out + b_out
    return y, (x, u, W_time, W_out)


def _head_bwd(grad, cache):
    x, u, W_time, W_out = cache
    grads = {
        "head.W_out": np.einsum("bpd,bpc->dc", u, grad),
        "head.b_out": grad.reshape(-1, grad.shape[-1]).sum(axis=0),
    }
    gu = grad @ W_out.T
    grads["head.W_time"] = np.einsum("btd,bpd->tp", x, gu)
    grads["head.b_time"] = gu.sum(axis=(0, 2))
    gx = np.einsum("bpd,tp->btd", gu, W_time)
    return gx, grads


def _instance_norm_fwd(x):
    mu = x.mean(axis=1, keepdims=True)
    s = np.sqrt(x.var(axis=1, keepdims=True) + INSTANCE_NORM_EPS)
    return (x - mu) / s, (x, mu, s)


def _check_finite(arr: np.ndarray, stage: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise RuntimeError(f"non-finite values detected at stage '{stage}'")


def model_forward(batch, params: dict[str, np.ndarray], config: ModelConfig,
                  return_cache: bool = False):
    """Forecast [B, horizon, channels] from a batch of lookback windows.

    Set ``return_cache=True`` to retain the intermediates that
    :func:`model_backward` consumes.
    """
    x = batch.values if isinstance(batch, SeriesBatch) else np.asarray(batch, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != config.lookback or x.shape[2] != config.channels:
        raise ValueError(
            f"input shape {x.shape} does not match [B, {config.lookback}, {config.channels}]"
        )

    in_cache = None
    if config.instance_norm:
        x, in_cache = _instance_norm_fwd(x)
        _check_finite(x, "instance_norm")

    h = embed(x, params["embed.W"], params["embed.b"])
    _check_finite(h, "embed")
    embed_in = x

    block_caches = []
    for i in range(config.depth):
        h, cache = _block_fwd(h, params, f"block{i}.", config)
        _check_finite(h, f"block{i}")
        block_caches.append(cache)

    y, head_cache = _head_fwd(h, params)
    _check_finite(y, "forecast_head")

    if config.instance_norm:
        _, mu, s = in_cache
        y_out = y * s + mu
        _check_finite(y_out, "denormalize")
    else:
        y_out = y

    if return_cache:
        return y_out, (embed_in, block_caches, head_cache, in_cache, y)
    return y_out


def model_backward(batch, params: dict[str, np.ndarray], config: ModelConfig,
                   loss_grad: np.ndarray, cache=None):
    """Gradients of a scalar loss for every registry entry plus the input batch.

    ``loss_grad`` is dLoss/dForecast, shaped like the forward output. Returns
    (grads, grad_input). Pass the cache from ``model_forward(...,
    return_cache=True)`` to reuse retained intermediates.
    """
    if cache is None:
        _, cache = model_forward(batch, params, config, return_cache=True)
    embed_in, block_caches, head_cache, in_cache, y_norm = cache
    loss_grad = np.asarray(loss_grad, dtype=np.float64)
    if loss_grad.shape != (embed_in.shape[0], config.horizon, config.channels):
        raise ValueError(f"loss gradient shape {loss_grad.shape} does not match the forecast")

    grads: dict[str, np.ndarray] = {}
    if config.instance_norm:
        x_raw, mu, s = in_cache
        gy = loss_grad * s
        g_mu = loss_grad.sum(axis=1, keepdims=True)
        g_s = (loss_grad * y_norm).sum(axis=1, keepdims=True)
    else:
        gy = loss_grad

    gh, head_grads = _head_bwd(gy, head_cache)
    grads.update(head_grads)

    for i in range(config.depth - 1, -1, -1):
        gh, bgrads = _block_bwd(gh, block_caches[i], params, f"block{i}.", config)
        grads.update(bgrads)

    gx_norm, gW, gb = _affine_bwd(embed_in, params["embed.W"], gh)
    grads["embed.W"] = gW
    grads["embed.b"] = gb

    if config.instance_norm:
        # x_norm = (x - mu)/s feeds the network; mu and s also re-enter at the
        # de-normalization, so fold all three paths into the input gradient.
        T = x_raw.shape[1]
        xc = x_raw - mu
        g_mu = g_mu - gx_norm.sum(axis=1, keepdims=True) / s
        g_s = g_s - (gx_norm * xc).sum(axis=1, keepdims=True) / (s * s)
        grad_input = gx_norm / s + g_mu / T + g_s * xc / (T * s)
    else:
        grad_input = gx_norm

    return grads, grad_input


# ---------------------------------------------------------------------------
# checkpoint container: plain-text header + little-endian float64 payload


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    manifest = []
    chunks = []
    offset = 0
    for name, arr in ckpt.parameters.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format_version": ckpt.format_version,
        "rng_seed": ckpt.rng_seed,
        "config": asdict(ckpt.config),
        "manifest": manifest,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, indent=1).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {len(header_bytes)}\n".encode("ascii"))
        fh.write(header_bytes)
        fh.write(b"\n")
        fh.write(payload)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic_line = fh.readline().decode("ascii", errors="replace").split()
        if len(magic_line) != 3 or magic_line[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, header_len = int(magic_line[1]), int(magic_line[2])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        fh.read(1)  # newline between header and payload
        payload = fh.read()
    if len(payload) != header["payload_bytes"]:
        raise ValueError(
            f"{path}: checkpoint integrity error, payload has {len(payload)} bytes, "
            f"header says {header['payload_bytes']}"
        )
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise ValueError(f"{path}: checkpoint integrity error, payload checksum mismatch")
    config = ModelConfig(**header["config"])
    expected = parameter_shapes(config)
    parameters: dict[str, np.ndarray] = {}
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        if entry["name"] not in expected or expected[entry["name"]] != shape:
            raise ValueError(
                f"{path}: parameter '{entry['name']}' with shape {shape} does not "
                f"match the checkpoint's own config"
            )
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        parameters[entry["name"]] = arr.reshape(shape).astype(np.float64)
    if set(parameters) != set(expected):
        missing = sorted(set(expected) - set(parameters))
        raise ValueError(f"{path}: checkpoint is missing parameters {missing[:3]}")
    return Checkpoint(
        config=config,
        parameters=parameters,
        format_version=header["format_version"],
        rng_seed=header["rng_seed"],
    )
