"""Small pre-norm Transformer encoder over ``InputSequence`` batches."""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CapacityError, ConfigurationError, StateError, VocabError
from .numeric import tensor as T
from .numeric.tensor import Tensor
from .tokenizer import CLS_ID, INTENT_ID, slot_token

INIT_STD = 0.02


@dataclass
class EncoderConfig:
    vocab_size: int
    num_layers: int = 2
    hidden_size: int = 64
    num_heads: int = 4
    ffn_size: int = None
    max_len: int = 128
    dropout_rate: float = 0.1
    layer_norm_eps: float = 1e-5
    dtype: str = "float64"
    seed: int = 0

    def __post_init__(self):
        if self.ffn_size is None:
            self.ffn_size = 4 * self.hidden_size
        if self.hidden_size % self.num_heads:
            raise ConfigurationError("hidden_size must be divisible by num_heads")
        if self.max_len < 8:
            raise ConfigurationError("max_len must be at least 8")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError("dtype must be float32 or float64")

    def to_dict(self):
        return asdict(self)


@dataclass
class EncoderOutput:
    hidden: Tensor  # (B, n, h) or (n, h) for a single sequence
    attention_maps: list = None  # per layer: (B, heads, n, n) arrays


def init_encoder_params(config, rng=None):
    rng = np.random.default_rng(config.seed) if rng is None else rng
    dt = np.dtype(config.dtype)
    h, f = config.hidden_size, config.ffn_size

    def normal(*shape):
        return Tensor(rng.normal(0.0, INIT_STD, size=shape).astype(dt), requires_grad=True)

    def const(value, *shape):
        return Tensor(np.full(shape, value, dtype=dt), requires_grad=True)

    p = {
        "embed.token": normal(config.vocab_size, h),
        "embed.position": normal(config.max_len, h),
        "embed.segment": normal(2, h),
    }
    for i in range(config.num_layers):
        pre = f"layer{i}."
        p[pre + "ln1.gain"] = const(1.0, h)
        p[pre + "ln1.bias"] = const(0.0, h)
        p[pre + "attn.qkv.weight"] = normal(h, 3 * h)
        p[pre + "attn.qkv.bias"] = const(0.0, 3 * h)
        p[pre + "attn.out.weight"] = normal(h, h)
        p[pre + "attn.out.bias"] = const(0.0, h)
        p[pre + "ln2.gain"] = const(1.0, h)
        p[pre + "ln2.bias"] = const(0.0, h)
        p[pre + "ffn.in.weight"] = normal(h, f)
        p[pre + "ffn.in.bias"] = const(0.0, f)
        p[pre + "ffn.out.weight"] = normal(f, h)
        p[pre + "ffn.out.bias"] = const(0.0, h)
    p["final_ln.gain"] = const(1.0, h)
    p["final_ln.bias"] = const(0.0, h)
    return p


def init_conditioning_embeddings(params, variant, vocab, schema, seed):
    """Copy the [CLS] row into [INTENT]; draw fresh seeded rows for [SLOT-*]."""
    if "embed.token" not in params:
        raise StateError("base embeddings must be initialised first")
    table = params["embed.token"].data
    if variant.uses_intent:
        table[INTENT_ID] = table[CLS_ID]
    if variant.uses_categorical:
        rng = np.random.default_rng([int(seed), 0x5107])
        for spec in schema.categorical_slots:
            table[vocab.ids[slot_token(spec.key)]] = rng.normal(0.0, INIT_STD, size=table.shape[1])
    return params


def _attention(x, params, pre, key_mask, config, rng, maps):
    B, n, h = x.shape
    H = config.num_heads
    d = h // H
    qkv = x @ params[pre + "attn.qkv.weight"] + params[pre + "attn.qkv.bias"]
    qkv = qkv.reshape(B, n, 3, H, d).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = (q @ k.swap_last()) * (1.0 / math.sqrt(d))
    probs = T.softmax(scores, key_mask)
    if maps is not None:
        maps.append(probs.data.copy())
    ctx = (probs @ v).transpose(0, 2, 1, 3).reshape(B, n, h)
    out = ctx @ params[pre + "attn.out.weight"] + params[pre + "attn.out.bias"]
    return T.dropout(out, config.dropout_rate, rng)


def _ffn(x, params, pre, config, rng):
    hid = T.gelu(x @ params[pre + "ffn.in.weight"] + params[pre + "ffn.in.bias"])
    out = hid @ params[pre + "ffn.out.weight"] + params[pre + "ffn.out.bias"]
    return T.dropout(out, config.dropout_rate, rng)


def encode(config, params, token_ids, segment_ids, key_mask, train=False, rng=None, return_attention=False):
    """Batched forward pass; arrays are (B, n). Dropout only when ``train``."""
    token_ids = np.asarray(token_ids)
    B, n = token_ids.shape
    if n > config.max_len:
        raise CapacityError(f"sequence length {n} exceeds max_len {config.max_len}")
    if token_ids.size and (token_ids.min() < 0 or token_ids.max() >= config.vocab_size):
        raise VocabError("token id outside the vocabulary")
    rng = rng if train else None
    key_mask = np.asarray(key_mask, dtype=np.bool_)
    x = T.embedding(params["embed.token"], token_ids)
    x = x + params["embed.position"][:n]
    x = x + T.embedding(params["embed.segment"], segment_ids)
    x = T.dropout(x, config.dropout_rate, rng)
    eps = config.layer_norm_eps
    maps = [] if return_attention else None
    for i in range(config.num_layers):
        pre = f"layer{i}."
        x = x + _attention(T.layer_norm(x, params[pre + "ln1.gain"], params[pre + "ln1.bias"], eps), params, pre, key_mask, config, rng, maps)
        x = x + _ffn(T.layer_norm(x, params[pre + "ln2.gain"], params[pre + "ln2.bias"], eps), params, pre, config, rng)
    x = T.layer_norm(x, params["final_ln.gain"], params["final_ln.bias"], eps)
    return EncoderOutput(hidden=x, attention_maps=maps)


def encoder_forward(config, params, seq, mode="eval", rng=None, return_attention=False):
    """Encode a single ``InputSequence``; the output hidden matrix is (n, h)."""
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"mode must be 'train' or 'eval', not {mode!r}")
    ids = np.asarray(seq.token_ids)[None, :]
    out = encode(config, params, ids, np.asarray(seq.segment_ids)[None, :], np.ones_like(ids, dtype=np.bool_),
                 train=mode == "train", rng=rng, return_attention=return_attention)
    maps = [m[0] for m in out.attention_maps] if out.attention_maps is not None else None
    return EncoderOutput(hidden=out.hidden[0], attention_maps=maps)
