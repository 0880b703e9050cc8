"""Slot-gate, span, intent and categorical heads plus the multi-task loss family."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NoSpanError, SchemaError
from .numeric import kernels
from .numeric import tensor as T
from .numeric.tensor import Tensor
from .tokenizer import InputSequence, Variant

GATE_CLASSES = ("none", "dontcare", "span")
CAT_SPECIAL = ("none", "dontcare")
MAX_SPAN_LEN = 10


@dataclass
class LossWeights:
    alpha: float = 0.5
    beta_intent: float = 0.3
    beta_cat: float = None  # None: derive from the schema with fixed_beta_cat
    alpha_joint: float = 0.5

    def __post_init__(self):
        for name in ("alpha", "beta_intent", "beta_cat", "alpha_joint"):
            w = getattr(self, name)
            if w is not None and not 0.0 <= w <= 1.0:
                raise ConfigurationError(f"loss weight {name}={w} outside [0, 1]")

    def resolved(self, schema):
        if self.beta_cat is not None:
            return self
        return LossWeights(self.alpha, self.beta_intent, fixed_beta_cat(schema), self.alpha_joint)


def fixed_beta_cat(schema):
    """Share of categorical slots among all slots."""
    total = len(schema.slots)
    if total == 0:
        raise SchemaError("schema has no slots")
    return len(schema.categorical_slots) / total


def span_slot_keys(schema, variant):
    """Slots handled by gate + span heads: all of them unless categorical heads are active."""
    if variant.uses_categorical:
        return [s.key for s in schema.span_slots]
    return list(schema.slot_keys)


def cat_classes(spec):
    return list(CAT_SPECIAL) + list(spec.values)


def init_head_params(schema, variant, hidden_size, rng, dtype="float64", zero=False):
    dt = np.dtype(dtype)
    h = hidden_size

    def weight(*shape):
        if zero:
            return Tensor(np.zeros(shape, dtype=dt), requires_grad=True)
        return Tensor(rng.normal(0.0, 0.02, size=shape).astype(dt), requires_grad=True)

    def bias(*shape):
        return Tensor(np.zeros(shape, dtype=dt), requires_grad=True)

    p = {}
    for key in span_slot_keys(schema, variant):
        p[f"gate.{key}.weight"] = weight(h, len(GATE_CLASSES))
        p[f"gate.{key}.bias"] = bias(len(GATE_CLASSES))
        p[f"span_start.{key}.weight"] = weight(h, 1)
        p[f"span_start.{key}.bias"] = bias(1)
        p[f"span_end.{key}.weight"] = weight(h, 1)
        p[f"span_end.{key}.bias"] = bias(1)
    if variant.uses_intent:
        p["intent.weight"] = weight(h, len(schema.intents))
        p["intent.bias"] = bias(len(schema.intents))
    if variant.uses_categorical:
        for spec in schema.categorical_slots:
            c = len(cat_classes(spec))
            p[f"cat.{spec.key}.weight"] = weight(h, c)
            p[f"cat.{spec.key}.bias"] = bias(c)
    return p


@dataclass
class HeadOutputs:
    gate_probs: dict = field(default_factory=dict)     # key -> (B, 3)
    start_logits: dict = field(default_factory=dict)   # key -> (B, n)
    end_logits: dict = field(default_factory=dict)
    start_probs: dict = field(default_factory=dict)
    end_probs: dict = field(default_factory=dict)
    intent_probs: Tensor = None                        # (B, M)
    cat_probs: dict = None                             # key -> (B, |V|+2)


def _linear(x, params, name):
    return x @ params[name + ".weight"] + params[name + ".bias"]


def heads_forward(variant, output, seq, schema, params):
    """Run every head active for ``variant``.

    ``output`` is an ``EncoderOutput`` (or its hidden ``Tensor``) and ``seq``
    an ``InputSequence`` or a collated ``Batch``; single sequences get a
    batch dimension of 1.
    """
    from .batching import collate

    hidden = output.hidden if hasattr(output, "hidden") else output
    batch = collate([seq]) if isinstance(seq, InputSequence) else seq
    if hidden.ndim == 2:
        hidden = hidden.reshape(1, *hidden.shape)
    if hidden.shape[:2] != batch.token_ids.shape:
        raise ConfigurationError("encoder output rows do not match the input sequence")
    if variant.uses_intent != (batch.intent_index is not None):
        raise ConfigurationError(f"sequence layout does not match variant {variant.kind.value}: [INTENT] presence differs")
    if variant.uses_categorical != (batch.categorical_indices is not None):
        raise ConfigurationError(f"sequence layout does not match variant {variant.kind.value}: [SLOT-*] presence differs")

    B, n, h = hidden.shape
    out = HeadOutputs()
    cls = hidden[:, batch.cls_index, :]
    for key in span_slot_keys(schema, variant):
        out.gate_probs[key] = T.softmax(_linear(cls, params, f"gate.{key}"))
        s = _linear(hidden, params, f"span_start.{key}").reshape(B, n)
        e = _linear(hidden, params, f"span_end.{key}").reshape(B, n)
        out.start_logits[key] = s
        out.end_logits[key] = e
        out.start_probs[key] = T.softmax(s, batch.span_mask)
        out.end_probs[key] = T.softmax(e, batch.span_mask)
    if variant.uses_intent:
        out.intent_probs = T.softmax(_linear(hidden[:, batch.intent_index, :], params, "intent"))
    if variant.uses_categorical:
        out.cat_probs = {}
        for spec in schema.categorical_slots:
            row = hidden[:, batch.categorical_indices[spec.key], :]
            out.cat_probs[spec.key] = T.softmax(_linear(row, params, f"cat.{spec.key}"))
    return out


def decode_span(start_logits, end_logits, span_mask, max_span_len=MAX_SPAN_LEN, regions=None):
    """Best ``(i, j)`` with ``i <= j <= i + max_span_len`` and both positions masked in.

    Maximises ``start[i] + end[j]``; ties go to the smallest ``i`` then the
    smallest ``j``. With ``regions`` given, both ends must share a region.
    """
    s = np.asarray(start_logits, dtype=np.float64)
    e = np.asarray(end_logits, dtype=np.float64)
    m = np.asarray(span_mask, dtype=np.bool_)
    if not (s.shape == e.shape == m.shape) or s.ndim != 1:
        raise ValueError("start, end and mask must be vectors of equal length")
    r = np.zeros(s.shape, dtype=np.int64) if regions is None else np.asarray(regions, dtype=np.int64)
    res = kernels.decode_spans(s[None, :], e[None, :], m[None, :], r[None, :], int(max_span_len))[0]
    if res[0] < 0:
        raise NoSpanError("no position is eligible as a span endpoint")
    return int(res[0]), int(res[1])


def combine_slot(l_gate, l_start, l_end, alpha):
    """``alpha * gate + (1 - alpha) / 2 * (start + end)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError("alpha must lie in [0, 1]")
    return alpha * l_gate + (1.0 - alpha) / 2.0 * (l_start + l_end)


def _pooled_nll(probs_by_key, targets, weights):
    """Cross-entropy averaged over every (example, key) pair with non-zero weight."""
    total = float(np.sum(weights))
    if total == 0.0:
        return Tensor(np.zeros((), dtype=next(iter(probs_by_key.values())).dtype))
    acc = None
    for k, key in enumerate(probs_by_key):
        w = weights[:, k]
        wk = float(w.sum())
        if wk == 0.0:
            continue
        term = T.nll(probs_by_key[key], targets[:, k], w) * (wk / total)
        acc = term if acc is None else acc + term
    return acc


def slot_components(gate_probs, start_probs, end_probs, gold):
    """Gate, span-start and span-end losses.

    ``gold`` holds (B, S) arrays ``gate``, ``start``, ``end`` and
    ``span_weight``; span terms only see examples whose gold gate is span.
    """
    gate_w = np.ones(gold["gate"].shape)
    l_gate = _pooled_nll(gate_probs, gold["gate"], gate_w)
    l_start = _pooled_nll(start_probs, gold["start"], gold["span_weight"])
    l_end = _pooled_nll(end_probs, gold["end"], gold["span_weight"])
    return l_gate, l_start, l_end


def loss_slot(gate_probs, start_probs, end_probs, gold, alpha):
    if not gate_probs:
        return Tensor(np.zeros(()))
    return combine_slot(*slot_components(gate_probs, start_probs, end_probs, gold), alpha)


def loss_intent(intent_probs, gold_intent):
    return T.nll(intent_probs, gold_intent)


def loss_cat(cat_probs, gold_cat):
    keys = list(cat_probs)
    return _pooled_nll(cat_probs, gold_cat, np.ones((gold_cat.shape[0], len(keys))))


def loss_variant(variant, components, weights):
    """Compose the per-variant objective from ``components``.

    ``components`` maps ``"slot"``, ``"intent"``, ``"cat"`` to floats or
    scalar Tensors. ``weights.beta_cat`` must already be resolved.
    """
    kind = variant.kind if hasattr(variant, "kind") else Variant.parse(variant)

    def need(name):
        if components.get(name) is None:
            raise ConfigurationError(f"variant {kind.value} needs the {name!r} loss component")
        return components[name]

    def bdst_i():
        b = weights.beta_intent
        return b * need("intent") + (1.0 - b) * need("slot")

    def bdst_c():
        b = weights.beta_cat
        if b is None:
            raise ConfigurationError("beta_cat is unresolved")
        if b == 0.0:
            return need("slot")
        if b == 1.0:
            return need("cat")
        return b * need("cat") + (1.0 - b) * need("slot")

    if kind is Variant.BASELINE:
        return need("slot")
    if kind is Variant.BDST_I:
        return bdst_i()
    if kind is Variant.BDST_C:
        return bdst_c()
    a = weights.alpha_joint
    return a * bdst_i() + (1.0 - a) * bdst_c()
