"""End-to-end tracker: example building, forward/loss, inference and persistence."""

import logging
from dataclasses import dataclass

import numpy as np

from . import heads as H
from .batching import collate
from .corpus import DONTCARE, GATE_DONTCARE, GATE_VALUE, Schema, normalize_value
from .encoder import EncoderConfig, encode, init_conditioning_embeddings, init_encoder_params
from .errors import CheckpointError, ConfigurationError, InvalidSpanError
from .metrics import TurnPrediction
from .numeric import checkpoint
from .numeric.tensor import Tensor, no_grad
from .tokenizer import ModelVariant, Variant, Vocabulary, build_input_sequence, detokenize_span

log = logging.getLogger(__name__)


@dataclass
class Example:
    seq: object
    turn: object
    dialogue_id: str
    turn_index: int


def turn_histories(dialogue):
    """Yield ``(turn_index, turn, history)`` with the chronological prior utterances."""
    history = []
    for ti, turn in enumerate(dialogue.turns):
        if turn.sys:
            history.append(("sys", turn.sys))
        yield ti, turn, list(history)
        history.append(("usr", turn.usr))


class DSTModel:
    """Encoder plus the heads active for one model variant."""

    def __init__(self, schema, vocab, variant, config, weights=None, params=None, max_span_len=H.MAX_SPAN_LEN,
                 zero_heads=False):
        self.schema = schema
        self.vocab = vocab
        self.variant = variant if isinstance(variant, ModelVariant) else ModelVariant(variant)
        self.config = config
        self.weights = (weights or H.LossWeights()).resolved(schema)
        self.max_span_len = max_span_len
        self.span_keys = H.span_slot_keys(schema, self.variant)
        self.cat_specs = schema.categorical_slots if self.variant.uses_categorical else []
        if config.vocab_size != len(vocab):
            raise ConfigurationError(f"config vocab_size {config.vocab_size} != vocabulary size {len(vocab)}")
        if params is None:
            rng = np.random.default_rng(config.seed)
            params = init_encoder_params(config, rng)
            init_conditioning_embeddings(params, self.variant, vocab, schema, config.seed)
            params.update(H.init_head_params(schema, self.variant, config.hidden_size, rng, config.dtype, zero=zero_heads))
        self.params = params

    @classmethod
    def create(cls, schema, vocab, variant, weights=None, **encoder_kwargs):
        config = EncoderConfig(vocab_size=len(vocab), **encoder_kwargs)
        return cls(schema, vocab, variant, config, weights)

    # -- data ----------------------------------------------------------
    def build_sequence(self, history, user_utterance):
        return build_input_sequence(self.variant, self.schema, self.vocab, history, user_utterance, self.config.max_len)

    def examples(self, dialogues):
        out = []
        for d in dialogues:
            for ti, turn, history in turn_histories(d):
                out.append(Example(self.build_sequence(history, turn.usr), turn, d.id, ti))
        return out

    def gold_arrays(self, examples):
        B = len(examples)
        S = len(self.span_keys)
        gate = np.zeros((B, S), dtype=np.int64)
        start = np.zeros((B, S), dtype=np.int64)
        end = np.zeros((B, S), dtype=np.int64)
        span_w = np.zeros((B, S))
        intent = np.zeros(B, dtype=np.int64)
        cat = np.zeros((B, len(self.cat_specs)), dtype=np.int64)
        for b, ex in enumerate(examples):
            t = ex.turn
            intent[b] = self.schema.intents.index(t.intent)
            for k, key in enumerate(self.span_keys):
                lab = t.slots.get(key)
                if lab is None or lab.gate not in (GATE_DONTCARE, GATE_VALUE):
                    continue
                if lab.gate == GATE_DONTCARE:
                    gate[b, k] = 1
                    continue
                gate[b, k] = 2
                if lab.span is not None:
                    pos = ex.seq.char_span_to_positions(ex.seq.user_region, *lab.span)
                    if pos is not None:
                        start[b, k], end[b, k] = pos
                        span_w[b, k] = 1.0
            for c, spec in enumerate(self.cat_specs):
                lab = t.slots.get(spec.key)
                if lab is None or lab.gate not in (GATE_DONTCARE, GATE_VALUE):
                    continue
                if lab.gate == GATE_DONTCARE:
                    cat[b, c] = 1
                else:
                    norm = [normalize_value(v) for v in spec.values]
                    cat[b, c] = 2 + norm.index(normalize_value(lab.value))
        return {"gate": gate, "start": start, "end": end, "span_weight": span_w, "intent": intent, "cat": cat}

    def batch(self, examples):
        return collate([ex.seq for ex in examples], gold=self.gold_arrays(examples))

    # -- forward / loss ------------------------------------------------
    def forward(self, batch, train=False, rng=None):
        out = encode(self.config, self.params, batch.token_ids, batch.segment_ids, batch.key_mask, train=train, rng=rng)
        return H.heads_forward(self.variant, out, batch, self.schema, self.params)

    def losses(self, outputs, batch):
        """Total loss Tensor plus a dict of float components for logging."""
        gold = batch.gold
        comps = {}
        logged = {}
        if self.span_keys:
            g, s, e = H.slot_components(outputs.gate_probs, outputs.start_probs, outputs.end_probs, gold)
            comps["slot"] = H.combine_slot(g, s, e, self.weights.alpha)
            logged.update(gate=g.item(), span_start=s.item(), span_end=e.item())
        else:
            comps["slot"] = None
        if self.variant.uses_intent:
            comps["intent"] = H.loss_intent(outputs.intent_probs, gold["intent"])
            logged["intent"] = comps["intent"].item()
        if self.variant.uses_categorical and self.cat_specs:
            comps["cat"] = H.loss_cat(outputs.cat_probs, gold["cat"])
            logged["cat"] = comps["cat"].item()
        total = H.loss_variant(self.variant, comps, self.weights)
        logged["total"] = total.item()
        return total, logged

    def loss(self, batch, train=False, rng=None):
        return self.losses(self.forward(batch, train=train, rng=rng), batch)

    # -- inference -----------------------------------------------------
    def predict_batch(self, batch):
        """Per-sequence ``(TurnPrediction, details)`` from a frozen forward pass."""
        with no_grad():
            out = self.forward(batch)
        B = len(batch)
        results = [(TurnPrediction(), {"gates": {}, "spans": {}, "categorical": {}}) for _ in range(B)]
        if out.intent_probs is not None:
            top = out.intent_probs.data.argmax(axis=1)
            for b in range(B):
                results[b][0].intent = self.schema.intents[top[b]]
                results[b][1]["intent_prob"] = float(out.intent_probs.data[b, top[b]])
        for key in self.span_keys:
            gates = out.gate_probs[key].data.argmax(axis=1)
            spans = H.kernels.decode_spans(
                np.ascontiguousarray(out.start_logits[key].data, dtype=np.float64),
                np.ascontiguousarray(out.end_logits[key].data, dtype=np.float64),
                batch.span_mask, batch.regions, int(self.max_span_len))
            for b in range(B):
                pred, info = results[b]
                info["gates"][key] = H.GATE_CLASSES[gates[b]]
                if gates[b] == 1:
                    pred.slots[key] = DONTCARE
                elif gates[b] == 2 and spans[b, 0] >= 0:
                    try:
                        text = detokenize_span(batch.seqs[b], int(spans[b, 0]), int(spans[b, 1]))
                    except InvalidSpanError:
                        continue
                    pred.slots[key] = text
                    info["spans"][key] = (int(spans[b, 0]), int(spans[b, 1]), text)
        if out.cat_probs is not None:
            for spec in self.cat_specs:
                classes = H.cat_classes(spec)
                top = out.cat_probs[spec.key].data.argmax(axis=1)
                for b in range(B):
                    label = classes[top[b]]
                    results[b][1]["categorical"][spec.key] = label
                    if top[b] == 1:
                        results[b][0].slots[spec.key] = DONTCARE
                    elif top[b] >= 2:
                        results[b][0].slots[spec.key] = label
        return results

    def predict_dialogues(self, dialogues, batch_size=64):
        """Predicted turn sequences, one list per dialogue, in corpus order."""
        examples = self.examples(dialogues)
        flat = []
        for i in range(0, len(examples), batch_size):
            chunk = examples[i:i + batch_size]
            flat.extend(p for p, _ in self.predict_batch(collate([ex.seq for ex in chunk])))
        out, k = [], 0
        for d in dialogues:
            out.append(flat[k:k + len(d.turns)])
            k += len(d.turns)
        return out

    # -- persistence ---------------------------------------------------
    def meta(self):
        return {
            "schema": self.schema.to_dict(),
            "vocab": self.vocab.tokens,
            "variant": self.variant.kind.value,
            "history_window": self.variant.history_window,
            "encoder": self.config.to_dict(),
            "weights": {"alpha": self.weights.alpha, "beta_intent": self.weights.beta_intent,
                        "beta_cat": self.weights.beta_cat, "alpha_joint": self.weights.alpha_joint},
            "max_span_len": self.max_span_len,
        }

    def save(self, path, optimizer=None, extra=None):
        arrays = {f"param/{k}": v.data for k, v in self.params.items()}
        meta = self.meta()
        if optimizer is not None:
            meta["adam"] = {"step_count": optimizer.step_count, "learning_rate": optimizer.learning_rate,
                            "beta1": optimizer.beta1, "beta2": optimizer.beta2, "epsilon": optimizer.epsilon}
            for k in self.params:
                if k in optimizer.m:
                    arrays[f"adam.m/{k}"] = optimizer.m[k]
                    arrays[f"adam.v/{k}"] = optimizer.v[k]
        meta.update(extra or {})
        checkpoint.save(path, arrays, meta)

    @classmethod
    def load(cls, path, with_optimizer=False):
        from .numeric.adam import AdamState

        arrays, meta = checkpoint.load(path)
        try:
            schema = Schema.from_dict(meta["schema"])
            vocab = Vocabulary(meta["vocab"])
            variant = ModelVariant(Variant.parse(meta["variant"]), meta.get("history_window", 1))
            config = EncoderConfig(**meta["encoder"])
        except KeyError as exc:
            raise CheckpointError(f"checkpoint metadata missing {exc}") from exc
        params = {k[len("param/"):]: Tensor(v, requires_grad=True) for k, v in arrays.items() if k.startswith("param/")}
        model = cls(schema, vocab, variant, config, H.LossWeights(**meta["weights"]), params=params,
                    max_span_len=meta.get("max_span_len", H.MAX_SPAN_LEN))
        if not with_optimizer:
            return model, meta
        opt = None
        if "adam" in meta:
            a = meta["adam"]
            opt = AdamState(learning_rate=a["learning_rate"], beta1=a["beta1"], beta2=a["beta2"], epsilon=a["epsilon"],
                            step_count=a["step_count"])
            for k in params:
                if f"adam.m/{k}" in arrays:
                    opt.m[k] = arrays[f"adam.m/{k}"]
                    opt.v[k] = arrays[f"adam.v/{k}"]
        return model, meta, opt
