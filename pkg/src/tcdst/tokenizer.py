"""Word-level vocabulary and the conditioning-token input layout."""

import enum
import json
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigurationError, CorpusError, InvalidSpanError, VocabError

PAD, UNK, CLS, SEP, USR, SYS, INTENT = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[USR]", "[SYS]", "[INTENT]"
SPECIALS = (PAD, UNK, CLS, SEP, USR, SYS, INTENT)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, USR_ID, SYS_ID, INTENT_ID = range(len(SPECIALS))

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def slot_token(key):
    return f"[SLOT-{key}]"


def tokenize(text):
    """Lowercased word/punctuation tokens with half-open character offsets."""
    return [(m.group().lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


class Variant(enum.Enum):
    BASELINE = "baseline"
    BDST_I = "bdst-i"
    BDST_C = "bdst-c"
    BDST_J = "bdst-j"

    @property
    def uses_intent(self):
        return self in (Variant.BDST_I, Variant.BDST_J)

    @property
    def uses_categorical(self):
        return self in (Variant.BDST_C, Variant.BDST_J)

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        for v in cls:
            if v.value == key or v.name.lower().replace("_", "-") == key:
                return v
        raise ConfigurationError(f"unknown variant {name!r}")


@dataclass(frozen=True)
class ModelVariant:
    kind: Variant = Variant.BASELINE
    history_window: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", Variant.parse(self.kind))
        if self.history_window < 0:
            raise ConfigurationError("history_window must be non-negative")

    @property
    def uses_intent(self):
        return self.kind.uses_intent

    @property
    def uses_categorical(self):
        return self.kind.uses_categorical

    def conditioning_count(self, schema):
        return int(self.uses_intent) + (len(schema.categorical_slots) if self.uses_categorical else 0)


class Vocabulary:
    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:len(SPECIALS)]) != SPECIALS:
            raise VocabError("vocabulary must start with the reserved special tokens")
        if len(set(tokens)) != len(tokens):
            raise VocabError("duplicate tokens in vocabulary")
        self.tokens = tokens
        self.ids = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.ids

    def id(self, token):
        return self.ids.get(token, UNK_ID)

    def slot_id(self, key):
        try:
            return self.ids[slot_token(key)]
        except KeyError:
            raise VocabError(f"no conditioning token for slot {key!r}") from None

    def to_json(self):
        specials = {t: self.ids[t] for t in self.tokens if t.startswith("[") and t.endswith("]") and (t in SPECIALS or t.startswith("[SLOT-"))}
        return json.dumps({"version": 1, "specials": specials, "tokens": self.tokens}, ensure_ascii=False)

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        if obj.get("version") != 1:
            raise VocabError(f"unsupported vocabulary version {obj.get('version')}")
        vocab = cls(obj["tokens"])
        for name, idx in obj.get("specials", {}).items():
            if vocab.ids.get(name) != idx:
                raise VocabError(f"special token {name} id mismatch")
        return vocab

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def build_vocab(dialogues, schema, min_frequency=1):
    """Vocabulary over all system and user utterances of ``dialogues``.

    Tokens rarer than ``min_frequency`` are left out and map to ``[UNK]``.
    Ordering is specials, slot conditioning tokens in schema order, then
    words by descending frequency with ties broken alphabetically.
    """
    if min_frequency < 1:
        raise ValueError("min_frequency must be >= 1")
    counts = Counter()
    for d in dialogues:
        for t in d.turns:
            counts.update(tok for tok, _, _ in tokenize(t.sys))
            counts.update(tok for tok, _, _ in tokenize(t.usr))
    if not counts:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    tokens = list(SPECIALS) + [slot_token(s.key) for s in schema.categorical_slots]
    reserved = set(tokens)
    words = sorted((w for w, c in counts.items() if c >= min_frequency and w not in reserved), key=lambda w: (-counts[w], w))
    return Vocabulary(tokens + words)


@dataclass
class InputSequence:
    """One encoder input plus the index maps the heads need.

    ``alignment[i]`` is ``(utterance_index, char_start, char_end)`` for content
    positions and ``None`` elsewhere; ``regions[i]`` is the utterance index of
    a content position or -1. ``utterances`` lists the source texts in
    sequence order, the current user utterance last.
    """

    token_ids: np.ndarray
    segment_ids: np.ndarray
    span_mask: np.ndarray
    regions: np.ndarray
    alignment: list
    utterances: list
    speakers: list
    cls_index: int = 0
    intent_index: int = None
    categorical_indices: dict = None

    def __len__(self):
        return len(self.token_ids)

    @property
    def user_region(self):
        return len(self.utterances) - 1

    @property
    def conditioning_count(self):
        return int(self.intent_index is not None) + len(self.categorical_indices or {})

    def char_span_to_positions(self, region, start, end):
        """Token positions covering ``[start, end)`` of utterance ``region``, or None if truncated away."""
        first = last = None
        for pos, al in enumerate(self.alignment):
            if al is None or al[0] != region:
                continue
            if al[2] > start and al[1] < end:
                if first is None:
                    first = pos
                last = pos
        if first is None:
            return None
        if self.alignment[first][1] > start or self.alignment[last][2] < end:
            return None
        return first, last


def build_input_sequence(variant, schema, vocab, history, user_utterance, max_len):
    """Assemble ``[CLS] [INTENT]? [SLOT-k]* ([SYS]|[USR] tokens)* [USR] tokens [SEP]``.

    ``history`` is a chronological list of ``(speaker, text)`` pairs with
    speaker ``"sys"`` or ``"usr"``; only the last ``variant.history_window``
    entries are used. Over-long inputs lose their oldest history utterances
    first, then the tail of the current utterance. Conditioning tokens are
    never truncated.
    """
    variant = variant if isinstance(variant, ModelVariant) else ModelVariant(variant)
    cur = tokenize(user_utterance or "")
    if not cur:
        raise ValueError("user utterance is empty")
    cond = []
    if variant.uses_intent:
        cond.append(INTENT_ID)
    cat_keys = [s.key for s in schema.categorical_slots] if variant.uses_categorical else []
    cond.extend(vocab.slot_id(k) for k in cat_keys)

    fixed = 1 + len(cond) + 1
    if fixed + 2 > max_len:
        raise CapacityError(f"max_len {max_len} cannot hold [CLS], {len(cond)} conditioning tokens, [USR], one word and [SEP]")

    window = list(history)[-variant.history_window:] if variant.history_window > 0 else []
    hist = [(spk, text, tokenize(text)) for spk, text in window if text and text.strip()]
    hist = [h for h in hist if h[2]]
    budget = max_len - fixed
    while hist and sum(1 + len(h[2]) for h in hist) + 1 + len(cur) > budget:
        hist.pop(0)
    if 1 + len(cur) > budget:
        cur = cur[:budget - 1]

    ids = [CLS_ID] + cond
    segs = [0] * len(ids)
    align = [None] * len(ids)
    regions = [-1] * len(ids)
    utterances, speakers = [], []
    for spk, text, toks in hist + [("usr", user_utterance, cur)]:
        r = len(utterances)
        utterances.append(text)
        speakers.append(spk)
        seg = 1 if spk == "usr" else 0
        ids.append(USR_ID if spk == "usr" else SYS_ID)
        segs.append(seg)
        align.append(None)
        regions.append(-1)
        for tok, s, e in toks:
            ids.append(vocab.id(tok))
            segs.append(seg)
            align.append((r, s, e))
            regions.append(r)
    ids.append(SEP_ID)
    segs.append(1)
    align.append(None)
    regions.append(-1)

    return InputSequence(
        token_ids=np.asarray(ids, dtype=np.int64),
        segment_ids=np.asarray(segs, dtype=np.int64),
        span_mask=np.asarray([a is not None for a in align], dtype=np.bool_),
        regions=np.asarray(regions, dtype=np.int64),
        alignment=align,
        utterances=utterances,
        speakers=speakers,
        cls_index=0,
        intent_index=1 if variant.uses_intent else None,
        categorical_indices={k: 1 + int(variant.uses_intent) + i for i, k in enumerate(cat_keys)} if variant.uses_categorical else None,
    )


def detokenize_span(seq, start, end, source_text=None):
    """Original-casing text covered by token positions ``start..end`` inclusive."""
    n = len(seq)
    if not (0 <= start <= end < n):
        raise InvalidSpanError(f"span ({start}, {end}) out of order or range")
    if not (seq.span_mask[start] and seq.span_mask[end]):
        raise InvalidSpanError(f"span ({start}, {end}) touches a non-content position")
    r = seq.alignment[start][0]
    if seq.alignment[end][0] != r:
        raise InvalidSpanError(f"span ({start}, {end}) crosses utterances")
    texts = seq.utterances if source_text is None else source_text
    return texts[r][seq.alignment[start][1]:seq.alignment[end][2]]
