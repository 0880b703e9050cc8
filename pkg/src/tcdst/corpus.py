"""Dialogue data model, corpus files, synthetic generation and intent/slot association."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusError, SchemaError, UndefinedValueError, ValidationError

SPAN = "span"
CATEGORICAL = "categorical"

GATE_NONE = "none"
GATE_DONTCARE = "dontcare"
GATE_VALUE = "value"
GATES = (GATE_NONE, GATE_DONTCARE, GATE_VALUE)

DONTCARE = "dontcare"

CATEGORICAL_THRESHOLD = 12


def normalize_value(value):
    """Lowercase, trim and collapse internal whitespace."""
    return " ".join(str(value).lower().split())


@dataclass(frozen=True)
class SlotSpec:
    key: str
    kind: str = SPAN
    values: tuple = ()
    # generator-only metadata; ignored by validation and the model
    examples: tuple = ()
    cues: tuple = ()
    paraphrases: dict = field(default_factory=dict, hash=False, compare=False)

    @property
    def is_categorical(self):
        return self.kind == CATEGORICAL

    def to_dict(self):
        d = {"key": self.key, "kind": self.kind}
        if self.values:
            d["values"] = list(self.values)
        if self.examples:
            d["examples"] = list(self.examples)
        if self.cues:
            d["cues"] = list(self.cues)
        if self.paraphrases:
            d["paraphrases"] = {k: list(v) for k, v in self.paraphrases.items()}
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            key=d["key"],
            kind=d.get("kind", SPAN),
            values=tuple(d.get("values", ())),
            examples=tuple(d.get("examples", ())),
            cues=tuple(d.get("cues", ())),
            paraphrases={k: tuple(v) for k, v in d.get("paraphrases", {}).items()},
        )


@dataclass(frozen=True)
class Schema:
    """Domain ontology: intents, slot keys, and categorical value sets."""

    intents: tuple
    slots: tuple

    def __post_init__(self):
        object.__setattr__(self, "intents", tuple(self.intents))
        object.__setattr__(self, "slots", tuple(self.slots))
        keys = [s.key for s in self.slots]
        if len(set(keys)) != len(keys):
            raise SchemaError("slot keys must be unique")
        if len(set(self.intents)) != len(self.intents):
            raise SchemaError("intents must be unique")
        for s in self.slots:
            if s.kind not in (SPAN, CATEGORICAL):
                raise SchemaError(f"slot {s.key!r}: unknown kind {s.kind!r}")
            if s.is_categorical and len(set(normalize_value(v) for v in s.values)) < 2:
                raise SchemaError(f"categorical slot {s.key!r} needs at least 2 values")

    @property
    def slot_keys(self):
        return [s.key for s in self.slots]

    @property
    def categorical_slots(self):
        return [s for s in self.slots if s.is_categorical]

    @property
    def span_slots(self):
        return [s for s in self.slots if not s.is_categorical]

    def slot(self, key):
        for s in self.slots:
            if s.key == key:
                return s
        raise SchemaError(f"unknown slot key {key!r}")

    def to_dict(self):
        return {"intents": list(self.intents), "slots": [s.to_dict() for s in self.slots]}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(intents=d["intents"], slots=[SlotSpec.from_dict(s) for s in d["slots"]])
        except KeyError as exc:
            raise SchemaError(f"schema missing field {exc}") from exc


@dataclass
class SlotLabel:
    gate: str = GATE_NONE
    value: str = None
    span: tuple = None  # half-open character offsets into the user utterance

    def to_dict(self):
        d = {"gate": self.gate}
        if self.gate == GATE_VALUE:
            d["value"] = self.value
            if self.span is not None:
                d["span"] = list(self.span)
        return d


@dataclass
class Turn:
    sys: str
    usr: str
    intent: str
    slots: dict = field(default_factory=dict)

    def gold_outcomes(self):
        """Map of mentioned slot key -> value (``"dontcare"`` for dontcare)."""
        out = {}
        for key, lab in self.slots.items():
            if lab.gate == GATE_DONTCARE:
                out[key] = DONTCARE
            elif lab.gate == GATE_VALUE:
                out[key] = lab.value
        return out

    def to_dict(self):
        return {"sys": self.sys, "usr": self.usr, "intent": self.intent,
                "slots": {k: v.to_dict() for k, v in self.slots.items()}}


@dataclass
class Dialogue:
    id: str
    turns: list

    def to_dict(self):
        return {"id": self.id, "turns": [t.to_dict() for t in self.turns]}


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------


def _parse_turn(raw, did, ti):
    where = f"dialogue {did!r} turn {ti}"
    if not isinstance(raw, dict) or "usr" not in raw:
        raise ValidationError(f"{where}: turn must be an object with a 'usr' field")
    slots = {}
    for key, lab in (raw.get("slots") or {}).items():
        gate = lab.get("gate", GATE_NONE)
        span = lab.get("span")
        slots[key] = SlotLabel(gate=gate, value=lab.get("value"), span=tuple(span) if span is not None else None)
    return Turn(sys=raw.get("sys", "") or "", usr=raw["usr"], intent=raw.get("intent"), slots=slots)


def validate_dialogue(dialogue, schema):
    """Raise ``ValidationError`` naming the dialogue and turn on any violation."""
    for ti, turn in enumerate(dialogue.turns):
        where = f"dialogue {dialogue.id!r} turn {ti}"
        if not turn.usr or not turn.usr.strip():
            raise ValidationError(f"{where}: empty user utterance")
        if turn.intent not in schema.intents:
            raise ValidationError(f"{where}: unknown intent {turn.intent!r}")
        for key, lab in turn.slots.items():
            try:
                spec = schema.slot(key)
            except SchemaError:
                raise ValidationError(f"{where}: unknown slot key {key!r}") from None
            if lab.gate not in GATES:
                raise ValidationError(f"{where}: slot {key!r} has bad gate {lab.gate!r}")
            if lab.gate != GATE_VALUE:
                continue
            if not isinstance(lab.value, str) or not lab.value.strip():
                raise ValidationError(f"{where}: slot {key!r} gate 'value' needs a non-empty value")
            if spec.is_categorical:
                allowed = {normalize_value(v) for v in spec.values}
                if normalize_value(lab.value) not in allowed:
                    raise ValidationError(f"{where}: value {lab.value!r} outside ontology of {key!r}")
            elif lab.span is None:
                raise ValidationError(f"{where}: span slot {key!r} missing character span")
            if lab.span is not None:
                s, e = lab.span
                if not (0 <= s < e <= len(turn.usr)) or turn.usr[s:e] != lab.value:
                    raise ValidationError(f"{where}: span {list(lab.span)} of {key!r} does not match {lab.value!r}")


def parse_corpus(obj, schema=None):
    """Build ``(schema, dialogues)`` from a decoded corpus object.

    With ``schema`` given, dialogues are validated against it instead of the
    file's own schema.
    """
    if not isinstance(obj, dict) or "dialogues" not in obj:
        raise CorpusError("corpus must be an object with a 'dialogues' list")
    if schema is None:
        if "schema" not in obj:
            raise CorpusError("corpus has no schema and none was supplied")
        schema = Schema.from_dict(obj["schema"])
    dialogues = []
    for di, raw in enumerate(obj["dialogues"]):
        did = raw.get("id", str(di))
        turns = [_parse_turn(t, did, ti) for ti, t in enumerate(raw.get("turns", []))]
        d = Dialogue(id=did, turns=turns)
        validate_dialogue(d, schema)
        dialogues.append(d)
    return schema, dialogues


def read_corpus(path, schema=None):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: parse error: {exc}") from exc
    return parse_corpus(obj, schema)


def load_corpus(path, schema=None):
    """Load and validate a corpus file, returning its dialogues."""
    return read_corpus(path, schema)[1]


def corpus_to_json(schema, dialogues):
    obj = {"schema": schema.to_dict(), "dialogues": [d.to_dict() for d in dialogues]}
    return json.dumps(obj, ensure_ascii=False, indent=1) + "\n"


def save_corpus(path, schema, dialogues):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(corpus_to_json(schema, dialogues))


def load_schema(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return Schema.from_dict(obj.get("schema", obj))


# ---------------------------------------------------------------------------
# intent / slot association
# ---------------------------------------------------------------------------


def cramers_v(contingency):
    """Cramér's V of a counts table; empty rows and columns are dropped first."""
    t = np.asarray(contingency, dtype=np.float64)
    if t.ndim != 2:
        raise UndefinedValueError("contingency table must be 2-D")
    if np.any(t < 0):
        raise UndefinedValueError("negative counts")
    t = t[t.sum(axis=1) > 0][:, t.sum(axis=0) > 0]
    if t.size == 0 or t.shape[0] < 2 or t.shape[1] < 2:
        raise UndefinedValueError("Cramér's V undefined: need at least 2 non-empty rows and columns")
    n = t.sum()
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / n
    chi2 = float(((t - expected) ** 2 / expected).sum())
    v = math.sqrt(chi2 / (n * (min(t.shape) - 1)))
    return min(1.0, max(0.0, v))


def contingency_table(dialogues, schema):
    """Counts of user turns per (intent, mentioned slot key).

    A slot is mentioned when its gold gate is dontcare or value.
    """
    rows = {name: i for i, name in enumerate(schema.intents)}
    cols = {key: j for j, key in enumerate(schema.slot_keys)}
    table = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for d in dialogues:
        for t in d.turns:
            for key, lab in t.slots.items():
                if lab.gate in (GATE_DONTCARE, GATE_VALUE):
                    table[rows[t.intent], cols[key]] += 1
    return table


def classify_slot_kind(cardinality, countable=True, threshold=CATEGORICAL_THRESHOLD):
    """``categorical`` for a finite, listable value set of at most ``threshold`` values."""
    if countable and cardinality is not None and 0 < cardinality <= threshold:
        return CATEGORICAL
    return SPAN


# ---------------------------------------------------------------------------
# synthetic corpus generation
# ---------------------------------------------------------------------------

INTENT_TEMPLATES = ("i want to {act}", "can you help me {act}", "please {act}", "i would like to {act}", "i need to {act}")
CLOSING_UTTERANCES = ("thanks , that is all", "thank you", "great , bye", "that is everything")
SYSTEM_OPENERS = ("anything else ?", "ok . what else do you need ?", "noted . can i help with anything else ?",
                  "sure . is there anything more ?")
DONTCARE_TEMPLATES = ("any {words} is fine", "i do not care about the {words}", "the {words} does not matter")

DEFAULT_PARAPHRASES = {
    "cheap": ("inexpensive", "budget"),
    "moderate": ("mid-priced", "reasonably priced"),
    "expensive": ("pricey", "upscale"),
    "1": ("one",), "2": ("two",), "3": ("three",), "4": ("four",), "5": ("five",),
    "6": ("six",), "7": ("seven",), "8": ("eight",),
    "yes": ("sure",), "no": ("not needed",),
    "north": ("northern",), "south": ("southern",), "east": ("eastern",), "west": ("western",),
    "centre": ("central",), "center": ("central",),
    "male": ("men",), "female": ("women",),
    "breakfast": ("morning meal",), "lunch": ("midday meal",), "dinner": ("evening meal",),
}

_NAME_HEADS = ("golden", "silver", "royal", "little", "blue", "old", "grand", "lucky", "green", "happy",
               "red", "sunny", "crystal", "iron", "velvet")
_NAME_TAILS = ("dragon", "garden", "palace", "harbor", "lantern", "oak", "river", "bistro", "table", "corner",
               "star", "bridge", "mill", "spoon", "crown")

PARAPHRASE_PROBABILITY = 0.5
DONTCARE_PROBABILITY = 0.1
CLOSING_PROBABILITY = 0.3


def _words(name):
    return " ".join(name.replace("_", " ").replace("-", " ").split()).lower()


def _value_pool(spec, index):
    if spec.examples:
        return list(spec.examples)
    pool = []
    for k in range(12):
        h = _NAME_HEADS[(3 * index + k) % len(_NAME_HEADS)]
        t = _NAME_TAILS[(5 * index + 2 * k + k // len(_NAME_HEADS)) % len(_NAME_TAILS)]
        pool.append(f"{h.title()} {t.title()}")
    return list(dict.fromkeys(pool))


def _cues(spec):
    if spec.cues:
        return list(spec.cues)
    w = _words(spec.key)
    return [f"the {w} is {{value}}", f"{{value}} for the {w}", f"with {w} {{value}}"]


def intent_slot_subsets(schema):
    """Designated slot subset per non-``none`` intent (round-robin over schema order)."""
    active = [i for i in schema.intents if i != "none"]
    subsets = {i: [] for i in active}
    for j, key in enumerate(schema.slot_keys):
        subsets[active[j % len(active)]].append(key)
    return subsets


class _Utterance:
    def __init__(self, text=""):
        self.text = text

    def append(self, piece, sep=" "):
        """Append ``piece``; returns the offset where it starts."""
        if self.text:
            self.text += sep
        start = len(self.text)
        self.text += piece
        return start


def _mention(spec, slot_index, rng):
    """Return (phrase, value or None for dontcare, local span or None)."""
    w = _words(spec.key)
    if rng.random() < DONTCARE_PROBABILITY:
        return DONTCARE_TEMPLATES[rng.integers(len(DONTCARE_TEMPLATES))].format(words=w), None, None
    if spec.is_categorical:
        value = spec.values[rng.integers(len(spec.values))]
        alts = spec.paraphrases.get(value) or DEFAULT_PARAPHRASES.get(normalize_value(value), ())
        surface = value
        if alts and rng.random() < PARAPHRASE_PROBABILITY:
            surface = alts[rng.integers(len(alts))]
    else:
        pool = _value_pool(spec, slot_index)
        value = surface = pool[rng.integers(len(pool))]
    cues = _cues(spec)
    cue = cues[rng.integers(len(cues))]
    before, after = cue.split("{value}", 1)
    phrase = before + surface + after
    span = (len(before), len(before) + len(surface)) if surface == value else None
    return phrase, value, span


def generate_synthetic(schema, num_dialogues, correlation_strength, seed=0):
    """Template dialogues whose intent/slot association is controlled by ``correlation_strength``.

    Each non-``none`` intent owns a designated slot subset. Per user turn,
    with probability ``correlation_strength`` the mentioned slots come only
    from that subset; otherwise a slot is drawn uniformly from all slots.
    """
    rho = float(correlation_strength)
    if not 0.0 <= rho <= 1.0:
        raise ValueError("correlation_strength must be in [0, 1]")
    active = [i for i in schema.intents if i != "none"]
    if len(schema.intents) < 2 or not active:
        raise SchemaError("generator needs at least 2 intents, one of them not 'none'")
    if not schema.slots:
        raise SchemaError("generator needs at least one slot")
    subsets = intent_slot_subsets(schema)
    index_of = {s.key: j for j, s in enumerate(schema.slots)}
    rng = np.random.default_rng(seed)
    dialogues = []
    for di in range(int(num_dialogues)):
        n_turns = int(rng.integers(2, 6))
        turns = []
        for ti in range(n_turns):
            sys_text = "" if ti == 0 else SYSTEM_OPENERS[rng.integers(len(SYSTEM_OPENERS))]
            closing = ti == n_turns - 1 and ti > 0 and "none" in schema.intents and rng.random() < CLOSING_PROBABILITY
            if closing:
                turns.append(Turn(sys=sys_text, usr=CLOSING_UTTERANCES[rng.integers(len(CLOSING_UTTERANCES))], intent="none"))
                continue
            intent = active[rng.integers(len(active))]
            subset = subsets[intent] or schema.slot_keys
            if rng.random() < rho:
                k = min(len(subset), int(rng.integers(1, 3)))
                keys = [subset[i] for i in sorted(rng.choice(len(subset), size=k, replace=False))]
            else:
                keys = [schema.slot_keys[rng.integers(len(schema.slots))]]
            utt = _Utterance()
            tmpl = INTENT_TEMPLATES[rng.integers(len(INTENT_TEMPLATES))]
            utt.append(tmpl.format(act=_words(intent)))
            labels = {}
            for n, key in enumerate(keys):
                spec = schema.slot(key)
                phrase, value, span = _mention(spec, index_of[key], rng)
                offset = utt.append(phrase, sep=" , " if n == 0 else " and ")
                if value is None:
                    labels[key] = SlotLabel(gate=GATE_DONTCARE)
                else:
                    gspan = (offset + span[0], offset + span[1]) if span is not None else None
                    labels[key] = SlotLabel(gate=GATE_VALUE, value=value, span=gspan)
            turns.append(Turn(sys=sys_text, usr=utt.text, intent=intent, slots=labels))
        dialogues.append(Dialogue(id=f"syn-{seed}-{di:05d}", turns=turns))
    for d in dialogues:
        validate_dialogue(d, schema)
    return dialogues


def toy_schema(n_intents=2, n_span=2, n_categorical=2, with_none=True):
    """A small ready-made schema used by the CLI defaults and the test suite."""
    intents = (["none"] if with_none else []) + [f"intent_{c}" for c in "abcdefgh"[:n_intents]]
    if n_intents == 2:
        intents = (["none"] if with_none else []) + ["find_restaurant", "book_taxi"]
    span_keys = ["restaurant-name", "taxi-destination", "hotel-name", "attraction-name"]
    cat = [
        SlotSpec("restaurant-price", CATEGORICAL, ("cheap", "moderate", "expensive")),
        SlotSpec("taxi-people", CATEGORICAL, ("1", "2", "3", "4")),
        SlotSpec("hotel-stars", CATEGORICAL, ("1", "2", "3", "4", "5")),
        SlotSpec("restaurant-area", CATEGORICAL, ("north", "south", "east", "west", "centre")),
    ]
    slots = [SlotSpec(k, SPAN) for k in span_keys[:n_span]] + cat[:n_categorical]
    return Schema(intents=intents, slots=slots)
