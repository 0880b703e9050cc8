"""Dialogue-state accumulation and the evaluation metrics."""

from dataclasses import dataclass, field

from .corpus import normalize_value
from .errors import AlignmentError, SchemaError


@dataclass
class TurnPrediction:
    """Per-turn outcome. ``slots`` maps mentioned keys to a value or ``"dontcare"``;
    keys left out mean *none* (no update)."""

    intent: str = None
    slots: dict = field(default_factory=dict)

    @classmethod
    def from_turn(cls, turn):
        return cls(intent=turn.intent, slots=turn.gold_outcomes())


def update_state(state, turn, schema=None):
    """Return a new state with ``turn``'s mentioned slots written over ``state``."""
    new = dict(state)
    keys = set(schema.slot_keys) if schema is not None else None
    for key, value in turn.slots.items():
        if keys is not None and key not in keys:
            raise SchemaError(f"unknown slot key {key!r}")
        if value is None:
            continue
        new[key] = normalize_value(value)
    return new


def accumulate(turns, schema=None):
    """States after each turn, starting from the empty state."""
    state, out = {}, []
    for t in turns:
        state = update_state(state, t, schema)
        out.append(state)
    return out


def joint_goal_scores(dialogues, schema=None):
    """Flat list of per-turn 0/1 joint-goal scores."""
    scores = []
    for pred, gold in dialogues:
        if len(pred) != len(gold):
            raise AlignmentError(f"prediction has {len(pred)} turns, gold has {len(gold)}")
        for ps, gs in zip(accumulate(pred, schema), accumulate(gold, schema)):
            scores.append(1 if ps == gs else 0)
    return scores


def joint_goal_accuracy(dialogues, schema=None):
    """Mean over all turns of all dialogues of exact accumulated-state match."""
    scores = joint_goal_scores(dialogues, schema)
    if not scores:
        raise ValueError("no turns to score")
    return sum(scores) / len(scores)


def _pairs(slots):
    return {(k, normalize_value(v)) for k, v in slots.items() if v is not None}


def slot_f1(predicted, gold):
    """Micro-averaged F1 over (key, normalized value) pairs, one dict per turn."""
    if len(predicted) != len(gold):
        raise AlignmentError("predicted and gold turn counts differ")
    tp = fp = fn = 0
    for p, g in zip(predicted, gold):
        pp, gp = _pairs(p), _pairs(g)
        tp += len(pp & gp)
        fp += len(pp - gp)
        fn += len(gp - pp)
    if tp + fp + fn == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def intent_accuracy(predicted, gold):
    if len(predicted) != len(gold):
        raise AlignmentError("predicted and gold intent counts differ")
    if not gold:
        raise ValueError("no intents to score")
    return sum(p == g for p, g in zip(predicted, gold)) / len(gold)


def per_slot_accuracy(dialogues, slot_keys):
    """Per key: share of turns whose accumulated predicted value equals the gold one."""
    hits = {k: 0 for k in slot_keys}
    total = 0
    for pred, gold in dialogues:
        for ps, gs in zip(accumulate(pred), accumulate(gold)):
            total += 1
            for k in slot_keys:
                hits[k] += ps.get(k) == gs.get(k)
    return {k: (hits[k] / total if total else None) for k in slot_keys}


def evaluation_report(dialogues, slot_keys, with_intent=True):
    """The JSON-ready report for a list of ``(predicted turns, gold turns)`` pairs."""
    turn_count = sum(len(g) for _, g in dialogues)
    report = {"joint_goal": None, "slot_f1": None, "per_slot": {k: None for k in slot_keys}, "turn_count": turn_count}
    if with_intent:
        report["intent_accuracy"] = None
    if turn_count == 0:
        return report
    report["joint_goal"] = joint_goal_accuracy(dialogues)
    preds = [t.slots for p, _ in dialogues for t in p]
    golds = [t.slots for _, g in dialogues for t in g]
    report["slot_f1"] = slot_f1(preds, golds)
    report["per_slot"] = per_slot_accuracy(dialogues, slot_keys)
    if with_intent:
        report["intent_accuracy"] = intent_accuracy([t.intent for p, _ in dialogues for t in p],
                                                    [t.intent for _, g in dialogues for t in g])
    return report
