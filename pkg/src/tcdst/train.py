"""Training loop, run configuration and corpus evaluation."""

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .batching import collate
from .corpus import read_corpus
from .errors import ConfigurationError
from .heads import LossWeights
from .metrics import TurnPrediction, evaluation_report
from .model import DSTModel
from .numeric.adam import AdamState, adam_step
from .tokenizer import ModelVariant, Variant, build_vocab

log = logging.getLogger(__name__)

SCRATCH_LR = 1e-4
FINETUNE_LR = 2e-6


@dataclass
class RunConfig:
    variant: str = "bdst-j"
    encoder: dict = field(default_factory=dict)
    loss_weights: dict = field(default_factory=dict)
    batch_size: int = 32
    epochs: int = 100
    learning_rate: float = None  # None: 1e-4 from scratch, 2e-6 when resuming
    seed: int = 0
    train_path: str = None
    valid_path: str = None
    checkpoint_path: str = None
    log_path: str = None
    resume_from: str = None
    history_window: int = 1
    min_frequency: int = 1
    max_span_len: int = 10

    def __post_init__(self):
        Variant.parse(self.variant)
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")

    @property
    def lr(self):
        if self.learning_rate is not None:
            return self.learning_rate
        return FINETUNE_LR if self.resume_from else SCRATCH_LR

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown RunConfig fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrainResult:
    model: DSTModel
    log: list
    best_epoch: int
    best_joint_goal: float
    steps: int
    variant: str
    warnings: list = field(default_factory=list)


def evaluate(model, dialogues, oracle=False):
    """Evaluation report for ``dialogues``; ``oracle`` scores the gold annotations against themselves."""
    gold = [[TurnPrediction.from_turn(t) for t in d.turns] for d in dialogues]
    if oracle:
        pred = [[TurnPrediction.from_turn(t) for t in d.turns] for d in dialogues]
    else:
        pred = model.predict_dialogues(dialogues) if dialogues else []
    with_intent = model.variant.uses_intent
    if not with_intent:
        pred = [[TurnPrediction(intent=None, slots=p.slots) for p in seq] for seq in pred]
    return evaluation_report(list(zip(pred, gold)), model.schema.slot_keys, with_intent=with_intent)


def _fmt(x):
    return None if x is None else float(x)


def train(config, train_dialogues=None, valid_dialogues=None, schema=None):
    """Train a model per ``config``.

    Dialogues may be passed in directly; otherwise they are read from the
    config paths. Without a validation set the training split is used for
    checkpoint selection.
    """
    warnings = []
    if train_dialogues is None:
        schema, train_dialogues = read_corpus(config.train_path, schema)
    if schema is None:
        raise ConfigurationError("schema is required when dialogues are passed directly")
    if valid_dialogues is None and config.valid_path:
        _, valid_dialogues = read_corpus(config.valid_path, schema)
    if valid_dialogues is None:
        valid_dialogues = train_dialogues

    kind = Variant.parse(config.variant)
    if kind is Variant.BDST_J and not schema.categorical_slots:
        msg = "schema has no categorical slots: BDST-J degenerates, training as BDST-I"
        log.warning(msg)
        warnings.append(msg)
        kind = Variant.BDST_I
    variant = ModelVariant(kind, config.history_window)

    optimizer = None
    if config.resume_from:
        model, _, optimizer = DSTModel.load(config.resume_from, with_optimizer=True)
        if model.schema.to_dict() != schema.to_dict() or model.variant.kind is not kind:
            raise ConfigurationError("resumed checkpoint does not match the corpus schema or variant")
    else:
        vocab = build_vocab(train_dialogues, schema, config.min_frequency)
        enc = dict(config.encoder)
        enc.setdefault("seed", config.seed)
        model = DSTModel.create(schema, vocab, variant, LossWeights(**config.loss_weights), **enc)
        model.max_span_len = config.max_span_len
    if optimizer is None:
        optimizer = AdamState(learning_rate=config.lr)
    optimizer.learning_rate = config.lr

    examples = model.examples(train_dialogues)
    if not examples:
        raise ConfigurationError("training corpus has no turns")
    gold = model.gold_arrays(examples)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])

    records = []
    best_jg, best_epoch, steps = -1.0, 0, 0
    n = len(examples)
    n_batches = math.ceil(n / config.batch_size)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        sums = {}
        for bi in range(n_batches):
            idx = order[bi * config.batch_size:(bi + 1) * config.batch_size]
            batch = collate([examples[i].seq for i in idx], gold={k: v[idx] for k, v in gold.items()})
            loss, comps = model.loss(batch, train=True, rng=dropout_rng)
            loss.backward()
            grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in model.params.items()}
            adam_step(model.params, grads, optimizer)
            steps += 1
            for k, v in comps.items():
                sums[k] = sums.get(k, 0.0) + v * len(idx)
        report = evaluate(model, valid_dialogues)
        jg = report["joint_goal"]
        rec = {"epoch": epoch, "steps": steps}
        rec.update({k: v / n for k, v in sums.items()})
        rec["valid_joint_goal"] = _fmt(jg)
        if report.get("intent_accuracy") is not None:
            rec["valid_intent_accuracy"] = report["intent_accuracy"]
        records.append(rec)
        log.info("epoch %d %s", epoch, json.dumps(rec))
        if config.log_path:
            with open(config.log_path, "a" if epoch > 1 else "w", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        if jg is not None and jg > best_jg:
            best_jg, best_epoch = jg, epoch
            if config.checkpoint_path:
                model.save(config.checkpoint_path, optimizer, extra={"epoch": epoch, "seed": config.seed,
                                                                     "valid_joint_goal": jg})
    return TrainResult(model, records, best_epoch, best_jg, steps, kind.value, warnings)
