"""Gradient verification of the full multi-task loss on a toy model."""

import numpy as np

from .corpus import generate_synthetic, toy_schema
from .model import DSTModel
from .numeric.gradcheck import grad_check
from .tokenizer import ModelVariant, build_vocab


def model_grad_check(variant="bdst-j", seed=0, hidden_size=32, num_layers=2, num_heads=4, max_len=24,
                     batch_size=4, max_checks=16, rel_tolerance=1e-4):
    """Finite-difference check of a freshly initialised float64 model on synthetic turns.

    Dropout is off. Span targets are restricted to turns whose gold span
    survives truncation, so every loss term is exercised.
    """
    schema = toy_schema()
    dialogues = generate_synthetic(schema, 12, 1.0, seed=seed)
    vocab = build_vocab(dialogues, schema)
    model = DSTModel.create(schema, vocab, ModelVariant(variant), hidden_size=hidden_size, num_layers=num_layers,
                            num_heads=num_heads, max_len=max_len, dropout_rate=0.0, dtype="float64", seed=seed)
    examples = model.examples(dialogues)
    gold = model.gold_arrays(examples)
    has_span = gold["span_weight"].sum(axis=1) > 0
    order = np.argsort(~has_span, kind="stable")
    batch = model.batch([examples[i] for i in order[:batch_size]])
    report = grad_check(lambda: model.loss(batch)[0], model.params, rel_tolerance=rel_tolerance,
                        max_checks=max_checks, seed=seed)
    return report, model, batch
