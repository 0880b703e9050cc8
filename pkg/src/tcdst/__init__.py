"""Task-conditioned Transformer dialogue state tracking at desk scale."""

__version__ = "0.1.0"

from .corpus import Dialogue, Schema, SlotSpec, Turn, cramers_v, generate_synthetic, load_corpus
from .heads import LossWeights, decode_span, fixed_beta_cat, loss_variant
from .metrics import TurnPrediction, intent_accuracy, joint_goal_accuracy, slot_f1, update_state
from .model import DSTModel
from .tokenizer import ModelVariant, Variant, Vocabulary, build_input_sequence, build_vocab, detokenize_span

__all__ = [
    "DSTModel", "Dialogue", "LossWeights", "ModelVariant", "Schema", "SlotSpec", "Turn", "TurnPrediction",
    "Variant", "Vocabulary", "build_input_sequence", "build_vocab", "cramers_v", "decode_span",
    "detokenize_span", "fixed_beta_cat", "generate_synthetic", "intent_accuracy", "joint_goal_accuracy",
    "load_corpus", "loss_variant", "slot_f1", "update_state",
]
