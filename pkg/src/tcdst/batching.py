"""Padding a list of ``InputSequence``s into rectangular batch arrays."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .tokenizer import PAD_ID


@dataclass
class Batch:
    token_ids: np.ndarray    # (B, n) padded with [PAD]
    segment_ids: np.ndarray
    key_mask: np.ndarray     # True at non-pad positions
    span_mask: np.ndarray
    regions: np.ndarray      # -1 outside content tokens
    seqs: list
    cls_index: int = 0
    intent_index: int = None
    categorical_indices: dict = None
    gold: dict = None

    def __len__(self):
        return len(self.seqs)


def collate(seqs, gold=None):
    if not seqs:
        raise ValueError("cannot collate an empty batch")
    first = seqs[0]
    for s in seqs[1:]:
        if s.intent_index != first.intent_index or s.categorical_indices != first.categorical_indices:
            raise ConfigurationError("sequences in one batch must share a conditioning layout")
    B = len(seqs)
    n = max(len(s) for s in seqs)
    ids = np.full((B, n), PAD_ID, dtype=np.int64)
    segs = np.zeros((B, n), dtype=np.int64)
    key = np.zeros((B, n), dtype=np.bool_)
    span = np.zeros((B, n), dtype=np.bool_)
    regions = np.full((B, n), -1, dtype=np.int64)
    for b, s in enumerate(seqs):
        k = len(s)
        ids[b, :k] = s.token_ids
        segs[b, :k] = s.segment_ids
        key[b, :k] = True
        span[b, :k] = s.span_mask
        regions[b, :k] = s.regions
    return Batch(ids, segs, key, span, regions, list(seqs), first.cls_index, first.intent_index,
                 first.categorical_indices, gold)
