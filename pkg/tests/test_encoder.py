import numpy as np
import pytest

from tcdst.batching import collate
from tcdst.encoder import EncoderConfig, encode, encoder_forward, init_conditioning_embeddings, init_encoder_params
from tcdst.errors import CapacityError, ConfigurationError, StateError, VocabError
from tcdst.model import DSTModel
from tcdst.numeric import grad_check
from tcdst.tokenizer import CLS_ID, INTENT_ID, PAD_ID, ModelVariant, build_input_sequence


@pytest.fixture
def cfg(vocab):
    return EncoderConfig(vocab_size=len(vocab), num_layers=2, hidden_size=16, num_heads=4, max_len=40)


@pytest.fixture
def params(cfg):
    return init_encoder_params(cfg)


@pytest.fixture
def seqs(schema, vocab, dialogues):
    v = ModelVariant("bdst-j")
    t0, t1 = dialogues[0].turns[0], dialogues[1].turns[0]
    short = build_input_sequence(v, schema, vocab, [], t0.usr.split(",")[0], 40)
    long = build_input_sequence(v, schema, vocab, [("sys", "anything else ?")], t1.usr, 40)
    return short, long


def test_shape_and_finite(cfg, params, seqs):
    for seq in seqs:
        out = encoder_forward(cfg, params, seq)
        assert out.hidden.shape == (len(seq), cfg.hidden_size)
        assert np.all(np.isfinite(out.hidden.data))


def test_pad_tail_invariance(cfg, params, seqs):
    short, long = seqs
    assert len(short) < len(long)
    alone = encoder_forward(cfg, params, short).hidden.data
    batch = collate([short, long])
    padded = encode(cfg, params, batch.token_ids, batch.segment_ids, batch.key_mask).hidden.data
    np.testing.assert_allclose(padded[0, :len(short)], alone, rtol=0, atol=1e-12)


def test_eval_is_bitwise_deterministic(cfg, params, seqs):
    a = encoder_forward(cfg, params, seqs[1]).hidden.data
    b = encoder_forward(cfg, params, seqs[1]).hidden.data
    assert np.array_equal(a, b)


def test_train_mode_dropout_is_seeded(cfg, params, seqs):
    run = lambda s: encoder_forward(cfg, params, seqs[1], mode="train", rng=np.random.default_rng(s)).hidden.data
    assert np.array_equal(run(5), run(5))
    assert not np.array_equal(run(5), encoder_forward(cfg, params, seqs[1]).hidden.data)


def test_bad_mode(cfg, params, seqs):
    with pytest.raises(ConfigurationError):
        encoder_forward(cfg, params, seqs[0], mode="infer")


def test_attention_rows(cfg, params, seqs):
    batch = collate(list(seqs))
    out = encode(cfg, params, batch.token_ids, batch.segment_ids, batch.key_mask, return_attention=True)
    assert len(out.attention_maps) == cfg.num_layers
    for m in out.attention_maps:
        np.testing.assert_allclose(m.sum(-1), 1.0, atol=1e-6)
        assert np.all(m[~batch.key_mask[:, None, None, :].repeat(m.shape[1], 1).repeat(m.shape[2], 2)] == 0.0)


def test_pad_positions_get_zero_gradient(cfg, params, seqs, rng):
    batch = collate(list(seqs))
    out = encode(cfg, params, batch.token_ids, batch.segment_ids, batch.key_mask).hidden
    weight = rng.normal(size=out.shape) * batch.key_mask[..., None]
    (out * weight).sum().backward()
    assert np.all(params["embed.token"].grad[PAD_ID] == 0.0)


def test_errors(cfg, params, seqs):
    seq = seqs[0]
    bad = seq.token_ids.copy()
    bad[1] = cfg.vocab_size
    with pytest.raises(VocabError):
        encode(cfg, params, bad[None], seq.segment_ids[None], np.ones((1, len(seq)), bool))
    small = EncoderConfig(vocab_size=cfg.vocab_size, hidden_size=16, max_len=8)
    with pytest.raises(CapacityError):
        encoder_forward(small, init_encoder_params(small), seqs[1])


def test_config_validation(vocab):
    with pytest.raises(ConfigurationError):
        EncoderConfig(vocab_size=len(vocab), hidden_size=10, num_heads=4)


def test_conditioning_init(cfg, params, schema, vocab):
    init_conditioning_embeddings(params, ModelVariant("bdst-j"), vocab, schema, seed=3)
    table = params["embed.token"].data
    assert np.array_equal(table[INTENT_ID], table[CLS_ID])
    with pytest.raises(StateError):
        init_conditioning_embeddings({}, ModelVariant("bdst-j"), vocab, schema, seed=3)


def test_baseline_leaves_conditioning_rows(cfg, schema, vocab):
    a = init_encoder_params(cfg)
    before = a["embed.token"].data.copy()
    init_conditioning_embeddings(a, ModelVariant("baseline"), vocab, schema, seed=3)
    assert np.array_equal(before, a["embed.token"].data)


def test_conditioning_embeddings_receive_gradient(schema, vocab, dialogues):
    model = DSTModel.create(schema, vocab, ModelVariant("bdst-j"), hidden_size=16, num_layers=1, max_len=40, dropout_rate=0.0)
    loss, _ = model.loss(model.batch(model.examples(dialogues[:2])))
    loss.backward()
    grad = model.params["embed.token"].grad
    for spec in schema.categorical_slots:
        assert np.abs(grad[vocab.slot_id(spec.key)]).sum() > 0
    assert np.abs(grad[INTENT_ID]).sum() > 0


def test_encoder_grad_check(schema, vocab, seqs):
    cfg = EncoderConfig(vocab_size=len(vocab), num_layers=2, hidden_size=8, num_heads=2, max_len=40, dropout_rate=0.0)
    params = init_encoder_params(cfg, np.random.default_rng(0))
    batch = collate(list(seqs))
    target = np.random.default_rng(1).normal(size=(2, batch.token_ids.shape[1], 8)) * batch.key_mask[..., None]

    def loss():
        return (encode(cfg, params, batch.token_ids, batch.segment_ids, batch.key_mask).hidden * target).sum()

    report = grad_check(loss, params, rel_tolerance=1e-4, max_checks=6)
    assert report.passed, report.lines()
