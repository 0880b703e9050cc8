import io
import json
import math

import pytest

from tcdst.cli import REPL_HELP, main, run_repl
from tcdst.corpus import corpus_to_json, generate_synthetic, read_corpus, save_corpus, toy_schema
from tcdst.errors import ConfigurationError
from tcdst.model import DSTModel
from tcdst.train import RunConfig

TINY = {"hidden_size": 16, "num_layers": 1, "num_heads": 2, "max_len": 48, "dtype": "float64"}


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


@pytest.fixture
def corpus_path(tmp_path):
    path = tmp_path / "train.json"
    save_corpus(path, toy_schema(), generate_synthetic(toy_schema(), 8, 1.0, seed=4))
    return path


def write_config(tmp_path, **overrides):
    cfg = {"encoder": TINY, "epochs": 2, "learning_rate": 1e-3, **overrides}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


def train_tiny(tmp_path, corpus_path, variant="bdst-j", name="m", **overrides):
    ckpt, log = tmp_path / f"{name}.ckpt", tmp_path / f"{name}.jsonl"
    code, out = run("train", "--config", write_config(tmp_path, **overrides), "--train", corpus_path,
                    "--variant", variant, "--seed", 1, "--out", ckpt, "--log", log)
    assert code == 0, out
    return ckpt, log, out


class TestTrain:
    def test_loop_accounting(self, tmp_path, corpus_path):
        _, dialogues = read_corpus(corpus_path)
        turns = sum(len(d.turns) for d in dialogues)
        ckpt, log, out = train_tiny(tmp_path, corpus_path, epochs=1, batch_size=32)
        summary = json.loads(out)
        assert summary["steps"] == math.ceil(turns / 32)
        assert ckpt.exists()
        records = [json.loads(line) for line in log.read_text().splitlines()]
        assert len(records) == 1
        assert {"gate", "span_start", "span_end", "intent", "cat", "total", "valid_joint_goal"} <= set(records[0])

    def test_same_seed_same_log(self, tmp_path, corpus_path):
        _, log_a, _ = train_tiny(tmp_path, corpus_path, name="a")
        _, log_b, _ = train_tiny(tmp_path, corpus_path, name="b")
        assert log_a.read_bytes() == log_b.read_bytes()

    def test_bdst_j_without_categorical_slots(self, tmp_path):
        schema = toy_schema(n_categorical=0)
        path = tmp_path / "span_only.json"
        save_corpus(path, schema, generate_synthetic(schema, 4, 1.0, seed=2))
        _, _, out = train_tiny(tmp_path, path, epochs=1)
        assert "warning" in out and "BDST-I" in out
        assert json.loads(out[out.index("{"):])["variant"] == "bdst-i"

    def test_missing_corpus_path(self, tmp_path):
        code, _ = run("train", "--config", write_config(tmp_path))
        assert code == 1

    def test_invalid_corpus(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"schema": toy_schema().to_dict(),
                                   "dialogues": [{"turns": [{"usr": "hi", "intent": "fly"}]}]}))
        code, _ = run("train", "--config", write_config(tmp_path), "--train", bad)
        assert code == 1

    def test_unknown_config_field(self, tmp_path, corpus_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"epoch": 3}))
        assert run("train", "--config", cfg, "--train", corpus_path)[0] == 1

    def test_learning_rate_defaults(self):
        assert RunConfig().lr == 1e-4
        assert RunConfig(resume_from="x.ckpt").lr == 2e-6
        assert (RunConfig().batch_size, RunConfig().epochs) == (32, 100)
        with pytest.raises(ConfigurationError):
            RunConfig(batch_size=0)

    def test_resume(self, tmp_path, corpus_path):
        ckpt, _, _ = train_tiny(tmp_path, corpus_path, epochs=1)
        code, out = run("train", "--config", write_config(tmp_path, epochs=1), "--train", corpus_path,
                        "--resume", ckpt, "--out", tmp_path / "r.ckpt")
        assert code == 0, out
        _, meta, opt = DSTModel.load(tmp_path / "r.ckpt", with_optimizer=True)
        assert opt.learning_rate == 1e-3 and opt.step_count == 2


class TestEval:
    def test_oracle(self, tmp_path, corpus_path):
        ckpt, _, _ = train_tiny(tmp_path, corpus_path, epochs=1)
        code, out = run("eval", "--checkpoint", ckpt, "--corpus", corpus_path, "--oracle")
        assert code == 0
        report = json.loads(out)
        assert report["joint_goal"] == 1.0 and report["intent_accuracy"] == 1.0

    def test_empty_corpus(self, tmp_path, corpus_path):
        ckpt, _, _ = train_tiny(tmp_path, corpus_path, epochs=1)
        empty = tmp_path / "empty.json"
        empty.write_text(corpus_to_json(toy_schema(), []))
        report = json.loads(run("eval", "--checkpoint", ckpt, "--corpus", empty)[1])
        assert report["turn_count"] == 0
        assert report["joint_goal"] is None and report["intent_accuracy"] is None and report["slot_f1"] is None

    def test_baseline_omits_intent(self, tmp_path, corpus_path):
        ckpt, _, _ = train_tiny(tmp_path, corpus_path, variant="baseline", epochs=1)
        report = json.loads(run("eval", "--checkpoint", ckpt, "--corpus", corpus_path)[1])
        assert "intent_accuracy" not in report and report["turn_count"] > 0

    def test_reproduces_logged_validation_metric(self, tmp_path, corpus_path):
        ckpt, log, out = train_tiny(tmp_path, corpus_path, epochs=3)
        best = json.loads(out)["best_epoch"]
        record = [json.loads(l) for l in log.read_text().splitlines()][best - 1]
        report = json.loads(run("eval", "--checkpoint", ckpt, "--corpus", corpus_path)[1])
        assert report["joint_goal"] == record["valid_joint_goal"]
        assert report["intent_accuracy"] == record["valid_intent_accuracy"]

    def test_schema_mismatch(self, tmp_path, corpus_path):
        ckpt, _, _ = train_tiny(tmp_path, corpus_path, epochs=1)
        other = tmp_path / "other.json"
        save_corpus(other, toy_schema(n_span=1), generate_synthetic(toy_schema(n_span=1), 2, 1.0))
        assert run("eval", "--checkpoint", ckpt, "--corpus", other)[0] == 1

    def test_missing_checkpoint(self, tmp_path, corpus_path):
        assert run("eval", "--checkpoint", tmp_path / "none.ckpt", "--corpus", corpus_path)[0] == 2


class TestRepl:
    @pytest.fixture
    def model(self, tmp_path, corpus_path):
        ckpt, _, _ = train_tiny(tmp_path, corpus_path, epochs=1)
        return DSTModel.load(ckpt)[0]

    def test_turn_then_reset_then_quit(self, model):
        out = io.StringIO()
        code = run_repl(model, io.StringIO("\ni want to book a taxi\n/reset\n/quit\n"), out)
        text = out.getvalue()
        assert code == 0
        assert "intent: " in text and "gates: " in text
        assert text.rstrip().splitlines()[-2].endswith("state: {}")

    def test_bad_command_shows_help(self, model):
        out = io.StringIO()
        assert run_repl(model, io.StringIO("/what\n/quit\n"), out) == 0
        assert REPL_HELP in out.getvalue()

    def test_end_of_input(self, model):
        assert run_repl(model, io.StringIO(""), io.StringIO()) == 0


class TestGenerate:
    def test_rho_one(self, tmp_path):
        path = tmp_path / "g.json"
        code, out = run("generate", "--n", 100, "--rho", 1, "--out", path)
        assert code == 0
        assert len(read_corpus(path)[1]) == 100
        v = float(out.split("cramers_v:")[1])
        assert v >= 0.95

    def test_empty(self, tmp_path):
        path = tmp_path / "g.json"
        code, out = run("generate", "--n", 0, "--out", path)
        assert code == 0 and "undefined" in out
        assert read_corpus(path)[1] == []

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        run("generate", "--n", 10, "--rho", 0.5, "--seed", 3, "--out", a)
        run("generate", "--n", 10, "--rho", 0.5, "--seed", 3, "--out", b)
        assert a.read_bytes() == b.read_bytes()

    def test_unwritable(self, tmp_path):
        assert run("generate", "--n", 1, "--out", tmp_path / "missing" / "x.json")[0] == 2


def test_analyze(corpus_path):
    code, out = run("analyze", "--corpus", corpus_path)
    assert code == 0
    assert "find_restaurant" in out and "cramers_v:" in out


def test_gradcheck_command():
    code, out = run("gradcheck", "--hidden", 8, "--layers", 1, "--max-checks", 3)
    assert code == 0
    assert out.splitlines()[-1].startswith("PASS")
