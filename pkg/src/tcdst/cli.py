"""``tcdst`` command-line entry point."""

import argparse
import json
import logging
import sys
import time

from . import __version__
from .batching import collate
from .corpus import (contingency_table, cramers_v, generate_synthetic, load_schema, read_corpus, save_corpus,
                     toy_schema)
from .errors import (CheckpointError, ConfigurationError, CorpusError, SchemaError, TCDSTError, UndefinedValueError,
                     VocabError)
from .metrics import update_state
from .model import DSTModel
from .numeric import kernels

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
_VALIDATION_ERRORS = (CorpusError, SchemaError, ConfigurationError, VocabError, CheckpointError)

REPL_HELP = """commands:
  /reset   clear the dialogue state
  /quit    leave the session
  /help    show this text
Enter the system utterance (may be empty) at 'system>' and the user utterance at 'user>'."""

log = logging.getLogger("tcdst")


def _print_json(obj, out):
    out.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_train(args, out):
    from .train import RunConfig, train

    cfg = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides = {"variant": args.variant, "seed": args.seed, "checkpoint_path": args.out, "train_path": args.train,
                 "valid_path": args.valid, "epochs": args.epochs, "batch_size": args.batch_size,
                 "learning_rate": args.lr, "log_path": args.log, "resume_from": args.resume}
    d = cfg.to_dict()
    d.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig.from_dict(d)
    if not cfg.train_path:
        raise ConfigurationError("no training corpus: pass --train or set train_path in --config")
    result = train(cfg)
    for w in result.warnings:
        out.write(f"warning: {w}\n")
    _print_json({"variant": result.variant, "best_epoch": result.best_epoch, "best_joint_goal": result.best_joint_goal,
                 "steps": result.steps, "checkpoint": cfg.checkpoint_path, "final": result.log[-1]}, out)
    return EXIT_OK


def cmd_eval(args, out):
    from .train import evaluate

    model, _ = DSTModel.load(args.checkpoint)
    schema, dialogues = read_corpus(args.corpus)
    if schema.to_dict() != model.schema.to_dict():
        raise ConfigurationError("corpus schema does not match the checkpoint schema")
    report = evaluate(model, dialogues, oracle=args.oracle)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            _print_json(report, fh)
    _print_json(report, out)
    return EXIT_OK


def run_repl(model, inp, out):
    """Interactive tracking loop over text streams; returns an exit code."""
    state, history = {}, []

    def ask(prompt):
        out.write(prompt)
        out.flush()
        line = inp.readline()
        if not line:
            return None
        return line.rstrip("\n")

    out.write(f"variant {model.variant.kind.value}; /help for commands\n")
    while True:
        sys_line = ask("system> ")
        if sys_line is None:
            return EXIT_OK
        cmd = sys_line.strip()
        if cmd.startswith("/"):
            if cmd == "/quit":
                return EXIT_OK
            if cmd == "/reset":
                state, history = {}, []
                out.write("state: {}\n")
            else:
                out.write(REPL_HELP + "\n")
            continue
        usr_line = ask("user> ")
        if usr_line is None:
            return EXIT_OK
        cmd = usr_line.strip()
        if cmd == "/quit":
            return EXIT_OK
        if cmd == "/reset":
            state, history = {}, []
            out.write("state: {}\n")
            continue
        if cmd.startswith("/") or not cmd:
            out.write(REPL_HELP + "\n")
            continue
        if sys_line.strip():
            history.append(("sys", sys_line))
        seq = model.build_sequence(history, usr_line)
        pred, info = model.predict_batch(collate([seq]))[0]
        history.append(("usr", usr_line))
        state = update_state(state, pred, model.schema)
        if pred.intent is not None:
            out.write(f"intent: {pred.intent} ({info['intent_prob']:.3f})\n")
        out.write("gates: " + json.dumps(info["gates"], sort_keys=True) + "\n")
        out.write("spans: " + json.dumps({k: v[2] for k, v in info["spans"].items()}, sort_keys=True) + "\n")
        if info["categorical"]:
            out.write("categorical: " + json.dumps(info["categorical"], sort_keys=True) + "\n")
        out.write("state: " + json.dumps(state, sort_keys=True) + "\n")


def cmd_repl(args, out):
    model, _ = DSTModel.load(args.checkpoint)
    return run_repl(model, sys.stdin, out)


def cmd_generate(args, out):
    schema = load_schema(args.schema) if args.schema else toy_schema()
    dialogues = generate_synthetic(schema, args.n, args.rho, seed=args.seed)
    if args.out:
        save_corpus(args.out, schema, dialogues)
    turns = sum(len(d.turns) for d in dialogues)
    try:
        v = f"{cramers_v(contingency_table(dialogues, schema)):.4f}"
    except UndefinedValueError:
        v = "undefined"
    out.write(f"dialogues: {len(dialogues)}\nturns: {turns}\ncramers_v: {v}\n")
    return EXIT_OK


def cmd_analyze(args, out):
    schema, dialogues = read_corpus(args.corpus)
    table = contingency_table(dialogues, schema)
    keys = schema.slot_keys
    width = max(len(i) for i in schema.intents) + 2
    out.write(" " * width + " ".join(f"{k:>18s}" for k in keys) + "\n")
    for name, row in zip(schema.intents, table):
        out.write(f"{name:<{width}s}" + " ".join(f"{c:18d}" for c in row) + "\n")
    try:
        out.write(f"cramers_v: {cramers_v(table):.4f}\n")
    except UndefinedValueError as exc:
        out.write(f"cramers_v: undefined ({exc})\n")
    return EXIT_OK


def cmd_gradcheck(args, out):
    from .diagnostics import model_grad_check

    t0 = time.perf_counter()
    report, _, _ = model_grad_check(args.variant or "bdst-j", seed=args.seed or 0, hidden_size=args.hidden,
                                    num_layers=args.layers, max_checks=args.max_checks, rel_tolerance=args.tolerance)
    for line in report.lines():
        out.write(line + "\n")
    status = "PASS" if report.passed else "FAIL"
    out.write(f"{status} max_rel_error={report.max_rel_error:.3e} tolerance={args.tolerance:g} "
              f"checked={report.checked} backend={kernels.BACKEND} seconds={time.perf_counter() - t0:.1f}\n")
    return EXIT_OK if report.passed else EXIT_RUNTIME


def build_parser():
    p = argparse.ArgumentParser(prog="tcdst", description="Task-conditioned Transformer dialogue state tracking.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON RunConfig")
        sp.add_argument("--variant", choices=["baseline", "bdst-i", "bdst-c", "bdst-j"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        return sp

    t = common(sub.add_parser("train", help="train a model"))
    t.add_argument("--train")
    t.add_argument("--valid")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--log")
    t.add_argument("--resume")
    t.set_defaults(func=cmd_train)

    e = common(sub.add_parser("eval", help="evaluate a checkpoint on a corpus"))
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--oracle", action="store_true", help="score gold annotations against themselves")
    e.set_defaults(func=cmd_eval)

    r = common(sub.add_parser("repl", help="interactive turn-by-turn tracking"))
    r.add_argument("--checkpoint", required=True)
    r.set_defaults(func=cmd_repl)

    g = common(sub.add_parser("generate", help="write a synthetic corpus"))
    g.add_argument("--schema", help="schema JSON (defaults to the built-in toy schema)")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--rho", type=float, default=1.0)
    g.set_defaults(func=cmd_generate)

    gc = common(sub.add_parser("gradcheck", help="finite-difference check of the full loss"))
    gc.add_argument("--hidden", type=int, default=32)
    gc.add_argument("--layers", type=int, default=2)
    gc.add_argument("--max-checks", type=int, default=16)
    gc.add_argument("--tolerance", type=float, default=1e-4)
    gc.set_defaults(func=cmd_gradcheck)

    a = common(sub.add_parser("analyze", help="intent/slot contingency and Cramér's V of a corpus"))
    a.add_argument("--corpus", required=True)
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "generate" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args, out)
    except _VALIDATION_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except (TCDSTError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
