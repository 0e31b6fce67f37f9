"""Command-line entry point.

Subcommands: gen-abstract, gen-langsym, strip-cot, eval, eval-langsym,
budget, inspect, verify. Exit codes: 0 success, 2 configuration problem,
3 I/O problem, 4 verification mismatch (argparse usage errors also exit 2).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .errors import BackendError, ConfigError, FormatError
from .harness import (
    FORCE_ANSWER,
    FORCE_THINK,
    NO_FORCING,
    EvalReport,
    ForcingConfig,
    OracleBackend,
    RandomBackend,
    StdioBackend,
    evaluate,
    make_eval_prompt,
    step_correctness_grid,
    step_dag_breakdown,
)
from .langsym import (
    ChatPrompt,
    LangSymConfig,
    TextOracleBackend,
    TextStdioBackend,
    evaluate_langsym,
    make_langsym_eval_prompt,
)
from .recipe import Recipe, expected_tokens, parse_alpha
from .sequences import DatasetConfig, Sequence, build_artifacts
from .storage import (
    KIND_ABSTRACT,
    KIND_LANGSYM,
    Manifest,
    read_records,
    strip_dataset,
    verify_dataset,
    write_dataset,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VERIFY = 4

_STRATEGY_FLAGS = {"think": FORCE_THINK, "answer": FORCE_ANSWER, "none": NO_FORCING}


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _apply_overrides(obj: dict, args: argparse.Namespace) -> dict:
    if getattr(args, "seed", None) is not None:
        obj["master_seed"] = args.seed
    if getattr(args, "t", None) is not None:
        obj["t"] = args.t
    return obj


def cmd_gen_abstract(args: argparse.Namespace) -> int:
    config_json = _apply_overrides(_load_config_file(args.config), args)
    DatasetConfig.from_json(config_json)  # validate before writing anything
    manifest = write_dataset(
        args.out, KIND_ABSTRACT, config_json, shards=args.shards, workers=args.workers
    )
    print(f"wrote {manifest.stats['items']} sequences to {args.out} ({len(manifest.outputs)} shard(s))")
    return EXIT_OK


def cmd_gen_langsym(args: argparse.Namespace) -> int:
    config_json = _apply_overrides(_load_config_file(args.config), args)
    LangSymConfig.from_json(config_json)
    manifest = write_dataset(
        args.out, KIND_LANGSYM, config_json, shards=args.shards, workers=args.workers
    )
    print(f"wrote {manifest.stats['items']} prompts to {args.out} ({len(manifest.outputs)} shard(s))")
    return EXIT_OK


def cmd_strip_cot(args: argparse.Namespace) -> int:
    manifest = strip_dataset(args.inp, args.out, args.k_prime, args.seed, workers=args.workers)
    print(f"stripped k'={args.k_prime} into {args.out} ({manifest.stats['items']} items)")
    return EXIT_OK


def _build_eval_prompts(dataset_dir: str):
    manifest = Manifest.load(dataset_dir)
    if manifest.kind != KIND_ABSTRACT:
        raise ConfigError(f"eval expects an abstract dataset, found kind {manifest.kind!r}")
    config = DatasetConfig.from_json(manifest.config)
    vocab, _, _ = build_artifacts(config)
    prompts = [make_eval_prompt(Sequence.from_record(rec), vocab) for rec in read_records(dataset_dir)]
    return prompts, vocab


def _write_report(report: EvalReport, path: str) -> None:
    doc = report.to_json()
    doc["step_grid"] = step_correctness_grid(report)
    doc["dag_breakdown"] = step_dag_breakdown(report)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def cmd_eval(args: argparse.Namespace) -> int:
    prompts, vocab = _build_eval_prompts(args.prompts)
    if args.backend == "oracle":
        backend = OracleBackend(prompts, vocab)
    elif args.backend == "random":
        backend = RandomBackend(prompts, vocab, seed=args.seed or 0)
    else:
        if not args.backend_cmd:
            raise ConfigError("--backend stdio requires --backend-cmd")
        backend = StdioBackend(args.backend_cmd.split())
    forcing = ForcingConfig(strategy=_STRATEGY_FLAGS[args.strategy], budget=args.budget)
    try:
        report = evaluate(backend, prompts, forcing, vocab)
    finally:
        if isinstance(backend, StdioBackend):
            backend.close()
    _write_report(report, args.report)
    print(f"accuracy {report.accuracy:.4f} over {len(report.records)} prompts -> {args.report}")
    return EXIT_OK


def cmd_eval_langsym(args: argparse.Namespace) -> int:
    manifest = Manifest.load(args.prompts)
    if manifest.kind != KIND_LANGSYM:
        raise ConfigError(f"eval-langsym expects a langsym dataset, found kind {manifest.kind!r}")
    config = LangSymConfig.from_json(manifest.config)
    prompts = [make_langsym_eval_prompt(ChatPrompt.from_record(rec)) for rec in read_records(args.prompts)]
    if args.backend == "oracle":
        backend = TextOracleBackend(prompts, config.templates)
    else:
        if not args.backend_cmd:
            raise ConfigError("--backend stdio-text requires --backend-cmd")
        backend = TextStdioBackend(args.backend_cmd.split())
    strategy = _STRATEGY_FLAGS[args.strategy]
    try:
        report = evaluate_langsym(backend, prompts, strategy, args.budget, config.templates)
    finally:
        if isinstance(backend, TextStdioBackend):
            backend.close()
    _write_report(report, args.report)
    print(f"accuracy {report.accuracy:.4f} over {len(report.records)} prompts -> {args.report}")
    return EXIT_OK


def cmd_budget(args: argparse.Namespace) -> int:
    recipe = Recipe(alpha=parse_alpha(args.alpha), a=args.a, b=args.b)
    report = expected_tokens(recipe, args.n, args.c, args.k, args.t)
    print(json.dumps(report.to_json()))
    print()
    print(report.table())
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    manifest = Manifest.load(args.inp)
    record = None
    for rec in read_records(args.inp):
        key = "seq_id" if manifest.kind == KIND_ABSTRACT else "prompt_id"
        if rec[key] == args.index:
            record = rec
            break
    if record is None:
        raise FormatError(f"no item with index {args.index} in {args.inp}")
    if manifest.kind == KIND_LANGSYM:
        meta = record["meta"]
        print(f"prompt {record['prompt_id']}  (n={meta['n']} m={meta['m']} c={meta['c']} k={meta['k']} r_cot={meta['r_cot']:.4f})")
        for msg in record["messages"]:
            print(f"--- {msg['role']} ---")
            print(msg["content"])
        return EXIT_OK
    config = DatasetConfig.from_json(manifest.config)
    vocab, _, _ = build_artifacts(config)
    meta = record["meta"]
    print(f"sequence {record['seq_id']}  (n={meta['n']} m={meta['m']} c={meta['c']} k={meta['k']} r_cot={meta['r_cot']:.4f})")
    for pos, (tok, mask) in enumerate(zip(record["tokens"], record["loss_mask"])):
        name = vocab.token_name(tok)
        flag = " *" if mask else ""
        print(f"[{pos:5d}] {tok:6d}  {name}{flag}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    problems = verify_dataset(args.manifest, sample=args.sample, seed=args.seed or 0, workers=args.workers)
    if problems:
        for p in problems:
            print(f"MISMATCH: {p}", file=sys.stderr)
        return EXIT_VERIFY
    print("verified: all checked shards regenerate bit-exactly")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotforge", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-abstract", help="generate an abstract-token dataset")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--t", type=int, help="override dataset size")
    p.set_defaults(func=cmd_gen_abstract)

    p = sub.add_parser("gen-langsym", help="generate a string-symbolic chat dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--t", type=int, help="override dataset size")
    p.set_defaults(func=cmd_gen_langsym)

    p = sub.add_parser("strip-cot", help="re-render K' thinking examples as plain ones")
    p.add_argument("--in", dest="inp", required=True, help="input dataset directory")
    p.add_argument("--k-prime", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_strip_cot)

    p = sub.add_parser("eval", help="evaluate a token backend on abstract prompts")
    p.add_argument("--prompts", required=True, help="dataset directory (all-CoT rendering)")
    p.add_argument("--backend", choices=["oracle", "random", "stdio"], required=True)
    p.add_argument("--backend-cmd", help="command line for the stdio backend")
    p.add_argument("--strategy", choices=list(_STRATEGY_FLAGS), required=True)
    p.add_argument("--budget", type=int, help="max generated tokens (default C+6)")
    p.add_argument("--seed", type=int, help="seed for the random backend")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eval-langsym", help="evaluate a text backend on chat prompts")
    p.add_argument("--prompts", required=True)
    p.add_argument("--backend", choices=["oracle", "stdio-text"], required=True)
    p.add_argument("--backend-cmd")
    p.add_argument("--strategy", choices=["think", "answer"], required=True)
    p.add_argument("--budget", type=int, default=1000, help="completion character cap")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval_langsym)

    p = sub.add_parser("budget", help="expected example/token counts for a recipe")
    p.add_argument("--alpha", required=True, help='float or "inf"')
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=0.0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("inspect", help="pretty-print one dataset item")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--index", type=int, default=0)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("verify", help="regenerate from a manifest and compare hashes")
    p.add_argument("--manifest", required=True, help="dataset directory or manifest.json")
    p.add_argument("--sample", type=int, help="check only this many shards")
    p.add_argument("--seed", type=int, help="shard sampling seed")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, FileNotFoundError, OSError, BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
