"""Command-line entry point wiring caches, projection, training and models.

Subcommands:

    build-cache       precompute vocabulary fingerprints into a cache file
    project           dump feature matrices for a dataset (extract once, reuse)
    train             train a model from a config, writing artifacts to --out
    eval              evaluate a (float or quantized) model file on a dataset
    quantize          convert a float model container to 8-bit
    predict           tag or classify a single text
    params            print the exact trainable-parameter count of a config
    import-mtop       normalize a flat slot-tagging TSV into dataset JSONL
    import-multiatis  normalize an utterance/intent TSV into dataset JSONL

Exit codes: 0 success, 1 usage error, 2 data or model-file error. Progress
and results go to stdout as JSON lines unless --quiet is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import PRESETS, RunConfig, build_run_config, save_run_config
from .data import import_mtop, import_multiatis, load_jsonl
from .errors import DataError
from .hashing import HashFamily
from .mixer import count_parameters, forward_batch, init_params
from .model_io import load_model, save_features, save_model, save_quantized_model
from .projection import SequenceFeaturizer, build_cache, load_cache, project_sequence, save_cache
from .quantize import quantize_params
from .training import LabelInventory, encode_dataset, evaluate, train
from .vocab import load_vocab, pre_tokenize


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _emit(args, payload: dict) -> None:
    if not getattr(args, "quiet", False):
        print(json.dumps(payload))


def _config_from_args(args) -> RunConfig:
    overrides: dict = {"train": {}, "paths": {}}
    if getattr(args, "seed", None) is not None:
        overrides["train"]["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["paths"]["out_dir"] = args.out
    return build_run_config(
        path=getattr(args, "config", None),
        preset=getattr(args, "preset", None),
        overrides=overrides,
    )


def _load_vocab_and_cache(cfg: RunConfig):
    if cfg.vocab_path is None:
        raise ValueError("config paths.vocab is required for this command")
    vocab = load_vocab(cfg.vocab_path)
    cache = None
    if cfg.projection.kind == "minhash":
        if cfg.cache_path is not None and os.path.exists(cfg.cache_path):
            cache = load_cache(cfg.cache_path, expected_vocab_size=len(vocab))
            if cache.n_hashes != cfg.projection.n_hashes:
                raise DataError(
                    f"{cfg.cache_path} was built with {cache.n_hashes} hashes, "
                    f"config expects {cfg.projection.n_hashes}"
                )
        else:
            cache = build_cache(vocab, HashFamily(cfg.projection.n_hashes))
    return vocab, cache


def _cmd_build_cache(args) -> int:
    vocab = load_vocab(args.vocab)
    cache = build_cache(vocab, HashFamily(args.hashes), width=args.width)
    save_cache(cache, args.output)
    _emit(args, {"cache": args.output, "units": len(vocab),
                 "hashes": args.hashes, "width": args.width})
    return 0


def _cmd_project(args) -> int:
    cfg = _config_from_args(args)
    vocab, cache = _load_vocab_and_cache(cfg)
    examples = load_jsonl(args.input)
    matrices = [
        project_sequence(ex.tokens, vocab, cache, cfg.projection) for ex in examples
    ]
    save_features(args.output, matrices)
    _emit(args, {"features": args.output, "examples": len(matrices),
                 "rows": cfg.projection.input_rows,
                 "cols": cfg.projection.max_seq_len})
    return 0


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    if cfg.train_data is None or cfg.val_data is None:
        raise ValueError("config paths.train_data and paths.val_data are required")
    out_dir = cfg.out_dir
    if out_dir is None:
        raise ValueError("an output directory is required (--out or paths.out_dir)")
    os.makedirs(out_dir, exist_ok=True)
    vocab, cache = _load_vocab_and_cache(cfg)
    train_examples = load_jsonl(cfg.train_data)
    val_examples = load_jsonl(cfg.val_data)

    log_path = os.path.join(out_dir, "train_log.jsonl")
    with open(log_path, "w", encoding="utf-8") as log_fh:

        def log_fn(entry: dict) -> None:
            log_fh.write(json.dumps(entry) + "\n")
            _emit(args, entry)

        result = train(
            train_examples,
            val_examples,
            vocab,
            cfg.projection,
            cfg.train,
            bottleneck=cfg.bottleneck,
            hidden=cfg.hidden,
            depth=cfg.depth,
            head=cfg.head,
            cache=cache,
            log_fn=log_fn,
        )

    model_path = os.path.join(out_dir, "model.bin")
    save_model(model_path, result.params, result.model_cfg)
    with open(os.path.join(out_dir, "labels.json"), "w", encoding="utf-8") as fh:
        json.dump(list(result.inventory.labels), fh, ensure_ascii=False, indent=2)
    echo = RunConfig(
        projection=cfg.projection,
        bottleneck=cfg.bottleneck,
        hidden=cfg.hidden,
        depth=cfg.depth,
        head=cfg.head,
        num_labels=result.model_cfg.num_labels,
        train=cfg.train,
        vocab_path=cfg.vocab_path,
        cache_path=cfg.cache_path,
        train_data=cfg.train_data,
        val_data=cfg.val_data,
        out_dir=out_dir,
    )
    save_run_config(echo, os.path.join(out_dir, "config.json"))
    _emit(args, {"model": model_path, "best_epoch": result.best_epoch,
                 "best_metric": result.best_metric})
    return 0


def _labels_for_model(args, model_path: str) -> list[str]:
    labels_path = getattr(args, "labels", None)
    if labels_path is None:
        labels_path = os.path.join(os.path.dirname(os.path.abspath(model_path)), "labels.json")
    try:
        with open(labels_path, encoding="utf-8") as fh:
            labels = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read label inventory {labels_path}: {exc}") from exc
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise DataError(f"{labels_path}: expected a JSON array of label strings")
    return labels


def _cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    params, model_cfg, was_quantized = load_model(args.model)
    labels = _labels_for_model(args, args.model)
    if len(labels) != model_cfg.num_labels:
        raise DataError(
            f"label inventory has {len(labels)} entries, model expects {model_cfg.num_labels}"
        )
    inventory = LabelInventory(labels=tuple(labels), index={l: i for i, l in enumerate(labels)})
    vocab, cache = _load_vocab_and_cache(cfg)
    featurizer = SequenceFeaturizer(vocab, cfg.projection, cache=cache)
    examples = load_jsonl(args.data)
    data = encode_dataset(examples, featurizer, inventory, model_cfg.head, strict=False)
    report = evaluate(data, featurizer, params, model_cfg, inventory,
                      batch_size=cfg.train.batch_size)
    report["examples"] = len(examples)
    report["quantized"] = was_quantized
    print(json.dumps(report))
    return 0


def _cmd_quantize(args) -> int:
    params, model_cfg, was_quantized = load_model(args.model)
    if was_quantized:
        raise DataError(f"{args.model} is already quantized")
    save_quantized_model(args.output, quantize_params(params), model_cfg)
    _emit(args, {
        "quantized": args.output,
        "float_bytes": os.path.getsize(args.model),
        "quantized_bytes": os.path.getsize(args.output),
    })
    return 0


def _cmd_predict(args) -> int:
    cfg = _config_from_args(args)
    params, model_cfg, _ = load_model(args.model)
    labels = _labels_for_model(args, args.model)
    inventory = LabelInventory(labels=tuple(labels), index={l: i for i, l in enumerate(labels)})
    vocab, cache = _load_vocab_and_cache(cfg)
    featurizer = SequenceFeaturizer(vocab, cfg.projection, cache=cache)
    tokens = pre_tokenize(args.text)
    if not tokens:
        raise ValueError("no tokens found in the input text")
    ids, valid = featurizer.encode([tokens])
    inputs = featurizer.materialize(ids, valid)
    logits, _ = forward_batch(inputs, valid, params, model_cfg)
    if model_cfg.head == "token":
        pred = logits[0].argmax(axis=0)[: valid[0]]
        payload = {"tokens": tokens[: int(valid[0])],
                   "labels": [labels[int(i)] for i in pred]}
    else:
        payload = {"label": labels[int(logits[0].argmax())]}
    print(json.dumps(payload, ensure_ascii=False))
    return 0


def _parse_field_map(raw: str) -> dict:
    try:
        field_map = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"--field-map must be JSON: {exc}") from exc
    if not isinstance(field_map, dict):
        raise ValueError("--field-map must be a JSON object")
    return field_map


def _cmd_import_mtop(args) -> int:
    summary = import_mtop(args.input, _parse_field_map(args.field_map), args.output)
    print(json.dumps({k: summary[k] for k in ("examples", "skipped", "labels")}))
    return 0


def _cmd_import_multiatis(args) -> int:
    summary = import_multiatis(args.input, _parse_field_map(args.field_map), args.output)
    print(json.dumps({k: summary[k] for k in ("examples", "skipped", "labels")}))
    return 0


def _cmd_params(args) -> int:
    cfg = _config_from_args(args)
    model_cfg = cfg.model_config(num_labels=args.num_labels)
    count = count_parameters(model_cfg)
    if args.check_init:
        actual = sum(p.size for p in init_params(model_cfg, seed=0).values())
        if actual != count:
            raise AssertionError(f"count_parameters {count} != initialized size {actual}")
    print(count)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="hashmixer", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="override the training seed")
        p.add_argument("--quiet", action="store_true", help="suppress JSON progress lines")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("build-cache", help="precompute vocabulary fingerprints")
    p.add_argument("--vocab", required=True)
    p.add_argument("--hashes", type=int, default=64)
    p.add_argument("--width", type=int, choices=(32, 64), default=64)
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=_cmd_build_cache)

    p = sub.add_parser("project", help="dump feature matrices for a dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--input", required=True)
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("train", help="train a model from a config")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a model file on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--labels", default=None, help="label inventory JSON (default: next to model)")
    common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("quantize", help="convert a float model to 8-bit")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=_cmd_quantize)

    p = sub.add_parser("predict", help="tag or classify one text")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--labels", default=None)
    common(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("import-mtop", help="normalize a flat slot-tagging TSV to JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--field-map", required=True,
                   help='JSON, e.g. {"tokens": 1, "slots": 2, "skip_header": false}')
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=_cmd_import_mtop)

    p = sub.add_parser("import-multiatis", help="normalize an utterance/intent TSV to JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--field-map", required=True,
                   help='JSON, e.g. {"text": 1, "intent": 2, "skip_header": true}')
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=_cmd_import_multiatis)

    p = sub.add_parser("params", help="print the parameter count of a config")
    p.add_argument("--config", default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--num-labels", type=int, default=78)
    p.add_argument("--check-init", action="store_true",
                   help="cross-check against an actual initialization")
    common(p)
    p.set_defaults(func=_cmd_params)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, IndexError, LookupError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
