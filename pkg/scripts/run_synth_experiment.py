#!/usr/bin/env python3
"""Self-contained experiment: mixer depth vs. the projection-only baseline.

Generates the synthetic tagging task (10% of positions carry a label copied
from the previous token), trains a depth-2 model and a depth-0 baseline with
identical projections, then quantizes the best model and reports the 8-bit
evaluation next to the float one.

    python3 scripts/run_synth_experiment.py --examples 5000 --out /tmp/synth
"""

import argparse
import json
import os
import time

from hashmixer.data import synth_examples
from hashmixer.model_io import load_model, save_model, save_quantized_model
from hashmixer.projection import ProjectionConfig, SequenceFeaturizer
from hashmixer.quantize import quantize_params
from hashmixer.training import TrainConfig, encode_dataset, evaluate, train
from hashmixer.vocab import Vocabulary


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--examples", type=int, default=5000)
    parser.add_argument("--vocab-size", type=int, default=300)
    parser.add_argument("--epochs", type=int, default=6)
    parser.add_argument("--seed", type=int, default=3)
    parser.add_argument("--out", default="synth_run")
    args = parser.parse_args()

    task = synth_examples(seed=20260811, n_examples=args.examples,
                          vocab_size=args.vocab_size)
    vocab = Vocabulary.from_units(task.vocab_units)
    proj = ProjectionConfig(kind="minhash", n_hashes=64, feature_size=1024,
                            window=0, max_seq_len=32)
    tc = TrainConfig(learning_rate=5e-4, batch_size=256, epochs=args.epochs,
                     seed=args.seed)

    results = {}
    for depth in (2, 0):
        started = time.time()
        result = train(task.train, task.val, vocab, proj, tc,
                       bottleneck=64, hidden=256, depth=depth, head="token",
                       log_fn=lambda e: print(json.dumps({"depth": depth, **e})))
        results[depth] = result
        print(f"depth {depth}: best val {result.best_metric:.4f} "
              f"@ epoch {result.best_epoch} ({time.time() - started:.0f}s)")

    os.makedirs(args.out, exist_ok=True)
    best = results[2]
    float_path = os.path.join(args.out, "model.bin")
    quant_path = os.path.join(args.out, "model.q.bin")
    save_model(float_path, best.params, best.model_cfg)
    save_quantized_model(quant_path, quantize_params(best.params), best.model_cfg)

    featurizer = SequenceFeaturizer(vocab, proj)
    val_data = encode_dataset(task.val, featurizer, best.inventory, "token", strict=False)
    for name, path in (("float32", float_path), ("int8", quant_path)):
        params, cfg, _ = load_model(path)
        report = evaluate(val_data, featurizer, params, cfg, best.inventory)
        size_kb = os.path.getsize(path) / 1024
        print(f"{name}: val {report['value']:.4f}, file {size_kb:.0f} KiB")


if __name__ == "__main__":
    main()
