#!/usr/bin/env python3
"""Print the parameter-count table for the ablation grid and shipped presets.

Counts assume the standard evaluation geometry: sequence length 64, hidden
size 256, 78-label token head.
"""

from hashmixer.config import PRESETS, build_run_config
from hashmixer.mixer import ModelConfig, count_parameters

ABLATIONS = [
    ("base", 1024, 64, 1, 256, 2),
    ("1: feature 512", 512, 64, 1, 256, 2),
    ("2: feature 2048", 2048, 64, 1, 256, 2),
    ("3: 32 hashes", 1024, 32, 1, 256, 2),
    ("4: 128 hashes", 1024, 128, 1, 256, 2),
    ("5: window 0", 1024, 64, 0, 256, 2),
    ("6: window 4", 1024, 64, 4, 256, 2),
    ("7: bottleneck 64", 1024, 64, 1, 64, 2),
    ("8: bottleneck 512", 1024, 64, 1, 512, 2),
    ("9: 1 layer", 1024, 64, 1, 256, 1),
    ("10: 4 layers", 1024, 64, 1, 256, 4),
    ("11: large", 2048, 64, 1, 256, 4),
    ("12: x-large", 2048, 64, 1, 512, 4),
    ("13: x-small", 1024, 64, 0, 64, 2),
    ("14: tiny", 512, 64, 0, 64, 2),
]


def human(count: int) -> str:
    return f"{count / 1e6:.2f}M" if count >= 1e6 else f"{count / 1e3:.0f}K"


def main() -> None:
    print(f"{'configuration':<20} {'feature':>7} {'window':>6} "
          f"{'bottleneck':>10} {'layers':>6} {'params':>10}")
    for name, feature, _hashes, window, bottleneck, depth in ABLATIONS:
        cfg = ModelConfig(input_rows=(2 * window + 1) * feature, seq_len=64,
                          bottleneck=bottleneck, hidden=256, depth=depth,
                          head="token", num_labels=78)
        print(f"{name:<20} {feature:>7} {window:>6} {bottleneck:>10} "
              f"{depth:>6} {human(count_parameters(cfg)):>10}")
    print()
    print("shipped presets:")
    for preset in sorted(PRESETS):
        run_cfg = build_run_config(preset=preset)
        count = count_parameters(run_cfg.model_config(num_labels=78))
        print(f"  {preset:<10} {human(count):>8}  ({count:,})")


if __name__ == "__main__":
    main()
