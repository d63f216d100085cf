#!/usr/bin/env python3
"""Regenerate tests/data/hash_vectors.txt from a straight-line reference.

The reference below is intentionally independent of the package: a dozen
lines of plain-integer arithmetic that any implementation in any language
can re-derive. Each output line is ``input<TAB>function_index<TAB>hex``.
"""

import os

MASK = 0xFFFFFFFFFFFFFFFF


def ref_fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & MASK
    return h


def ref_splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def ref_hash(i: int, s: str) -> int:
    seed = ref_splitmix64(i + 1)
    return ref_splitmix64(ref_fnv1a64(s.encode("utf-8")) ^ seed)


INPUTS = [
    "",
    "a",
    "b",
    "Bri",
    "rin",
    "ing",
    "Bring",
    "##ing",
    "Bringing",
    "the",
    "at",
    "[UNK]",
    "hello",
    "world",
    "internationalization",
    "!",
    "a,b",
    "नमस्ते",
    "ไทย",
    "中文",
    "übergroß",
    "🙂ab",
]

INDICES = [0, 1, 2, 7, 31, 63]


def main() -> None:
    out_path = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "hash_vectors.txt")
    out_path = os.path.normpath(out_path)
    os.makedirs(os.path.dirname(out_path), exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for s in INPUTS:
            for i in INDICES:
                fh.write(f"{s}\t{i}\t{ref_hash(i, s):016x}\n")
    print(f"wrote {len(INPUTS) * len(INDICES)} vectors to {out_path}")


if __name__ == "__main__":
    main()
