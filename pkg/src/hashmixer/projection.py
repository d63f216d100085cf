"""Text-to-matrix projection: cached MinHash features plus baselines.

The main path turns a token sequence into a ``(2w+1)*m x s`` float matrix:

* tokenize each token into subword units,
* look up the units' precomputed MinHash fingerprints and take the
  elementwise minimum (no string hashing at inference time),
* scatter the ``n`` fingerprint values into an ``m``-counter array
  (a Counting Bloom Filter), and
* concatenate each token's counters with those of its ``w`` neighbours on
  either side, zero-padding at the boundaries and after the last token.

Binary, ternary-pair (tsp) and simhash baseline features share the tokenizer
and hash family but skip the cache; they exist for head-to-head comparisons
against the counting features.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ModelFileError
from .hashing import HashFamily, all_hashes, char_trigrams, minhash_unit
from .vocab import CONTINUATION_PREFIX, SubwordUnit, Vocabulary, tokenize_word

PROJECTION_KINDS = ("minhash", "binary", "tsp", "simhash")

CACHE_MAGIC = b"PNLPCACH"
CACHE_VERSION = 1


@dataclass(frozen=True)
class ProjectionConfig:
    kind: str = "minhash"
    n_hashes: int = 64
    feature_size: int = 1024
    window: int = 1
    max_seq_len: int = 64
    simhash_bits: int = 64

    def __post_init__(self) -> None:
        if self.kind not in PROJECTION_KINDS:
            raise ValueError(f"unknown projection kind {self.kind!r}, expected one of {PROJECTION_KINDS}")
        if self.n_hashes < 1:
            raise ValueError("n_hashes must be >= 1")
        if self.feature_size < 1:
            raise ValueError("feature_size must be >= 1")
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be >= 1")
        if not 1 <= self.simhash_bits <= 64:
            raise ValueError("simhash_bits must be in 1..64")
        if self.kind == "tsp" and self.feature_size % 2 != 0:
            raise ValueError("tsp projection consumes bits in pairs; feature_size must be even")

    @property
    def token_feature_len(self) -> int:
        """Length of one token's feature vector (simhash uses its bit count)."""
        return self.simhash_bits if self.kind == "simhash" else self.feature_size

    @property
    def input_rows(self) -> int:
        return (2 * self.window + 1) * self.token_feature_len


@dataclass(frozen=True)
class FingerprintCache:
    """Per-vocabulary-unit fingerprints, row-aligned with the vocabulary.

    ``width`` 64 stores raw fingerprints; 32 stores the low halves, applied
    identically at build and lookup so cached and direct paths agree.
    """

    table: np.ndarray
    n_hashes: int
    width: int = 64

    def __post_init__(self) -> None:
        if self.width not in (32, 64):
            raise ValueError("cache width must be 32 or 64")
        if self.table.shape[1] != self.n_hashes:
            raise ValueError("cache table column count must equal n_hashes")

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]


def unit_fingerprint(family: HashFamily, unit_text: str, width: int = 64) -> np.ndarray:
    """Fingerprint of one vocabulary unit, truncated to the cache width."""
    fp = minhash_unit(family, unit_text, is_continuation=unit_text.startswith(CONTINUATION_PREFIX))
    if width == 32:
        return (fp & np.uint64(0xFFFFFFFF)).astype(np.uint32)
    return fp


def build_cache(vocab: Vocabulary, family: HashFamily, width: int = 64) -> FingerprintCache:
    """Precompute the fingerprint of every vocabulary unit."""
    dtype = np.uint32 if width == 32 else np.uint64
    table = np.empty((len(vocab), family.size_n), dtype=dtype)
    for row, unit in enumerate(vocab.units):
        table[row] = unit_fingerprint(family, unit, width=width)
    table.setflags(write=False)
    return FingerprintCache(table=table, n_hashes=family.size_n, width=width)


def save_cache(cache: FingerprintCache, path: str) -> None:
    header = CACHE_MAGIC + struct.pack(
        "<IQIB", CACHE_VERSION, cache.vocab_size, cache.n_hashes, cache.width
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(cache.table, dtype=f"<u{cache.width // 8}").tobytes())


def load_cache(path: str, expected_vocab_size: int | None = None) -> FingerprintCache:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ModelFileError(f"cannot read cache file {path}: {exc}") from exc
    head_len = len(CACHE_MAGIC) + struct.calcsize("<IQIB")
    if len(blob) < head_len or blob[: len(CACHE_MAGIC)] != CACHE_MAGIC:
        raise ModelFileError(f"{path} is not a fingerprint cache file")
    version, vocab_size, n_hashes, width = struct.unpack("<IQIB", blob[len(CACHE_MAGIC) : head_len])
    if version != CACHE_VERSION:
        raise ModelFileError(f"{path}: unsupported cache version {version}")
    if width not in (32, 64):
        raise ModelFileError(f"{path}: invalid cache width {width}")
    if expected_vocab_size is not None and vocab_size != expected_vocab_size:
        raise ModelFileError(
            f"{path}: cache built for vocabulary of {vocab_size} units, "
            f"got a vocabulary of {expected_vocab_size}"
        )
    dtype = np.dtype(f"<u{width // 8}")
    expected_bytes = head_len + vocab_size * n_hashes * dtype.itemsize
    if len(blob) != expected_bytes:
        raise ModelFileError(f"{path}: truncated cache table")
    table = np.frombuffer(blob, dtype=dtype, offset=head_len).reshape(vocab_size, n_hashes)
    return FingerprintCache(table=table, n_hashes=n_hashes, width=width)


def token_fingerprint(
    units: list[SubwordUnit], cache: FingerprintCache, vocab: Vocabulary
) -> np.ndarray:
    """Elementwise minimum of the units' cached fingerprint rows."""
    if not units:
        raise ValueError("token_fingerprint needs at least one subword unit")
    try:
        rows = [vocab.index[u.text] for u in units]
    except KeyError as exc:
        raise LookupError(f"subword unit {exc.args[0]!r} is not in the vocabulary") from exc
    return cache.table[rows].min(axis=0)


def counting_feature(fingerprint: np.ndarray, m: int) -> np.ndarray:
    """Scatter n fingerprint values into m counters; each adds exactly one."""
    if m < 1:
        raise ValueError("feature size m must be >= 1")
    counters = np.zeros(m, dtype=np.float64)
    positions = (fingerprint.astype(np.uint64) % np.uint64(m)).astype(np.intp)
    np.add.at(counters, positions, 1.0)
    return counters


def _whole_unit_hashes(units: list[SubwordUnit], family: HashFamily) -> np.ndarray:
    """All hash values of the full unit strings, one row per unit."""
    return np.stack([all_hashes(family, u.text) for u in units])


def _minhash_style_hashes(units: list[SubwordUnit], family: HashFamily) -> np.ndarray:
    """Hash values computed as for MinHash, but all of them, not the minima.

    Head units contribute one row per trigram, continuations one row for the
    whole unit.
    """
    rows = []
    for u in units:
        if u.is_continuation:
            rows.append(all_hashes(family, u.text))
        else:
            for gram in char_trigrams(u.text):
                rows.append(all_hashes(family, gram))
    return np.stack(rows)


def binary_feature(units: list[SubwordUnit], family: HashFamily, m: int) -> np.ndarray:
    """Bitmap of size m: every whole-unit hash value sets one position."""
    if not units:
        raise ValueError("binary_feature needs at least one subword unit")
    bitmap = np.zeros(m, dtype=np.float64)
    values = _whole_unit_hashes(units, family)
    bitmap[(values % np.uint64(m)).astype(np.intp).ravel()] = 1.0
    return bitmap


_TSP_TABLE = {(0.0, 0.0): 0.0, (0.0, 1.0): 1.0, (1.0, 0.0): -1.0, (1.0, 1.0): 0.0}


def tsp_feature(units: list[SubwordUnit], family: HashFamily, m: int) -> np.ndarray:
    """Ternary feature: map consecutive bitmap bit pairs to {-1, 0, +1}."""
    if m % 2 != 0:
        raise ValueError("tsp feature size must be even")
    bits = binary_feature(units, family, m)
    out = np.zeros(m, dtype=np.float64)
    pairs = bits.reshape(-1, 2)
    # (0,1) -> +1, (1,0) -> -1, (0,0) and (1,1) -> 0
    out[: m // 2] = pairs[:, 1] - pairs[:, 0]
    return out


def simhash_feature(units: list[SubwordUnit], family: HashFamily, l: int) -> np.ndarray:
    """Sign histogram over the low ``l`` bits of MinHash-style hash values.

    Each hash value votes +1 where its bit is set and -1 where it is clear;
    a non-negative tally yields 1.0 (ties included), a negative one 0.0.
    """
    if not 1 <= l <= 64:
        raise ValueError("simhash bit count must be in 1..64")
    if not units:
        raise ValueError("simhash_feature needs at least one subword unit")
    values = _minhash_style_hashes(units, family)
    bits = (values[:, :, None] >> np.arange(l, dtype=np.uint64)) & np.uint64(1)
    histogram = (2.0 * bits.astype(np.float64) - 1.0).sum(axis=(0, 1))
    return (histogram >= 0.0).astype(np.float64)


@dataclass(frozen=True)
class FeatureMatrix:
    """Model input: stacked windowed token features, one column per position."""

    data: np.ndarray
    valid_len: int

    def __post_init__(self) -> None:
        if not 0 <= self.valid_len <= self.data.shape[1]:
            raise ValueError("valid_len must be within the column count")


def token_feature(
    token: str,
    vocab: Vocabulary,
    cfg: ProjectionConfig,
    cache: FingerprintCache | None = None,
    family: HashFamily | None = None,
) -> np.ndarray:
    """Per-token feature vector for the configured projection kind."""
    units = tokenize_word(token, vocab)
    if cfg.kind == "minhash":
        if cache is None:
            raise ValueError("minhash projection requires a fingerprint cache")
        return counting_feature(token_fingerprint(units, cache, vocab), cfg.feature_size)
    if family is None:
        family = HashFamily(cfg.n_hashes)
    if cfg.kind == "binary":
        return binary_feature(units, family, cfg.feature_size)
    if cfg.kind == "tsp":
        return tsp_feature(units, family, cfg.feature_size)
    return simhash_feature(units, family, cfg.simhash_bits)


def project_sequence(
    tokens: list[str],
    vocab: Vocabulary,
    cache: FingerprintCache | None,
    cfg: ProjectionConfig,
) -> FeatureMatrix:
    """Project a token sequence onto the model input matrix.

    Column ``t`` stacks the features of tokens ``t-w .. t+w`` top to bottom,
    substituting zero blocks where the neighbour index falls outside the
    (truncated) sequence. Sequences longer than ``max_seq_len`` keep their
    first ``max_seq_len`` tokens.
    """
    m = cfg.token_feature_len
    s = cfg.max_seq_len
    w = cfg.window
    family = HashFamily(cfg.n_hashes)
    kept = tokens[:s]
    data = np.zeros(((2 * w + 1) * m, s), dtype=np.float64)
    feats = [token_feature(tok, vocab, cfg, cache=cache, family=family) for tok in kept]
    for t in range(len(kept)):
        for j in range(2 * w + 1):
            neighbour = t + j - w
            if 0 <= neighbour < len(kept):
                data[j * m : (j + 1) * m, t] = feats[neighbour]
    return FeatureMatrix(data=data, valid_len=len(kept))


class SequenceFeaturizer:
    """Batch featurizer that computes each distinct token's feature once.

    Produces exactly the same matrices as :func:`project_sequence`; it exists
    so training epochs do not re-tokenize and re-scatter unchanged examples.
    Row 0 of the internal table is reserved as the zero (padding) feature.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        cfg: ProjectionConfig,
        cache: FingerprintCache | None = None,
    ) -> None:
        self.vocab = vocab
        self.cfg = cfg
        self.family = HashFamily(cfg.n_hashes)
        if cache is None and cfg.kind == "minhash":
            cache = build_cache(vocab, self.family)
        self.cache = cache
        self._rows: list[np.ndarray] = [np.zeros(cfg.token_feature_len, dtype=np.float64)]
        self._ids: dict[str, int] = {}
        self._table: np.ndarray | None = None

    def _token_id(self, token: str) -> int:
        tid = self._ids.get(token)
        if tid is None:
            tid = len(self._rows)
            self._rows.append(
                token_feature(token, self.vocab, self.cfg, cache=self.cache, family=self.family)
            )
            self._ids[token] = tid
            self._table = None
        return tid

    def encode(self, examples_tokens: list[list[str]]) -> tuple[np.ndarray, np.ndarray]:
        """Map token sequences to a padded id matrix plus valid lengths."""
        s = self.cfg.max_seq_len
        ids = np.zeros((len(examples_tokens), s), dtype=np.intp)
        valid = np.zeros(len(examples_tokens), dtype=np.intp)
        for row, tokens in enumerate(examples_tokens):
            kept = tokens[:s]
            valid[row] = len(kept)
            for col, tok in enumerate(kept):
                ids[row, col] = self._token_id(tok)
        return ids, valid

    def materialize(
        self, ids: np.ndarray, valid: np.ndarray, dtype=np.float64
    ) -> np.ndarray:
        """Assemble the (batch, rows, s) input tensor for encoded examples.

        Counting/bitmap features are small integers, so float32 output is
        exact and halves the memory traffic during training.
        """
        if self._table is None or self._table.dtype != np.dtype(dtype):
            self._table = np.stack(self._rows).astype(dtype)
        table = self._table
        m = self.cfg.token_feature_len
        w = self.cfg.window
        n, s = ids.shape
        out = np.empty((n, (2 * w + 1) * m, s), dtype=dtype)
        positions = np.arange(s)
        column_live = positions[None, :] < valid[:, None]
        for j in range(2 * w + 1):
            offset = j - w
            neighbour = positions + offset
            in_range = (neighbour >= 0) & (neighbour < valid[:, None]) & column_live
            shifted = np.where(in_range, ids[:, np.clip(neighbour, 0, s - 1)], 0)
            out[:, j * m : (j + 1) * m, :] = table[shifted].transpose(0, 2, 1)
        return out
