"""Datasets: JSON-lines corpora, CoNLL-U dependencies, vocabularies, batching, synthetic tasks."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fusion import LABELS

logger = logging.getLogger(__name__)

PAD_ID, UNK_ID = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
LABEL_TO_ID = {name: i for i, name in enumerate(LABELS)}


class DatasetError(ValueError):
    """A dataset file or record violates the expected format."""


@dataclass
class Sample:
    tokens: list[str]
    aspect_span: tuple[int, int]
    label: str
    postags: list[str] | None = None
    adjacency: np.ndarray | None = None
    id: str | None = None
    adjacency_source: str = "parser-probability"

    def __post_init__(self):
        self.aspect_span = (int(self.aspect_span[0]), int(self.aspect_span[1]))
        L = len(self.tokens)
        start, end = self.aspect_span
        if L == 0:
            raise DatasetError("sample has no tokens")
        if not 0 <= start < end <= L:
            raise DatasetError(f"invalid aspect span [{start}, {end}) for {L} tokens")
        if self.label not in LABEL_TO_ID:
            raise DatasetError(f"unknown label {self.label!r}; allowed labels are {list(LABELS)}")
        if self.postags is not None and len(self.postags) != L:
            raise DatasetError(f"{len(self.postags)} POS tags for {L} tokens")
        if self.adjacency is not None:
            adj = np.asarray(self.adjacency, dtype=np.float64)
            if adj.shape != (L, L):
                raise DatasetError(f"adjacency shape {adj.shape} does not match {L} tokens")
            if np.any(adj < 0) or not np.all(np.isfinite(adj)):
                raise DatasetError("adjacency entries must be finite and non-negative")
            self.adjacency = adj

    @property
    def label_id(self) -> int:
        return LABEL_TO_ID[self.label]

    def to_json(self) -> dict:
        record = {"tokens": list(self.tokens), "aspect_span": list(self.aspect_span), "label": self.label}
        if self.postags is not None:
            record["postags"] = list(self.postags)
        if self.adjacency is not None:
            record["adjacency"] = self.adjacency.tolist()
        if self.id is not None:
            record["id"] = self.id
        return record

    @classmethod
    def from_json(cls, record: dict) -> "Sample":
        missing = {"tokens", "aspect_span", "label"} - record.keys()
        if missing:
            raise DatasetError(f"missing keys {sorted(missing)}")
        return cls(
            tokens=[str(t) for t in record["tokens"]],
            aspect_span=tuple(record["aspect_span"]),
            label=record["label"],
            postags=record.get("postags"),
            adjacency=record.get("adjacency"),
            id=record.get("id"),
        )


def load_dataset(path: str | Path) -> list[Sample]:
    """Read a JSON-lines dataset; errors name the offending line."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                sample = Sample.from_json(json.loads(line))
            except (json.JSONDecodeError, DatasetError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            samples.append(sample)
    if not samples:
        logger.warning("dataset %s is empty", path)
        return samples
    hist = Counter(s.label for s in samples)
    logger.info(
        "loaded %d samples from %s (%s)",
        len(samples),
        path,
        ", ".join(f"{name}={hist.get(name, 0)}" for name in LABELS),
    )
    return samples


def save_dataset(samples: Iterable[Sample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_json(), ensure_ascii=False) + "\n")


def label_histogram(samples: Sequence[Sample]) -> dict[str, int]:
    hist = Counter(s.label for s in samples)
    return {name: hist.get(name, 0) for name in LABELS}


# ---------------------------------------------------------------------------
# CoNLL-U
# ---------------------------------------------------------------------------

ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)


@dataclass
class ConlluSentence:
    tokens: list[str]
    upos: list[str]
    heads: list[int]  # 1-based head per token, 0 = root


def parse_conllu(text: str) -> list[ConlluSentence]:
    """Parse CoNLL-U text; multiword ranges and empty nodes are skipped."""
    sentences = []
    rows: list[list[str]] = []

    def flush():
        if rows:
            sentences.append(
                ConlluSentence(
                    tokens=[r[FORM] for r in rows],
                    upos=[r[UPOS] for r in rows],
                    heads=[int(r[HEAD]) if r[HEAD] != "_" else 0 for r in rows],
                )
            )
            rows.clear()

    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise DatasetError(f"CoNLL-U line {lineno}: expected 10 columns, got {len(cols)}")
        if "-" in cols[ID] or "." in cols[ID]:
            continue
        rows.append(cols)
    flush()
    return sentences


def read_conllu(path: str | Path) -> list[ConlluSentence]:
    return parse_conllu(Path(path).read_text(encoding="utf-8"))


def conllu_adjacency(sentence: ConlluSentence | Sequence[int]) -> np.ndarray:
    """Symmetric 0/1 head-dependent matrix; root arcs add nothing."""
    heads = sentence.heads if isinstance(sentence, ConlluSentence) else list(sentence)
    L = len(heads)
    A = np.zeros((L, L))
    for dep, head in enumerate(heads):
        if not 0 <= head <= L:
            raise DatasetError(f"head index {head} out of range for {L} tokens")
        if head == 0:
            continue
        A[dep, head - 1] = A[head - 1, dep] = 1.0
    return A


def attach_conllu(samples: Sequence[Sample], sentences: Sequence[ConlluSentence]) -> None:
    """Fill missing adjacency / POS tags from parallel CoNLL-U sentences (in place)."""
    if len(samples) != len(sentences):
        raise DatasetError(f"{len(samples)} samples but {len(sentences)} CoNLL-U sentences")
    for sample, sent in zip(samples, sentences):
        if len(sent.tokens) != len(sample.tokens):
            raise DatasetError(
                f"sample {sample.id}: {len(sample.tokens)} tokens vs {len(sent.tokens)} in CoNLL-U"
            )
        if sample.adjacency is None:
            sample.adjacency = conllu_adjacency(sent)
            sample.adjacency_source = "conllu-fallback"
        if sample.postags is None:
            sample.postags = list(sent.upos)


# ---------------------------------------------------------------------------
# Vocabulary and batching
# ---------------------------------------------------------------------------


def _ranked(counter: Counter) -> dict[str, int]:
    vocab = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for token, _ in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0])):
        if token not in vocab:
            vocab[token] = len(vocab)
    return vocab


def build_vocab(samples: Sequence[Sample]) -> dict[str, int]:
    """PAD=0, UNK=1, then tokens by descending frequency, ties alphabetical."""
    if not samples:
        raise ValueError("build_vocab needs at least one sample")
    return _ranked(Counter(tok for s in samples for tok in s.tokens))


def build_tag_vocab(samples: Sequence[Sample]) -> dict[str, int]:
    return _ranked(Counter(tag for s in samples if s.postags for tag in s.postags))


def encode(tokens: Sequence[str], vocab: dict[str, int]) -> list[int]:
    return [vocab.get(tok, UNK_ID) for tok in tokens]


@dataclass
class Batch:
    token_ids: np.ndarray  # (B, L) int
    positions: np.ndarray  # (B, L) int, 0 on padding
    postag_ids: np.ndarray  # (B, L) int
    pad_mask: np.ndarray  # (B, L) bool, true on real tokens
    aspect_mask: np.ndarray  # (B, L) bool
    adjacency: np.ndarray  # (B, L, L), zero on padding rows/cols
    labels: np.ndarray  # (B,) int
    ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.token_ids.shape[0]

    @property
    def max_len(self) -> int:
        return self.token_ids.shape[1]


def collate(
    samples: Sequence[Sample],
    vocab: dict[str, int],
    tag_vocab: dict[str, int] | None = None,
    max_positions: int | None = None,
    pad_to: int | None = None,
) -> Batch:
    """Pad a list of samples into one :class:`Batch`."""
    n = len(samples)
    L = max(len(s.tokens) for s in samples)
    if pad_to is not None:
        L = max(L, pad_to)
    token_ids = np.zeros((n, L), dtype=np.int64)
    positions = np.zeros((n, L), dtype=np.int64)
    postag_ids = np.zeros((n, L), dtype=np.int64)
    pad_mask = np.zeros((n, L), dtype=bool)
    aspect_mask = np.zeros((n, L), dtype=bool)
    adjacency = np.zeros((n, L, L))
    labels = np.zeros(n, dtype=np.int64)
    for i, s in enumerate(samples):
        m = len(s.tokens)
        token_ids[i, :m] = encode(s.tokens, vocab)
        pos = np.arange(1, m + 1)
        if max_positions is not None:
            pos = np.minimum(pos, max_positions - 1)
        positions[i, :m] = pos
        if tag_vocab is not None and s.postags is not None:
            postag_ids[i, :m] = [tag_vocab.get(t, UNK_ID) for t in s.postags]
        else:
            postag_ids[i, :m] = UNK_ID
        pad_mask[i, :m] = True
        aspect_mask[i, s.aspect_span[0] : s.aspect_span[1]] = True
        if s.adjacency is not None:
            adjacency[i, :m, :m] = s.adjacency
        labels[i] = s.label_id
    return Batch(
        token_ids, positions, postag_ids, pad_mask, aspect_mask, adjacency, labels,
        [s.id or str(i) for i, s in enumerate(samples)],
    )


def make_batches(
    samples: Sequence[Sample],
    batch_size: int,
    seed: int | None = None,
    vocab: dict[str, int] | None = None,
    tag_vocab: dict[str, int] | None = None,
    max_positions: int | None = None,
) -> list[Batch]:
    """Split into padded batches; shuffled by ``seed`` (kept in order when ``seed`` is None)."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if vocab is None:
        vocab = build_vocab(samples)
    order = np.arange(len(samples))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(samples))
    return [
        collate([samples[j] for j in order[i : i + batch_size]], vocab, tag_vocab, max_positions)
        for i in range(0, len(samples), batch_size)
    ]


# ---------------------------------------------------------------------------
# Synthetic long-range task
# ---------------------------------------------------------------------------

OPINION_PREFIX = {"positive": "good", "negative": "bad", "neutral": "meh"}


@dataclass
class SynthConfig:
    n: int = 300
    vocab_size: int = 50  # filler words
    min_len: int = 12
    max_len: int = 24
    d_min: int = 8
    d_max: int = 15
    distractor_prob: float = 0.5
    n_aspect_words: int = 8
    n_opinion_words: int = 4  # per polarity
    seed: int = 0

    def validate(self) -> None:
        if not 1 <= self.d_min <= self.d_max:
            raise ValueError(f"need 1 <= d_min <= d_max, got [{self.d_min}, {self.d_max}]")
        if self.d_max >= self.max_len:
            raise ValueError(
                f"infeasible: aspect-opinion distance {self.d_max} needs length > {self.d_max}, "
                f"but max_len is {self.max_len}"
            )
        if self.min_len < 2 or self.min_len > self.max_len:
            raise ValueError(f"invalid length range [{self.min_len}, {self.max_len}]")
        if not 0.0 <= self.distractor_prob <= 1.0:
            raise ValueError("distractor_prob must lie in [0, 1]")


def opinion_polarity(token: str) -> str | None:
    for label, prefix in OPINION_PREFIX.items():
        if token.startswith(prefix) and token[len(prefix):].isdigit():
            return label
    return None


def synth_label(sample: Sample) -> str:
    """Re-derive the label from the planted opinion (the token linked to the aspect)."""
    a = sample.aspect_span[0]
    linked = np.flatnonzero(sample.adjacency[a])
    polarities = [opinion_polarity(sample.tokens[j]) for j in linked]
    return next(p for p in polarities if p is not None)


def synth_longrange_generate(cfg: SynthConfig) -> list[Sample]:
    """Aspect/opinion pairs planted ``d ~ U[d_min, d_max]`` tokens apart.

    The label is the polarity of the planted opinion word.  Optional distractor
    opinion words of a different polarity sit closer to the aspect but are not
    linked to it in the generated dependency tree; the aspect's only arc goes
    to its opinion word.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    labels = np.resize(np.arange(len(LABELS)), cfg.n)
    rng.shuffle(labels)
    samples = []
    for idx in range(cfg.n):
        label = LABELS[labels[idx]]
        d = int(rng.integers(cfg.d_min, cfg.d_max + 1))
        L = int(rng.integers(max(cfg.min_len, d + 1), cfg.max_len + 1))
        a = int(rng.integers(0, L))
        sides = [s for s in (-1, 1) if 0 <= a + s * d < L]
        if not sides:  # aspect too central for this distance: move it to an end
            a = int(rng.choice([0, L - 1]))
            sides = [1] if a == 0 else [-1]
        o = a + int(rng.choice(sides)) * d
        tokens = [f"w{int(rng.integers(cfg.vocab_size))}" for _ in range(L)]
        tags = ["X"] * L
        tokens[a] = f"asp{int(rng.integers(cfg.n_aspect_words))}"
        tags[a] = "NOUN"
        tokens[o] = f"{OPINION_PREFIX[label]}{int(rng.integers(cfg.n_opinion_words))}"
        tags[o] = "ADJ"
        if rng.random() < cfg.distractor_prob:
            others = [lab for lab in LABELS if lab != label and lab != "neutral"]
            if label != "neutral":
                others = [lab for lab in LABELS if lab not in (label, "neutral")]
            wrong = others[int(rng.integers(len(others)))]
            near = [j for j in range(L) if j not in (a, o) and abs(j - a) < d]
            free = near or [j for j in range(L) if j not in (a, o)]
            j = int(free[int(rng.integers(len(free)))])
            tokens[j] = f"{OPINION_PREFIX[wrong]}{int(rng.integers(cfg.n_opinion_words))}"
            tags[j] = "ADJ"
        samples.append(
            Sample(
                tokens=tokens,
                aspect_span=(a, a + 1),
                label=label,
                postags=tags,
                adjacency=_synth_tree(L, a, o),
                id=f"synth-{cfg.seed}-{idx}",
            )
        )
    return samples


def _synth_tree(L: int, aspect: int, opinion: int) -> np.ndarray:
    """Aspect hangs off its opinion word; every other token chains to its nearest non-aspect left neighbour."""
    A = np.zeros((L, L))
    A[aspect, opinion] = A[opinion, aspect] = 1.0
    prev = None
    for j in range(L):
        if j == aspect:
            continue
        if prev is not None:
            A[j, prev] = A[prev, j] = 1.0
        prev = j
    return A
