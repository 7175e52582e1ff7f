"""Frequency-thresholded subword vocabulary, greedy tokenizer, fertility.

The vocabulary is built in four layers: special tokens, the corpus
alphabet (each character both as a word-initial token and as a
continuation), whole words at or above the word-frequency floor, and
pair merges trained on the remaining words. Tokenization is greedy
longest-prefix matching with a continuation prefix; a word that cannot
be segmented becomes a single unknown token.

Fertility is subword count divided by word count; lower is better and
1.0 means every word is a single token.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

DEFAULT_SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
UNK_TOKEN = "[UNK]"
CONTINUATION_PREFIX = "##"

# A pair seen only once is no evidence for a reusable piece.
_MIN_PAIR_FREQ = 2


@dataclass(frozen=True)
class VocabConfig:
    min_char_freq: int = 3
    min_word_freq: int = 20
    vocab_size: int = 30_000
    special_tokens: tuple[str, ...] = DEFAULT_SPECIAL_TOKENS
    continuation_prefix: str = CONTINUATION_PREFIX

    def __post_init__(self) -> None:
        if self.min_char_freq < 0 or self.min_word_freq < 0:
            raise ValueError("frequency floors must be >= 0")
        if self.vocab_size <= len(self.special_tokens):
            raise ValueError("vocab_size must exceed the number of special tokens")
        if not self.continuation_prefix:
            raise ValueError("continuation prefix must be non-empty")
        if UNK_TOKEN not in self.special_tokens:
            raise ValueError(f"special tokens must include {UNK_TOKEN}")


def extract_words(text: str) -> list[str]:
    """Whitespace tokens with leading and trailing punctuation split off as
    separate one-character words, so "Lunge." counts as two words. Interior
    punctuation stays attached."""
    words: list[str] = []
    for run in text.split():
        start, end = 0, len(run)
        lead_stop = start
        while lead_stop < end and not run[lead_stop].isalnum():
            lead_stop += 1
        trail_start = end
        while trail_start > lead_stop and not run[trail_start - 1].isalnum():
            trail_start -= 1
        words.extend(run[i] for i in range(start, lead_stop))
        if lead_stop < trail_start:
            words.append(run[lead_stop:trail_start])
        words.extend(run[i] for i in range(trail_start, end))
    return words


def filter_rare_chars(
    texts: Sequence[str], min_char_freq: int = 3
) -> tuple[list[str], set[str]]:
    """Delete every character whose total corpus count is below the floor.

    A count equal to the floor survives. Whitespace is exempt: deleting a
    rare separator would merge unrelated words, and the rule targets stray
    glyphs, not document structure. Returns the filtered texts and the set
    of removed characters.
    """
    char_counts: Counter[str] = Counter()
    for text in texts:
        char_counts.update(text)
    removed = {
        ch for ch, c in char_counts.items() if c < min_char_freq and not ch.isspace()
    }
    if not removed:
        return list(texts), removed
    table = str.maketrans({ch: None for ch in removed})
    return [t.translate(table) for t in texts], removed


@dataclass
class Vocabulary:
    """Token list where index equals id, plus the word-frequency audit map."""

    tokens: list[str]
    config: VocabConfig
    word_freqs: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        self._ids = {tok: i for i, tok in enumerate(self.tokens)}
        prefix = self.config.continuation_prefix
        self._max_piece = max(
            (len(t) - (len(prefix) if t.startswith(prefix) else 0) for t in self.tokens),
            default=0,
        )

    def __len__(self) -> int:
        return len(self.tokens)

    def token_id(self, token: str) -> int | None:
        return self._ids.get(token)

    @property
    def unk_id(self) -> int:
        return self._ids[UNK_TOKEN]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path: str | Path, config: VocabConfig = VocabConfig()) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(tokens, config)


def _merge_step(
    words: dict[str, list[str]], weights: dict[str, int]
) -> tuple[str, str] | None:
    pair_counts: Counter[tuple[str, str]] = Counter()
    for w, symbols in words.items():
        if len(symbols) < 2:
            continue
        weight = weights[w]
        for a, b in zip(symbols, symbols[1:]):
            pair_counts[(a, b)] += weight
    if not pair_counts:
        return None
    best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if best[1] < _MIN_PAIR_FREQ:
        return None
    return best[0]


def _apply_merge(symbols: list[str], pair: tuple[str, str], merged: str) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def build_vocab(texts: Sequence[str], config: VocabConfig = VocabConfig()) -> Vocabulary:
    """Train a vocabulary on pre-filtered corpus texts.

    Determinism: ties in word frequency and in pair counts break
    lexicographically, so the same corpus always yields the same token
    file byte for byte. Word-initial merges are carried out in symbol
    space but never added as tokens: a whole-word surface below the
    frequency floor must not enter the vocabulary (the floor exists to
    keep rare strings such as patient names out), so the only token kinds
    are specials, single characters, continuations, and frequent words.
    """
    word_freqs = Counter()
    for text in texts:
        word_freqs.update(extract_words(text))
    if not word_freqs:
        raise ValueError("corpus has no words")
    prefix = config.continuation_prefix
    alphabet = sorted({ch for w in word_freqs for ch in w})
    floor = len(config.special_tokens) + 2 * len(alphabet)
    if config.vocab_size < floor:
        raise ValueError(
            f"vocab_size {config.vocab_size} cannot hold {len(config.special_tokens)} "
            f"specials plus alphabet of {len(alphabet)} (needs >= {floor})"
        )
    tokens: list[str] = list(config.special_tokens)
    tokens.extend(alphabet)
    tokens.extend(prefix + ch for ch in alphabet)
    token_set = set(tokens)

    whole_words: set[str] = set()
    for word, freq in sorted(word_freqs.items(), key=lambda kv: (-kv[1], kv[0])):
        if freq < config.min_word_freq:
            break
        whole_words.add(word)
        if word not in token_set and len(tokens) < config.vocab_size:
            tokens.append(word)
            token_set.add(word)

    symbolized = {
        w: [w[0]] + [prefix + ch for ch in w[1:]]
        for w in word_freqs
        if w not in whole_words and len(w) > 1
    }
    weights = {w: word_freqs[w] for w in symbolized}
    while len(tokens) < config.vocab_size:
        pair = _merge_step(symbolized, weights)
        if pair is None:
            break
        a, b = pair
        merged = a + b[len(prefix) :] if b.startswith(prefix) else a + b
        for w in symbolized:
            symbolized[w] = _apply_merge(symbolized[w], pair, merged)
        if merged in token_set:
            continue
        if not merged.startswith(prefix):
            # word-initial products stay merge symbols: a multi-char token
            # without the continuation prefix must be a whole word above the
            # frequency floor, and those were all added up front
            continue
        tokens.append(merged)
        token_set.add(merged)

    return Vocabulary(tokens, config, dict(word_freqs))


def tokenize_word(word: str, vocab: Vocabulary) -> list[int]:
    """Greedy longest-prefix segmentation; unmatched words collapse to a
    single unknown id."""
    if not word:
        raise ValueError("cannot tokenize an empty word")
    prefix = vocab.config.continuation_prefix
    ids: list[int] = []
    pos = 0
    while pos < len(word):
        longest = min(len(word) - pos, vocab._max_piece)
        match = None
        for length in range(longest, 0, -1):
            piece = word[pos : pos + length]
            if pos > 0:
                piece = prefix + piece
            tok_id = vocab.token_id(piece)
            if tok_id is not None:
                match = (tok_id, length)
                break
        if match is None:
            return [vocab.unk_id]
        ids.append(match[0])
        pos += match[1]
    return ids


def tokenize_text(text: str, vocab: Vocabulary) -> tuple[list[str], list[list[int]]]:
    words = extract_words(text)
    return words, [tokenize_word(w, vocab) for w in words]


@dataclass
class DocumentFertility:
    doc_id: str
    n_words: int
    n_subwords: int

    @property
    def fertility(self) -> float:
        return self.n_subwords / self.n_words


@dataclass
class FertilityReport:
    n_words: int
    n_subwords: int
    per_document: list[DocumentFertility] | None = None

    @property
    def fertility(self) -> float:
        return self.n_subwords / self.n_words

    def to_obj(self) -> dict:
        obj = {
            "n_words": self.n_words,
            "n_subwords": self.n_subwords,
            "fertility": self.fertility,
        }
        if self.per_document is not None:
            obj["per_document"] = [
                {
                    "id": d.doc_id,
                    "n_words": d.n_words,
                    "n_subwords": d.n_subwords,
                    "fertility": d.fertility,
                }
                for d in self.per_document
            ]
        return obj


def measure_fertility(
    items: Iterable[tuple[str, str]], vocab: Vocabulary, per_document: bool = False
) -> FertilityReport:
    """Average subwords per word over (doc_id, text) pairs.

    An unknown word counts as one subword, so fertility is always >= 1.
    A corpus without a single word has no fertility and raises.
    """
    total_words = 0
    total_subwords = 0
    breakdown: list[DocumentFertility] | None = [] if per_document else None
    for doc_id, text in items:
        words = extract_words(text)
        n_sub = sum(len(tokenize_word(w, vocab)) for w in words)
        total_words += len(words)
        total_subwords += n_sub
        if breakdown is not None and words:
            breakdown.append(DocumentFertility(doc_id, len(words), n_sub))
    if total_words == 0:
        raise ValueError("fertility undefined: corpus contains no words")
    return FertilityReport(total_words, total_subwords, breakdown)
