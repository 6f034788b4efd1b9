"""Alphabets, index-encoded sequences and labeled dataset ingestion."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence as SequenceT

import numpy as np


class SequenceFormatError(ValueError):
    """Raised when FASTA or label input cannot be parsed."""


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of distinct symbols with a bijective index lookup."""

    name: str
    symbols: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(s.upper() for s in self.symbols)
        if not symbols:
            raise ValueError("alphabet must contain at least one symbol")
        if any(len(s) != 1 for s in symbols):
            raise ValueError("alphabet symbols must be single characters")
        if len(set(symbols)) != len(symbols):
            raise ValueError(f"alphabet {self.name!r} has duplicate symbols")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        return self._index[symbol.upper()]

    def __contains__(self, symbol) -> bool:
        return isinstance(symbol, str) and symbol.upper() in self._index

    def encode(self, text: str) -> np.ndarray:
        """Encode ``text`` into an ``int8`` code array.

        Raises ``KeyError`` carrying the first offending character.
        """
        lookup = self._index
        try:
            return np.fromiter((lookup[c] for c in text.upper()), dtype=np.int8,
                               count=len(text))
        except KeyError as exc:
            raise KeyError(exc.args[0]) from None

    def decode(self, codes) -> str:
        return "".join(self.symbols[int(c)] for c in codes)


DNA = Alphabet("dna", tuple("ACGT"))
PROTEIN = Alphabet("protein", tuple("ACDEFGHIKLMNPQRSTVWY"))

_BUILTIN = {"dna": DNA, "protein": PROTEIN}


def get_alphabet(name: str) -> Alphabet:
    try:
        return _BUILTIN[name.lower()]
    except KeyError:
        raise ValueError(
            f"unknown alphabet {name!r}; expected one of {sorted(_BUILTIN)}"
        ) from None


@dataclass(frozen=True)
class Sequence:
    """An identified, index-encoded sequence over a fixed alphabet."""

    id: str
    codes: np.ndarray
    alphabet: Alphabet = DNA

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int8)
        if codes.ndim != 1 or codes.size == 0:
            raise ValueError(f"sequence {self.id!r} must be a non-empty 1-d code array")
        if codes.min() < 0 or codes.max() >= self.alphabet.size:
            raise ValueError(
                f"sequence {self.id!r} has codes outside 0..{self.alphabet.size - 1}"
            )
        codes = codes.copy()
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @classmethod
    def from_string(cls, id: str, text: str, alphabet: Alphabet = DNA) -> "Sequence":
        try:
            codes = alphabet.encode(text)
        except KeyError as exc:
            raise SequenceFormatError(
                f"sequence {id!r}: character {exc.args[0]!r} not in {alphabet.name} alphabet"
            ) from None
        return cls(id, codes, alphabet)

    def __len__(self) -> int:
        return int(self.codes.size)

    def __str__(self) -> str:
        return self.alphabet.decode(self.codes)


@dataclass(frozen=True)
class LabeledDataset:
    sequences: tuple[Sequence, ...]
    labels: np.ndarray
    domain: str = "source"

    def __post_init__(self):
        seqs = tuple(self.sequences)
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or len(seqs) != labels.size:
            raise ValueError(
                f"{len(seqs)} sequences but {labels.size} labels"
            )
        bad = set(np.unique(labels).tolist()) - {-1, 1}
        if bad:
            raise ValueError(f"labels must be +1 or -1, got {sorted(bad)}")
        if self.domain not in ("source", "target"):
            raise ValueError(f"domain must be 'source' or 'target', got {self.domain!r}")
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.sequences]

    @property
    def n_pos(self) -> int:
        return int((self.labels == 1).sum())

    @property
    def n_neg(self) -> int:
        return int((self.labels == -1).sum())


def parse_fasta(text: str | Iterable[str], alphabet: Alphabet = DNA) -> list[Sequence]:
    """Parse FASTA records into encoded sequences.

    Header ids run up to the first whitespace. Sequence characters are
    case-insensitive; anything outside ``alphabet`` is rejected with the
    record id, line number and character.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    records: list[tuple[str, int, list[tuple[int, str]]]] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            header = line[1:].split()
            if not header:
                raise SequenceFormatError(f"line {lineno}: empty FASTA header")
            rid = header[0]
            if rid in seen:
                raise SequenceFormatError(f"line {lineno}: duplicate record id {rid!r}")
            seen.add(rid)
            records.append((rid, lineno, []))
        else:
            if not records:
                raise SequenceFormatError(
                    f"line {lineno}: sequence data before the first '>' header"
                )
            records[-1][2].append((lineno, line))

    out = []
    for rid, header_line, chunks in records:
        if not chunks:
            raise SequenceFormatError(f"record {rid!r} (line {header_line}) is empty")
        parts = []
        for lineno, chunk in chunks:
            for c in chunk.upper():
                if c not in alphabet:
                    raise SequenceFormatError(
                        f"record {rid!r}, line {lineno}: character {c!r} "
                        f"not in {alphabet.name} alphabet"
                    )
            parts.append(chunk)
        out.append(Sequence.from_string(rid, "".join(parts), alphabet))
    return out


def read_fasta(path: str | os.PathLike, alphabet: Alphabet = DNA) -> list[Sequence]:
    with open(path) as fh:
        return parse_fasta(fh.read(), alphabet)


def parse_labels(text: str) -> dict[str, int]:
    labels: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise SequenceFormatError(
                f"label line {lineno}: expected 2 columns, got {len(fields)}"
            )
        rid, value = fields
        # unicode minus shows up in hand-edited files
        value = value.replace("−", "-")
        if value not in ("+1", "1", "-1"):
            raise SequenceFormatError(
                f"label line {lineno}: invalid label {fields[1]!r} for {rid!r} "
                "(expected +1 or -1)"
            )
        if rid in labels:
            raise SequenceFormatError(f"label line {lineno}: duplicate id {rid!r}")
        labels[rid] = int(value)
    return labels


def join_labels(sequences: SequenceT[Sequence], labels: dict[str, int],
                domain: str = "source") -> LabeledDataset:
    ids = [s.id for s in sequences]
    missing = [i for i in ids if i not in labels]
    extra = sorted(set(labels) - set(ids))
    if missing or extra:
        msg = []
        if missing:
            msg.append(f"ids without labels: {', '.join(missing)}")
        if extra:
            msg.append(f"labels without sequences: {', '.join(extra)}")
        raise SequenceFormatError("; ".join(msg))
    return LabeledDataset(tuple(sequences), np.array([labels[i] for i in ids]), domain)


def load_labeled_dataset(seq_path, label_path, alphabet: Alphabet = DNA,
                         domain: str = "source") -> LabeledDataset:
    """Pair FASTA records with labels from a two-column ``id label`` file."""
    sequences = read_fasta(seq_path, alphabet)
    with open(label_path) as fh:
        labels = parse_labels(fh.read())
    return join_labels(sequences, labels, domain)


def format_fasta(sequences: Iterable[Sequence], width: int = 0) -> str:
    lines = []
    for s in sequences:
        lines.append(f">{s.id}")
        text = str(s)
        if width > 0:
            lines.extend(text[i:i + width] for i in range(0, len(text), width))
        else:
            lines.append(text)
    return "\n".join(lines) + "\n"


def format_labels(dataset: LabeledDataset) -> str:
    return "".join(f"{s.id}\t{'+1' if y > 0 else '-1'}\n"
                   for s, y in zip(dataset.sequences, dataset.labels))
