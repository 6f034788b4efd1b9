"""Seeded synthetic corpora with a planted motif and a shifted background.

Labels follow a fixed rule on the sequence alone: a sequence is positive
exactly when some window lies within ``motif_mismatches`` substitutions of
one of the motifs. Negatives containing such a window are redrawn, so
``P(y | x)`` is the same in both domains and only the marginal over
sequences moves.

Each domain mixes two backgrounds, a GC-rich one and an AT-rich one, with a
per-class probability of drawing the GC-rich background. Positives on the
GC-rich background carry ``motif``; those on the AT-rich background carry
``at_motif`` (a context-specific partner site). A source dominated by
GC-rich positives therefore under-represents the site that matters in an
AT-rich target.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .seqdata import LabeledDataset, Sequence, format_fasta, format_labels, get_alphabet

SPLITS = ("source_train", "target_val", "target_test")


class ProfileError(ValueError):
    pass


def parse_ratio(ratio: str | int) -> int:
    """``"1:3"`` -> 3 negatives per positive."""
    if isinstance(ratio, int):
        r = ratio
    else:
        parts = str(ratio).split(":")
        if len(parts) != 2 or parts[0].strip() != "1":
            raise ProfileError(f"ratio must look like '1:r', got {ratio!r}")
        r = int(parts[1])
    if r < 1:
        raise ProfileError(f"ratio must be at least 1:1, got {ratio!r}")
    return r


@dataclass(frozen=True)
class ShiftProfile:
    alphabet: str = "dna"
    length: int = 60
    n_train: int = 200
    n_target_pos: int = 100
    ratio: str = "1:1"
    motif: str = "TGACGTCA"
    # planted instead of ``motif`` in AT-rich backgrounds when set
    at_motif: str = "GCTAGCAT"
    motif_mismatches: int = 2
    gc_rich: float = 0.7
    at_rich: float = 0.3
    # probability of the GC-rich background given (positive, negative)
    source_mix: tuple[float, float] = (0.8, 0.2)
    target_mix: tuple[float, float] = (0.1, 0.1)

    def __post_init__(self):
        object.__setattr__(self, "source_mix", tuple(float(v) for v in self.source_mix))
        object.__setattr__(self, "target_mix", tuple(float(v) for v in self.target_mix))
        for motif in self.motifs:
            if len(motif) > self.length:
                raise ProfileError(
                    f"motif of length {len(motif)} does not fit in sequences of length {self.length}")
            if not 0 <= self.motif_mismatches < len(motif):
                raise ProfileError("motif_mismatches must be in [0, len(motif))")
        if self.alphabet.lower() != "dna":
            raise ProfileError("only the DNA alphabet has GC/AT background models")
        for v in (*self.source_mix, *self.target_mix, self.gc_rich, self.at_rich):
            if not 0 <= v <= 1:
                raise ProfileError(f"probabilities must lie in [0, 1], got {v}")
        if self.n_train < 2 or self.n_target_pos < 1:
            raise ProfileError("need n_train >= 2 and n_target_pos >= 1")
        parse_ratio(self.ratio)
        for motif in self.motifs:
            get_alphabet(self.alphabet).encode(motif)

    @property
    def motifs(self) -> tuple[str, ...]:
        return (self.motif, self.at_motif) if self.at_motif else (self.motif,)

    @property
    def negatives_per_positive(self) -> int:
        return parse_ratio(self.ratio)

    def unshifted(self) -> "ShiftProfile":
        """Same profile with the target drawn like the source."""
        return ShiftProfile(**{**asdict(self), "target_mix": self.source_mix})


def _background(rng, gc: float, length: int) -> np.ndarray:
    # DNA codes: A=0, C=1, G=2, T=3
    p = np.array([(1 - gc) / 2, gc / 2, gc / 2, (1 - gc) / 2])
    return rng.choice(4, size=length, p=p).astype(np.int8)


def has_motif(codes: np.ndarray, motif: np.ndarray, max_mismatch: int) -> bool:
    k = motif.size
    if codes.size < k:
        return False
    win = sliding_window_view(codes, k)
    return bool(((win != motif).sum(axis=1) <= max_mismatch).any())


def _draw(rng, profile: ShiftProfile, motifs, positive: bool, p_gc: float) -> np.ndarray:
    rich = rng.random() < p_gc
    gc = profile.gc_rich if rich else profile.at_rich
    t = profile.motif_mismatches
    while True:
        seq = _background(rng, gc, profile.length)
        if positive:
            site = (motifs[0] if rich or len(motifs) == 1 else motifs[1]).copy()
            n_sub = rng.integers(0, t + 1)
            for pos in rng.choice(site.size, size=n_sub, replace=False):
                site[pos] = (site[pos] + rng.integers(1, 4)) % 4
            start = rng.integers(0, profile.length - site.size + 1)
            seq[start:start + site.size] = site
            return seq
        if not any(has_motif(seq, mo, t) for mo in motifs):
            return seq


def _split(rng, profile, motifs, prefix, n_pos, n_neg, mix) -> LabeledDataset:
    alphabet = get_alphabet(profile.alphabet)
    labels = np.r_[np.ones(n_pos, dtype=int), -np.ones(n_neg, dtype=int)]
    labels = labels[rng.permutation(labels.size)]
    seqs = []
    for i, y in enumerate(labels):
        p_gc = mix[0] if y > 0 else mix[1]
        codes = _draw(rng, profile, motifs, y > 0, p_gc)
        seqs.append(Sequence(f"{prefix}_{i:05d}", codes, alphabet))
    domain = "source" if prefix.startswith("source") else "target"
    return LabeledDataset(tuple(seqs), labels, domain)


def generate(profile: ShiftProfile, seed: int) -> dict[str, LabeledDataset]:
    """Source training set plus target validation and test sets."""
    rng = np.random.default_rng(seed)
    alphabet = get_alphabet(profile.alphabet)
    motif = [alphabet.encode(mo) for mo in profile.motifs]
    n_src_pos = profile.n_train // 2
    r = profile.negatives_per_positive
    n_pos = profile.n_target_pos
    return {
        "source_train": _split(rng, profile, motif, "source_train", n_src_pos,
                               profile.n_train - n_src_pos, profile.source_mix),
        "target_val": _split(rng, profile, motif, "target_val", n_pos, r * n_pos,
                             profile.target_mix),
        "target_test": _split(rng, profile, motif, "target_test", n_pos, r * n_pos,
                              profile.target_mix),
    }


def write_corpus(out_dir, profile: ShiftProfile, seed: int) -> dict[str, tuple[str, str]]:
    """Write ``<split>.fa`` and ``<split>.labels`` for every split.

    Returns ``{split: (fasta_path, label_path)}``.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, data in generate(profile, seed).items():
        fa = os.path.join(out_dir, f"{name}.fa")
        lab = os.path.join(out_dir, f"{name}.labels")
        with open(fa, "w") as fh:
            fh.write(format_fasta(data.sequences))
        with open(lab, "w") as fh:
            fh.write(format_labels(data))
        paths[name] = (fa, lab)
    with open(os.path.join(out_dir, "profile.json"), "w") as fh:
        json.dump({"seed": seed, **asdict(profile)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
