"""Token-level baseline augmentations: synonym replacement, random insertion,
random swap, random deletion, and their composition (EDA).

These are the comparison alternative to prompt/demonstration resampling for
building second views: the ops perturb only the main input sentence, never
template or demonstration text, and special tokens are never eligible.
"""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .corpus import Example
from .errors import ConfigurationError, ParseError
from .prompting import (SPECIAL_TOKENS, TemplateBank, Verbalizer, ViewPair,
                        Vocabulary, assemble_prompt, sample_demonstrations)

AUGMENT_OPS = ("sr", "ri", "rs", "rd", "eda")


class AugmentResult(NamedTuple):
    tokens: list[str]
    noop: bool


class SynonymLexicon:
    """Mapping token -> candidate synonym tokens."""

    def __init__(self, entries: dict[str, Sequence[str]]):
        cleaned: dict[str, tuple[str, ...]] = {}
        for token, syns in entries.items():
            syns = tuple(syns)
            if token in SPECIAL_TOKENS or any(s in SPECIAL_TOKENS for s in syns):
                raise ConfigurationError(f"special tokens are not lexicon material: {token!r}")
            if not syns:
                raise ConfigurationError(f"token {token!r} has an empty synonym list")
            if syns == (token,):
                raise ConfigurationError(f"token {token!r} is its own sole synonym")
            cleaned[token] = syns
        self.entries = cleaned

    def __contains__(self, token: str) -> bool:
        return token in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def synonyms(self, token: str) -> tuple[str, ...]:
        return self.entries.get(token, ())

    @classmethod
    def from_file(cls, path: str | Path) -> "SynonymLexicon":
        """Parse ``token TAB synonym[,synonym...]`` lines."""
        path = Path(path)
        entries: dict[str, Sequence[str]] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line.strip():
                    continue
                fields = line.split("\t")
                if len(fields) != 2:
                    raise ParseError(str(path), line_no, "expected 'token<TAB>syn[,syn...]'")
                syns = [s for s in fields[1].split(",") if s]
                if not syns:
                    raise ParseError(str(path), line_no, f"no synonyms for {fields[0]!r}")
                entries[fields[0]] = syns
        return cls(entries)

    @classmethod
    def bundled(cls) -> "SynonymLexicon":
        """The small lexicon shipped with the package."""
        with resources.as_file(resources.files("promptclr") / "data" / "lexicon.tsv") as p:
            return cls.from_file(p)


def _eligible(tokens: Sequence[str]) -> list[int]:
    return [i for i, t in enumerate(tokens) if t not in SPECIAL_TOKENS]


def _num_edits(alpha: float, length: int) -> int:
    return max(1, round(alpha * length))


def _check_rate(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")


def synonym_replacement(tokens: Sequence[str], alpha: float, lexicon: SynonymLexicon,
                        rng: np.random.Generator) -> AugmentResult:
    """Replace max(1, round(alpha*L)) covered tokens with a random synonym."""
    _check_rate(alpha)
    if not tokens:
        raise ValueError("tokens must be non-empty")
    out = list(tokens)
    covered = [i for i in _eligible(out) if out[i] in lexicon]
    if not covered:
        return AugmentResult(out, True)
    n = min(_num_edits(alpha, len(tokens)), len(covered))
    for i in rng.choice(len(covered), size=n, replace=False):
        pos = covered[int(i)]
        syns = lexicon.synonyms(out[pos])
        out[pos] = syns[int(rng.integers(len(syns)))]
    return AugmentResult(out, False)


def random_insertion(tokens: Sequence[str], alpha: float, lexicon: SynonymLexicon,
                     rng: np.random.Generator) -> AugmentResult:
    """Insert max(1, round(alpha*L)) synonyms of in-sentence tokens at random spots."""
    _check_rate(alpha)
    if not tokens:
        raise ValueError("tokens must be non-empty")
    out = list(tokens)
    if not any(out[i] in lexicon for i in _eligible(out)):
        return AugmentResult(out, True)
    n = _num_edits(alpha, len(tokens))
    for _ in range(n):
        covered = [i for i in _eligible(out) if out[i] in lexicon]
        src = out[covered[int(rng.integers(len(covered)))]]
        syns = lexicon.synonyms(src)
        word = syns[int(rng.integers(len(syns)))]
        out.insert(int(rng.integers(len(out) + 1)), word)
    return AugmentResult(out, False)


def random_swap(tokens: Sequence[str], alpha: float,
                rng: np.random.Generator) -> AugmentResult:
    """Apply max(1, round(alpha*L)) swaps of two distinct positions."""
    _check_rate(alpha)
    out = list(tokens)
    eligible = _eligible(out)
    if len(eligible) < 2:
        return AugmentResult(out, True)
    n = _num_edits(alpha, len(tokens))
    for _ in range(n):
        i, j = rng.choice(len(eligible), size=2, replace=False)
        a, b = eligible[int(i)], eligible[int(j)]
        out[a], out[b] = out[b], out[a]
    return AugmentResult(out, False)


def random_deletion(tokens: Sequence[str], alpha: float,
                    rng: np.random.Generator) -> AugmentResult:
    """Delete each token independently with probability alpha; keep one if all
    would be deleted."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if not tokens:
        raise ValueError("tokens must be non-empty")
    out = list(tokens)
    eligible = _eligible(out)
    if not eligible:
        return AugmentResult(out, False)
    drop = {pos for pos in eligible if rng.random() < alpha}
    if len(drop) == len(eligible):
        drop.discard(eligible[int(rng.integers(len(eligible)))])
    return AugmentResult([t for i, t in enumerate(out) if i not in drop], False)


def eda(tokens: Sequence[str], alpha: float, lexicon: SynonymLexicon,
        rng: np.random.Generator) -> AugmentResult:
    """SR, then RI, then RS, then RD, each at rate alpha on the current tokens."""
    sr = synonym_replacement(tokens, alpha, lexicon, rng)
    ri = random_insertion(sr.tokens, alpha, lexicon, rng)
    rs = random_swap(ri.tokens, alpha, rng)
    rd = random_deletion(rs.tokens, alpha, rng)
    return AugmentResult(rd.tokens, sr.noop and ri.noop and rs.noop)


def apply_op(op: str, tokens: Sequence[str], alpha: float,
             lexicon: Optional[SynonymLexicon], rng: np.random.Generator) -> AugmentResult:
    """Dispatch one of the named ops; rs/rd ignore the lexicon."""
    if op in ("sr", "ri", "eda") and lexicon is None:
        raise ConfigurationError(f"op {op!r} requires a synonym lexicon")
    if op == "sr":
        return synonym_replacement(tokens, alpha, lexicon, rng)
    if op == "ri":
        return random_insertion(tokens, alpha, lexicon, rng)
    if op == "rs":
        return random_swap(tokens, alpha, rng)
    if op == "rd":
        return random_deletion(tokens, alpha, rng)
    if op == "eda":
        return eda(tokens, alpha, lexicon, rng)
    raise ValueError(f"unknown augmentation op {op!r}, expected one of {AUGMENT_OPS}")


def perturb_example(example: Example, op: str, alpha: float,
                    lexicon: Optional[SynonymLexicon],
                    rng: np.random.Generator) -> Example:
    """Apply an op to the whitespace tokens of the example's sentence(s)."""
    text1 = " ".join(apply_op(op, example.text1.split(), alpha, lexicon, rng).tokens)
    text2 = example.text2
    if text2 is not None:
        text2 = " ".join(apply_op(op, text2.split(), alpha, lexicon, rng).tokens)
    return dataclasses.replace(example, text1=text1, text2=text2)


def build_view_pair_augmented(example: Example, bank: TemplateBank,
                              demo_pool: Sequence[Example], op: str, alpha: float,
                              lexicon: Optional[SynonymLexicon], verbalizer: Verbalizer,
                              vocab: Vocabulary, rng: np.random.Generator, *,
                              with_demos: bool = True, max_len: int = 128) -> ViewPair:
    """Second view via token-level augmentation of the main input, keeping view 1's
    primary template and demonstrations (the comparison setup to prompt resampling)."""
    rng1, rng2 = rng.spawn(2)
    demos = (sample_demonstrations(example, demo_pool, verbalizer.num_classes, rng1)
             if with_demos else [])
    view1 = assemble_prompt(example, bank.primary, demos, verbalizer, vocab,
                            with_demos=with_demos, max_len=max_len)
    perturbed = perturb_example(example, op, alpha, lexicon, rng2)
    view2 = assemble_prompt(perturbed, bank.primary, demos, verbalizer, vocab,
                            with_demos=with_demos, max_len=max_len)
    return ViewPair(view1=view1, view2=view2, label=example.label)
