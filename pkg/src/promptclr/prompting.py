"""Prompt templates, verbalizers, demonstration assembly, and two-view inputs.

A template is a text pattern with ``<S1>`` (and ``<S2>`` for pair tasks) slots
and exactly one ``[MASK]`` slot. A prompted input is
``[CLS] main-prompt [SEP] demo_0 [SEP] ... demo_{C-1} [SEP]`` where each
demonstration is the template rendered over a training example with the mask
replaced by that example's label word. A second view of the same input is
built by resampling the template and/or the demonstrations; the main input
sentence is never edited, so the label is preserved by construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import Example
from .errors import (AssemblyError, AugmentationError, ConfigurationError, ParseError,
                     RenderError, SequenceLengthError)

MASK_TOKEN = "[MASK]"
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(len(SPECIAL_TOKENS))

VIEW_STRATEGIES = ("demo_and_temp", "temp_only", "demo_only")

_SPECIAL_RE = re.compile("(" + "|".join(re.escape(t) for t in SPECIAL_TOKENS) + ")")
_WORD_RE = re.compile(r"\w+|[^\w\s]")


def word_tokenize(text: str) -> list[str]:
    """Lowercased word/punctuation tokens; bracket specials kept verbatim."""
    tokens: list[str] = []
    for chunk in _SPECIAL_RE.split(text):
        if not chunk:
            continue
        if chunk in SPECIAL_TOKENS:
            tokens.append(chunk)
        else:
            tokens.extend(_WORD_RE.findall(chunk.lower()))
    return tokens


class Vocabulary:
    """Closed word-level vocabulary with the five specials at ids 0..4."""

    def __init__(self, words: Iterable[str]):
        ordered = sorted(set(words) - set(SPECIAL_TOKENS))
        self.id_to_token: tuple[str, ...] = SPECIAL_TOKENS + tuple(ordered)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}

    @classmethod
    def build(cls, texts: Iterable[str], extra_words: Iterable[str] = ()) -> "Vocabulary":
        words: set[str] = set()
        for text in texts:
            words.update(t for t in word_tokenize(text) if t not in SPECIAL_TOKENS)
        for word in extra_words:
            words.update(t for t in word_tokenize(word) if t not in SPECIAL_TOKENS)
        return cls(words)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode(self, text: str) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in word_tokenize(text)]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Map text to vocabulary ids; unknown words become [UNK], specials never do."""
    return vocab.encode(text)


@dataclass(frozen=True)
class Template:
    """A prompt pattern with sentence slots and exactly one [MASK] slot."""

    id: int
    pattern: str

    def __post_init__(self):
        if self.pattern.count(MASK_TOKEN) != 1:
            raise ConfigurationError(
                f"template {self.id} must contain exactly one {MASK_TOKEN}: {self.pattern!r}")
        if "<S1>" not in self.pattern:
            raise ConfigurationError(f"template {self.id} must contain <S1>: {self.pattern!r}")


@dataclass(frozen=True)
class Verbalizer:
    """Total mapping from class index to a single-token label word."""

    words: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.words)) != len(self.words):
            raise ConfigurationError(f"label words must be pairwise distinct: {self.words}")
        if any(not w.strip() for w in self.words):
            raise ConfigurationError("label words must be non-empty")

    @property
    def num_classes(self) -> int:
        return len(self.words)

    def label_word(self, class_index: int) -> str:
        return self.words[class_index]


@dataclass(frozen=True)
class TemplateBank:
    """The primary prediction template plus auxiliary templates for second views."""

    primary: Template
    auxiliary: tuple[Template, ...]

    def __post_init__(self):
        ids = [t.id for t in self.auxiliary]
        if not self.auxiliary:
            raise ConfigurationError("template bank needs at least one auxiliary template")
        if self.primary.id in ids or len(set(ids)) != len(ids):
            raise ConfigurationError("template ids must be distinct across the bank")


@dataclass(frozen=True)
class PromptedText:
    """A rendered, tokenized input with its mask position recorded."""

    token_ids: tuple[int, ...]
    mask_position: Optional[int]
    source_example_id: int
    source_template_id: int
    demo_example_ids: tuple[int, ...] = ()
    text: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.token_ids or self.token_ids[0] != CLS_ID:
            raise ValueError("prompted text must begin with [CLS]")
        if self.mask_position is not None and self.token_ids[self.mask_position] != MASK_ID:
            raise ValueError("recorded mask_position does not point at [MASK]")


@dataclass(frozen=True)
class ViewPair:
    """Two prompted views of the same example, sharing its label."""

    view1: PromptedText
    view2: PromptedText
    label: int


def render(template: Template, example: Example, fill_word: Optional[str] = None) -> str:
    """Substitute sentence slots; keep [MASK] (fill_word=None) or fill it."""
    pattern = template.pattern
    if "<S2>" in pattern and example.text2 is None:
        raise RenderError(f"template {template.id} has <S2> but example {example.id} "
                          "has no second sentence")
    out = pattern if fill_word is None else pattern.replace(MASK_TOKEN, fill_word, 1)
    out = out.replace("<S1>", example.text1)
    if "<S2>" in out and example.text2 is not None:
        out = out.replace("<S2>", example.text2)
    return out


def sample_demonstrations(example: Example, pool: Sequence[Example], num_classes: int,
                          rng: np.random.Generator,
                          exclude: Optional[dict[int, int]] = None,
                          ) -> list[tuple[Example, int]]:
    """Uniformly pick one demonstration per class (ascending), never the anchor
    itself; ``exclude`` maps class -> additionally forbidden example id."""
    demos: list[tuple[Example, int]] = []
    for c in range(num_classes):
        banned = {example.id}
        if exclude is not None and c in exclude:
            banned.add(exclude[c])
        candidates = [e for e in pool if e.label == c and e.id not in banned]
        if not candidates:
            raise AugmentationError(f"no eligible demonstration for class {c}")
        demos.append((candidates[int(rng.integers(len(candidates)))], c))
    return demos


def assemble_prompt(example: Example, template: Template,
                    demos: Sequence[tuple[Example, int]], verbalizer: Verbalizer,
                    vocab: Vocabulary, with_demos: bool = True,
                    max_len: int = 128) -> PromptedText:
    """Build ``[CLS] prompt [SEP] demo_0 [SEP] ...`` token ids with the mask
    position recorded.

    Demonstrations appear in ascending class order. When the sequence exceeds
    ``max_len``, whole demonstration segments are dropped rightmost-first; the
    main segment is truncated only if it alone does not fit.
    """
    main_text = render(template, example, fill_word=None)
    main_ids = vocab.encode(main_text)
    if main_ids.count(MASK_ID) != 1:
        raise RenderError(f"prompt for example {example.id} must contain exactly one mask")

    demo_segments: list[tuple[int, list[int], str]] = []
    demo_ids: tuple[int, ...] = ()
    if with_demos:
        by_class = {c: d for d, c in demos}
        if sorted(by_class) != list(range(verbalizer.num_classes)) or len(demos) != len(by_class):
            raise AssemblyError("need exactly one demonstration per class")
        if any(d.id == example.id for d, _ in demos):
            raise AssemblyError("a demonstration duplicates the main example")
        for c in range(verbalizer.num_classes):
            text = render(template, by_class[c], fill_word=verbalizer.label_word(c))
            demo_segments.append((by_class[c].id, vocab.encode(text), text))
        demo_ids = tuple(by_class[c].id for c in range(verbalizer.num_classes))

    kept = list(demo_segments)
    while kept and 2 + len(main_ids) + sum(len(s) + 1 for _, s, _ in kept) > max_len:
        kept.pop()
    if 2 + len(main_ids) > max_len:
        cut = max_len - 2
        if main_ids.index(MASK_ID) >= cut:
            raise SequenceLengthError(
                f"main prompt of example {example.id} does not fit in {max_len} tokens")
        main_ids = main_ids[:cut]

    token_ids = [CLS_ID] + main_ids + [SEP_ID]
    mask_position = 1 + main_ids.index(MASK_ID)
    text_parts = ["[CLS]", main_text, "[SEP]"]
    for _, seg, seg_text in kept:
        token_ids.extend(seg)
        token_ids.append(SEP_ID)
        text_parts.extend([seg_text, "[SEP]"])

    return PromptedText(token_ids=tuple(token_ids), mask_position=mask_position,
                        source_example_id=example.id, source_template_id=template.id,
                        demo_example_ids=demo_ids, text=" ".join(text_parts))


def build_view_pair(example: Example, bank: TemplateBank, demo_pool: Sequence[Example],
                    strategy: str, verbalizer: Verbalizer, vocab: Vocabulary,
                    rng: np.random.Generator, *, with_demos: bool = True,
                    max_len: int = 128) -> ViewPair:
    """Construct two views of one example.

    View 1 always uses the primary template. View 2 changes the template
    (sampled uniformly from the auxiliary set), the demonstrations (resampled
    per class, excluding view 1's choices), or both, per ``strategy``.
    """
    if strategy not in VIEW_STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}, expected one of {VIEW_STRATEGIES}")
    samples_templates = strategy in ("demo_and_temp", "temp_only")
    samples_demos = strategy in ("demo_and_temp", "demo_only")
    if samples_demos and not with_demos:
        raise ConfigurationError(f"strategy {strategy!r} requires demonstrations")

    rng1, rng2 = rng.spawn(2)
    demos1 = (sample_demonstrations(example, demo_pool, verbalizer.num_classes, rng1)
              if with_demos else [])
    view1 = assemble_prompt(example, bank.primary, demos1, verbalizer, vocab,
                            with_demos=with_demos, max_len=max_len)

    if samples_templates:
        template2 = bank.auxiliary[int(rng2.integers(len(bank.auxiliary)))]
    else:
        template2 = bank.primary
    if not with_demos:
        demos2: list[tuple[Example, int]] = []
    elif samples_demos:
        exclude = {c: d.id for d, c in demos1}
        demos2 = sample_demonstrations(example, demo_pool, verbalizer.num_classes, rng2,
                                       exclude=exclude)
    else:
        demos2 = demos1
    view2 = assemble_prompt(example, template2, demos2, verbalizer, vocab,
                            with_demos=with_demos, max_len=max_len)
    return ViewPair(view1=view1, view2=view2, label=example.label)


def label_word_ids(verbalizer: Verbalizer, vocab: Vocabulary) -> list[int]:
    """Vocabulary ids of the label words; each must be a single known token."""
    ids = []
    for c, word in enumerate(verbalizer.words):
        encoded = vocab.encode(word)
        if len(encoded) != 1 or encoded[0] == UNK_ID:
            raise ConfigurationError(
                f"label word {word!r} for class {c} must map to exactly one vocabulary id")
        ids.append(encoded[0])
    return ids


def load_template_bank(path: str | Path) -> TemplateBank:
    """One pattern per line: first line primary, the rest auxiliary."""
    path = Path(path)
    patterns: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.strip():
                patterns.append(line)
    if len(patterns) < 2:
        raise ParseError(str(path), max(1, len(patterns)),
                         "template file needs a primary plus at least one auxiliary template")
    templates = [Template(id=i, pattern=p) for i, p in enumerate(patterns)]
    return TemplateBank(primary=templates[0], auxiliary=tuple(templates[1:]))


def load_verbalizer(path: str | Path, num_classes: int) -> Verbalizer:
    """Lines of ``class_index TAB label_word``, covering every class exactly once."""
    path = Path(path)
    mapping: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(str(path), line_no, "expected 'class_index<TAB>label_word'")
            try:
                c = int(fields[0])
            except ValueError:
                raise ParseError(str(path), line_no,
                                 f"non-integer class index {fields[0]!r}") from None
            if c in mapping:
                raise ParseError(str(path), line_no, f"duplicate class index {c}")
            mapping[c] = fields[1]
    if sorted(mapping) != list(range(num_classes)):
        raise ParseError(str(path), 1,
                         f"verbalizer must cover classes 0..{num_classes - 1} exactly once")
    return Verbalizer(words=tuple(mapping[c] for c in range(num_classes)))
