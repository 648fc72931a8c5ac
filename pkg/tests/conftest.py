import numpy as np
import pytest

from promptclr.augment import SynonymLexicon
from promptclr.corpus import generate_synthetic_task
from promptclr.encoder import ModelConfig
from promptclr.prompting import Template, TemplateBank, Verbalizer
from promptclr.runner import (SYNTHETIC_TEMPLATES, TaskInputs, _synthetic_lexicon,
                              build_vocabulary)
from promptclr.trainer import TrainConfig


def make_inputs(signal_strength: float = 1.0, per_class: int = 20, vocab_size: int = 40,
                seed: int = 7, sentence_len: int = 5) -> TaskInputs:
    """In-memory 2-class synthetic task sized for second-scale tests."""
    rng = np.random.default_rng(seed)
    task, examples = generate_synthetic_task(2, per_class, vocab_size, signal_strength,
                                             rng, sentence_len=sentence_len)
    bank = TemplateBank(
        primary=Template(id=0, pattern=SYNTHETIC_TEMPLATES[0]),
        auxiliary=tuple(Template(id=i, pattern=p)
                        for i, p in enumerate(SYNTHETIC_TEMPLATES[1:], start=1)))
    verbalizer = Verbalizer(words=("label0", "label1"))
    lexicon = SynonymLexicon(_synthetic_lexicon(2, vocab_size, 2))
    vocab = build_vocabulary(examples, bank, verbalizer, lexicon)
    return TaskInputs(task, examples, bank, verbalizer, vocab, lexicon)


@pytest.fixture(scope="session")
def tiny_inputs() -> TaskInputs:
    return make_inputs()


def tiny_model_config(vocab_size: int, max_seq_len: int = 64) -> ModelConfig:
    return ModelConfig(vocab_size=vocab_size, d_model=16, num_layers=1, num_heads=2,
                       max_seq_len=max_seq_len, feedforward_width=32)


def tiny_train_config(**kw) -> TrainConfig:
    base = dict(max_steps=6, batch_size=4, max_len=64)
    base.update(kw)
    return TrainConfig(**base)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    rows = {}
    for outcome, tag in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in nodeid:
                rows[nodeid.split("::")[-1]] = tag
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(rows):
        terminalreporter.write_line(f"{rows[name]}  {name}")
