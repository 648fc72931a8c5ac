"""Self-contained property suite: oracle equivalences, closed-form values,
gradient checks against central finite differences, normalization and view
contracts. Used by the `oracle-check` subcommand and reused by the test suite.

Every check seeds its own rng, so repeated runs produce identical reports.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple, Optional

import numpy as np
import torch

from .augment import (SynonymLexicon, eda, random_deletion, random_insertion,
                      random_swap, synonym_replacement)
from .corpus import generate_synthetic_task, synthetic_token_sets
from .encoder import (MaskedLMEncoder, ModelConfig, extract_representation,
                      init_params, label_word_distribution)
from .losses import (ContrastiveBatch, contrastive_bruteforce, mlm_loss,
                     simclr_loss, supcon_loss)
from .prompting import (MASK_ID, PromptedText, Template, TemplateBank, Verbalizer,
                        build_view_pair)
from .runner import SYNTHETIC_TEMPLATES, _synthetic_lexicon, build_vocabulary


class PropertyResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def finite_difference(fn: Callable[[], torch.Tensor], x: torch.Tensor,
                      h: float = 1e-5) -> torch.Tensor:
    """Central-difference gradient of the scalar fn() with respect to x,
    perturbing x in place element by element (float64 recommended)."""
    grad = torch.zeros_like(x)
    flat = x.detach().reshape(-1)
    gflat = grad.reshape(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + h
            up = float(fn())
            flat[i] = orig - h
            down = float(fn())
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    scale = max(float(analytic.norm()), float(numeric.norm()), 1e-12)
    return float((analytic - numeric).norm()) / scale


def random_batch(rng: np.random.Generator, max_anchors: int = 8, max_dim: int = 16,
                 temperature: float = 0.1, num_classes: Optional[int] = None,
                 dtype=torch.float64) -> ContrastiveBatch:
    """Random unit-feature batch; singleton classes are possible on purpose."""
    n = int(rng.integers(1, max_anchors + 1))
    d = int(rng.integers(2, max_dim + 1))
    classes = num_classes if num_classes is not None else int(rng.integers(2, 5))
    v1 = torch.tensor(rng.normal(size=(n, d)), dtype=dtype)
    v2 = torch.tensor(rng.normal(size=(n, d)), dtype=dtype)
    v1 = v1 / v1.norm(dim=1, keepdim=True)
    v2 = v2 / v2.norm(dim=1, keepdim=True)
    labels = [int(c) for c in rng.integers(classes, size=n)]
    return ContrastiveBatch.from_views(v1, v2, labels, temperature)


def _synthetic_fixture(num_classes: int = 2, per_class: int = 8, seed: int = 5):
    rng = np.random.default_rng(seed)
    task, examples = generate_synthetic_task(num_classes, per_class, 40, 0.9, rng)
    bank = TemplateBank(
        primary=Template(id=0, pattern=SYNTHETIC_TEMPLATES[0]),
        auxiliary=tuple(Template(id=i, pattern=p)
                        for i, p in enumerate(SYNTHETIC_TEMPLATES[1:], start=1)))
    verbalizer = Verbalizer(words=tuple(f"label{c}" for c in range(num_classes)))
    lexicon = SynonymLexicon(_synthetic_lexicon(num_classes, 40, 3))
    vocab = build_vocabulary(examples, bank, verbalizer, lexicon)
    return task, examples, bank, verbalizer, vocab, lexicon


def check_supcon_oracle_equivalence() -> PropertyResult:
    rng = np.random.default_rng(11)
    temperatures = (0.05, 0.1, 0.5, 1.0)
    worst = 0.0
    for trial in range(100):
        batch = random_batch(rng, temperature=temperatures[trial % 4])
        fast = supcon_loss(batch)
        slow = contrastive_bruteforce(batch, "label")
        if fast.degenerate != slow.degenerate:
            return PropertyResult("supcon_oracle_equivalence", False,
                                  f"degenerate flag mismatch on trial {trial}")
        worst = max(worst, abs(float(fast.value) - slow.value))
    return PropertyResult("supcon_oracle_equivalence", worst < 1e-6,
                          f"max |fast - bruteforce| = {worst:.2e} over 100 batches")


def check_simclr_oracle_equivalence() -> PropertyResult:
    rng = np.random.default_rng(12)
    worst = 0.0
    for trial in range(50):
        batch = random_batch(rng, temperature=(0.1, 1.0)[trial % 2])
        fast = simclr_loss(batch)
        slow = contrastive_bruteforce(batch, "partner")
        worst = max(worst, abs(float(fast.value) - slow.value))
    return PropertyResult("simclr_oracle_equivalence", worst < 1e-6,
                          f"max |fast - bruteforce| = {worst:.2e} over 50 batches")


def check_supcon_closed_forms() -> PropertyResult:
    z = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    pair = ContrastiveBatch(features=z, labels=[0, 0], view_of=[0, 0], temperature=0.7)
    same = float(supcon_loss(pair).value)

    e1 = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64)
    e2 = torch.tensor([0.0, 1.0, 0.0, 0.0], dtype=torch.float64)
    four = ContrastiveBatch(features=torch.stack([e1, e1, e2, e2]),
                            labels=[0, 0, 1, 1], view_of=[0, 0, 1, 1], temperature=1.0)
    expected = math.log(1.0 + 2.0 / math.e)
    got = float(supcon_loss(four).value)
    oracle = contrastive_bruteforce(four, "label").value

    distinct = ContrastiveBatch(features=z, labels=[0, 1], view_of=[0, 0], temperature=1.0)
    degen = supcon_loss(distinct)

    ok = (abs(same) < 1e-12 and abs(got - expected) < 1e-6
          and abs(oracle - expected) < 1e-6
          and degen.degenerate and float(degen.value) == 0.0)
    return PropertyResult(
        "supcon_closed_forms", ok,
        f"same-class pair {same:.2e}, orthonormal batch {got:.6f} vs log(1+2/e)="
        f"{expected:.6f}, degenerate flag {degen.degenerate}")


def check_mlm_loss_values() -> PropertyResult:
    perfect = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    zero = float(mlm_loss(perfect, [0, 1]))
    uniform = torch.full((4, 2), 0.5, dtype=torch.float64)
    ln2 = float(mlm_loss(uniform, [0, 1, 0, 1]))
    softmaxed = torch.tensor([[0.7311, 0.2689]], dtype=torch.float64)
    softmaxed = softmaxed / softmaxed.sum()
    single = float(mlm_loss(softmaxed, [0]))
    ok = zero == 0.0 and abs(ln2 - math.log(2)) < 1e-12 and abs(single - 0.3133) < 1e-4
    return PropertyResult("mlm_loss_values", ok,
                          f"perfect {zero}, uniform {ln2:.6f} (ln 2 = {math.log(2):.6f}), "
                          f"p=0.7311 -> {single:.4f}")


def check_contrastive_gradients() -> PropertyResult:
    rng = np.random.default_rng(13)
    worst = 0.0
    for loss_fn in (supcon_loss, simclr_loss):
        for _ in range(5):
            batch = random_batch(rng, max_anchors=4, max_dim=6, temperature=0.2)
            raw = torch.tensor(rng.normal(size=batch.features.shape),
                               dtype=torch.float64, requires_grad=True)

            def compute() -> torch.Tensor:
                feats = raw / raw.norm(dim=1, keepdim=True)
                b = ContrastiveBatch(features=feats, labels=batch.labels,
                                     view_of=batch.view_of,
                                     temperature=batch.temperature)
                return loss_fn(b).value

            value = compute()
            value.backward()
            numeric = finite_difference(compute, raw.data)
            worst = max(worst, relative_error(raw.grad, numeric))
            raw.grad = None
    return PropertyResult("contrastive_gradients", worst < 1e-4,
                          f"max relative error {worst:.2e} over 10 instances")


def check_mlm_gradient() -> PropertyResult:
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(5):
        logits = torch.tensor(rng.normal(size=(4, 3)), dtype=torch.float64,
                              requires_grad=True)
        golds = [int(g) for g in rng.integers(3, size=4)]

        def compute() -> torch.Tensor:
            return mlm_loss(logits.softmax(dim=-1), golds)

        compute().backward()
        numeric = finite_difference(compute, logits.data)
        worst = max(worst, relative_error(logits.grad, numeric))
        logits.grad = None
    return PropertyResult("mlm_gradient", worst < 1e-4,
                          f"max relative error {worst:.2e} over 5 instances")


def tiny_encoder(seed: int, vocab_size: int = 12, max_seq_len: int = 8) -> MaskedLMEncoder:
    config = ModelConfig(vocab_size=vocab_size, d_model=8, num_layers=1, num_heads=2,
                         max_seq_len=max_seq_len, feedforward_width=16)
    return init_params(config, seed=seed).double()


def encoder_gradient_error(seed: int, length: int = 6) -> float:
    """Worst relative FD error across all parameter tensors of a tiny model.

    The scalar loss mixes a random projection of the hidden states with a
    label-word cross-entropy term so every parameter, head included, is live.
    """
    params = tiny_encoder(seed)
    rng = np.random.default_rng(seed)
    ids = [2] + [int(i) for i in rng.integers(5, 12, size=length - 1)]
    pos = int(rng.integers(1, length))
    ids[pos] = MASK_ID
    prompt = PromptedText(token_ids=tuple(ids), mask_position=pos,
                          source_example_id=0, source_template_id=0)
    weights = torch.tensor(rng.normal(size=(length, 8)), dtype=torch.float64)

    def compute() -> torch.Tensor:
        hidden = params(ids, train_mode=False)
        probs = label_word_distribution(hidden, prompt, [5, 6, 7], params)
        return (hidden * weights).sum() - probs[1].log()

    value = compute()
    for p in params.parameters():
        p.grad = None
    value.backward()
    worst = 0.0
    for p in params.parameters():
        numeric = finite_difference(compute, p.data)
        worst = max(worst, relative_error(p.grad, numeric))
    return worst


def check_encoder_gradient() -> PropertyResult:
    worst = max(encoder_gradient_error(seed) for seed in (0, 1, 2))
    return PropertyResult("encoder_gradient", worst < 1e-4,
                          f"max relative error {worst:.2e} over 3 tiny models")


def check_label_word_normalization() -> PropertyResult:
    rng = np.random.default_rng(15)
    params = tiny_encoder(3)
    label_sets = ([5, 6], [5, 6, 7], [8, 9, 10, 11])
    worst = 0.0
    for trial in range(200):
        length = int(rng.integers(3, 8))
        ids = [2] + [int(i) for i in rng.integers(5, 12, size=length - 1)]
        pos = int(rng.integers(1, length))
        ids[pos] = MASK_ID
        prompt = PromptedText(token_ids=tuple(ids), mask_position=pos,
                              source_example_id=0, source_template_id=0)
        with torch.no_grad():
            hidden = params(ids, train_mode=False)
            probs = label_word_distribution(hidden, prompt, label_sets[trial % 3], params)
        worst = max(worst, abs(float(probs.sum()) - 1.0))
        if float(probs.min()) <= 0.0:
            return PropertyResult("label_word_normalization", False,
                                  "non-positive probability")
    # duplicate label word ids force exactly equal logits
    with torch.no_grad():
        hidden = params([2, MASK_ID, 5], train_mode=False)
        prompt = PromptedText(token_ids=(2, MASK_ID, 5), mask_position=1,
                              source_example_id=0, source_template_id=0)
        equal = label_word_distribution(hidden, prompt, [7, 7], params)
    sym = max(abs(float(equal[0]) - 0.5), abs(float(equal[1]) - 0.5))
    ok = worst < 1e-6 and sym < 1e-9
    return PropertyResult("label_word_normalization", ok,
                          f"max |sum - 1| = {worst:.2e}, equal-logit deviation {sym:.2e}")


def check_representation_norm() -> PropertyResult:
    rng = np.random.default_rng(16)
    worst = 0.0
    for _ in range(100):
        hidden = torch.tensor(rng.normal(size=(7, 8)), dtype=torch.float64)
        prompt = PromptedText(token_ids=(2, MASK_ID, 5, 5, 5, 5, 5), mask_position=1,
                              source_example_id=0, source_template_id=0)
        for mode in ("mask_token", "cls_token"):
            z = extract_representation(hidden, prompt, mode)
            worst = max(worst, abs(float(z.norm()) - 1.0))
    return PropertyResult("representation_norm", worst < 1e-6,
                          f"max |norm - 1| = {worst:.2e} over 200 extractions")


def _tokens_contiguous_in(needle: list[int], haystack: tuple[int, ...]) -> bool:
    n, h = len(needle), len(haystack)
    return any(list(haystack[i:i + n]) == needle for i in range(h - n + 1))


def view_contract_violations(strategy: str, trials: int = 300, seed: int = 17) -> int:
    """Count §-style contract violations: template/demo change pattern, the
    main input surviving verbatim in both views, and label preservation."""
    task, examples, bank, verbalizer, vocab, _ = _synthetic_fixture()
    rng = np.random.default_rng(seed)
    violations = 0
    for trial in range(trials):
        example = examples[int(rng.integers(len(examples)))]
        pair = build_view_pair(example, bank, examples, strategy, verbalizer, vocab,
                               rng.spawn(1)[0])
        v1, v2 = pair.view1, pair.view2
        main_ids = vocab.encode(example.text1)
        ok = (pair.label == example.label
              and v1.source_template_id == bank.primary.id
              and _tokens_contiguous_in(main_ids, v1.token_ids)
              and _tokens_contiguous_in(main_ids, v2.token_ids))
        if strategy in ("demo_and_temp", "temp_only"):
            ok = ok and v2.source_template_id != bank.primary.id
        else:
            ok = ok and v2.source_template_id == bank.primary.id
        if strategy in ("demo_and_temp", "demo_only"):
            ok = ok and all(a != b for a, b in
                            zip(v1.demo_example_ids, v2.demo_example_ids))
        else:
            ok = ok and v1.demo_example_ids == v2.demo_example_ids
        if not ok:
            violations += 1
    return violations


def check_view_contracts() -> PropertyResult:
    counts = {s: view_contract_violations(s) for s in
              ("demo_and_temp", "temp_only", "demo_only")}
    ok = all(v == 0 for v in counts.values())
    return PropertyResult("view_strategy_contracts", ok,
                          f"violations per strategy: {counts}")


def check_augmentation_contracts() -> PropertyResult:
    lexicon = SynonymLexicon(_synthetic_lexicon(2, 40, 3))
    _, fillers = synthetic_token_sets(2, 40, 3)
    rng = np.random.default_rng(18)
    problems = []
    for alpha in (0.1, 0.2):
        for length in (5, 10, 20):
            tokens = [fillers[int(i)] for i in rng.integers(len(fillers), size=length)]
            n = max(1, round(alpha * length))
            sr = synonym_replacement(tokens, alpha, lexicon, rng)
            if len(sr.tokens) != length:
                problems.append(f"sr length changed at L={length}")
            if sum(a != b for a, b in zip(tokens, sr.tokens)) > n:
                problems.append(f"sr changed more than n={n} tokens")
            ri = random_insertion(tokens, alpha, lexicon, rng)
            if len(ri.tokens) != length + n:
                problems.append(f"ri added {len(ri.tokens) - length}, wanted n={n}")
            rs = random_swap(tokens, alpha, rng)
            if sorted(rs.tokens) != sorted(tokens):
                problems.append("rs is not a permutation")
    # rd mean output length over many draws
    length, alpha, draws = 20, 0.2, 10_000
    tokens = [fillers[int(i)] for i in rng.integers(len(fillers), size=length)]
    mean = np.mean([len(random_deletion(tokens, alpha, rng).tokens)
                    for _ in range(draws)])
    sigma = math.sqrt(length * alpha * (1 - alpha) / draws)
    if abs(mean - length * (1 - alpha)) > 3 * sigma:
        problems.append(f"rd mean length {mean:.3f} outside 3 sigma of "
                        f"{length * (1 - alpha)}")
    # eda equals the manual sequence under a cloned rng stream
    rng_a = np.random.default_rng(19)
    rng_b = np.random.default_rng(19)
    composed = eda(tokens, 0.1, lexicon, rng_a)
    manual = random_deletion(
        random_swap(
            random_insertion(
                synonym_replacement(tokens, 0.1, lexicon, rng_b).tokens,
                0.1, lexicon, rng_b).tokens,
            0.1, rng_b).tokens,
        0.1, rng_b)
    if composed.tokens != manual.tokens:
        problems.append("eda differs from manual sr->ri->rs->rd composition")
    return PropertyResult("augmentation_contracts", not problems,
                          "; ".join(problems) if problems else
                          "length, count, rd-mean and composition contracts hold")


def check_negative_temperature_rejected() -> PropertyResult:
    z = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
    try:
        ContrastiveBatch(features=z, labels=[0, 0], view_of=[0, 0], temperature=-0.1)
    except ValueError as err:
        return PropertyResult("negative_temperature_rejected", True,
                              f"precondition failure reported: {err}")
    return PropertyResult("negative_temperature_rejected", False,
                          "negative temperature was accepted")


def check_forward_determinism() -> PropertyResult:
    params = tiny_encoder(4)
    ids = [2, 5, 6, MASK_ID, 7]
    with torch.no_grad():
        a = params(ids, train_mode=False)
        b = params(ids, train_mode=False)
    same = bool(torch.equal(a, b))
    # PAD positions are inert: permuting trailing PADs leaves real rows alone
    padded1 = ids + [0, 0, 0]
    with torch.no_grad():
        c = params(padded1, train_mode=False)
    pad_ok = bool(torch.allclose(a, c[:len(ids)], atol=1e-6))
    return PropertyResult("forward_determinism", same and pad_ok,
                          f"repeat equal: {same}, PAD-inert: {pad_ok}")


ALL_CHECKS: tuple[Callable[[], PropertyResult], ...] = (
    check_supcon_oracle_equivalence,
    check_simclr_oracle_equivalence,
    check_supcon_closed_forms,
    check_mlm_loss_values,
    check_contrastive_gradients,
    check_mlm_gradient,
    check_encoder_gradient,
    check_label_word_normalization,
    check_representation_norm,
    check_view_contracts,
    check_augmentation_contracts,
    check_negative_temperature_rejected,
    check_forward_determinism,
)


def run_all_checks() -> list[PropertyResult]:
    return [check() for check in ALL_CHECKS]
