"""Few-shot prompt-based fine-tuning with a supervised-contrastive second view.

Inputs are cast as fill-in-the-blank prompts with per-class demonstrations;
a second view of each input is built by resampling the template and/or the
demonstrations (or by token-level augmentation for comparison), and a small
masked-LM encoder is trained with an MLM step plus a contrastive step per
iteration.
"""

from .augment import (AUGMENT_OPS, AugmentResult, SynonymLexicon, apply_op,
                      build_view_pair_augmented, eda, random_deletion,
                      random_insertion, random_swap, synonym_replacement)
from .config import RunConfig, load_run_config, save_run_config
from .corpus import (DEFAULT_SEEDS, METRICS, Example, FewShotSplit, TaskSpec,
                     generate_synthetic_task, load_examples, make_fewshot_splits,
                     sample_batch, save_examples)
from .encoder import (MaskedLMEncoder, ModelConfig, extract_representation,
                      init_params, label_word_distribution, load_checkpoint,
                      save_checkpoint)
from .errors import (AssemblyError, AugmentationError, ConfigurationError,
                     DivergenceError, ExtractionError, ParseError,
                     PromptClrError, RenderError, SequenceLengthError)
from .evaluation import (RunResult, aggregate_runs, compute_metric,
                         difficulty_report, predict, predict_split)
from .losses import (ContrastiveBatch, ContrastiveLoss, contrastive_bruteforce,
                     mlm_loss, simclr_bruteforce, simclr_loss, supcon_bruteforce,
                     supcon_loss)
from .prompting import (MASK_TOKEN, SPECIAL_TOKENS, VIEW_STRATEGIES, PromptedText,
                        Template, TemplateBank, Verbalizer, ViewPair, Vocabulary,
                        assemble_prompt, build_view_pair, label_word_ids,
                        load_template_bank, load_verbalizer, render,
                        sample_demonstrations, word_tokenize)
from .runner import (compare_experiments, emit_synthetic_task, load_task_inputs,
                     run_experiment, run_seed)
from .trainer import (LOSS_MODES, STEP_MODES, Adam, StepRecord, TrainConfig,
                      TrainLog, train, train_iteration)

__version__ = "0.1.0"
