"""Grounded synthetic patient portal message generation and corpus evaluation."""

from .corpus import (
    DEFAULT_SENTINEL,
    Corpus,
    GroundingPack,
    Message,
    PromptRecord,
    filter_by_length,
    load_corpus,
    load_grounding_pack,
    save_corpus,
    validate_grounding_pack,
)
from .icd9 import (
    DEFAULT_CHAPTERS,
    Chapter,
    ChapterHistogram,
    Icd9Code,
    build_histogram,
    chapter_of,
    parse_icd9_db,
    sample_codes,
    uniform_histogram,
)
from .llm import Completion, HttpClient, MockClient, ProviderConfig, complete, mock_complete
from .metrics import (
    EmbeddingVector,
    EvalEntry,
    HashingNgramEmbedder,
    NGramLm,
    SystemMetrics,
    depth,
    embed,
    evaluate_systems,
    mean_perplexity,
    normalize_report,
    perplexity,
    q_value,
    tokenize,
    train_lm,
)
from .stage1 import Stage1Template, build_stage1_prompt, generate_prompts, parse_stage1_output
from .stage2 import (
    Stage2Template,
    build_grounded_prompt,
    build_zeroshot_prompt,
    generate_messages,
    truncate_at_sentinel,
)

__version__ = "0.1.0"
