"""Cultural commonsense knowledge graphs from language models.

The toolkit elicits if-then cultural assertions from a chat-completion
backend, grows them into a directed labeled graph through iterative
expansion with embedding-gated deduplication, enumerates inferential
paths, and puts the result to work: semantic retrieval for augmented
prompting, benchmark runners, story generation with judge scoring, and
human-evaluation logistics.

See the demos/ directory of the source distribution for narrative,
runnable walkthroughs of each capability.
"""

from .augment import (
    AugmentationMode,
    AugmentationSpec,
    SearchIndex,
    assemble_prompt,
    build_index,
    render_assertion,
    render_path,
    top_k,
)
from .bench import (
    CompletionItem,
    JudgeDimension,
    McqaItem,
    judge_story,
    parse_choice,
    pearson,
    run_completion,
    run_mcqa,
    run_storygen,
)
from .construction import (
    PipelineConfig,
    RunReport,
    canonicalize,
    forward_expansion,
    initial_generation,
    intermediate_expansion,
    parse_assertions,
    run_pipeline,
)
from .embedding import EmbedderConfig, HashedBagEmbedder, RemoteEmbedder, cosine, nearest
from .evalkit import aggregate_labels, qc_gate, sample_for_annotation
from .gateway import (
    Gateway,
    GenerationRequest,
    HttpChatBackend,
    PromptTemplate,
    ScriptedBackend,
    render,
)
from .kb import (
    Action,
    Assertion,
    AssertionMeta,
    InsertOutcome,
    KbStats,
    KnowledgeBase,
    Provenance,
    RelationKind,
    compute_stats,
    load_kb,
    save_kb,
)
from .pathing import PathLimits, PathRecord, enumerate_simple_paths, select_sources

__version__ = "0.1.0"
