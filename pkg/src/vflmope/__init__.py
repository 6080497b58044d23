"""Desk-scale vertical federated learning simulator.

Participants hold vertical slices (embedding blocks) of the same samples; the
active party holds labels. The package trains either a dense
mixture-of-predefined-experts head (one expert per participant subset that
includes the active party, sigmoid-gated) or split-learning style baselines,
under missing-completely-at-random block dropout and optional noisy parties,
with byte-exact communication accounting and per-sample contribution reports.
"""

__version__ = "0.1.0"

from .alignment import (
    active_subsets,
    align_by_ids,
    alignment_of,
    mcar_mask,
    members,
    subset_label,
)
from .baselines import (
    BASELINE_KINDS,
    BaselineHead,
    baseline_forward,
    baseline_forward_matrix,
    init_baseline,
    train_baseline,
)
from .dataio import (
    EmbeddingFile,
    MetricReport,
    SplitData,
    SyntheticSpec,
    evaluate,
    gen_synthetic,
    predict_proba,
    read_embedding_file,
    write_embedding_file,
)
from .errors import (
    ConfigurationError,
    ContractError,
    EmptyFederationError,
    FormatError,
    NonFiniteGradientError,
    ShapeError,
    UndefinedContributionError,
    ValidationError,
    VflError,
)
from .estimators import MopeClassifier, SplitBaselineClassifier
from .federation import (
    BYTES_PER_VALUE,
    HEAD_KINDS,
    CommEntry,
    CommLedger,
    Participant,
    RoundResult,
    gather_blocks,
    inject_noisy,
    make_federation,
    noisy_embeddings,
    run_single_round,
    simulate_end_to_end_cost,
    simulate_end_to_end_ledger,
)
from .mope import (
    BlockLayout,
    MopeHead,
    MopeOutput,
    TrainConfig,
    contribution,
    decompose,
    init_mope_head,
    mope_forward,
    mope_loss_and_backward,
    pad_and_concat,
    per_sample_report,
    set_expert_call_hook,
    stack_padded,
    train_mope,
)
from .nn import (
    AdamState,
    Mlp2,
    adam_step,
    init_adam,
    init_mlp,
    mlp_backward,
    mlp_forward,
    sigmoid,
    softmax,
)
