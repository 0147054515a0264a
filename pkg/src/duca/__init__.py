"""Dual feature caching on a desk-scale diffusion transformer.

The package is organized by subsystem:

- `tensor_core`: float64 tensors and the FLOPs meter
- `dit_model`: the toy transformer (blocks of attention + MLP with AdaLN)
- `token_select`: token-partition strategies for conservative caching
- `cache_engine`: the feature cache, step executors, and schedules
- `sampler`: deterministic reverse process and caching-error traces
- `harness`: configs, experiment runs, CSV/JSON reports (CLI in `cli`)
"""

from .cache_engine import (
    FeatureCache,
    SchedulePlan,
    StepKind,
    aggressive_step,
    build_policy_schedule,
    build_schedule,
    conservative_step,
    execute_step,
    fresh_step,
)
from .dit_model import (
    BranchOutput,
    DiTModel,
    ModelConfig,
    attention,
    embed_condition,
    forward_flops,
    init_model,
    load_weights,
    model_forward_full,
    save_weights,
    sublayer_branch,
)
from .errors import (
    CacheStateError,
    CapabilityError,
    ConfigError,
    DegenerateInputError,
    NumericError,
    ShapeError,
)
from .harness import (
    ExperimentConfig,
    RunReport,
    ablation_grid,
    compare_policies,
    load_config,
    run_experiment,
    write_grid,
    write_report,
)
from .sampler import (
    ErrorTrace,
    NoiseSchedule,
    Trajectory,
    caching_error,
    make_noise_schedule,
    reverse_step,
    run_reference,
    run_trajectory,
)
from .tensor_core import (
    FlopsMeter,
    Tensor,
    cosine_similarity,
    gelu,
    layer_norm,
    matmul,
    softmax_rows,
)
from .token_select import (
    STRATEGY_NAMES,
    SelectionContext,
    SelectionStrategy,
    TokenPartition,
    parse_strategy,
    select,
)

__version__ = "0.1.0"
