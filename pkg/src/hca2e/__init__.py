"""Adaptive ad exposure: template beam search, threshold control and a feed simulator."""

from .baselines import (
    BaselineConfig,
    BaselineConfigError,
    BaselineKind,
    CalibrationError,
    blend_batch,
    calibrate_beta,
    calibrate_fixed_positions,
    fixed_batch,
    fixed_template,
    gea_blend,
    wpo_blend,
)
from .controller import (
    ControllerConfigError,
    ControllerState,
    WindowReport,
    calibrate_threshold,
    capacity,
    greedy_select,
    maybe_update,
    observe,
)
from .core import (
    Candidate,
    ConstraintViolation,
    ExposureTemplate,
    HCA2EError,
    Kind,
    MergedPage,
    Request,
    RequestBatch,
    RequestConstraints,
    SlotExposureModel,
    StructuralError,
    merge_rpp,
    validate_template,
)
from .evaluator import TemplateScore, TradeoffParams, kvi, request_value, request_weight, score_batch, score_template, vpw
from .search import (
    OracleRefused,
    SearchConfig,
    SearchStats,
    ets_search,
    exhaustive_oracle,
    finalize_template,
    search_batch,
)
from .simulator import (
    GeneratorConfig,
    GeneratorConfigError,
    RunMetrics,
    Strategy,
    UserEvent,
    ad_position_report,
    advantage,
    calibrate_strategy,
    generate_stream,
    gsp_prices,
    pareto_sweep,
    run,
    simulate_user,
)

__version__ = "0.1.0"
