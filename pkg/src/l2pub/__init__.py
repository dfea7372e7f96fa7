"""Optimal batch publishing for layer-2 style settlement.

Decide when to post queued items to a fee-volatile base chain: cost model,
price processes, decision policies (fixed interval, greedy balancing,
age-indexed price thresholds), Monte-Carlo simulation, and an exact
dynamic-programming oracle for verifying the policies on small instances.
"""

__version__ = "0.1.0"

from .costs import (
    Counterexample,
    DelayRangeError,
    DelaySpec,
    ExponentialDelay,
    InvalidActionError,
    LinearDelay,
    PublishingCostParams,
    TableDelay,
    Transaction,
    TxQueue,
    aggregated_delay_cost,
    aggregated_delay_table,
    check_sub_additivity,
    delay_cost,
    publishing_cost,
    step_cost,
)
from .errors import ConfigError, StateSpaceError
from .policies import (
    FixedIntervalPolicy,
    GreedyBalancePolicy,
    MartingaleThreshold,
    OneStepThreshold,
    PolicyAction,
    PolicyInput,
    RollupNumericThreshold,
    RollupParams,
    TableThreshold,
    ThresholdPolicy,
    TrivialPolicy,
    martingale_threshold,
    one_step_threshold,
    optimal_interval,
    publish_criterion,
    rollup_threshold,
    rollup_threshold_detail,
    trivial_policy,
)
from .prices import (
    ConstantPrice,
    FactorStats,
    HistoricalTrace,
    IngestError,
    LogNormalWalk,
    ProcessClass,
    TraceExhausted,
    build_price_path,
    classify,
    derive_rng,
    expected_n_step_factor,
    fit_factors,
    ingest_trace,
    next_price,
)
from .simulate import (
    EpisodeResult,
    MonteCarloSummary,
    SimConfig,
    StepRecord,
    compare,
    monte_carlo,
    run_episode,
)
from .oracle import (
    FullMdpConfig,
    LatticePriceProcess,
    ModifiedMdpConfig,
    ThresholdStructureConfig,
    evaluate_modified_policy,
    solve_full_mdp,
    solve_modified_mdp,
    verify_all_or_nothing,
    verify_fifo,
    verify_threshold_structure,
)
