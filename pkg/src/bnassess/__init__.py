"""Bayes-net assessment toolkit.

Discrete student-model and evidence-model fragments for scoring examinees,
Gibbs-sampler calibration of population and task parameters (startup and
on-line), and a Rasch computerized-adaptive-testing simulator.
"""

__version__ = "0.1.0"

from .data import (
    ResponseMatrix,
    SyntheticTruth,
    builtin_fraction_assets,
    generate_synthetic,
    sample_truth,
)
from .exceptions import (
    BnAssessError,
    CalibrationError,
    ConvergenceError,
    ModelError,
    MomentMatchError,
    SchemaError,
    StateSpaceError,
    ZeroMassError,
)
from .fragments import (
    BeliefState,
    Observation,
    ScoreReport,
    absorb,
    init_belief,
    marginal,
    predictive,
    score_examinee,
)
from .gibbs import (
    CalibrationRun,
    GibbsConfig,
    ParameterSummary,
    PriorSet,
    calibrate_new_eb,
    calibrate_new_full,
    draw_lambda,
    draw_pi,
    draw_theta,
    gelman_rubin,
    moment_match_beta,
    moment_match_dirichlet,
    run_gibbs,
    summarize,
)
from .irt import (
    CatConfig,
    FeatureEffects,
    RaschItem,
    ThetaGrid,
    calibrate_rasch,
    calibrate_rasch_online,
    expected_posterior_variance,
    lltm_fit,
    lltm_predict,
    normal_grid,
    posterior_moments,
    rasch_prob,
    run_cat,
    select_next,
    update_theta,
)
from .model import (
    AssessmentModel,
    EvidenceModelSpec,
    QMatrixRow,
    SkillGraph,
    SkillVariable,
    Task,
    build_fraction_model,
    enumerate_joint,
    skill_conjunction,
)
