"""
Predefined self-check scenarios for the occupancy stream engine.
"""

from enum import Enum
from typing import Dict, List

from pydantic import BaseModel, Field


class SelfCheckKind(str, Enum):
    """Types of self-check scenarios."""
    EXACTNESS = "exactness"
    NORMALIZATION = "normalization"
    ORACLE = "oracle"
    CLOSED_FORM = "closed_form"
    STREAMING = "streaming"
    ABLATION = "ablation"


class SelfCheckScenario(BaseModel):
    """Self-check scenario configuration."""
    name: str = Field(..., description="Scenario name")
    description: str = Field(..., description="What the scenario verifies")
    kind: SelfCheckKind = Field(..., description="Scenario type")
    repetitions: int = Field(default=1, ge=1, description="Randomised cases per run")
    seed: int = Field(default=0, description="Seed of the randomised cases")
    time_budget_seconds: float = Field(default=60.0, gt=0, description="Fails when exceeded")


class SelfCheckSuite(BaseModel):
    """Self-check suite configuration."""
    name: str = Field(..., description="Suite name")
    description: str = Field(..., description="Suite description")
    scenarios: List[SelfCheckScenario] = Field(..., description="Scenarios in execution order")
    stop_on_failure: bool = Field(default=False, description="Stop suite on first failure")


WARP_IDENTITY_SCENARIO = SelfCheckScenario(
    name="warp_identity_shift",
    description="Zero motion returns the volume bit-exactly; a one-cell translation shifts indices and zero-fills",
    kind=SelfCheckKind.EXACTNESS,
    time_budget_seconds=1.0,
)

WARP_RAMP_SCENARIO = SelfCheckScenario(
    name="warp_ramp",
    description="Half-cell translation of linear-ramp channels matches the analytic ramp within 1e-5",
    kind=SelfCheckKind.CLOSED_FORM,
)

REFINE_RESIDUAL_SCENARIO = SelfCheckScenario(
    name="refine_residual",
    description="Zeroed bottleneck gives v_refwarp = v_warp; random weights keep |v_refwarp - v_warp| <= |v_out|",
    kind=SelfCheckKind.EXACTNESS,
    repetitions=100,
    seed=3,
)

DQA_SPARSITY_SCENARIO = SelfCheckScenario(
    name="dqa_sparsity",
    description="Query-free cells leave DQA bit-exactly unchanged",
    kind=SelfCheckKind.EXACTNESS,
    repetitions=10,
    seed=4,
)

ATTENTION_NORMALIZATION_SCENARIO = SelfCheckScenario(
    name="attention_normalization",
    description="Deformable and query-to-voxel attention weights sum to one",
    kind=SelfCheckKind.NORMALIZATION,
    repetitions=10000,
    seed=5,
)

INDEX_ORACLE_SCENARIO = SelfCheckScenario(
    name="index_oracle",
    description="Voxel-query index equals brute-force box containment on a 50x50x8 half grid",
    kind=SelfCheckKind.ORACLE,
    repetitions=100,
    seed=6,
)

SELECTION_THRESHOLDS_SCENARIO = SelfCheckScenario(
    name="selection_thresholds",
    description="Low-confidence reject, large-object IoU accept, small-object score accept",
    kind=SelfCheckKind.CLOSED_FORM,
)

METRIC_ORACLES_SCENARIO = SelfCheckScenario(
    name="metric_oracles",
    description="Confusion matrices and DDA first hits agree with brute-force oracles",
    kind=SelfCheckKind.ORACLE,
    repetitions=50,
    seed=8,
)

LOSS_CLOSED_FORMS_SCENARIO = SelfCheckScenario(
    name="loss_closed_forms",
    description="Uniform logits give ln 18; perfect logits give ~0; totals use the fixed weights",
    kind=SelfCheckKind.CLOSED_FORM,
)

DERIVATIVE_CHECKS_SCENARIO = SelfCheckScenario(
    name="derivative_checks",
    description="Central differences agree with sigmoid, softmax Jacobian rows and the DQA gate path",
    kind=SelfCheckKind.CLOSED_FORM,
    seed=10,
)

STREAMING_DETERMINISM_SCENARIO = SelfCheckScenario(
    name="streaming_determinism",
    description="Two runs of an 8-frame scene give identical reports; 1 vs N threads agree within 1e-5",
    kind=SelfCheckKind.STREAMING,
    seed=11,
    time_budget_seconds=600.0,
)

ABLATION_ORDERING_SCENARIO = SelfCheckScenario(
    name="ablation_ordering",
    description="Readout weights on a parked-car scene give non-zero mIoU ordered full >= stream >= base",
    kind=SelfCheckKind.ABLATION,
    seed=12,
    time_budget_seconds=600.0,
)


PREDEFINED_SCENARIOS = [
    WARP_IDENTITY_SCENARIO,
    WARP_RAMP_SCENARIO,
    REFINE_RESIDUAL_SCENARIO,
    DQA_SPARSITY_SCENARIO,
    ATTENTION_NORMALIZATION_SCENARIO,
    INDEX_ORACLE_SCENARIO,
    SELECTION_THRESHOLDS_SCENARIO,
    METRIC_ORACLES_SCENARIO,
    LOSS_CLOSED_FORMS_SCENARIO,
    DERIVATIVE_CHECKS_SCENARIO,
    STREAMING_DETERMINISM_SCENARIO,
    ABLATION_ORDERING_SCENARIO,
]

QUICK_SUITE = SelfCheckSuite(
    name="quick",
    description="Kernel-level checks only",
    scenarios=[s for s in PREDEFINED_SCENARIOS if s.kind not in (SelfCheckKind.STREAMING, SelfCheckKind.ABLATION)],
)

FULL_SUITE = SelfCheckSuite(
    name="full",
    description="Every acceptance check including end-to-end streaming runs",
    scenarios=list(PREDEFINED_SCENARIOS),
)


def get_scenario(name: str) -> SelfCheckScenario:
    """Get a self-check scenario by name."""
    for scenario in PREDEFINED_SCENARIOS:
        if scenario.name == name:
            return scenario
    raise ValueError(f"Unknown scenario: {name}")


def get_suite(name: str) -> SelfCheckSuite:
    """Get a self-check suite by name."""
    suites: Dict[str, SelfCheckSuite] = {"quick": QUICK_SUITE, "full": FULL_SUITE}
    if name not in suites:
        raise ValueError(f"Unknown suite: {name}")
    return suites[name]


def list_available_scenarios() -> List[str]:
    return [scenario.name for scenario in PREDEFINED_SCENARIOS]


def list_available_suites() -> List[str]:
    return ["quick", "full"]
