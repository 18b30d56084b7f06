"""Simulation of remote state estimation over lossy broadcast and
multi-access links, with value-of-information transmission scheduling."""

from .channels import ChannelLink, ConstantRate, MarkovRate, multiaccess_gate
from .engine import (
    BatchSummary,
    PairedStats,
    RunMetrics,
    compute_phi,
    paired_stats,
    run_batch,
    run_once,
    source_schedules,
)
from .errors import (
    ConfigurationError,
    LogicFault,
    NumericFault,
    PolicyContractFault,
    SimulationError,
)
from .estimation import (
    DecoderState,
    EncoderState,
    FilterSchedule,
    decoder_init,
    decoder_step,
    encoder_init,
    encoder_step,
    filter_schedule,
)
from .models import GaussMarkovModel, Scenario, SourceTrajectory, sample_trajectory
from .policies import (
    Decision,
    PolicyInputs,
    access_function,
    dissemination_voi,
    one_shot_broadcast,
    one_shot_multiaccess,
    parse_policy,
    prioritization_voi,
)
from .scenario_io import (
    ExportBundle,
    builtin_scenarios,
    dump_scenario,
    export_batch,
    export_run,
    load_config,
    load_scenario,
    save_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "BatchSummary",
    "ChannelLink",
    "ConfigurationError",
    "ConstantRate",
    "Decision",
    "DecoderState",
    "EncoderState",
    "ExportBundle",
    "FilterSchedule",
    "GaussMarkovModel",
    "LogicFault",
    "MarkovRate",
    "NumericFault",
    "PairedStats",
    "PolicyContractFault",
    "PolicyInputs",
    "RunMetrics",
    "Scenario",
    "SimulationError",
    "SourceTrajectory",
    "access_function",
    "builtin_scenarios",
    "compute_phi",
    "decoder_init",
    "decoder_step",
    "dissemination_voi",
    "dump_scenario",
    "encoder_init",
    "encoder_step",
    "export_batch",
    "export_run",
    "filter_schedule",
    "load_config",
    "load_scenario",
    "multiaccess_gate",
    "one_shot_broadcast",
    "one_shot_multiaccess",
    "paired_stats",
    "parse_policy",
    "prioritization_voi",
    "run_batch",
    "run_once",
    "sample_trajectory",
    "save_scenario",
    "source_schedules",
]
