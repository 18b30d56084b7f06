"""Exception taxonomy shared across the package.

Configuration problems are user-facing (bad scenario files, inconsistent
dimensions) and map to CLI exit code 2. The fault classes signal broken
internal contracts and are never caught silently.
"""


class SimulationError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(SimulationError):
    """Invalid model, scenario, or config-file content."""


class NumericFault(SimulationError):
    """Non-finite value where a finite one is required; message names the step."""


class LogicFault(SimulationError):
    """Sequencing contract broken (e.g. two sends into a link at one step)."""


class PolicyContractFault(SimulationError):
    """A policy violated a channel access constraint."""
