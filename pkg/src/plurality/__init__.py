"""Plurality consensus on the complete graph: two-choices, a memory
variant with bit propagation, and an asynchronous counterpart."""

from .model import (
    AgentPopulation,
    AggregateState,
    Configuration,
    ProtocolParams,
    RngStream,
    RoundReport,
    ValidationError,
    make_configuration,
)

__all__ = [
    "AgentPopulation",
    "AggregateState",
    "Configuration",
    "ProtocolParams",
    "RngStream",
    "RoundReport",
    "ValidationError",
    "make_configuration",
]
