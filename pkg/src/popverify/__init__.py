"""Verification toolkit for population protocols with six communication models."""

from .core import (
    Configuration,
    Multiset,
    ObsTrans,
    PairTrans,
    Protocol,
    RecvTrans,
    Run,
    SendTrans,
    apply_run,
    enabled_steps,
    reach_graph,
    validate_protocol,
)
from .verify import (
    Verdict,
    Witness,
    check_correct_bounded,
    check_correct_do,
    check_correct_io,
    check_instance,
    check_instance_do_sigma2,
    flow_check,
    saturate,
    stable_set,
)

__all__ = [
    "Configuration",
    "Multiset",
    "ObsTrans",
    "PairTrans",
    "Protocol",
    "RecvTrans",
    "Run",
    "SendTrans",
    "Verdict",
    "Witness",
    "apply_run",
    "check_correct_bounded",
    "check_correct_do",
    "check_correct_io",
    "check_instance",
    "check_instance_do_sigma2",
    "enabled_steps",
    "flow_check",
    "reach_graph",
    "saturate",
    "stable_set",
    "validate_protocol",
]

__version__ = "0.1.0"
