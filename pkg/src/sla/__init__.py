"""Softmax linear attention: head-level softmax gates on top of linear attention."""

from .errors import DegenerateInputError, InputError, InternalError, ParameterError, SLAError
from .kernels import BACKEND
from .mechanisms import (
    AttentionConfig,
    GateWeights,
    HeadState,
    MechanismKind,
    SequenceBatch,
    concat_heads,
    count_gate_params,
    full_attention,
    gdn_recurrent,
    gla_recurrent,
    head_gates,
    linear_chunkwise,
    linear_parallel,
    linear_recurrent,
    retnet_recurrent,
    run_mechanism,
    sla_chunkwise,
    sla_parallel,
    sla_recurrent,
)
from .report import RunReport
from .tensor import FeatureMapKind, Rng, entropy, feature_map, random_matrix, softmax_rows

__all__ = [
    "BACKEND", "AttentionConfig", "DegenerateInputError", "FeatureMapKind", "GateWeights",
    "HeadState", "InputError", "InternalError", "MechanismKind", "ParameterError", "Rng",
    "RunReport", "SLAError", "SequenceBatch", "concat_heads", "count_gate_params", "entropy",
    "feature_map", "full_attention", "gdn_recurrent", "gla_recurrent", "head_gates",
    "linear_chunkwise", "linear_parallel", "linear_recurrent", "random_matrix",
    "retnet_recurrent", "run_mechanism", "sla_chunkwise", "sla_parallel", "sla_recurrent",
    "softmax_rows",
]
