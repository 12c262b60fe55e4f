"""CMNet encoder / collaboration module / gated decoder."""
from .accounting import AMBIGUITIES, ParamReport, parameter_report
from .config import CASES, ConfigError, ModelConfig
from .network import (cmnet_forward, decoder_forward, encoder_forward, forward, gated_block_forward,
                      init_params, stack_planes, zero_output_layer)
from .params import (CheckpointError, ParameterStore, load_checkpoint, param_breakdown, param_count,
                     save_checkpoint)

__all__ = [
    "AMBIGUITIES", "ParamReport", "parameter_report", "CASES", "CheckpointError", "ConfigError", "ModelConfig", "ParameterStore", "cmnet_forward",
    "decoder_forward", "encoder_forward", "forward", "gated_block_forward", "init_params", "load_checkpoint",
    "param_breakdown", "param_count", "save_checkpoint", "stack_planes", "zero_output_layer",
]
