"""Simulation of in-memory training on resistive crossbar arrays with
chopper-stabilized Tiki-Taka optimizers."""

__version__ = "0.1.0"

from .device import (DeviceArray, DeviceElement, DeviceParams, program_reference,
                     pulse_update, sample_array, symmetry_point)
from .harness import (ExperimentConfig, TraceRecord, compute_weight_error, run_device_traces,
                      run_trace_experiment, run_weight_programming)
from .mvm import CrossbarTile, MvmConfig, backward, forward, read_column
from .optimizers import (AnalogOptimizer, OptimizerConfig, TransferState, effective_eta,
                         effective_hidden_rate, sgd_step, transfer_phase, update_phase)
from .pulsed import PulsePlan, plan_pulses, stochastic_outer_update

__all__ = [
    "AnalogOptimizer", "CrossbarTile", "DeviceArray", "DeviceElement", "DeviceParams",
    "ExperimentConfig", "MvmConfig", "OptimizerConfig", "PulsePlan", "TraceRecord",
    "TransferState", "backward", "compute_weight_error", "effective_eta",
    "effective_hidden_rate", "forward", "plan_pulses", "program_reference", "pulse_update",
    "read_column", "run_device_traces", "run_trace_experiment", "run_weight_programming",
    "sample_array", "sgd_step", "stochastic_outer_update", "symmetry_point",
    "transfer_phase", "update_phase",
]
