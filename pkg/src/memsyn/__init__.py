"""Memristive synapse plasticity laboratory.

A phenomenological TiO2 memristor model, the stimulation protocols of
classic STDP experiments, a random-circuit-breaker lattice, the triplet
plasticity rule and the fitting tools that connect them.
"""

__version__ = "0.1.0"

from .device import (DeviceParams, DeviceState, IvCurve, ProgrammingError, PulseSpec,
                     apply_pulse, conductance_of, iv_sweep, program_to_target, run_waveform,
                     step_gap)
from .experiments import Bench, property_margins
from .fitting import (Dataset, DataRecord, FitResult, calibrate_device, fit_stdp_window,
                      fit_triplet, load_dataset_csv, nelder_mead_minimize, residuals)
from .protocols import (ProtocolKind, ProtocolSpec, SpikeEvent, SpikeProgram, Terminal,
                        TripletOrder, compile_waveform, gen_frequency_pairs, gen_pair,
                        gen_quadruplet, gen_tetanic, gen_triplet)
from .rcb import (RcbDynamicsParams, RcbLattice, apply_bias_step, cycle_states,
                  equivalent_resistance, synthesize_state)
from .triplet import InteractionMode, TripletParams, pair_window_closed_form, simulate_rule

__all__ = [
    "Bench", "Dataset", "DataRecord", "DeviceParams", "DeviceState", "FitResult", "InteractionMode",
    "IvCurve", "ProgrammingError", "ProtocolKind", "ProtocolSpec", "PulseSpec", "RcbDynamicsParams",
    "RcbLattice", "SpikeEvent", "SpikeProgram", "Terminal", "TripletOrder", "TripletParams",
    "apply_bias_step", "apply_pulse", "calibrate_device", "compile_waveform", "conductance_of",
    "cycle_states", "equivalent_resistance", "fit_stdp_window", "fit_triplet", "gen_frequency_pairs",
    "gen_pair", "gen_quadruplet", "gen_tetanic", "gen_triplet", "iv_sweep", "load_dataset_csv",
    "nelder_mead_minimize", "pair_window_closed_form", "program_to_target", "property_margins",
    "residuals", "run_waveform", "simulate_rule", "step_gap", "synthesize_state",
]
