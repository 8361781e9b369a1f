"""Desk-scale lab for variable read disturbance (VRD) in DRAM."""

from .device import (Conditions, DataPattern, Family, HammerRequest, RdtModel, RowState, Temperature,
                     draw_latent_rdt, hammer, load_model_file)
from .profiler import NOFLIP, MeasurementSeries, SweepConfig, find_victim, guess_rdt, measure_rdt_once, test_loop

__version__ = "0.1.0"

__all__ = [
    "Conditions", "DataPattern", "Family", "HammerRequest", "RdtModel", "RowState", "Temperature",
    "draw_latent_rdt", "hammer", "load_model_file",
    "NOFLIP", "MeasurementSeries", "SweepConfig", "find_victim", "guess_rdt", "measure_rdt_once", "test_loop",
]
