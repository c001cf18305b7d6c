"""Simulator and metrology toolkit for cascaded noise-compensated fiber links."""

from .analysis import (
    CounterModel,
    SlipEvent,
    StabilityResult,
    adev,
    adev_from_psd,
    counter_read,
    detect_cycle_slips,
    measure_rejection,
    psd_welch,
    rejection_theory,
)
from .cascade import Event, InputLaser, RunConfig, RunOutput, Scenario, inject_event, run
from .channel import Edfa, FiberSpan, LinkBudget, LinkSegment, LossTable, link_budget, one_way_delay, propagate
from .control import Actuator, DelayLimitedBandwidth, Divider, PiFilter, TrackingOscillator, design_pi, pfd, pi_step
from .noise import NoiseModel, SpectralPeak, synth_delay_drift, synth_power_law
from .scenario import ScenarioError, load_scenario
from .series import CARRIER_HZ, DelaySeries, FrequencySeries, PhaseSeries
from .station import FrequencyPlan, Mode, RepeaterStation, StationConfig, freq_plan_delivered_offset, station_step

__version__ = "0.1.0"
