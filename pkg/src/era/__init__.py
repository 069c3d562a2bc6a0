"""Reservation-based pricing and scheduling for shared compute, with a slot-stepped simulator."""

from .domain import (
    Bundle,
    CloudSpec,
    Configuration,
    ReservationRequest,
    ResourceRequest,
    ResourceType,
    TimeGrid,
    WorkloadTrace,
    demand_of,
    format_money,
    to_ticks,
    validate_request,
)
from .predictor import DemandCurve, FlatPredictor, build_lp_predictor, build_spreading_predictor
from .scheduler import BasicEcon, CloudFeedback, FirstFit, OnDemand, PlanLedger, Quote
from .simulator import SimulationConfig, run_simulation

__all__ = [
    "BasicEcon", "Bundle", "CloudFeedback", "CloudSpec", "Configuration", "DemandCurve", "FirstFit",
    "FlatPredictor", "OnDemand", "PlanLedger", "Quote", "ReservationRequest", "ResourceRequest",
    "ResourceType", "SimulationConfig", "TimeGrid", "WorkloadTrace", "build_lp_predictor",
    "build_spreading_predictor", "demand_of", "format_money", "run_simulation", "to_ticks",
    "validate_request",
]
__version__ = "0.1.0"
