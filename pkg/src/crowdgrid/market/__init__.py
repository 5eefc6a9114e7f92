"""Two-phase market operation: day-ahead scheduling, hourly incentives,
and the blockchain-assisted daily orchestration."""

from .build import (GridIndex, MarketError, build_cesid, build_cesopf,
                    ct2_declared_behavior)
from .phases import (Equilibrium, IncentiveOutcome, SellerOutcome,
                     ct2_net_injections, default_budget, hourly_forecasts,
                     solve_phase1, solve_phase2)
from .report import export_day_report
from .runday import (DayReport, OperatorSigner, build_network,
                     record_phase1_contracts, run_day,
                     scenario_from_world_state, settle_hour,
                     submit_day_ahead)
from .phases import (equilibrium_from_doc, equilibrium_to_doc,
                     outcome_from_doc, outcome_to_doc)

__all__ = [
    "GridIndex", "MarketError", "build_cesid", "build_cesopf",
    "ct2_declared_behavior", "Equilibrium", "IncentiveOutcome",
    "SellerOutcome", "ct2_net_injections", "default_budget",
    "hourly_forecasts", "solve_phase1", "solve_phase2",
    "DayReport", "build_network", "run_day", "scenario_from_world_state",
    "submit_day_ahead", "export_day_report", "OperatorSigner",
    "record_phase1_contracts", "settle_hour", "equilibrium_to_doc",
    "equilibrium_from_doc", "outcome_to_doc", "outcome_from_doc",
]
