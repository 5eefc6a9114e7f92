"""Command-line driver: daily runs, single phases, the islanded case,
ledger verification, and result export."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .convex import SolverOptions
from .ledger import (Block, ChainConfig, LedgerError, Network, Peer,
                     Registrar, validate_chain)
from .market import (MarketError, build_network, equilibrium_from_doc,
                     equilibrium_to_doc, export_day_report, outcome_from_doc,
                     outcome_to_doc, run_day, scenario_from_world_state,
                     solve_phase1, solve_phase2, submit_day_ahead)
from .market.runday import DayReport
from .scenario import (ScenarioError, ScenarioRecipe, build_case_study,
                       islanded_variant, scenario_hash)

SCENARIOS = ("sce56", "sce56-island")


def _fail(code: str, message: str, exit_code: int = 1):
    click.echo(json.dumps({"error": {"code": code, "message": message}}),
               err=True)
    sys.exit(exit_code)


def _build_scenario(name: str, seed: int):
    if name == "sce56":
        return build_case_study(ScenarioRecipe(seed=seed))
    if name == "sce56-island":
        return islanded_variant(build_case_study(ScenarioRecipe(seed=seed)))
    _fail("unknown-scenario", f"scenario must be one of {SCENARIOS}")


def _solver_options(tol: float) -> SolverOptions:
    return SolverOptions(tol=tol, gap_tol=max(tol, 1e-6), max_iter=200)


def _save_run_state(out: Path, scenario, report: DayReport | None,
                    equilibrium) -> None:
    doc = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "scenario_hash": scenario_hash(scenario),
        "equilibrium": equilibrium_to_doc(equilibrium),
        "outcomes": [outcome_to_doc(o) for o in report.outcomes] if report else [],
        "seller_totals": {str(b): v for b, v in
                          (report.seller_totals.items() if report else [])},
    }
    (out / "run_state.json").write_text(json.dumps(doc) + "\n")


@click.group()
def main():
    """Crowdsourced-energy-system market operation."""


@main.command("run-day")
@click.option("--scenario", "scenario_name", default="sce56", show_default=True)
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--tol", default=1e-8, show_default=True, type=float)
@click.option("--lindistflow", is_flag=True,
              help="Use the linear flow model (losses dropped).")
@click.option("--hours", default=None, type=click.IntRange(1, 24),
              help="Operate only the first N hours of the real-time phase.")
@click.option("--out-dir", default="runs/latest", show_default=True)
@click.option("--peers", default=4, show_default=True, type=click.IntRange(1, 16))
@click.option("--steps-per-hour", default=1, show_default=True,
              type=click.IntRange(1, 12),
              help="Real-time cadence: incentive solves per hour.")
def cli_run_day(scenario_name, seed, tol, lindistflow, hours, out_dir, peers,
                steps_per_hour):
    """Full daily operation: day-ahead solve, 24 hourly solves, ledger blocks."""
    stamps = {"started_at": time.time()}
    try:
        scenario = _build_scenario(scenario_name, seed)
        report, network = run_day(scenario, n_peers=peers, hours=hours,
                                  lindistflow=lindistflow,
                                  steps_per_hour=steps_per_hour,
                                  solver_options=_solver_options(tol))
        stamps["finished_at"] = time.time()
        out = Path(out_dir)
        manifest = export_day_report(report, scenario, network, out,
                                     solver_options={"tol": tol,
                                                     "lindistflow": lindistflow},
                                     phase_timestamps=stamps)
        _save_run_state(out, scenario, report, report.equilibrium)
        click.echo(json.dumps({"ok": True, "out_dir": str(out),
                               "final_height": manifest["final_height"],
                               "final_state_hash": manifest["final_state_hash"]}))
    except (MarketError, ScenarioError, LedgerError) as exc:
        _fail(type(exc).__name__, str(exc))


@main.command("phase1")
@click.option("--scenario", "scenario_name", default="sce56", show_default=True)
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--tol", default=1e-8, show_default=True, type=float)
@click.option("--out-dir", default="runs/latest", show_default=True)
@click.option("--peers", default=4, show_default=True, type=click.IntRange(1, 16))
def cli_phase1(scenario_name, seed, tol, out_dir, peers):
    """Day-ahead solve only; saves the equilibrium for later phase-2 runs."""
    try:
        scenario = _build_scenario(scenario_name, seed)
        network, keys = build_network(scenario, seed, n_peers=peers)
        submit_day_ahead(scenario, network, keys)
        live = scenario_from_world_state(scenario, network)
        eq = solve_phase1(live, options=_solver_options(tol))
        from .market import OperatorSigner, record_phase1_contracts
        signer = OperatorSigner(network, keys["operator"])
        record_phase1_contracts(signer, live, eq)
        network.order_and_commit()
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _save_run_state(out, scenario, None, eq)
        (out / "ledger.json").write_text(json.dumps({
            "config": network.config.to_doc(),
            "identities": network.registrar.export(),
            "blocks": network.export_blocks()}, indent=1) + "\n")
        click.echo(json.dumps({"ok": True, "objective": eq.objective,
                               "max_relaxation_residual": eq.max_relaxation_residual,
                               "height": network.primary.height}))
    except (MarketError, ScenarioError, LedgerError) as exc:
        _fail(type(exc).__name__, str(exc))


@main.command("phase2")
@click.option("--hour", required=True, type=click.IntRange(0, 23))
@click.option("--scenario", "scenario_name", default="sce56", show_default=True)
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--tol", default=1e-8, show_default=True, type=float)
@click.option("--out-dir", default="runs/latest", show_default=True)
def cli_phase2(hour, scenario_name, seed, tol, out_dir):
    """Hour-ahead incentive solve for one hour of a saved phase-1 run."""
    out = Path(out_dir)
    state_file = out / "run_state.json"
    if not state_file.exists():
        _fail("no-phase1", f"no saved day-ahead state under {out}; run phase1 first")
    try:
        doc = json.loads(state_file.read_text())
        scenario = _build_scenario(doc["scenario"], doc["seed"])
        eq = equilibrium_from_doc(doc["equilibrium"])
        outcome = solve_phase2(scenario, eq, hour, options=_solver_options(tol))
        click.echo(json.dumps({"ok": True, "hour": hour,
                               "b_total": outcome.b_total,
                               "total_paid": outcome.total_paid,
                               "violations": outcome.check_invariants()}))
    except (MarketError, ScenarioError, LedgerError) as exc:
        _fail(type(exc).__name__, str(exc))


@main.command("island")
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--tol", default=1e-8, show_default=True, type=float)
@click.option("--out-dir", default="runs/island", show_default=True)
@click.option("--peers", default=4, show_default=True, type=click.IntRange(1, 16))
def cli_island(seed, tol, out_dir, peers):
    """Daily operation of the self-sufficient islanded variant."""
    cli_run_day.callback(scenario_name="sce56-island", seed=seed, tol=tol,
                         lindistflow=False, hours=None, out_dir=out_dir,
                         peers=peers, steps_per_hour=1)


@main.group()
def ledger():
    """Ledger inspection."""


@ledger.command("verify")
@click.option("--out-dir", default="runs/latest", show_default=True)
def cli_ledger_verify(out_dir):
    """Replay an exported chain from genesis and check every hash/signature."""
    path = Path(out_dir) / "ledger.json"
    if not path.exists():
        _fail("no-ledger", f"no ledger export at {path}")
    doc = json.loads(path.read_text())
    config = ChainConfig.from_doc(doc["config"])
    registrar = Registrar.from_export(set(config.bus_ids), doc["identities"])
    peer = Peer("verifier", config, registrar)
    try:
        for block_doc in doc["blocks"][1:]:
            peer.apply_block(Block.from_doc(block_doc))
    except LedgerError as exc:
        _fail("chain-invalid", str(exc))
    ok, bad = validate_chain(peer)
    if not ok:
        _fail("chain-invalid", f"first bad height {bad}")
    click.echo(json.dumps({"ok": True, "height": peer.height,
                           "state_hash": peer.state.hash()}))


@main.command("export")
@click.option("--out-dir", default="runs/latest", show_default=True)
def cli_export(out_dir):
    """Regenerate result tables from a saved run state."""
    out = Path(out_dir)
    state_file = out / "run_state.json"
    if not state_file.exists():
        _fail("no-run", f"no saved run state under {out}")
    doc = json.loads(state_file.read_text())
    eq = equilibrium_from_doc(doc["equilibrium"])
    outcomes = [outcome_from_doc(o) for o in doc["outcomes"]]
    scenario = _build_scenario(doc["scenario"], doc["seed"])
    if not outcomes:
        _fail("no-run", "run state holds no hourly outcomes; use run-day")
    report = DayReport(
        scenario_name=doc["scenario"], seed=doc["seed"],
        scenario_hash=doc["scenario_hash"], equilibrium=eq, outcomes=outcomes,
        failures=[], chain_id="(from saved state)", final_height=-1,
        final_state_hash="", seller_totals={int(b): v for b, v in
                                            doc["seller_totals"].items()})
    ledger_doc = json.loads((out / "ledger.json").read_text())
    config = ChainConfig.from_doc(ledger_doc["config"])
    registrar = Registrar.from_export(set(config.bus_ids), ledger_doc["identities"])
    network = Network(config, registrar, n_peers=1)
    for block_doc in ledger_doc["blocks"][1:]:
        network.primary.apply_block(Block.from_doc(block_doc))
    export_day_report(report, scenario, network, out)
    click.echo(json.dumps({"ok": True, "out_dir": str(out)}))


@main.command("serve")
@click.option("--scenario", "scenario_name", default="sce56", show_default=True)
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--peers", default=4, show_default=True, type=click.IntRange(1, 16))
def cli_serve(scenario_name, seed, host, port, peers):
    """Start the HTTP API (and the portal, when built) for a live market."""
    import uvicorn
    from .service import create_app, make_runtime

    scenario = _build_scenario(scenario_name, seed)
    runtime = make_runtime(scenario, n_peers=peers)
    app = create_app(runtime)
    portal_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if portal_dist.exists():
        from fastapi.staticfiles import StaticFiles
        app.mount("/portal", StaticFiles(directory=portal_dist, html=True),
                  name="portal")
    click.echo(f"operator token: {runtime.operator_token}")
    for token, ident in runtime.tokens.items():
        if ident in ("user2", "user43", "user53"):
            click.echo(f"{ident} token: {token}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
