"""DayReport export: delimiter-separated result tables plus a run manifest."""

from __future__ import annotations

import json
import time
from pathlib import Path

from ..ledger import Network
from ..scenario import Scenario
from .runday import DayReport


def _fmt(x) -> str:
    return format(float(x), ".10g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) if isinstance(c, (str, int)) else _fmt(c)
                              for c in row))
    path.write_text("\n".join(lines) + "\n")


def export_day_report(report: DayReport, scenario: Scenario, network: Network,
                      out_dir: str | Path, solver_options: dict | None = None,
                      phase_timestamps: dict | None = None) -> dict:
    """Write result tables, ledger export, and the run manifest; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    eq = report.equilibrium
    T = scenario.horizon
    root = scenario.feeder.root

    realtime = {oc.hour: oc for oc in report.outcomes}
    _write_csv(out / "generation.csv",
               ["hour", "p_g_day_ahead_mw", "p_g_realtime_mw", "deviation_mw"],
               [[t, eq.p_g_eq[root][t],
                 realtime[t].p_g.get(root, 0.0) if t in realtime else "",
                 realtime[t].p_g_deviation.get(root, 0.0) if t in realtime else ""]
                for t in range(T)])

    _write_csv(out / "dlmp.csv", ["bus", "hour", "dlmp_per_mwh"],
               [[bus, t, eq.dlmp[bus][t]]
                for bus in sorted(eq.dlmp) for t in range(T)])

    rows = []
    for oc in report.outcomes:
        for bus, s in sorted(oc.sellers.items()):
            rows.append([bus, oc.hour, s.p_ni, s.lambda_eq, s.lambda_a,
                         s.payment, s.final_price])
    _write_csv(out / "incentives.csv",
               ["bus", "hour", "p_ni_mwh", "lambda_eq", "lambda_a",
                "payment", "final_price"], rows)

    rows = []
    for bus, traj in sorted(eq.batteries.items()):
        for t in range(T):
            rows.append([bus, t, traj.e[t], traj.h[t], traj.d[t]])
    _write_csv(out / "battery.csv",
               ["bus", "hour", "energy_mwh", "charge_mw", "discharge_mw"], rows)

    rows = []
    for bus, series in sorted(eq.shapeables.items()):
        for t in range(T):
            rows.append([bus, t, series[t]])
    _write_csv(out / "shapeable.csv", ["bus", "hour", "mw"], rows)

    (out / "reconciliation.json").write_text(
        json.dumps(report.reconciliation(), indent=1, sort_keys=True) + "\n")

    ledger_doc = {
        "config": network.config.to_doc(),
        "identities": network.registrar.export(),
        "blocks": network.export_blocks(),
    }
    (out / "ledger.json").write_text(json.dumps(ledger_doc, indent=1) + "\n")

    manifest = {
        "run_id": f"{report.scenario_name}-seed{report.seed}",
        "scenario": report.scenario_name,
        "seed": report.seed,
        "scenario_hash": report.scenario_hash,
        "solver_options": solver_options or {},
        "phase_timestamps": phase_timestamps or {"exported_at": time.time()},
        "results": sorted(p.name for p in out.glob("*.csv")),
        "chain_id": report.chain_id,
        "final_height": report.final_height,
        "final_state_hash": report.final_state_hash,
        "failed_hours": [t for t, _ in report.failures],
        "objective_day_ahead": eq.objective,
        "max_relaxation_residual": eq.max_relaxation_residual,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest
