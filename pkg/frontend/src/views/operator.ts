import { BlockDoc, BusInfo, IdentityRow } from "../api.js";
import { escapeHtml, money } from "../format.js";
import { chainHealth, flattenTransactions, transactionsTable } from "./common.js";

export type OperatorData = {
  buses: BusInfo[];
  identities: IdentityRow[];
  blocks: BlockDoc[];
  chainOk: boolean;
  chainHeight: number;
  stateHash: string;
  phase1Done: boolean;
  horizon: number;
};

export function renderCreateUserForm(buses: BusInfo[]): string {
  const options = buses
    .filter(b => b.kind !== "substation-gen")
    .map(b => `<option value="${b.id}">bus ${b.id} (${b.ct_class ?? "?"})</option>`)
    .join("");
  return `<form id="create-user" class="panel">
    <h3>Create crowdsourcee</h3>
    <input name="id" placeholder="identity id" required>
    <select name="bus">${options}</select>
    <button type="submit">Register</button>
    <span class="form-result" id="create-user-result"></span>
  </form>`;
}

export function renderUserList(identities: IdentityRow[]): string {
  const rows = identities.map(i =>
    `<tr><td>${escapeHtml(i.id)}</td><td>${escapeHtml(i.role)}</td>` +
    `<td>${i.bus ?? ""}</td><td>${money(i.balance)}</td></tr>`).join("");
  return `<div class="panel"><h3>Participants</h3>
    <table><thead><tr><th>id</th><th>role</th><th>bus</th><th>balance</th></tr></thead>
    <tbody>${rows}</tbody></table></div>`;
}

export function renderRunPanel(phase1Done: boolean, horizon: number): string {
  const hours = Array.from({ length: horizon }, (_, t) =>
    `<option value="${t}">${t}:00</option>`).join("");
  return `<div class="panel" id="run-panel">
    <h3>Market operations</h3>
    <button id="run-phase1">Solve day-ahead (phase 1)</button>
    <span>${phase1Done ? "day-ahead schedule committed" : "not yet solved"}</span>
    <div>
      <select id="phase2-hour" ${phase1Done ? "" : "disabled"}>${hours}</select>
      <button id="run-phase2" ${phase1Done ? "" : "disabled"}>Solve hour (phase 2)</button>
    </div>
    <div class="form-result" id="run-result"></div>
  </div>`;
}

export function renderOperatorConsole(data: OperatorData): string {
  const txs = flattenTransactions(data.blocks).reverse();
  return `<div class="console operator-console">
    <h2>Operator console</h2>
    ${chainHealth(data.chainOk, data.chainHeight, data.stateHash)}
    ${renderRunPanel(data.phase1Done, data.horizon)}
    ${renderCreateUserForm(data.buses)}
    ${renderUserList(data.identities)}
    <div class="panel"><h3>Energy trading transactions</h3>
    ${transactionsTable(txs)}</div>
  </div>`;
}
