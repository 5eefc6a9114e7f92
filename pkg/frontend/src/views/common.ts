import { BlockDoc, TxDoc } from "../api.js";
import { energy, escapeHtml, money, price, shortHash } from "../format.js";

export type TxRow = {
  height: number; kind: string; submitter: string; valid: boolean;
  summary: string;
};

function tradeSummary(p: Record<string, unknown>): string {
  const buyer = p.buyer_bus === "utility" ? "utility" : `bus ${p.buyer_bus}`;
  const tail = p.price != null ? ` @ ${price(p.price as number)}` : "";
  return `bus ${p.seller_bus} → ${buyer}, ${energy(p.energy as number)}` +
    `${tail} (Type ${p.ett_type})`;
}

function settleSummary(p: Record<string, unknown>): string {
  const entries = (p.entries as { amount: number }[] | undefined) ?? [];
  const total = entries.reduce((acc, e) => acc + e.amount, 0);
  return `hour ${p.hour}: ${money(total)} to ${entries.length} seller(s)`;
}

export function txSummary(tx: TxDoc): string {
  switch (tx.kind) {
    case "RegisterPreference":
      return `preferences from ${tx.submitter}`;
    case "TradeOffer":
      return tradeSummary(tx.payload);
    case "ContractCommit":
      if ("offer_id" in tx.payload) return `commit of offer ${tx.payload.offer_id}`;
      return `record ${tx.payload.key ?? ""}`;
    case "SettleIncentive":
      return settleSummary(tx.payload);
    default:
      return tx.kind;
  }
}

export function flattenTransactions(blocks: BlockDoc[]): TxRow[] {
  const rows: TxRow[] = [];
  for (const b of blocks) {
    b.txs.forEach((tx, i) => {
      rows.push({
        height: b.height, kind: tx.kind, submitter: tx.submitter,
        valid: b.validity[i], summary: txSummary(tx),
      });
    });
  }
  return rows;
}

export function transactionsTable(rows: TxRow[]): string {
  const body = rows.map(r =>
    `<tr class="${r.valid ? "valid" : "invalid"}">` +
    `<td>${r.height}</td><td>${escapeHtml(r.kind)}</td>` +
    `<td>${escapeHtml(r.submitter)}</td><td>${escapeHtml(r.summary)}</td>` +
    `<td>${r.valid ? "applied" : "rejected"}</td></tr>`).join("");
  return `<table class="tx-list"><thead><tr>` +
    `<th>block</th><th>kind</th><th>submitter</th><th>details</th><th>status</th>` +
    `</tr></thead><tbody>${body}</tbody></table>`;
}

export function chainHealth(ok: boolean, height: number, stateHash: string): string {
  return `<div class="chain-health ${ok ? "ok" : "bad"}">` +
    `chain ${ok ? "valid" : "INVALID"} · height ${height} · ` +
    `state ${shortHash(stateHash)}</div>`;
}
