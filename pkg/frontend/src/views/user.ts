import { BusInfo, DlmpPoint, IncentiveRow, OfferRecord, Session } from "../api.js";
import { barChart, lineChart } from "../charts.js";
import { energy, hourLabel, money, price } from "../format.js";

export type UserData = {
  session: Session;
  ctClass: string | null;
  buses: BusInfo[];
  horizon: number;
  incentives: IncentiveRow[];
  dlmp: DlmpPoint[];
  sellFlags: boolean[] | null;
  openOffers: OfferRecord[];
};

export function renderBalance(session: Session): string {
  return `<div class="panel balance">Account <b>${session.id}</b>` +
    ` (bus ${session.bus}) · balance <span id="balance">${money(session.balance)}</span></div>`;
}

export function renderPreferenceEditor(horizon: number,
                                       flags: boolean[] | null,
                                       ctClass: string | null): string {
  if (ctClass !== "CT2") {
    return `<div class="panel"><h3>Preferences</h3>
      <form id="pref-form">
        <label>urgency <input name="urgency" type="number" min="0" max="1" step="0.1" value="0.5"></label>
        <label>deadline hour <input name="t_set" type="number" min="0" max="23" value="14"></label>
        <button type="submit">Submit preferences</button>
        <span class="form-result" id="pref-result"></span>
      </form></div>`;
  }
  const boxes = Array.from({ length: horizon }, (_, t) => {
    const checked = flags && flags[t] ? "checked" : "";
    return `<label class="hour-flag">${hourLabel(t)}` +
      `<input type="checkbox" name="sell-${t}" ${checked}></label>`;
  }).join("");
  return `<div class="panel"><h3>Sell to utility (per hour)</h3>
    <form id="pref-form"><div class="flag-grid">${boxes}</div>
    <button type="submit">Submit preferences</button>
    <span class="form-result" id="pref-result"></span></form></div>`;
}

export function renderOfferForm(buses: BusInfo[], myBus: number | null,
                                ctClass: string | null): string {
  if (ctClass !== "CT2") {
    return "";  // CT1 users cannot trade: the server enforces the same rule
  }
  const peers = buses
    .filter(b => b.ct_class === "CT2" && b.id !== myBus)
    .map(b => `<option value="${b.id}">bus ${b.id}</option>`).join("");
  return `<form id="offer-form" class="panel">
    <h3>Peer-to-peer offer</h3>
    <label>buyer <select name="buyer">${peers}</select></label>
    <label>window <input name="from" type="number" min="0" max="23" value="9"> –
      <input name="to" type="number" min="0" max="23" value="13"></label>
    <label>energy MWh <input name="energy" type="number" step="0.001" value="0.119"></label>
    <label>price $/MWh <input name="price" type="number" step="0.01" value="40"></label>
    <button type="submit">Post offer</button>
    <span class="form-result" id="offer-result"></span>
  </form>`;
}

export function renderOpenOffers(offers: UserData["openOffers"],
                                 myBus: number | null): string {
  if (!offers.length) return "";
  const rows = offers.map(o => {
    const mine = o.buyer_bus === myBus;
    const btn = mine && o.status === "open"
      ? `<button class="accept-offer" data-offer="${o.offer_id}">Accept</button>` : "";
    return `<tr><td>${o.offer_id}</td><td>bus ${o.seller_bus}</td>` +
      `<td>${o.buyer_bus === "utility" ? "utility" : "bus " + o.buyer_bus}</td>` +
      `<td>${energy(o.energy)}</td>` +
      `<td>${o.price != null ? price(o.price) : "—"}</td>` +
      `<td>${o.status}</td><td>${btn}</td></tr>`;
  }).join("");
  return `<div class="panel"><h3>Open offers</h3>
    <table><thead><tr><th>id</th><th>seller</th><th>buyer</th><th>energy</th>
    <th>price</th><th>status</th><th></th></tr></thead><tbody>${rows}</tbody></table></div>`;
}

export function renderIncentivePanel(rows: IncentiveRow[]): string {
  const pricePts = rows.map(r => ({ x: r.hour, y: r.final_price }));
  const payPts = rows.map(r => ({ x: r.hour, y: r.payment }));
  const table = rows.map(r =>
    `<tr><td>${hourLabel(r.hour)}</td><td>${energy(r.p_ni_mwh)}</td>` +
    `<td>${price(r.lambda_eq)}</td><td>${price(r.lambda_a)}</td>` +
    `<td>${price(r.final_price)}</td><td class="payment">${money(r.payment)}</td></tr>`).join("");
  return `<div class="panel"><h3>Incentive history</h3>
    ${lineChart(pricePts, 520, 160, "final incentive price $/MWh")}
    ${barChart(payPts, 520, 160, "payment $")}
    <table><thead><tr><th>hour</th><th>net injection</th><th>day-ahead price</th>
    <th>adjustment</th><th>final price</th><th>payment</th></tr></thead>
    <tbody>${table}</tbody></table></div>`;
}

export function renderDlmpPanel(points: DlmpPoint[]): string {
  const pts = points.map(p => ({ x: p.hour, y: p.dlmp }));
  return `<div class="panel"><h3>Location price (day-ahead)</h3>
    ${lineChart(pts, 520, 160, "dlmp $/MWh")}</div>`;
}

export function renderUserConsole(data: UserData): string {
  return `<div class="console user-console">
    <h2>Prosumer console — ${data.ctClass ?? "?"} at bus ${data.session.bus}</h2>
    ${renderBalance(data.session)}
    ${renderPreferenceEditor(data.horizon, data.sellFlags, data.ctClass)}
    ${renderOfferForm(data.buses, data.session.bus, data.ctClass)}
    ${renderOpenOffers(data.openOffers, data.session.bus)}
    ${renderIncentivePanel(data.incentives)}
    ${renderDlmpPanel(data.dlmp)}
  </div>`;
}
