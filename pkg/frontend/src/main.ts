// Browser entry point: token login, role-routed console, 2s polling.

import { ApiClient, ApiError, Session } from "./api.js";
import { gatherOperatorData, gatherUserData, Poller } from "./state.js";
import { renderOperatorConsole } from "./views/operator.js";
import { renderUserConsole } from "./views/user.js";

const POLL_MS = 2000;

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element ${id}`);
  return el;
}

function showError(id: string, err: unknown): void {
  const box = document.getElementById(id);
  if (!box) return;
  box.textContent = err instanceof ApiError
    ? `${err.status}: ${err.message}` : String(err);
  box.classList.add("error");
}

async function renderLoop(api: ApiClient, session: Session): Promise<void> {
  const app = $("app");
  if (session.role === "operator") {
    const data = await gatherOperatorData(api);
    app.innerHTML = renderOperatorConsole(data);
  } else {
    const data = await gatherUserData(api, session);
    app.innerHTML = renderUserConsole(data);
  }
}

function wireForms(api: ApiClient, session: Session, refresh: () => void): void {
  document.addEventListener("submit", async (ev) => {
    const form = ev.target as HTMLFormElement;
    if (!(form instanceof HTMLFormElement)) return;
    ev.preventDefault();
    const fields = new FormData(form);
    try {
      if (form.id === "create-user") {
        const resp = await api.registerIdentity(
          String(fields.get("id")), Number(fields.get("bus")));
        $("create-user-result").textContent =
          `registered ${resp.id}; token ${resp.token}`;
      } else if (form.id === "pref-form") {
        const flags: boolean[] = [];
        for (let t = 0; t < 24; t++) flags.push(fields.get(`sell-${t}`) === "on");
        const hasFlags = form.querySelector(".flag-grid") !== null;
        await api.postPreferences({
          day: 0,
          sell_to_utility: hasFlags ? flags : null,
          urgency: fields.get("urgency") ? Number(fields.get("urgency")) : null,
          t_set: fields.get("t_set") ? Number(fields.get("t_set")) : null,
        });
        $("pref-result").textContent = "submitted";
      } else if (form.id === "offer-form") {
        const resp = await api.postTrade({
          ett_type: "B",
          buyer_bus: Number(fields.get("buyer")),
          window: [Number(fields.get("from")), Number(fields.get("to"))],
          energy_mwh: Number(fields.get("energy")),
          price_per_mwh: Number(fields.get("price")),
        });
        $("offer-result").textContent = `offer ${resp.offer_id} posted`;
      }
      refresh();
    } catch (err) {
      showError(`${form.id}-result`, err);
    }
  });

  document.addEventListener("click", async (ev) => {
    const el = ev.target as HTMLElement;
    try {
      if (el.id === "run-phase1") {
        const resp = await api.runPhase1();
        $("run-result").textContent =
          `day-ahead solved; objective ${resp.objective.toFixed(2)}`;
        refresh();
      } else if (el.id === "run-phase2") {
        const hour = Number((document.getElementById("phase2-hour") as
          HTMLSelectElement).value);
        const resp = await api.runPhase2(hour);
        $("run-result").textContent =
          `hour ${resp.hour} solved; paid ${resp.total_paid.toFixed(2)}`;
        refresh();
      } else if (el.classList.contains("accept-offer")) {
        await api.acceptTrade(el.dataset.offer ?? "");
        refresh();
      }
    } catch (err) {
      showError("run-result", err);
    }
  });
  void session;
}

async function start(): Promise<void> {
  const loginForm = $("login-form") as HTMLFormElement;
  loginForm.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const token = (new FormData(loginForm).get("token") as string).trim();
    const api = new ApiClient(token);
    try {
      const session = await api.session();
      $("login").style.display = "none";
      $("app").style.display = "block";
      const poller = new Poller(POLL_MS, () => renderLoop(api, session));
      wireForms(api, session, () => void renderLoop(api, session));
      poller.start();
    } catch (err) {
      showError("login-result", err);
    }
  });
}

if (typeof document !== "undefined") {
  void start();
}
