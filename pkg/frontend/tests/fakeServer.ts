// In-memory double of the market service, mirroring its status codes and
// role rules (the Python suite pins the real server to the same contract).

import { BlockDoc, TxDoc } from "../src/api.js";

type Identity = { id: string; role: string; bus: number | null; balance: number };

export type Fixture = {
  dlmp: Record<number, number[]>;
  incentives: Record<number, {
    hour: number; p_ni_mwh: number; lambda_eq: number; lambda_a: number;
    payment: number; final_price: number;
  }[]>;
};

export class FakeServer {
  tokens = new Map<string, string>();
  identities = new Map<string, Identity>();
  ctClass = new Map<number, string | null>();
  offers = new Map<string, Record<string, unknown>>();
  blocks: BlockDoc[] = [];
  phase1Done = false;
  solvedHours = new Set<number>();
  horizon = 24;
  private offerSeq = 0;
  private stateHash = "a".repeat(64);

  constructor(public fixture: Fixture) {
    this.ctClass.set(1, null);
    for (const bus of [2, 43, 53]) this.ctClass.set(bus, "CT2");
    for (const bus of [4, 6, 8]) this.ctClass.set(bus, "CT1");
    this.addIdentity("operator", "operator", null, 1_000_000);
    this.addIdentity("user2", "crowdsourcee", 2, 8.914014953);
    this.addIdentity("user43", "crowdsourcee", 43, 0);
    this.addIdentity("user53", "crowdsourcee", 53, 2.553129433);
    this.addIdentity("user4", "crowdsourcee", 4, 0);
    this.pushBlock([]);
  }

  addIdentity(id: string, role: string, bus: number | null, balance: number) {
    this.identities.set(id, { id, role, bus, balance });
    this.tokens.set(`token-${id}`, id);
  }

  pushBlock(txs: TxDoc[]) {
    this.blocks.push({
      height: this.blocks.length, prev_hash: "0".repeat(64),
      tx_root: "1".repeat(64), state_hash: this.stateHash,
      timestamp: this.blocks.length, txs, validity: txs.map(() => true),
    });
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const headers = (init?.headers ?? {}) as Record<string, string>;
    const auth = headers.Authorization ?? "";
    const token = auth.replace(/^Bearer\s+/i, "");
    const who = this.tokens.get(token);
    const [path, query] = url.split("?");
    const params = new URLSearchParams(query ?? "");
    const body = init?.body ? JSON.parse(String(init.body)) : {};

    const err = (status: number, code: string, message: string) =>
      new Response(JSON.stringify({ error: { code, message } }), { status });
    const ok = (data: unknown, status = 200) =>
      new Response(JSON.stringify(data), { status });

    if (!who) return err(401, "unauthenticated", "unknown token");
    const me = this.identities.get(who)!;
    const operatorOnly = () => me.role !== "operator";

    if (path === "/session") {
      return ok({ id: me.id, role: me.role, bus: me.bus, balance: me.balance });
    }
    if (path === "/network") {
      return ok({
        horizon: this.horizon,
        buses: [...this.ctClass.entries()].map(([id, ct]) => ({
          id, kind: id === 1 ? "substation-gen" : "crowdsourcee", ct_class: ct,
        })),
      });
    }
    if (path === "/identities" && method === "GET") {
      if (operatorOnly()) return err(403, "forbidden", "operator-only operation");
      return ok({
        identities: [...this.identities.values()].map((i, k) => ({
          ...i, enrolled_at: k,
        })),
      });
    }
    if (path === "/identities" && method === "POST") {
      if (operatorOnly()) return err(403, "forbidden", "operator-only operation");
      if (this.identities.has(body.id)) return err(409, "duplicate", "exists");
      this.addIdentity(body.id, "crowdsourcee", body.bus, 0);
      this.pushBlock([]);
      return ok({ id: body.id, bus: body.bus, role: "crowdsourcee",
                  token: `token-${body.id}` }, 201);
    }
    if (path === "/preferences" && method === "POST") {
      if (me.role !== "crowdsourcee") return err(403, "forbidden", "crowdsourcees only");
      this.pushBlock([{ kind: "RegisterPreference", payload: body,
                        submitter: me.id, nonce: 0, signature: "00" }]);
      return ok({ tx_id: "t".repeat(64), height: this.blocks.length - 1 });
    }
    if (path === "/trades" && method === "GET") {
      return ok({ offers: [...this.offers.values()] });
    }
    if (path === "/trades" && method === "POST") {
      if (me.role !== "crowdsourcee") return err(403, "forbidden", "crowdsourcees only");
      if (this.ctClass.get(me.bus!) !== "CT2") {
        return err(403, "rule-violation", "only CT2 users trade energy");
      }
      if (body.ett_type === "B" && this.ctClass.get(body.buyer_bus) !== "CT2") {
        return err(403, "rule-violation", "peer trades occur among CT2 users only");
      }
      const offerId = `offer${this.offerSeq++}`.padEnd(16, "0");
      const record = {
        offer_id: offerId, seller_bus: me.bus, buyer_bus: body.buyer_bus,
        ett_type: body.ett_type, window: body.window, energy: body.energy_mwh,
        price: body.price_per_mwh ?? null, status: "open", seller_id: me.id,
      };
      this.offers.set(offerId, record);
      this.pushBlock([{ kind: "TradeOffer", payload: {
        seller_bus: me.bus, buyer_bus: body.buyer_bus, ett_type: body.ett_type,
        window: body.window, energy: body.energy_mwh,
        price: body.price_per_mwh ?? null,
      }, submitter: me.id, nonce: 0, signature: "00" }]);
      return ok({ offer_id: offerId, height: this.blocks.length - 1 }, 201);
    }
    const accept = path.match(/^\/trades\/([^/]+)\/accept$/);
    if (accept && method === "POST") {
      const offer = this.offers.get(accept[1]);
      if (!offer) return err(404, "not-found", "no such offer");
      if (offer.status !== "open") return err(409, "conflict", "offer is not open");
      if (me.role !== "operator" && me.bus !== offer.buyer_bus) {
        return err(403, "forbidden", "only the buyer can accept");
      }
      offer.status = "committed";
      this.pushBlock([{ kind: "ContractCommit", payload: { offer_id: accept[1] },
                        submitter: me.id, nonce: 0, signature: "00" }]);
      return ok({ contract_id: accept[1], height: this.blocks.length - 1 });
    }
    if (path === "/market/phase1" && method === "POST") {
      if (operatorOnly()) return err(403, "forbidden", "operator-only operation");
      this.phase1Done = true;
      this.pushBlock([{ kind: "ContractCommit",
                        payload: { key: "contract/phase1/schedules",
                                   record: { kind: "type-a-day-ahead" } },
                        submitter: "operator", nonce: 0, signature: "00" }]);
      return ok({ objective: 1234.5, height: this.blocks.length - 1,
                  max_relaxation_residual: 1e-7 });
    }
    if (path === "/market/phase2" && method === "POST") {
      if (operatorOnly()) return err(403, "forbidden", "operator-only operation");
      if (!this.phase1Done) return err(409, "phase-order", "run phase 1 first");
      const hour = Number(params.get("hour"));
      if (!(hour >= 0 && hour < this.horizon)) return err(422, "invalid", "bad hour");
      this.solvedHours.add(hour);
      this.pushBlock([{ kind: "SettleIncentive",
                        payload: { hour, entries: [{ amount: 1.0171 }] },
                        submitter: "operator", nonce: 0, signature: "00" }]);
      return ok({ hour, total_paid: 1.0171, b_total: 1.0171,
                  height: this.blocks.length - 1 });
    }
    if (path === "/market/dlmp") {
      if (!this.phase1Done) return err(409, "phase-order", "no equilibrium yet");
      const bus = params.get("bus");
      const hour = params.get("hour");
      const buses = bus ? [Number(bus)] : [...Object.keys(this.fixture.dlmp)].map(Number);
      const values = [];
      for (const b of buses) {
        const series = this.fixture.dlmp[b] ?? [];
        const hours = hour ? [Number(hour)] : series.map((_, t) => t);
        for (const t of hours) values.push({ bus: b, hour: t, dlmp: series[t] });
      }
      return ok({ values });
    }
    if (path === "/market/incentives") {
      const bus = params.get("bus");
      const values = [];
      for (const [b, rows] of Object.entries(this.fixture.incentives)) {
        if (bus && Number(bus) !== Number(b)) continue;
        for (const r of rows) values.push({ bus: Number(b), ...r });
      }
      return ok({ values });
    }
    if (path === "/ledger/blocks") {
      const from = Number(params.get("from") ?? 0);
      return ok({ blocks: this.blocks.filter(b => b.height >= from),
                  height: this.blocks.length - 1 });
    }
    if (path === "/ledger/verify") {
      return ok({ ok: true, first_bad_height: null,
                  height: this.blocks.length - 1, state_hash: this.stateHash });
    }
    const state = path.match(/^\/ledger\/state\/(.+)$/);
    if (state) {
      if (state[1].startsWith("pref/")) {
        return err(404, "not-found", "no preferences recorded");
      }
      return err(404, "not-found", "unknown key");
    }
    const acct = path.match(/^\/accounts\/(.+)$/);
    if (acct) {
      const target = this.identities.get(acct[1]);
      if (!target) return err(404, "not-found", "unknown account");
      return ok({ id: target.id, balance: target.balance });
    }
    return err(404, "not-found", `no route ${method} ${path}`);
  };
}

export function defaultFixture(): Fixture {
  return {
    dlmp: {
      1: [34.045868502668114, 33.91, 33.87],
      53: [35.38751859725027, 35.12, 35.0],
    },
    incentives: {
      53: [
        { hour: 6, p_ni_mwh: 0.004238117, lambda_eq: 35.38751859725027,
          lambda_a: -17.5731, payment: 0.27703991, final_price: 17.81441859 },
        // final_price deliberately not lambda_eq + lambda_a: the portal must
        // display the server's number, not recompute it
        { hour: 14, p_ni_mwh: 0.0133, lambda_eq: 30.17, lambda_a: 0.77,
          payment: 0.401287, final_price: 99.875 },
      ],
    },
  };
}
