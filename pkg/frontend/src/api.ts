// Typed client for the market service. The portal performs no market math:
// every number it shows comes from these endpoints.

export type Session = { id: string; role: string; bus: number | null; balance: number };
export type BusInfo = { id: number; kind: string; ct_class: string | null };
export type NetworkInfo = { horizon: number; buses: BusInfo[] };
export type DlmpPoint = { bus: number; hour: number; dlmp: number };
export type IncentiveRow = {
  bus: number; hour: number; p_ni_mwh: number; lambda_eq: number;
  lambda_a: number; payment: number; final_price: number;
};
export type TxDoc = {
  kind: string; payload: Record<string, unknown>; submitter: string;
  nonce: number; signature: string;
};
export type BlockDoc = {
  height: number; prev_hash: string; tx_root: string; state_hash: string;
  timestamp: number; txs: TxDoc[]; validity: boolean[];
};
export type IdentityRow = {
  id: string; role: string; bus: number | null; enrolled_at: number; balance: number;
};
export type OfferRecord = {
  offer_id: string; seller_bus: number; buyer_bus: number | string;
  ett_type: string; window: [number, number]; energy: number;
  price?: number | null; status: string; seller_id: string;
};

export class ApiError extends Error {
  status: number;
  code: string;
  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private token: string,
    private base: string = "",
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.base + path, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const text = await resp.text();
    const data = text ? JSON.parse(text) : {};
    if (!resp.ok) {
      const err = (data as { error?: { code?: string; message?: string } }).error ?? {};
      throw new ApiError(resp.status, err.code ?? "error", err.message ?? resp.statusText);
    }
    return data as T;
  }

  session(): Promise<Session> {
    return this.call("GET", "/session");
  }
  network(): Promise<NetworkInfo> {
    return this.call("GET", "/network");
  }
  state<T = unknown>(key: string): Promise<{ key: string; value: T }> {
    return this.call("GET", `/ledger/state/${key}`);
  }
  verify(): Promise<{ ok: boolean; first_bad_height: number | null;
                      height: number; state_hash: string }> {
    return this.call("GET", "/ledger/verify");
  }
  trades(): Promise<{ offers: OfferRecord[] }> {
    return this.call("GET", "/trades");
  }
  dlmp(bus?: number, hour?: number): Promise<{ values: DlmpPoint[] }> {
    const q = new URLSearchParams();
    if (bus !== undefined) q.set("bus", String(bus));
    if (hour !== undefined) q.set("hour", String(hour));
    const qs = q.toString();
    return this.call("GET", `/market/dlmp${qs ? "?" + qs : ""}`);
  }
  incentives(bus?: number): Promise<{ values: IncentiveRow[] }> {
    return this.call("GET", `/market/incentives${bus !== undefined ? "?bus=" + bus : ""}`);
  }
  blocks(from = 0): Promise<{ blocks: BlockDoc[]; height: number }> {
    return this.call("GET", `/ledger/blocks?from=${from}`);
  }
  account(id: string): Promise<{ id: string; balance: number }> {
    return this.call("GET", `/accounts/${id}`);
  }
  identities(): Promise<{ identities: IdentityRow[] }> {
    return this.call("GET", "/identities");
  }
  registerIdentity(id: string, bus: number): Promise<{ id: string; bus: number; token: string }> {
    return this.call("POST", "/identities", { id, bus });
  }
  postPreferences(body: {
    day?: number; sell_to_utility?: boolean[] | null;
    urgency?: number | null; t_set?: number | null;
  }): Promise<{ tx_id: string; height: number }> {
    return this.call("POST", "/preferences", body);
  }
  postTrade(body: {
    ett_type: string; buyer_bus: number | string;
    window: [number, number]; energy_mwh: number; price_per_mwh?: number | null;
  }): Promise<{ offer_id: string; height: number }> {
    return this.call("POST", "/trades", body);
  }
  acceptTrade(offerId: string): Promise<{ contract_id: string; height: number }> {
    return this.call("POST", `/trades/${offerId}/accept`);
  }
  runPhase1(): Promise<{ objective: number; height: number }> {
    return this.call("POST", "/market/phase1");
  }
  runPhase2(hour: number): Promise<{ hour: number; total_paid: number; height: number }> {
    return this.call("POST", `/market/phase2?hour=${hour}`);
  }
}
