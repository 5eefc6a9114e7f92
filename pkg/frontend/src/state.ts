// Data gathering for the two consoles: pure composition of API reads.
// All market numbers pass through untouched; views only format them.

import { ApiClient, ApiError, Session } from "./api.js";
import { OperatorData } from "./views/operator.js";
import { UserData } from "./views/user.js";

async function tolerate<T>(p: Promise<T>, fallback: T,
                           codes: number[] = [404, 409]): Promise<T> {
  try {
    return await p;
  } catch (e) {
    if (e instanceof ApiError && codes.includes(e.status)) return fallback;
    throw e;
  }
}

export async function gatherOperatorData(api: ApiClient): Promise<OperatorData> {
  const [net, ids, blocks, verify] = await Promise.all([
    api.network(), api.identities(), api.blocks(), api.verify(),
  ]);
  const dlmp = await tolerate(api.dlmp(1, 0), { values: [] });
  return {
    buses: net.buses,
    identities: ids.identities,
    blocks: blocks.blocks,
    chainOk: verify.ok,
    chainHeight: verify.height,
    stateHash: verify.state_hash,
    phase1Done: dlmp.values.length > 0,
    horizon: net.horizon,
  };
}

export async function gatherUserData(api: ApiClient,
                                     session: Session): Promise<UserData> {
  const [net, fresh, offers] = await Promise.all([
    api.network(), api.session(), api.trades(),
  ]);
  const me = net.buses.find(b => b.id === session.bus);
  const incentives = session.bus === null ? { values: [] }
    : await api.incentives(session.bus);
  const dlmp = session.bus === null ? { values: [] }
    : await tolerate(api.dlmp(session.bus), { values: [] });
  const prefs = await tolerate(
    api.state<{ sell_to_utility: boolean[] | null }>(`pref/${session.bus}/0`),
    { key: "", value: { sell_to_utility: null } });
  return {
    session: fresh,
    ctClass: me?.ct_class ?? null,
    buses: net.buses,
    horizon: net.horizon,
    incentives: incentives.values,
    dlmp: dlmp.values,
    sellFlags: prefs.value.sell_to_utility,
    openOffers: offers.offers,
  };
}

export class Poller {
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(private intervalMs: number, private tick: () => Promise<void>) {}

  start(): void {
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }
}
