// Role gating: hidden controls stay hidden client-side, and forcing the
// underlying call anyway is refused by the server with 403.

import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { gatherUserData } from "../src/state.js";
import { renderOfferForm, renderPreferenceEditor, renderUserConsole } from "../src/views/user.js";
import { FakeServer, defaultFixture } from "./fakeServer.js";

function client(server: FakeServer, who: string): ApiClient {
  return new ApiClient(`token-${who}`, "", server.fetch);
}

describe("client-side gating mirrors server permissions", () => {
  it("CT1 users see no trade form", async () => {
    const server = new FakeServer(defaultFixture());
    const api = client(server, "user4");
    const data = await gatherUserData(api, await api.session());
    expect(data.ctClass).toBe("CT1");
    const html = renderUserConsole(data);
    expect(html).not.toContain("offer-form");
    expect(html).not.toContain("Peer-to-peer offer");
    expect(html).not.toContain("Sell to utility");
  });

  it("CT2 users get the sell grid and a CT2-only buyer picker", async () => {
    const server = new FakeServer(defaultFixture());
    const api = client(server, "user53");
    const data = await gatherUserData(api, await api.session());
    const offerForm = renderOfferForm(data.buses, data.session.bus, data.ctClass);
    expect(offerForm).toContain('value="2"');
    expect(offerForm).toContain('value="43"');
    expect(offerForm).not.toContain('value="53"');  // not yourself
    expect(offerForm).not.toContain('value="4"');   // CT1 excluded
    const prefs = renderPreferenceEditor(data.horizon, data.sellFlags, data.ctClass);
    expect(prefs).toContain("Sell to utility");
  });

  it("forcing a hidden trade action returns 403 from the server", async () => {
    const server = new FakeServer(defaultFixture());
    const api = client(server, "user4");  // CT1: the form is hidden
    await expect(api.postTrade({
      ett_type: "B", buyer_bus: 53, window: [9, 13], energy_mwh: 0.1,
    })).rejects.toMatchObject({ status: 403 });
  });

  it("forcing operator actions from a user token returns 403", async () => {
    const server = new FakeServer(defaultFixture());
    const api = client(server, "user53");
    for (const forced of [
      () => api.runPhase1(),
      () => api.runPhase2(3),
      () => api.registerIdentity("eve", 6),
      () => api.identities(),
    ]) {
      await expect(forced()).rejects.toMatchObject({ status: 403 });
    }
  });

  it("unknown tokens are rejected with 401", async () => {
    const server = new FakeServer(defaultFixture());
    const api = new ApiClient("bogus", "", server.fetch);
    await expect(api.session()).rejects.toMatchObject({ status: 401 });
  });

  it("phase two before phase one surfaces the 409 ordering error", async () => {
    const server = new FakeServer(defaultFixture());
    const api = client(server, "operator");
    try {
      await api.runPhase2(3);
      expect.unreachable();
    } catch (e) {
      expect(e).toBeInstanceOf(ApiError);
      expect((e as ApiError).status).toBe(409);
      expect((e as ApiError).message).toContain("phase 1");
    }
  });
});
