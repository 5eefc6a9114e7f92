// Portal fidelity: every rendered DLMP / incentive / balance equals the
// API value after the documented formatting, byte for byte; the client
// never recomputes market math.

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { energy, money, price } from "../src/format.js";
import { gatherOperatorData, gatherUserData } from "../src/state.js";
import { renderOperatorConsole } from "../src/views/operator.js";
import { renderUserConsole } from "../src/views/user.js";
import { FakeServer, defaultFixture } from "./fakeServer.js";

function client(server: FakeServer, who: string): ApiClient {
  return new ApiClient(`token-${who}`, "", server.fetch);
}

describe("rendered values equal API values after formatting", () => {
  it("user console shows server balances, prices and payments verbatim", async () => {
    const server = new FakeServer(defaultFixture());
    const op = client(server, "operator");
    await op.runPhase1();

    const api = client(server, "user53");
    const session = await api.session();
    const data = await gatherUserData(api, session);
    const html = renderUserConsole(data);

    expect(html).toContain(money(2.553129433));  // balance straight from /session
    for (const row of server.fixture.incentives[53]) {
      expect(html).toContain(energy(row.p_ni_mwh));
      expect(html).toContain(price(row.lambda_eq));
      expect(html).toContain(price(row.lambda_a));
      expect(html).toContain(money(row.payment));
      expect(html).toContain(price(row.final_price));
    }
    // the deliberately inconsistent final_price proves no client-side math:
    // lambda_eq + lambda_a would be 30.94, the server said 99.875
    expect(html).toContain(price(99.875));
    expect(html).not.toContain(price(30.17 + 0.77));
  });

  it("incentive chart bars carry the exact payment series", async () => {
    const server = new FakeServer(defaultFixture());
    await client(server, "operator").runPhase1();
    const api = client(server, "user53");
    const data = await gatherUserData(api, await api.session());
    const html = renderUserConsole(data);
    for (const row of server.fixture.incentives[53]) {
      expect(html).toContain(`data-y="${row.payment}"`);
    }
  });

  it("operator console shows participant balances verbatim", async () => {
    const server = new FakeServer(defaultFixture());
    const api = client(server, "operator");
    const data = await gatherOperatorData(api);
    const html = renderOperatorConsole(data);
    expect(html).toContain(money(8.914014953));
    expect(html).toContain(money(1000000));
    expect(html).toContain("chain valid");
    expect(html).toContain(`height ${server.blocks.length - 1}`);
  });

  it("dlmp panel renders only server-sent points", async () => {
    const server = new FakeServer(defaultFixture());
    await client(server, "operator").runPhase1();
    const api = client(server, "user53");
    const resp = await api.dlmp(53);
    expect(resp.values.map(v => v.dlmp)).toEqual(server.fixture.dlmp[53]);
  });
});
