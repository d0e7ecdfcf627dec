import { describe, expect, it } from "vitest";

import { ApiError, RpsApi } from "../src/api.js";
import { FakeServer } from "./fake-server.js";

describe("api client", () => {
  it("maps error statuses to ApiError with server detail", async () => {
    const server = new FakeServer();
    const api = new RpsApi("", server.fetch);
    await expect(api.createSession({ bot_id: 99 })).rejects.toThrowError(ApiError);
    await expect(api.submitMove("nope", 0)).rejects.toMatchObject({ status: 404 });
    const created = await api.createSession({ bot_id: 2, rounds: 1 });
    await expect(api.submitMove(created.session_id, 9)).rejects.toMatchObject({ status: 400 });
    await expect(api.exportGame(created.session_id)).rejects.toMatchObject({ status: 409 });
  });

  it("passes creation options through", async () => {
    const server = new FakeServer();
    const api = new RpsApi("", server.fetch);
    const created = await api.createSession({ bot_id: 4, seed: 11, rounds: 25 });
    expect(created.T).toBe(25);
    expect(created.rules.length).toBeGreaterThan(10);
    const move = await api.submitMove(created.session_id, 1);
    expect(move.round).toBe(0);
    expect(move.complete).toBe(false);
  });
});
