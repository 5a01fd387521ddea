import { describe, expect, it } from "vitest";
import { ApiClient, ApiError } from "./api.js";

interface Captured {
  url: string;
  init?: RequestInit;
}

function clientWith(status: number, body: unknown): { client: ApiClient; calls: Captured[] } {
  const calls: Captured[] = [];
  const fetchImpl = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    if (status === 204) return new Response(null, { status });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  };
  return { client: new ApiClient("", fetchImpl), calls };
}

describe("ApiClient", () => {
  it("creates sessions with the provided options", async () => {
    const { client, calls } = clientWith(200, { id: "s1", status: "active" });
    const view = await client.createSession({ advisor: "level_i", seed: 7 });
    expect(view.id).toBe("s1");
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("/sessions");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ advisor: "level_i", seed: 7 });
  });

  it("posts decisions with the cursor guard", async () => {
    const { client, calls } = clientWith(200, { outcome: { boarded: true, reward: 25.0001 } });
    const res = await client.postDecision("s1", "ACCEPT", 12);
    expect(res.outcome.boarded).toBe(true);
    expect(calls[0].url).toBe("/sessions/s1/decision");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ action: "ACCEPT", cursor: 12 });
  });

  it("reads sessions, recommendations, and summaries from their endpoints", async () => {
    const { client, calls } = clientWith(200, {});
    await client.getSession("abc");
    await client.getRecommendation("abc");
    await client.getSummary("abc");
    expect(calls.map((c) => c.url)).toEqual([
      "/sessions/abc",
      "/sessions/abc/recommendation",
      "/sessions/abc/summary",
    ]);
    expect(calls.every((c) => c.init?.method === undefined)).toBe(true);
  });

  it("surfaces service errors as code + message", async () => {
    const { client } = clientWith(409, { code: "cursor_conflict", message: "stale cursor" });
    const err = await client.postDecision("s1", "REJECT", 3).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.code).toBe("cursor_conflict");
    expect(err.message).toBe("stale cursor");
  });

  it("handles 204 deletes", async () => {
    const { client, calls } = clientWith(204, null);
    await client.deleteSession("gone");
    expect(calls[0].init?.method).toBe("DELETE");
  });

  it("wraps network failures", async () => {
    const client = new ApiClient("", async () => {
      throw new TypeError("connection refused");
    });
    const err = await client.getSession("x").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("network_error");
  });

  it("prefixes a base url", async () => {
    const calls: Captured[] = [];
    const client = new ApiClient("http://localhost:8000", async (url, init) => {
      calls.push({ url, init });
      return new Response("{}", { status: 200 });
    });
    await client.getSession("s");
    expect(calls[0].url).toBe("http://localhost:8000/sessions/s");
  });
});
