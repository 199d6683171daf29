import { once } from "node:events";
import { createConnection } from "node:net";
import { describe, expect, it } from "vitest";

import { HashedNgramEmbedder } from "../src/embedding.js";
import { handleLine, serveTcp, type ServiceResponse } from "../src/service.js";

const TEXTS = [
  "which permission gates sending an SMS message",
  "camera hardware declaration",
  "boot completed broadcast receiver",
  "runtime exec of a shell command",
  "cipher getInstance AES",
  "location manager last known location",
  "wifi connection info",
  "device identifier lookup",
  "notification manager notify",
  "download over https",
];

function norm(v: number[]): number {
  return Math.sqrt(v.reduce((s, x) => s + x * x, 0));
}

describe("embedder", () => {
  it("returns unit-norm vectors of the configured dimension", () => {
    const e = new HashedNgramEmbedder(0, 384);
    for (const t of TEXTS) {
      const v = e.embed(t);
      expect(v).toHaveLength(384);
      expect(norm(v)).toBeCloseTo(1.0, 9);
    }
  });

  it("is deterministic and seed-sensitive", () => {
    const a = new HashedNgramEmbedder(0, 384);
    const b = new HashedNgramEmbedder(0, 384);
    const c = new HashedNgramEmbedder(1, 384);
    expect(a.embed("same text")).toEqual(b.embed("same text"));
    expect(a.embed("same text")).not.toEqual(c.embed("same text"));
  });

  it("keeps its fingerprint across instances", () => {
    expect(new HashedNgramEmbedder(0, 384).fingerprint()).toBe(
      new HashedNgramEmbedder(0, 384).fingerprint(),
    );
    expect(new HashedNgramEmbedder(2, 128).fingerprint()).toBe("ngram-hash-v1:d=128:seed=2");
  });

  it("rejects empty text", () => {
    expect(() => new HashedNgramEmbedder().embed("   ")).toThrow(/empty/);
  });
});

describe("protocol handler", () => {
  const embedder = new HashedNgramEmbedder(0, 384);

  it("answers a 10-text batch in order with unit-norm vectors", () => {
    const res = handleLine(JSON.stringify({ op: "embed", id: 7, texts: TEXTS }), embedder);
    expect(res.ok).toBe(true);
    expect(res.id).toBe(7);
    expect(res.dimension).toBe(384);
    expect(res.vectors).toHaveLength(TEXTS.length);
    res.vectors!.forEach((v, i) => {
      expect(norm(v)).toBeCloseTo(1.0, 9);
      expect(v).toEqual(embedder.embed(TEXTS[i]!)); // order preserved
    });
  });

  it("gives identical texts identical vectors within one batch", () => {
    const res = handleLine(
      JSON.stringify({ op: "embed", texts: ["twin", "other", "twin"] }),
      embedder,
    );
    expect(res.vectors![0]).toEqual(res.vectors![2]);
    expect(res.vectors![0]).not.toEqual(res.vectors![1]);
  });

  it("reports fingerprint and dimension", () => {
    const res = handleLine(JSON.stringify({ op: "fingerprint", id: "f" }), embedder);
    expect(res).toMatchObject({
      ok: true,
      id: "f",
      fingerprint: "ngram-hash-v1:d=384:seed=0",
      dimension: 384,
    });
  });

  it("answers malformed json with a structured error", () => {
    const res = handleLine("{not json", embedder);
    expect(res.ok).toBe(false);
    expect(res.error!.code).toBe("bad_json");
  });

  it("answers schema violations with bad_request and echoes the id", () => {
    const res = handleLine(JSON.stringify({ op: "embed", id: 3, texts: [] }), embedder);
    expect(res.ok).toBe(false);
    expect(res.id).toBe(3);
    expect(res.error!.code).toBe("bad_request");
  });

  it("answers unembeddable text with bad_text naming the index", () => {
    const res = handleLine(JSON.stringify({ op: "embed", texts: ["ok", " "] }), embedder);
    expect(res.ok).toBe(false);
    expect(res.error!.code).toBe("bad_text");
    expect(res.error!.message).toContain("texts[1]");
  });
});

describe("tcp service", () => {
  it("survives a malformed line and keeps serving the connection", async () => {
    const { server, port } = await serveTcp(new HashedNgramEmbedder(0, 384), 0);
    try {
      const socket = createConnection({ port, host: "127.0.0.1" });
      await once(socket, "connect");

      const received: string[] = [];
      let buffered = "";
      socket.on("data", (chunk) => {
        buffered += chunk.toString("utf-8");
        for (;;) {
          const nl = buffered.indexOf("\n");
          if (nl < 0) break;
          received.push(buffered.slice(0, nl));
          buffered = buffered.slice(nl + 1);
        }
      });
      const waitFor = async (count: number) => {
        while (received.length < count) {
          await new Promise((r) => setTimeout(r, 5));
        }
      };

      socket.write("this is not json\n");
      socket.write(JSON.stringify({ op: "embed", id: 1, texts: TEXTS }) + "\n");
      socket.write(JSON.stringify({ op: "fingerprint", id: 2 }) + "\n");
      await waitFor(3);

      const responses = received.map((line) => JSON.parse(line) as ServiceResponse);
      expect(responses[0]!.ok).toBe(false);
      expect(responses[0]!.error!.code).toBe("bad_json");
      expect(responses[1]!).toMatchObject({ ok: true, id: 1 });
      expect(responses[1]!.vectors).toHaveLength(10);
      expect(responses[2]!).toMatchObject({
        ok: true,
        id: 2,
        fingerprint: "ngram-hash-v1:d=384:seed=0",
      });
      socket.destroy();
    } finally {
      server.close();
    }
  }, 10000);
});
