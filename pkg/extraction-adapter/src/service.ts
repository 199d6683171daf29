/**
 * Embedding service wire protocol: one JSON object per UTF-8 line.
 *
 * Requests:
 *   {"op": "embed", "id": <any>, "texts": ["...", ...]}
 *   {"op": "fingerprint", "id": <any>}
 * Responses:
 *   {"ok": true, "id": <echoed>, "fingerprint": "...", "dimension": n,
 *    "vectors": [[...], ...]}          (vectors only for embed)
 *   {"ok": false, "id": <echoed if parseable>, "error":
 *    {"code": "bad_json" | "bad_request" | "bad_text", "message": "..."}}
 *
 * Any error is answered on the same line boundary and the connection
 * stays open; a malformed request must never take the service down.
 */

import { createInterface } from "node:readline";
import { createServer, type AddressInfo, type Server, type Socket } from "node:net";
import { z } from "zod";

import { HashedNgramEmbedder } from "./embedding.js";

const requestSchema = z.discriminatedUnion("op", [
  z.object({
    op: z.literal("embed"),
    id: z.union([z.string(), z.number()]).optional(),
    texts: z.array(z.string()).min(1),
  }),
  z.object({
    op: z.literal("fingerprint"),
    id: z.union([z.string(), z.number()]).optional(),
  }),
]);

export type ServiceResponse = {
  ok: boolean;
  id?: string | number;
  fingerprint?: string;
  dimension?: number;
  vectors?: number[][];
  error?: { code: string; message: string };
};

function failure(code: string, message: string, id?: string | number): ServiceResponse {
  const out: ServiceResponse = { ok: false, error: { code, message } };
  if (id !== undefined) out.id = id;
  return out;
}

/** Answer one request line; never throws. */
export function handleLine(line: string, embedder: HashedNgramEmbedder): ServiceResponse {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch (err) {
    return failure("bad_json", (err as Error).message);
  }
  const echoId =
    typeof raw === "object" && raw !== null && "id" in raw
      ? (raw as { id: unknown }).id
      : undefined;
  const id =
    typeof echoId === "string" || typeof echoId === "number" ? echoId : undefined;

  const parsed = requestSchema.safeParse(raw);
  if (!parsed.success) {
    const issue = parsed.error.issues[0];
    const where = issue && issue.path.length ? ` at ${issue.path.join(".")}` : "";
    return failure("bad_request", `${issue?.message ?? "invalid request"}${where}`, id);
  }

  const request = parsed.data;
  const base: ServiceResponse = {
    ok: true,
    fingerprint: embedder.fingerprint(),
    dimension: embedder.dimension,
  };
  if (request.id !== undefined) base.id = request.id;
  if (request.op === "fingerprint") {
    return base;
  }

  const vectors: number[][] = [];
  for (let i = 0; i < request.texts.length; i++) {
    try {
      vectors.push(embedder.embed(request.texts[i]!));
    } catch (err) {
      return failure("bad_text", `texts[${i}]: ${(err as Error).message}`, request.id);
    }
  }
  base.vectors = vectors;
  return base;
}

function attach(
  input: NodeJS.ReadableStream,
  write: (line: string) => void,
  embedder: HashedNgramEmbedder,
): void {
  const lines = createInterface({ input, crlfDelay: Infinity });
  lines.on("line", (line) => {
    if (line.trim() === "") return;
    write(JSON.stringify(handleLine(line, embedder)) + "\n");
  });
}

/** Serve on stdin/stdout until the input closes. */
export function serveStdio(embedder: HashedNgramEmbedder): Promise<void> {
  return new Promise((resolve) => {
    attach(process.stdin, (line) => process.stdout.write(line), embedder);
    process.stdin.on("close", () => resolve());
  });
}

/** Serve on a TCP port (0 picks an ephemeral one); resolves once listening. */
export function serveTcp(
  embedder: HashedNgramEmbedder,
  port: number,
): Promise<{ server: Server; port: number }> {
  const server = createServer((socket: Socket) => {
    attach(socket, (line) => socket.write(line), embedder);
    socket.on("error", () => socket.destroy());
  });
  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, "127.0.0.1", () => {
      resolve({ server, port: (server.address() as AddressInfo).port });
    });
  });
}
