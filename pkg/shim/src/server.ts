import express from "express";
import type { Server } from "node:http";
import { performance } from "node:perf_hooks";

import type { ShimConfig } from "./config.js";
import { ProtocolError, validateInferRequest, WireInferResponse } from "./protocol.js";

export interface ModelText {
  description: string;
  meaning: string;
  intention: string;
}

export interface ModelSource {
  generate(clipId: string, view: string): Promise<ModelText>;
}

/** Deterministic stand-in for a locally hosted model. */
export class LocalStubModel implements ModelSource {
  constructor(private readonly identifier: string) {}

  async generate(clipId: string): Promise<ModelText> {
    return {
      description: `A hand gesture performed in clip ${clipId}.`,
      meaning: `The gesture in clip ${clipId} carries a conventional meaning.`,
      intention: `intent of clip ${clipId}`,
    };
  }
}

/** Proxy to an upstream model server speaking the same protocol. */
export class RemoteModel implements ModelSource {
  constructor(private readonly endpoint: string, private readonly timeoutMs = 30000) {}

  async generate(clipId: string, view: string): Promise<ModelText> {
    const reply = await fetch(`${this.endpoint.replace(/\/$/, "")}/infer`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ clip_id: clipId, view, intent_pool: [], frames: Array(8).fill("AA==") }),
      signal: AbortSignal.timeout(this.timeoutMs),
    });
    if (!reply.ok) {
      throw new BackendError(`upstream model returned HTTP ${reply.status}`);
    }
    const body = (await reply.json()) as Partial<ModelText>;
    if (!body.description || !body.meaning || !body.intention) {
      throw new BackendError("upstream reply missing text fields");
    }
    return { description: body.description, meaning: body.meaning, intention: body.intention };
  }
}

export class BackendError extends Error {}

function tokenize(text: string): string[] {
  return text.toLowerCase().match(/\w+|[^\w\s]/g) ?? [];
}

const SCORE_BANDS: [number, number][] = [
  [0.0, 0.1], [0.1, 0.35], [0.35, 0.55], [0.55, 0.7], [0.7, 0.85], [0.85, 1.0],
];

function overlapScore(prediction: string, gold: string): number {
  const pred = tokenize(prediction);
  const ref = tokenize(gold);
  if (pred.length === 0 || ref.length === 0) return 0;
  const refCounts = new Map<string, number>();
  for (const t of ref) refCounts.set(t, (refCounts.get(t) ?? 0) + 1);
  let overlap = 0;
  const used = new Map<string, number>();
  for (const t of pred) {
    const seen = used.get(t) ?? 0;
    if (seen < (refCounts.get(t) ?? 0)) {
      overlap += 1;
      used.set(t, seen + 1);
    }
  }
  if (overlap === 0) return 0;
  const precision = overlap / pred.length;
  const recall = overlap / ref.length;
  const f1 = (2 * precision * recall) / (precision + recall);
  for (let score = 0; score < SCORE_BANDS.length; score++) {
    const [lo, hi] = SCORE_BANDS[score];
    if (f1 >= lo && f1 < hi) return score;
  }
  return 5;
}

function rankIntents(intention: string, pool: string[]): { label: string; score: number }[] {
  return pool
    .map((label) => ({ label, score: overlapScore(label, intention) }))
    .sort((a, b) => (b.score - a.score) || a.label.localeCompare(b.label));
}

export interface ShimHandle {
  address: string;
  close(): Promise<void>;
}

/**
 * Start the shim server: protocol-conformant /infer plus /health.
 *
 * The shim fronts the configured model source; from the client's point of
 * view it is the remote model, so /health reports kind "remote-model".
 */
export async function serveBackend(
  config: ShimConfig,
  modelOverride?: ModelSource,
): Promise<ShimHandle> {
  const model: ModelSource =
    modelOverride ??
    (config.modelEndpoint
      ? new RemoteModel(config.modelEndpoint)
      : new LocalStubModel(config.localModel as string));

  const app = express();
  app.use(express.json({ limit: "96mb" }));

  app.get("/health", (_req, res) => {
    res.json({ status: "ok", backend: "remote-model" });
  });

  app.post("/infer", async (req, res) => {
    const t0 = performance.now();
    try {
      validateInferRequest(req.body);
    } catch (err) {
      if (err instanceof ProtocolError) {
        res.status(400).json({ error: { type: "protocol", field: err.field, message: err.message } });
        return;
      }
      throw err;
    }
    const t1 = performance.now();
    let text: ModelText;
    try {
      text = await model.generate(req.body.clip_id, req.body.view);
    } catch (err) {
      res.status(503).json({
        error: { type: "backend-unavailable", message: err instanceof Error ? err.message : String(err) },
      });
      return;
    }
    const t2 = performance.now();
    const ranked = rankIntents(text.intention, req.body.intent_pool ?? []);
    const t3 = performance.now();
    const comm = t1 - t0;
    const infer = t2 - t1;
    const tts = t3 - t2;
    const response: WireInferResponse = {
      clip_id: req.body.clip_id,
      description: text.description,
      meaning: text.meaning,
      intention: text.intention,
      ranked_intents: ranked,
      latency: { comm_ms: comm, infer_ms: infer, tts_ms: tts, total_ms: comm + infer + tts },
    };
    res.json(response);
  });

  // malformed JSON bodies surface as framed protocol errors
  app.use((err: Error, _req: express.Request, res: express.Response, next: express.NextFunction) => {
    if (res.headersSent) return next(err);
    res.status(400).json({ error: { type: "protocol", field: "body", message: err.message } });
  });

  const server: Server = await new Promise((resolve) => {
    const s = app.listen(config.port, config.host, () => resolve(s));
  });
  const addr = server.address();
  const port = typeof addr === "object" && addr ? addr.port : config.port;
  return {
    address: `http://${config.host}:${port}`,
    close: () => new Promise((resolve, reject) =>
      server.close((err) => (err ? reject(err) : resolve()))),
  };
}
