export const FRAME_MAGIC = "GSTR";
export const FRAME_VERSION = 1;
export const FRAMES_PER_CLIP = 8;
export const TOKENS_PER_FRAME = 258;
export const ENCODING_DIM = 1024;
export const VIEWS = ["egocentric", "exocentric"] as const;

/** Reject feature payloads beyond this many bytes before decoding them. */
export const MAX_FEATURE_PAYLOAD = 64 * 1024 * 1024;

export class ProtocolError extends Error {
  constructor(public field: string, message: string) {
    super(`${field}: ${message}`);
  }
}

export interface WireLatency {
  comm_ms: number;
  infer_ms: number;
  tts_ms: number;
  total_ms: number;
}

export interface WireInferResponse {
  clip_id: string;
  description: string;
  meaning: string;
  intention: string;
  ranked_intents: { label: string; score: number }[];
  latency: WireLatency;
}

/** Serialize a [frame][token][dim] float32 tensor into the binary frame. */
export function packFeatureBlock(tensor: Float32Array, shape: number[]): Buffer {
  const expected = shape.reduce((a, b) => a * b, 1);
  if (shape.length !== 3 || tensor.length !== expected) {
    throw new Error(`tensor length ${tensor.length} does not match shape ${shape}`);
  }
  const payload = Buffer.from(tensor.buffer, tensor.byteOffset, tensor.byteLength);
  const header = Buffer.alloc(9);
  header.write(FRAME_MAGIC, 0, "ascii");
  header.writeUInt8(FRAME_VERSION, 4);
  header.writeUInt32LE(payload.length, 5);
  return Buffer.concat([header, payload]);
}

/** Deserialize the binary frame against its declared shape. */
export function unpackFeatureBlock(data: Buffer, shape: number[]): Float32Array {
  if (data.length < 9 || data.toString("ascii", 0, 4) !== FRAME_MAGIC) {
    throw new ProtocolError("features", "bad magic in binary feature frame");
  }
  if (data.readUInt8(4) !== FRAME_VERSION) {
    throw new ProtocolError("features", `unsupported frame version ${data.readUInt8(4)}`);
  }
  const length = data.readUInt32LE(5);
  if (length > MAX_FEATURE_PAYLOAD) {
    throw new ProtocolError("features", `payload of ${length} bytes exceeds the frame limit`);
  }
  const payload = data.subarray(9);
  if (payload.length !== length) {
    throw new ProtocolError("features", `declared payload length ${length} != actual ${payload.length}`);
  }
  const expected = shape.reduce((a, b) => a * b, 1) * 4;
  if (length !== expected) {
    throw new ProtocolError("feature_shape", `shape [${shape}] needs ${expected} bytes, frame has ${length}`);
  }
  const copy = Buffer.from(payload); // ensure alignment for the Float32Array view
  return new Float32Array(copy.buffer, copy.byteOffset, length / 4);
}

function isStringArray(value: unknown): value is string[] {
  return Array.isArray(value) && value.every((x) => typeof x === "string");
}

/**
 * Structural validation of an infer request body; throws ProtocolError on
 * the first violation, naming the offending field.
 */
export function validateInferRequest(body: unknown): void {
  if (typeof body !== "object" || body === null || Array.isArray(body)) {
    throw new ProtocolError("body", "request body must be a JSON object");
  }
  const req = body as Record<string, unknown>;
  if (typeof req.clip_id !== "string" || req.clip_id.length === 0) {
    throw new ProtocolError("clip_id", "must be a non-empty string");
  }
  if (!VIEWS.includes(req.view as (typeof VIEWS)[number])) {
    throw new ProtocolError("view", `must be one of ${VIEWS.join(", ")}`);
  }
  if (!isStringArray(req.intent_pool)) {
    throw new ProtocolError("intent_pool", "must be a list of strings");
  }
  const hasFrames = "frames" in req;
  const hasFeatures = "features_b64" in req;
  if (hasFrames === hasFeatures) {
    throw new ProtocolError("frames", "exactly one of 'frames' or 'features_b64' is required");
  }
  if (hasFrames) {
    if (!isStringArray(req.frames) || (req.frames as string[]).length !== FRAMES_PER_CLIP) {
      throw new ProtocolError("frames", `must be a list of exactly ${FRAMES_PER_CLIP} encoded images`);
    }
  } else {
    const shape = req.feature_shape;
    if (!Array.isArray(shape) || shape.length !== 3 ||
        shape[0] !== FRAMES_PER_CLIP || shape[1] !== TOKENS_PER_FRAME) {
      throw new ProtocolError("feature_shape", `must be [${FRAMES_PER_CLIP}, ${TOKENS_PER_FRAME}, dim]`);
    }
    if (typeof req.features_b64 !== "string") {
      throw new ProtocolError("features_b64", "must be a base64 string");
    }
    // size guard before any decode work: 4/3 expansion plus framing overhead
    if (req.features_b64.length > (MAX_FEATURE_PAYLOAD / 3) * 4 + 64) {
      throw new ProtocolError("features_b64", "encoded payload exceeds the frame limit");
    }
    unpackFeatureBlock(Buffer.from(req.features_b64, "base64"), shape as number[]);
  }
  if (req.landmarks !== undefined && req.landmarks !== null) {
    const lm = req.landmarks;
    const ok = Array.isArray(lm) && lm.length === FRAMES_PER_CLIP &&
      lm.every((row) => Array.isArray(row) && row.length === ENCODING_DIM);
    if (!ok) {
      throw new ProtocolError("landmarks", `must be ${FRAMES_PER_CLIP} rows of ${ENCODING_DIM} values`);
    }
  }
}
