export { ShimConfig, ShimConfigSchema, loadConfig } from "./config.js";
export {
  FrameExtractor,
  HandDetection,
  LandmarkFile,
  LandmarkFrame,
  NoHandExtractor,
  SyntheticHandExtractor,
  extractLandmarks,
  writeLandmarkFile,
} from "./landmarks.js";
export {
  FRAMES_PER_CLIP,
  ProtocolError,
  TOKENS_PER_FRAME,
  WireInferResponse,
  packFeatureBlock,
  unpackFeatureBlock,
  validateInferRequest,
} from "./protocol.js";
export {
  BackendError,
  LocalStubModel,
  ModelSource,
  RemoteModel,
  ShimHandle,
  serveBackend,
} from "./server.js";
