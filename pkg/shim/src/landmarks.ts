import { createHash } from "node:crypto";
import { promises as fs } from "node:fs";

export const NUM_LANDMARKS = 21;

export type Handedness = "left" | "right" | "unknown";

export interface LandmarkFrame {
  frame_index: number;
  handedness: Handedness;
  valid: boolean;
  points: number[][]; // 21 x 3
}

export interface LandmarkFile {
  clip_id: string;
  fps: number;
  frames: LandmarkFrame[];
}

/** One detection result for a single frame; null when no hand was found. */
export interface HandDetection {
  points: number[][];
  handedness: Handedness;
}

/**
 * Pluggable per-frame hand detector. A production build would wrap a real
 * tracker (e.g. a mediapipe hand-landmarker); the implementations below are
 * deterministic stand-ins with the same contract.
 */
export interface FrameExtractor {
  detect(videoBytes: Buffer, frameIndex: number): HandDetection | null;
}

/** Deterministic synthetic extractor: a stable "hand" derived from the video bytes. */
export class SyntheticHandExtractor implements FrameExtractor {
  detect(videoBytes: Buffer, frameIndex: number): HandDetection | null {
    const points: number[][] = [];
    for (let lm = 0; lm < NUM_LANDMARKS; lm++) {
      const digest = createHash("sha256")
        .update(videoBytes)
        .update(`${frameIndex}:${lm}`)
        .digest();
      const coord = (offset: number) => digest.readUInt32LE(offset) / 0xffffffff;
      points.push([coord(0), coord(4), coord(8)]);
    }
    return { points, handedness: "right" };
  }
}

/** Extractor that never finds a hand; models clips with no hands in view. */
export class NoHandExtractor implements FrameExtractor {
  detect(): HandDetection | null {
    return null;
  }
}

function zeroPoints(): number[][] {
  return Array.from({ length: NUM_LANDMARKS }, () => [0, 0, 0]);
}

/**
 * Extract landmarks from a video file into the landmark interchange format.
 *
 * One record per frame; frames where the extractor finds no hand (or
 * throws) are emitted with valid=false and zero points rather than
 * aborting the clip.
 */
export async function extractLandmarks(
  videoPath: string,
  extractor: FrameExtractor,
  options: { clipId?: string; fps?: number; nFrames?: number } = {},
): Promise<LandmarkFile> {
  const videoBytes = await fs.readFile(videoPath); // throws on unreadable input
  const nFrames = options.nFrames ?? 8;
  const frames: LandmarkFrame[] = [];
  for (let i = 0; i < nFrames; i++) {
    let detection: HandDetection | null = null;
    try {
      detection = extractor.detect(videoBytes, i);
    } catch {
      detection = null; // per-frame extractor failure -> valid=false
    }
    if (detection === null) {
      frames.push({ frame_index: i, handedness: "unknown", valid: false, points: zeroPoints() });
      continue;
    }
    if (detection.points.length !== NUM_LANDMARKS ||
        detection.points.some((p) => p.length !== 3 || p.some((x) => !Number.isFinite(x)))) {
      frames.push({ frame_index: i, handedness: "unknown", valid: false, points: zeroPoints() });
      continue;
    }
    frames.push({
      frame_index: i,
      handedness: detection.handedness,
      valid: true,
      points: detection.points,
    });
  }
  return {
    clip_id: options.clipId ?? videoPath.replace(/^.*\//, ""),
    fps: options.fps ?? 30.0,
    frames,
  };
}

export async function writeLandmarkFile(path: string, file: LandmarkFile): Promise<void> {
  await fs.writeFile(path, JSON.stringify(file), "utf-8");
}
