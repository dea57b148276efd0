import { z } from "zod";

/**
 * Shim configuration: exactly one model source (a remote endpoint or a
 * local model identifier), extractor settings, and the serve address.
 */
export const ShimConfigSchema = z
  .object({
    modelEndpoint: z.string().url().optional(),
    localModel: z.string().min(1).optional(),
    extractor: z
      .object({
        framesPerClip: z.number().int().positive().default(8),
        minDetectionConfidence: z.number().min(0).max(1).default(0.5),
      })
      .default({ framesPerClip: 8, minDetectionConfidence: 0.5 }),
    host: z.string().default("127.0.0.1"),
    port: z.number().int().min(0).max(65535).default(0),
  })
  .refine((cfg) => (cfg.modelEndpoint ? 1 : 0) + (cfg.localModel ? 1 : 0) === 1, {
    message: "exactly one of modelEndpoint or localModel must be configured",
  });

export type ShimConfig = z.infer<typeof ShimConfigSchema>;

export function loadConfig(raw: unknown): ShimConfig {
  return ShimConfigSchema.parse(raw);
}
