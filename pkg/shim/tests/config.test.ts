import { describe, expect, it } from "vitest";

import { loadConfig } from "../src/config.js";

describe("ShimConfig", () => {
  it("accepts a single remote endpoint", () => {
    const cfg = loadConfig({ modelEndpoint: "http://127.0.0.1:9000" });
    expect(cfg.modelEndpoint).toBe("http://127.0.0.1:9000");
    expect(cfg.extractor.framesPerClip).toBe(8);
    expect(cfg.port).toBe(0);
  });

  it("accepts a single local model", () => {
    const cfg = loadConfig({ localModel: "stub-7b" });
    expect(cfg.localModel).toBe("stub-7b");
  });

  it("rejects zero model sources", () => {
    expect(() => loadConfig({})).toThrow(/exactly one/);
  });

  it("rejects two model sources", () => {
    expect(() =>
      loadConfig({ modelEndpoint: "http://x.test", localModel: "stub" }),
    ).toThrow(/exactly one/);
  });

  it("rejects malformed endpoints", () => {
    expect(() => loadConfig({ modelEndpoint: "not a url" })).toThrow();
  });
});
