"""Edge-cloud serving round trip.

Starts the in-process inference server with a mock backend, plays the
glasses-side client (clip manifest + landmark file on disk), and prints
the ranked intents and the three-phase latency breakdown, then runs a
small latency bench.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from gestura.serving import MockBackend, ServerConfig, bench_latency, client_send, serve

rng = np.random.default_rng(0)

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    (tmp / "clip.json").write_text(json.dumps({
        "clip_id": "demo-clip", "n_frames": 24, "width": 640, "height": 480,
        "fps": 30.0, "view": "egocentric",
    }))
    frames = [{"frame_index": i, "handedness": "right", "valid": True,
               "points": rng.uniform(0, 1, size=(21, 3)).tolist()} for i in range(24)]
    (tmp / "landmarks.json").write_text(json.dumps(
        {"clip_id": "demo-clip", "fps": 30.0, "frames": frames}))

    backend = MockBackend(
        comm_ms=5, infer_ms=40, tts_ms=10,
        texts={"demo-clip": {
            "description": "open palm moves side to side at shoulder height",
            "meaning": "a friendly greeting wave",
            "intention": "wave hello to someone nearby",
        }},
    )
    handle = serve(ServerConfig(backend=backend))
    try:
        response = client_send(
            tmp / "clip.json", tmp / "landmarks.json", handle.address,
            intent_pool=["wave hello to someone nearby",
                         "ask a person to come closer",
                         "signal stop"],
        )
        print(f"description: {response.description}")
        print(f"meaning:     {response.meaning}")
        print(f"intention:   {response.intention}")
        print("ranked intents:")
        for entry in response.ranked_intents:
            print(f"  {entry['score']}  {entry['label']}")
        lat = response.latency
        print(f"latency: comm {lat.comm_ms:.1f} + infer {lat.infer_ms:.1f} "
              f"+ tts {lat.tts_ms:.1f} = {lat.total_ms:.1f} ms")

        body = {"clip_id": "demo-clip", "view": "egocentric", "intent_pool": [],
                "frames": ["AA=="] * 8}
        report = bench_latency(handle.address, body, n_requests=10, concurrency=5)
        print(f"\nbench over {report['n_requests']} requests "
              f"(errors {report['errors']}):")
        for phase, stats in report["phases"].items():
            print(f"  {phase:9s} mean {stats['mean']:7.1f}  p95 {stats['p95']:7.1f}")
    finally:
        handle.stop()
