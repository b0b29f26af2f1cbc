"""Loopback external predictor: speaks the wire protocol, answers with CA.

Run as ``python -m frenetwrap.loopback``.  Used to exercise the external
predictor protocol end to end; its output must match the in-process CA
baseline exactly.
"""

from __future__ import annotations

import json
import sys

from .predictors import PROTOCOL_VERSION, predict_ca
from .scene import scene_from_dict


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc) + "\n")
    sys.stdout.flush()


def serve(stdin=None) -> None:
    stdin = stdin or sys.stdin
    _emit({"type": "ready", "protocol": PROTOCOL_VERSION})
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        if request.get("type") != "predict":
            print(f"unsupported request type {request.get('type')!r}",
                  file=sys.stderr)
            sys.exit(2)
        frames = []
        for fr in request["frames"]:
            scene = scene_from_dict(fr["scene"])
            resp = predict_ca(scene, int(fr.get("k", 6)))
            frames.append({
                "frame_index": fr["frame_index"],
                "trajectories": resp.trajectories.tolist(),
                "probs": resp.probs.tolist(),
            })
        _emit({"type": "prediction", "scene_id": request["scene_id"],
               "frames": frames})


if __name__ == "__main__":
    serve()
