"""Predictors and the Frenet wrapper around them.

Two predictors ship with the toolkit: a constant-acceleration heuristic
(the CA baseline, CA-SD when wrapped) and a newline-JSON child-process
client for plugging in external learned models.  ``wrap_frenet`` runs any
of them once per candidate centerline and back-projects the results.
"""

from __future__ import annotations

import json
import os
import select
import subprocess
from dataclasses import dataclass

import numpy as np

from .centerlines import enumerate_sequences
from .geometry import FrenetScene, scene_to_frenet, to_cartesian_points
from .scene import (
    ACCEL, DT, FUTURE_STEPS, HEADING, SPEED, T, X, Y,
    Scene, Trajectory, scene_to_dict,
)

CA_ACCELERATIONS = (-4.0, -2.0, 0.0, 2.0, 4.0)  # sixth branch: current accel
PROTOCOL_VERSION = 1


class PredictorError(RuntimeError):
    pass


class ProtocolError(PredictorError):
    """The external predictor violated the wire protocol."""


@dataclass(frozen=True)
class PredictorResponse:
    """K trajectories in the request's frame with normalized conditional probs."""

    trajectories: np.ndarray   # (K, FUTURE_STEPS, 2)
    probs: np.ndarray          # (K,), sums to 1

    def __post_init__(self):
        object.__setattr__(self, "trajectories",
                           np.asarray(self.trajectories, dtype=float))
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))


def _ca_displacements(v0: float, accel: float, n_steps: int, dt: float) -> np.ndarray:
    """Cumulative longitudinal displacement of a constant-acceleration rollout.

    Speed is clamped at zero (no reversing); within the stopping step the
    exact stop-time kinematics are used.
    """
    disp = np.empty(n_steps)
    s, v = 0.0, max(0.0, v0)
    for k in range(n_steps):
        v_next = v + accel * dt
        if v_next >= 0.0:
            s += v * dt + 0.5 * accel * dt * dt
            v = v_next
        elif v > 0.0:
            s += -v * v / (2.0 * accel)   # distance to standstill
            v = 0.0
        disp[k] = s
    return disp


def predict_ca(scene: Scene, k: int = 6) -> PredictorResponse:
    """Constant-acceleration baseline: six fixed-acceleration rollouts.

    In a Cartesian scene the rollouts extend the current heading as a
    straight ray; in a Frenet scene they advance s at constant lateral
    offset, which is what turns CA into the lane-following CA-SD.
    """
    if k != 6:
        raise ValueError("the CA baseline produces exactly 6 trajectories")
    tv = scene.tv
    if tv.states.shape[0] < 2:
        raise PredictorError(f"scene {scene.scene_id}: TV history too short for CA")
    cur = tv.current
    v0 = float(cur[SPEED])
    a_t = float(cur[ACCEL])
    if not np.isfinite(a_t):
        prev = tv.states[-2]
        a_t = (cur[SPEED] - prev[SPEED]) / (cur[T] - prev[T])
    accels = CA_ACCELERATIONS + (a_t,)

    n = FUTURE_STEPS
    trajs = np.empty((6, n, 2))
    for j, a in enumerate(accels):
        disp = _ca_displacements(v0, a, n, scene.dt)
        if scene.frame.is_frenet:
            trajs[j, :, 0] = cur[X] + disp
            trajs[j, :, 1] = cur[Y]
        else:
            heading = np.array([np.cos(cur[HEADING]), np.sin(cur[HEADING])])
            trajs[j] = cur[X:Y + 1] + disp[:, None] * heading
    return PredictorResponse(trajs, np.full(6, 1.0 / 6.0))


class CAPredictor:
    """In-process predictor with the same frame-batch interface as the client."""

    def predict_frames(self, scene_id: str, frames, k: int = 6):
        return [predict_ca(fs.scene if isinstance(fs, FrenetScene) else fs, k)
                for _, fs in frames]

    def close(self):
        pass


class ExternalPredictor:
    """Client for a child process speaking the newline-JSON predictor protocol.

    One request line covering all frames of a scene, one response line back.
    The child must greet with ``{"type": "ready", "protocol": 1}``.
    """

    def __init__(self, command, timeout: float = 30.0):
        self.command = list(command)
        self.timeout = timeout
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.PIPE, text=True, bufsize=1,
        )
        self._rxbuf = ""
        hello = self._read_line()
        if hello.get("type") != "ready" or hello.get("protocol") != PROTOCOL_VERSION:
            self._fail(f"bad handshake: {hello!r}")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def _stderr_tail(self) -> str:
        try:
            return self._proc.stderr.read() or ""
        except ValueError:
            return ""

    def _fail(self, message: str):
        tail = self._stderr_tail().strip()
        self.close()
        if tail:
            message += f" (child stderr: {tail})"
        raise ProtocolError(message)

    def _read_line(self) -> dict:
        fd = self._proc.stdout.fileno()
        while "\n" not in self._rxbuf:
            ready, _, _ = select.select([fd], [], [], self.timeout)
            if not ready:
                self._fail(f"timeout after {self.timeout} s waiting for predictor")
            chunk = os.read(fd, 65536).decode("utf-8")
            if chunk == "":
                code = self._proc.poll()
                self._fail(f"predictor process exited (code {code}) before responding")
            self._rxbuf += chunk
        line, self._rxbuf = self._rxbuf.split("\n", 1)
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            self._fail(f"response is not valid JSON: {line[:200]!r}")

    def predict_frames(self, scene_id: str, frames, k: int = 6):
        """frames: list of (frame_index, FrenetScene-or-Scene) pairs."""
        request = {
            "type": "predict",
            "scene_id": scene_id,
            "frames": [
                {
                    "frame_index": idx,
                    "k": k,
                    "scene": scene_to_dict(
                        fs.scene if isinstance(fs, FrenetScene) else fs),
                }
                for idx, fs in frames
            ],
        }
        if self._proc.poll() is not None:
            self._fail(f"predictor process is dead (code {self._proc.poll()})")
        self._proc.stdin.write(json.dumps(request) + "\n")
        self._proc.stdin.flush()
        reply = self._read_line()

        if reply.get("type") != "prediction":
            self._fail(f"unexpected message type {reply.get('type')!r}")
        if reply.get("scene_id") != scene_id:
            self._fail(f"scene_id mismatch: sent {scene_id!r}, "
                       f"got {reply.get('scene_id')!r}")
        out_frames = reply.get("frames")
        if not isinstance(out_frames, list) or len(out_frames) != len(frames):
            self._fail(f"expected {len(frames)} frames, got "
                       f"{len(out_frames) if isinstance(out_frames, list) else out_frames!r}")

        responses = []
        for (idx, _), fr in zip(frames, out_frames):
            if fr.get("frame_index") != idx:
                self._fail(f"frame index mismatch: expected {idx}, "
                           f"got {fr.get('frame_index')!r}")
            trajs = np.asarray(fr.get("trajectories", []), dtype=float)
            if trajs.shape != (k, FUTURE_STEPS, 2):
                self._fail(f"frame {idx}: trajectories have shape {trajs.shape}, "
                           f"expected {(k, FUTURE_STEPS, 2)}")
            probs = np.asarray(fr.get("probs", []), dtype=float)
            if probs.shape != (k,):
                self._fail(f"frame {idx}: expected {k} probabilities")
            if abs(float(probs.sum()) - 1.0) > 1e-6:
                self._fail(f"frame {idx}: probabilities sum to {probs.sum():.6f}, "
                           "not normalized")
            responses.append(PredictorResponse(trajs, probs))
        return responses


def wrap_frenet(scene: Scene, predictor, k: int = 6, seqs=None):
    """Run a predictor once per candidate centerline and back-project.

    Returns (candidates, seqs): K*N Cartesian trajectories, each tagged with
    its source centerline and carrying its conditional probability.
    """
    if seqs is None:
        seqs = enumerate_sequences(scene)
    frames = [(seq.index, scene_to_frenet(scene, seq.polyline, seq.index))
              for seq in seqs]
    responses = predictor.predict_frames(scene.scene_id, frames, k)

    candidates = []
    for seq, (_, fscene), resp in zip(seqs, frames, responses):
        for traj, p in zip(resp.trajectories, resp.probs):
            xy = to_cartesian_points(
                seq.polyline, traj[:, 0] + fscene.s_origin, traj[:, 1])
            candidates.append(Trajectory(xy, float(p), seq.index))
    return candidates, seqs


def predict_cartesian(scene: Scene, k: int = 6):
    """Plain (unwrapped) CA baseline as a candidate list, for symmetry."""
    resp = predict_ca(scene, k)
    return [Trajectory(t, float(p), None)
            for t, p in zip(resp.trajectories, resp.probs)]
