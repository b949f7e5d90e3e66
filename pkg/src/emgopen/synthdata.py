"""Deterministic synthetic multichannel dataset and the on-disk format.

Noise source is counter-mode splitmix64 (the 64-bit xorshift-multiply
finalizer: z ^= z>>30; z *= 0xBF58476D1CE4E5B9; z ^= z>>27;
z *= 0x94D049BB133111EB; z ^= z>>31, applied to golden-ratio increments
of a seed-derived counter), mapped to normals with Box-Muller. Every
sample is a pure function of (seed, stream, index), so generation is
byte-identical across runs and platforms.

Dataset directory: manifest.json plus one CSV per trial
(header ch1..ch8, one row per sample, 17-significant-digit floats, LF).
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .signal import N_CHANNELS, RawRecording

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# distinct stream tags so profile draws and trial noise never collide
_STREAM_PROFILE = 0x50524F46
_STREAM_SIGNAL = 0x5349474E
_STREAM_FLOOR = 0x464C4F4F


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (np.asarray(x, dtype=np.uint64) + _GOLDEN).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _uniforms(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """count uniforms in (0, 1], from 64-bit counter-mode splitmix64."""
    base = _splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _splitmix64(np.uint64(stream)))
    with np.errstate(over="ignore"):
        idx = base + (np.arange(start, start + count, dtype=np.uint64) * _GOLDEN)
    bits = _splitmix64(idx)
    return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def _normals(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Box-Muller normals, two uniforms per sample."""
    u = _uniforms(seed, stream, 2 * start, 2 * count)
    u1, u2 = u[0::2], u[1::2]
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class SynthConfig:
    n_target: int = 6
    n_novel: int = 8
    reps: int = 15
    trial_seconds: float = 2.0
    sampling_rate_hz: float = 1000.0
    noise_floor: float = 0.05
    seed: int = 0
    amplitude_profiles: np.ndarray | None = field(default=None)
    min_profile_gap: float = 0.5

    def __post_init__(self):
        if self.n_target < 2:
            raise ValueError("need at least 2 target classes")
        if self.reps < 5:
            raise ValueError("need at least 5 repetitions")
        if self.trial_seconds <= 0 or self.sampling_rate_hz <= 0:
            raise ValueError("trial_seconds and sampling_rate_hz must be positive")


def _draw_profiles(cfg: SynthConfig) -> np.ndarray:
    """Per-class channel activation patterns in [0.2, 2.0], pairwise distinct."""
    n = cfg.n_target + cfg.n_novel
    profiles = np.empty((n, N_CHANNELS))
    cursor = 0
    for c in range(n):
        for attempt in range(1000):
            u = _uniforms(cfg.seed, _STREAM_PROFILE, cursor, N_CHANNELS)
            cursor += N_CHANNELS
            cand = 0.2 + 1.8 * u
            gaps = np.linalg.norm(profiles[:c] - cand, axis=1) if c else np.array([np.inf])
            if np.all(gaps >= cfg.min_profile_gap):
                profiles[c] = cand
                break
        else:
            raise RuntimeError("could not draw pairwise-distinct amplitude profiles")
    return profiles


def motion_name(motion_id: int, n_target: int) -> str:
    if motion_id < n_target:
        return f"T{motion_id + 1}"
    return f"N{motion_id - n_target + 1}"


def generate(cfg: SynthConfig) -> list[RawRecording]:
    """All (n_target + n_novel) * reps recordings, deterministic in the seed."""
    profiles = (
        np.asarray(cfg.amplitude_profiles, dtype=np.float64)
        if cfg.amplitude_profiles is not None
        else _draw_profiles(cfg)
    )
    n_classes = cfg.n_target + cfg.n_novel
    if profiles.shape != (n_classes, N_CHANNELS):
        raise ValueError(f"amplitude_profiles must be {(n_classes, N_CHANNELS)}")
    n_samples = int(round(cfg.trial_seconds * cfg.sampling_rate_hz))
    per_trial = n_samples * N_CHANNELS
    recs = []
    for motion in range(n_classes):
        for rep in range(cfg.reps):
            start = (motion * cfg.reps + rep) * per_trial
            base = _normals(cfg.seed, _STREAM_SIGNAL, start, per_trial)
            floor = _normals(cfg.seed, _STREAM_FLOOR, start, per_trial)
            base = base.reshape(n_samples, N_CHANNELS)
            floor = floor.reshape(n_samples, N_CHANNELS)
            samples = base * profiles[motion] + cfg.noise_floor * floor
            recs.append(
                RawRecording(
                    samples=samples,
                    sampling_rate_hz=cfg.sampling_rate_hz,
                    motion_id=motion,
                    repetition=rep,
                    is_target=motion < cfg.n_target,
                )
            )
    return recs


# ------------------------------------------------------------------ disk I/O

def write_dataset(recs: list[RawRecording], out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    motions = {}
    trials = []
    for rec in recs:
        motions[rec.motion_id] = rec.is_target
        fname = f"trial_m{rec.motion_id:03d}_r{rec.repetition:03d}.csv"
        trials.append({"file": fname, "motion_id": rec.motion_id, "repetition": rec.repetition})
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8", newline="\n") as f:
            f.write(",".join(f"ch{i + 1}" for i in range(N_CHANNELS)) + "\n")
            for row in rec.samples:
                f.write(",".join(f"{v:.17g}" for v in row) + "\n")
    n_target = sum(1 for t in motions.values() if t)
    manifest = {
        "sampling_rate_hz": recs[0].sampling_rate_hz if recs else 0,
        "channels": N_CHANNELS,
        "motions": [
            {"id": mid, "name": motion_name(mid, n_target), "target": bool(is_t)}
            for mid, is_t in sorted(motions.items())
        ],
        "trials": trials,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def read_dataset(in_dir: str) -> list[RawRecording]:
    manifest_path = os.path.join(in_dir, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    with open(manifest_path, encoding="utf-8") as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"malformed manifest {manifest_path}: {e}") from e
    for key in ("sampling_rate_hz", "channels", "motions", "trials"):
        if key not in manifest:
            raise ValueError(f"malformed manifest: missing field {key!r}")
    if manifest["channels"] != N_CHANNELS:
        raise ValueError(f"channel mismatch: manifest declares {manifest['channels']}, expected {N_CHANNELS}")
    targets = {m["id"]: m["target"] for m in manifest["motions"]}
    recs = []
    for trial in manifest["trials"]:
        path = os.path.join(in_dir, trial["file"])
        if not os.path.isfile(path):
            raise FileNotFoundError(f"trial file missing: {trial['file']}")
        if trial["motion_id"] not in targets:
            raise ValueError(f"trial {trial['file']} references unknown motion {trial['motion_id']}")
        rows = []
        with open(path, encoding="utf-8") as f:
            header = f.readline().strip()
            expected = ",".join(f"ch{i + 1}" for i in range(N_CHANNELS))
            if header != expected:
                raise ValueError(f"{trial['file']} line 1: bad header {header!r}")
            for lineno, line in enumerate(f, start=2):
                parts = line.strip().split(",")
                if len(parts) != N_CHANNELS:
                    raise ValueError(f"{trial['file']} line {lineno}: expected {N_CHANNELS} columns, got {len(parts)}")
                try:
                    rows.append([float(p) for p in parts])
                except ValueError as e:
                    raise ValueError(f"{trial['file']} line {lineno}: {e}") from e
        recs.append(
            RawRecording(
                samples=np.array(rows, dtype=np.float64),
                sampling_rate_hz=manifest["sampling_rate_hz"],
                motion_id=trial["motion_id"],
                repetition=trial["repetition"],
                is_target=bool(targets[trial["motion_id"]]),
            )
        )
    return recs
