import json
import math
import os

import numpy as np
import pytest

from emgopen.synthdata import (
    SynthConfig,
    _normals,
    _splitmix64,
    _uniforms,
    generate,
    motion_name,
    read_dataset,
    write_dataset,
)


def splitmix64_oracle(x):
    """Scalar reference with plain Python ints, as a port target would write it."""
    mask = (1 << 64) - 1
    z = (x + 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return z ^ (z >> 31)


# ----------------------------------------------------------------------- prng

def test_splitmix64_matches_scalar_oracle():
    rng = np.random.default_rng(70)
    xs = np.concatenate([
        np.array([0, 1, 2, (1 << 64) - 1], dtype=np.uint64),
        rng.integers(0, 1 << 63, size=50, dtype=np.uint64),
    ])
    got = _splitmix64(xs)
    for x, g in zip(xs, got):
        assert int(g) == splitmix64_oracle(int(x))


def test_uniforms_range_and_determinism():
    u = _uniforms(123, 7, 0, 10000)
    assert np.all(u > 0.0) and np.all(u <= 1.0)
    assert np.array_equal(u, _uniforms(123, 7, 0, 10000))
    assert abs(u.mean() - 0.5) < 0.02


def test_uniforms_counter_mode_slicing():
    # any contiguous block equals the same slice of a longer draw
    full = _uniforms(9, 1, 0, 100)
    assert np.array_equal(_uniforms(9, 1, 40, 30), full[40:70])


def test_uniforms_streams_differ():
    assert not np.array_equal(_uniforms(5, 1, 0, 100), _uniforms(5, 2, 0, 100))
    assert not np.array_equal(_uniforms(5, 1, 0, 100), _uniforms(6, 1, 0, 100))


def test_normals_box_muller_definition():
    u = _uniforms(7, 3, 0, 20)
    want = np.sqrt(-2.0 * np.log(u[0::2])) * np.cos(2.0 * np.pi * u[1::2])
    assert np.array_equal(_normals(7, 3, 0, 10), want)


def test_normals_moments():
    z = _normals(11, 4, 0, 200000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01


# ------------------------------------------------------------------- generate

def test_config_validation():
    with pytest.raises(ValueError, match="at least 2 target"):
        SynthConfig(n_target=1)
    with pytest.raises(ValueError, match="at least 5 repetitions"):
        SynthConfig(reps=4)


def test_motion_name():
    assert motion_name(0, 6) == "T1"
    assert motion_name(5, 6) == "T6"
    assert motion_name(6, 6) == "N1"
    assert motion_name(13, 6) == "N8"


def small_cfg(seed=1):
    return SynthConfig(n_target=2, n_novel=2, reps=5, trial_seconds=0.5, seed=seed)


def test_generate_shapes_and_flags():
    cfg = small_cfg()
    recs = generate(cfg)
    assert len(recs) == 4 * 5
    for r in recs:
        assert r.samples.shape == (500, 8)
        assert r.is_target == (r.motion_id < 2)
    assert sorted({(r.motion_id, r.repetition) for r in recs}) == [
        (m, p) for m in range(4) for p in range(5)
    ]


def test_generate_deterministic_and_seed_sensitive():
    a = generate(small_cfg(seed=3))
    b = generate(small_cfg(seed=3))
    c = generate(small_cfg(seed=4))
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.samples, rb.samples)
    assert not np.array_equal(a[0].samples, c[0].samples)


def test_generate_classes_statistically_distinct():
    recs = generate(SynthConfig(n_target=2, n_novel=0, reps=5, trial_seconds=1.0, seed=2))
    rms = {}
    for r in recs:
        rms.setdefault(r.motion_id, []).append(np.sqrt(np.mean(r.samples**2, axis=0)))
    m0 = np.mean(rms[0], axis=0)
    m1 = np.mean(rms[1], axis=0)
    assert np.linalg.norm(m0 - m1) > 0.2  # profiles at least min_profile_gap apart


def test_generate_custom_profiles():
    profiles = np.full((4, 8), 1.0)
    profiles[1] *= 2.0
    cfg = SynthConfig(n_target=2, n_novel=2, reps=5, trial_seconds=0.2,
                      noise_floor=0.0, seed=0, amplitude_profiles=profiles)
    recs = generate(cfg)
    r0 = [r for r in recs if r.motion_id == 0][0]
    r1 = [r for r in recs if r.motion_id == 1][0]
    # same seed positions scale linearly when the floor term is off
    assert r1.samples.std() > 1.5 * r0.samples.std()


# -------------------------------------------------------------------- disk I/O

def test_write_read_round_trip(tmp_path):
    cfg = small_cfg(seed=6)
    recs = generate(cfg)
    out = str(tmp_path / "ds")
    write_dataset(recs, out)
    back = read_dataset(out)
    assert len(back) == len(recs)
    by_key = {(r.motion_id, r.repetition): r for r in back}
    for r in recs:
        q = by_key[(r.motion_id, r.repetition)]
        assert q.is_target == r.is_target
        assert q.sampling_rate_hz == r.sampling_rate_hz
        assert np.array_equal(q.samples, r.samples)  # %.17g is lossless for f8


def test_write_is_byte_deterministic(tmp_path):
    recs = generate(small_cfg(seed=8))
    a = str(tmp_path / "a")
    b = str(tmp_path / "b")
    write_dataset(recs, a)
    write_dataset(recs, b)
    for name in sorted(os.listdir(a)):
        with open(os.path.join(a, name), "rb") as f:
            da = f.read()
        with open(os.path.join(b, name), "rb") as f:
            db = f.read()
        assert da == db, name
    assert b"\r" not in da  # LF endings


def test_manifest_contents(tmp_path):
    recs = generate(small_cfg(seed=9))
    out = str(tmp_path / "ds")
    write_dataset(recs, out)
    with open(os.path.join(out, "manifest.json")) as f:
        man = json.load(f)
    assert man["channels"] == 8
    assert len(man["trials"]) == len(recs)


def test_read_rejects_missing_manifest(tmp_path):
    with pytest.raises((ValueError, OSError)):
        read_dataset(str(tmp_path))


def test_read_rejects_corrupt_csv(tmp_path):
    recs = generate(small_cfg(seed=10))
    out = str(tmp_path / "ds")
    write_dataset(recs, out)
    victim = sorted(p for p in os.listdir(out) if p.endswith(".csv"))[0]
    path = os.path.join(out, victim)
    with open(path) as f:
        lines = f.readlines()
    lines[1] = "1.0,2.0\n"
    with open(path, "w") as f:
        f.writelines(lines)
    with pytest.raises(ValueError, match="expected 8 columns"):
        read_dataset(out)
