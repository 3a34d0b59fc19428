"""Synthetic videos with a planted actor and simulated fixation logs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FixationRecord, FixationSet, VideoMeta

SCENARIOS = ("moving_square", "blinking_circle", "translating_bar", "two_motion_halves")


@dataclass
class SynthCorpus:
    volumes: dict[str, np.ndarray]
    fixations: FixationSet
    labels: dict[str, str]
    actor_centers: dict[str, np.ndarray] = field(repr=False)  # (T, 2) x, y per frame

    @property
    def manifest(self) -> list[VideoMeta]:
        return [self.fixations.videos[v] for v in sorted(self.volumes)]


def _bounce(start: float, vel: float, lo: float, hi: float, T: int) -> np.ndarray:
    out = np.empty(T)
    p = start
    for t in range(T):
        out[t] = p
        p += vel
        if p < lo or p > hi:
            vel = -vel
            p = min(max(p, lo), hi)
    return out


class _Painter:
    def __init__(self, T: int, H: int, W: int):
        self.yy, self.xx = np.mgrid[0:H, 0:W]
        self.T = T

    def square(self, frame, cx, cy, half, value):
        m = (np.abs(self.xx - cx) <= half) & (np.abs(self.yy - cy) <= half)
        frame[m] = value

    def disk(self, frame, cx, cy, r, value):
        frame[(self.xx - cx) ** 2 + (self.yy - cy) ** 2 <= r * r] = value

    def bar(self, frame, cx, cy, half_w, half_h, value):
        m = (np.abs(self.xx - cx) <= half_w) & (np.abs(self.yy - cy) <= half_h)
        frame[m] = value

    def halves(self, frame, cx, cy, half, t, texture):
        # texture scrolls up on the left half and down on the right half of a box
        n = texture.shape[0]
        for dy in range(-half, half + 1):
            for dx in range(-half, half + 1):
                x, y = int(round(cx)) + dx, int(round(cy)) + dy
                if 0 <= x < frame.shape[1] and 0 <= y < frame.shape[0]:
                    shift = t if dx < 0 else -t
                    frame[y, x] = texture[(dy + shift) % n, dx % n]


def _actor_track(kind: str, rng: np.random.Generator, T: int, lo: float, hi: float, speed: float) -> np.ndarray:
    x0, y0 = rng.uniform(lo, hi, size=2)
    if kind == "moving_square":
        ang = rng.uniform(0, 2 * np.pi)
        xs = _bounce(x0, speed * np.cos(ang), lo, hi, T)
        ys = _bounce(y0, speed * np.sin(ang), lo, hi, T)
    elif kind == "translating_bar":
        xs = _bounce(x0, speed * rng.choice([-1.0, 1.0]), lo, hi, T)
        ys = np.full(T, y0)
    else:
        steps = rng.normal(0, 0.3, size=(T, 2))
        steps[0] = 0
        walk = np.cumsum(steps, axis=0)
        xs = np.clip(x0 + walk[:, 0], lo, hi)
        ys = np.clip(y0 + walk[:, 1], lo, hi)
    return np.column_stack([xs, ys])


def _paint(kind, painter, frame, cx, cy, t, texture, phase):
    if kind == "moving_square":
        painter.square(frame, cx, cy, 4, 1.0)
    elif kind == "blinking_circle":
        if ((t + phase) // 3) % 2 == 0:
            painter.disk(frame, cx, cy, 4.5, 1.0)
    elif kind == "translating_bar":
        painter.bar(frame, cx, cy, 1, 7, 1.0)
    elif kind == "two_motion_halves":
        painter.halves(frame, cx, cy, 6, t, texture)
    else:
        raise ValueError(f"unknown scenario {kind!r}")


def render_video(kind: str, rng: np.random.Generator, size: int, T: int, distractors: int) -> tuple[np.ndarray, np.ndarray]:
    """Video volume in [0, 1] and the actor center per frame."""
    painter = _Painter(T, size, size)
    background = 0.45 + 0.03 * rng.standard_normal((size, size))
    center_lo, center_hi = size * 0.35, size * 0.65
    actor = _actor_track(kind, rng, T, center_lo, center_hi, speed=1.5)
    texture = rng.uniform(0.1, 0.9, size=(16, 16))
    others = []
    for _ in range(distractors):
        dkind = SCENARIOS[int(rng.integers(len(SCENARIOS)))]
        # periphery: a band along a random border
        track = _actor_track(dkind, rng, T, 6.0, size - 7.0, speed=1.5)
        side = int(rng.integers(4))
        edge = rng.uniform(5.0, size * 0.18)
        if side == 0:
            track[:, 0] = edge
        elif side == 1:
            track[:, 0] = size - 1 - edge
        elif side == 2:
            track[:, 1] = edge
        else:
            track[:, 1] = size - 1 - edge
        others.append((dkind, track, rng.uniform(0.1, 0.9, size=(16, 16)), int(rng.integers(6))))
    phase = int(rng.integers(6))
    volume = np.empty((T, size, size))
    for t in range(T):
        frame = background.copy()
        for dkind, track, tex, ph in others:
            _paint(dkind, painter, frame, track[t, 0], track[t, 1], t, tex, ph)
        _paint(kind, painter, frame, actor[t, 0], actor[t, 1], t, texture, phase)
        volume[t] = frame
    return np.clip(volume, 0.0, 1.0), actor


def simulate_fixations(
    video_id: str,
    actor: np.ndarray,
    size: int,
    subject: str,
    group: str,
    noise: float,
    rng: np.random.Generator,
    distractor_prob: float = 0.0,
    durations: tuple[int, int] = (2, 4),
) -> list[FixationRecord]:
    """Back-to-back fixations covering the video, on the actor (plus jitter) or on random distractor spots."""
    T = len(actor)
    out = []
    t = 0
    hi = np.nextafter(float(size), 0.0)
    while t < T:
        end = min(T - 1, t + int(rng.integers(durations[0], durations[1] + 1)) - 1)
        if distractor_prob > 0 and rng.random() < distractor_prob:
            x, y = rng.uniform(0, size, size=2)
        else:
            x, y = actor[t] + (rng.normal(0, noise, size=2) if noise > 0 else 0.0)
        x, y = float(np.clip(x, 0.0, hi)), float(np.clip(y, 0.0, hi))
        out.append(FixationRecord(subject, video_id, t, end, x, y, group))
        t = end + 1
    return out


def synth_dataset(
    scenario: str | list[str],
    n_videos: int,
    n_subjects: int = 8,
    noise: float = 1.0,
    rng_seed: int = 0,
    n_free: int = 0,
    size: int = 48,
    frames: int = 24,
    distractors: int = 5,
    fovea_px: float = 6.0,
    fps: float = 25.0,
) -> SynthCorpus:
    """Videos with a planted actor near the frame center and peripheral distractors.

    ``scenario`` may be one scenario or a list; ``n_videos`` are generated
    per scenario and each video's label is its scenario. Active subjects
    fixate the actor with Gaussian jitter of std ``noise`` px; free viewers
    split their fixations between the actor and uniform random spots.
    """
    if n_videos < 1:
        raise ValueError("n_videos must be >= 1")
    kinds = [scenario] if isinstance(scenario, str) else list(scenario)
    for k in kinds:
        if k not in SCENARIOS:
            raise ValueError(f"unknown scenario {k!r}")
    root = np.random.SeedSequence(rng_seed)
    volumes, labels, centers, metas, records = {}, {}, {}, [], []
    children = root.spawn(len(kinds) * n_videos)
    for ki, kind in enumerate(kinds):
        for i in range(n_videos):
            rng = np.random.default_rng(children[ki * n_videos + i])
            vid = f"{kind}_{i:03d}"
            volume, actor = render_video(kind, rng, size, frames, distractors)
            volumes[vid] = volume
            labels[vid] = kind
            centers[vid] = actor
            metas.append(VideoMeta(vid, size, size, frames, fps, fovea_px, label=kind))
            for s in range(n_subjects):
                records += simulate_fixations(vid, actor, size, f"s{s:02d}", "active", noise, rng)
            for s in range(n_free):
                records += simulate_fixations(vid, actor, size, f"f{s:02d}", "free", noise, rng, distractor_prob=0.5)
    fixations = FixationSet(tuple(records), {m.video_id: m for m in metas})
    return SynthCorpus(volumes, fixations, labels, centers)
