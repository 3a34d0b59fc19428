"""Automatic areas of interest: per-frame adaptive k-means, centroid track linking,
scanpath encoding, lifespan extension and random baseline strings."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import FixationSet, GazeError
from .learn import kmeans_pp_init, lloyd


class NoFixations(GazeError):
    pass


@dataclass
class AoiTrack:
    aoi_id: int
    frames: np.ndarray  # (n,) consecutive frame indices
    centroids: np.ndarray  # (n, 2) x, y per frame

    @property
    def birth(self) -> int:
        return int(self.frames[0])

    @property
    def death(self) -> int:
        return int(self.frames[-1])

    def alive(self, frame: int) -> bool:
        return self.birth <= frame <= self.death

    def centroid_at(self, frame: int) -> np.ndarray:
        return self.centroids[frame - self.birth]

    def to_dict(self) -> dict:
        return {
            "aoi_id": self.aoi_id,
            "birth": self.birth,
            "death": self.death,
            "centroids": [[int(f), float(x), float(y)] for f, (x, y) in zip(self.frames, self.centroids)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AoiTrack":
        c = np.asarray(d["centroids"], dtype=float).reshape(-1, 3)
        return cls(int(d["aoi_id"]), c[:, 0].astype(int), c[:, 1:].copy())


@dataclass
class AoiString:
    subject_id: str
    symbols: list[int]

    def to_dict(self) -> dict:
        return {"subject": self.subject_id, "symbols": list(self.symbols)}


def dump_tracks(tracks: list[AoiTrack]) -> str:
    return json.dumps([t.to_dict() for t in tracks])


def dump_strings(strings: list[AoiString]) -> str:
    return "".join(json.dumps(s.to_dict()) + "\n" for s in strings)


def adaptive_kmeans(points: np.ndarray, sse_threshold: float, rng: np.random.Generator, restarts: int = 10) -> tuple[np.ndarray, float]:
    """Smallest k whose best-of-restarts mean squared error per point is <= threshold.

    Returns (centroids, mean squared error).
    """
    n = len(points)
    for k in range(1, n + 1):
        best_c, best_sse = None, np.inf
        for _ in range(restarts if k > 1 else 1):
            c, _, sse = lloyd(points, kmeans_pp_init(points, k, rng))
            if sse < best_sse:
                best_c, best_sse = c, sse
        if best_sse / n <= sse_threshold:
            return best_c, best_sse / n
    raise AssertionError("k = n always reaches zero error")


def discover_aois(
    fixations: FixationSet,
    sse_threshold: float,
    link_radius: float,
    max_gap: int = 5,
    rng_seed: int = 0,
    restarts: int = 10,
) -> list[AoiTrack]:
    """Cluster fixations per frame and link centroids across frames into AOI tracks.

    A track may skip up to ``max_gap`` frames; skipped frames get linearly
    interpolated centroids. Tracks are numbered 1..A by birth frame, then x.
    """
    if len(fixations) == 0:
        raise NoFixations("no fixations on this video")
    if len(fixations.video_ids()) != 1:
        raise ValueError("discover_aois expects fixations of a single video")
    rng = np.random.default_rng(rng_seed)
    index = fixations.frame_index(fixations.video_ids()[0])
    cache: dict[tuple, np.ndarray] = {}
    # open chains: list of (frames list, centroid list)
    chains: list[tuple[list[int], list[np.ndarray]]] = []
    for frame in sorted(index):
        pts = np.array(sorted((r.x, r.y) for r in index[frame]), dtype=float)
        key = tuple(map(tuple, pts))
        if key not in cache:
            cache[key] = adaptive_kmeans(pts, sse_threshold, rng, restarts)[0]
        cents = cache[key]
        live = [i for i, (fr, _) in enumerate(chains) if frame - fr[-1] - 1 <= max_gap]
        pairs = []
        for ci, c in enumerate(cents):
            for ti in live:
                d = float(np.hypot(*(c - chains[ti][1][-1])))
                if d <= link_radius:
                    pairs.append((d, ti, ci))
        pairs.sort()
        used_t, used_c = set(), set()
        for d, ti, ci in pairs:
            if ti in used_t or ci in used_c:
                continue
            used_t.add(ti)
            used_c.add(ci)
            chains[ti][0].append(frame)
            chains[ti][1].append(cents[ci])
        for ci, c in enumerate(cents):
            if ci not in used_c:
                chains.append(([frame], [c]))
    tracks = []
    for fr, cs in chains:
        frames = np.arange(fr[0], fr[-1] + 1)
        cs = np.asarray(cs)
        xs = np.interp(frames, fr, cs[:, 0])
        ys = np.interp(frames, fr, cs[:, 1])
        tracks.append((frames, np.column_stack([xs, ys])))
    tracks.sort(key=lambda t: (t[0][0], t[1][0, 0], t[1][0, 1]))
    return [AoiTrack(i + 1, f, c) for i, (f, c) in enumerate(tracks)]


def nearest_track(tracks: list[AoiTrack], frame: int, x: float, y: float) -> int:
    best_id, best_d = None, np.inf
    for t in tracks:
        if t.alive(frame):
            d = float(np.hypot(*(t.centroid_at(frame) - (x, y))))
            if d < best_d or (d == best_d and t.aoi_id < best_id):
                best_id, best_d = t.aoi_id, d
    if best_id is not None:
        return best_id
    # no live track: temporally nearest lifespan
    gaps = [(max(t.birth - frame, frame - t.death, 0), t.aoi_id) for t in tracks]
    return min(gaps)[1]


def assign_scanpaths(fixations: FixationSet, tracks: list[AoiTrack]) -> list[AoiString]:
    """Encode each subject's fixations as the ids of their closest AOIs at fixation onset."""
    if not tracks:
        raise ValueError("need at least one AOI track")
    out = []
    for subject, recs in sorted(fixations.by_subject().items()):
        recs = sorted(recs, key=lambda r: r.start_frame)
        out.append(AoiString(subject, [nearest_track(tracks, r.start_frame, r.x, r.y) for r in recs]))
    return out


def _patch(frame: np.ndarray, cx: float, cy: float, radius: int) -> np.ndarray:
    h, w = frame.shape
    x0, x1 = max(0, int(round(cx)) - radius), min(w, int(round(cx)) + radius + 1)
    y0, y1 = max(0, int(round(cy)) - radius), min(h, int(round(cy)) + radius + 1)
    return frame[y0:y1, x0:x1]


def ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized cross-correlation of two equally shaped patches.

    Two flat patches correlate perfectly when their levels agree and not
    at all otherwise; a flat patch against a textured one scores 0.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    da, db = a - a.mean(), b - b.mean()
    na, nb = np.sqrt(da @ da), np.sqrt(db @ db)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-12)
    flat_a, flat_b = na <= 1e-9 * scale, nb <= 1e-9 * scale
    if flat_a and flat_b:
        return 1.0 if abs(a.mean() - b.mean()) <= 1e-9 * scale else 0.0
    if flat_a or flat_b:
        return 0.0
    return float(da @ db / (na * nb))


def extend_aois(tracks: list[AoiTrack], frames: np.ndarray, patch_radius: int, change_threshold: float = 0.7) -> list[AoiTrack]:
    """Grow each track backward and forward while its endpoint patch keeps its appearance.

    The centroid is frozen at the endpoint; a frame joins the track when the
    NCC between its patch and the endpoint-frame patch is >= the threshold.
    """
    T = frames.shape[0]
    out = []
    for t in tracks:
        if t.death >= T:
            raise ValueError(f"AOI {t.aoi_id} outlives the video")
        bx, by = t.centroids[0]
        ref = _patch(frames[t.birth], bx, by, patch_radius)
        start = t.birth
        while start > 0 and ncc(_patch(frames[start - 1], bx, by, patch_radius), ref) >= change_threshold:
            start -= 1
        dx, dy = t.centroids[-1]
        ref = _patch(frames[t.death], dx, dy, patch_radius)
        stop = t.death
        while stop < T - 1 and ncc(_patch(frames[stop + 1], dx, dy, patch_radius), ref) >= change_threshold:
            stop += 1
        before = np.repeat(t.centroids[:1], t.birth - start, axis=0)
        after = np.repeat(t.centroids[-1:], stop - t.death, axis=0)
        out.append(AoiTrack(t.aoi_id, np.arange(start, stop + 1), np.vstack([before, t.centroids, after])))
    return out


def random_aoi_strings(tracks: list[AoiTrack], count: int, lengths: list[int], rng_seed: int) -> list[AoiString]:
    """Random AOI strings that respect the temporal order of AOI lifespans.

    Each string draws its length from ``lengths``, then sorted timestamps
    uniformly over frames covered by some track, then at each timestamp a
    uniformly chosen live AOI.
    """
    if not tracks:
        raise ValueError("need at least one AOI track")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    covered = np.unique(np.concatenate([t.frames for t in tracks]))
    lengths = [int(n) for n in lengths if n > 0] or [1]
    out = []
    for i in range(count):
        n = int(rng.choice(lengths))
        stamps = np.sort(rng.choice(covered, size=n, replace=True))
        symbols = []
        for f in stamps:
            alive = [t.aoi_id for t in tracks if t.alive(int(f))]
            symbols.append(int(alive[rng.integers(len(alive))]))
        out.append(AoiString(f"random-{i}", symbols))
    return out

