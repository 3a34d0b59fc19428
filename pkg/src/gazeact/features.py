"""Optical flow, spatio-temporal HoG and MBH descriptors, motion feature maps and
the space-time Harris interest-point detector."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .core import GazeError
from .io import decode_flow, encode_flow


class SingleFrame(GazeError):
    pass


class DegenerateWindow(GazeError):
    pass


@dataclass(frozen=True)
class GridConfig:
    nx: int
    ny: int
    nt: int
    bins: int = 9

    def __post_init__(self):
        if min(self.nx, self.ny, self.nt) < 1 or self.bins < 2:
            raise ValueError(f"invalid grid {self}")

    @property
    def length(self) -> int:
        return self.nx * self.ny * self.nt * self.bins

    @property
    def name(self) -> str:
        return f"{self.nx}x{self.ny}x{self.nt}"


RECOGNITION_GRIDS = (
    GridConfig(1, 1, 1),
    GridConfig(2, 2, 1),
    GridConfig(3, 3, 1),
    GridConfig(2, 2, 2),
    GridConfig(3, 3, 2),
    GridConfig(1, 1, 3),
    GridConfig(2, 2, 3),
)
DETECTOR_GRIDS = (GridConfig(1, 1, 1), GridConfig(2, 2, 1), GridConfig(3, 3, 1))

L2HYS_CLIP = 0.7


@dataclass
class FlowField:
    u: np.ndarray  # (T, H, W) px/frame
    v: np.ndarray

    def to_bytes(self) -> bytes:
        return encode_flow(self.u, self.v)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FlowField":
        return cls(*decode_flow(data))

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


# ---------------------------------------------------------------- optical flow

_HS_AVG = np.array([[1, 2, 1], [2, 0, 2], [1, 2, 1]], dtype=float)[None] / 12.0


def horn_schunck_flow(frames: np.ndarray, lam: float = 0.05, iterations: int = 200, presmooth: float = 1.0) -> FlowField:
    """Horn-Schunck flow between consecutive frames.

    ``lam`` is the squared smoothness weight for intensities in [0, 1].
    Flow at frame t maps t to t+1; the last frame repeats the previous flow
    so the field matches the video length.
    """
    V = np.asarray(frames, dtype=np.float64)
    if V.ndim != 3 or V.shape[0] < 2:
        raise SingleFrame("optical flow needs at least two frames")
    if presmooth > 0:
        V = ndimage.gaussian_filter(V, (0, presmooth, presmooth), mode="nearest")
    a, b = V[:-1], V[1:]
    iy = 0.5 * (np.gradient(a, axis=1) + np.gradient(b, axis=1))
    ix = 0.5 * (np.gradient(a, axis=2) + np.gradient(b, axis=2))
    it = b - a
    u = np.zeros_like(a)
    v = np.zeros_like(a)
    denom = lam + ix**2 + iy**2
    for _ in range(iterations):
        ub = ndimage.convolve(u, _HS_AVG, mode="nearest")
        vb = ndimage.convolve(v, _HS_AVG, mode="nearest")
        t = (ix * ub + iy * vb + it) / denom
        u = ub - ix * t
        v = vb - iy * t
    u = np.concatenate([u, u[-1:]], axis=0)
    v = np.concatenate([v, v[-1:]], axis=0)
    return FlowField(u, v)


# ---------------------------------------------------------------- orientation votes

def orientation_votes(image_stack: np.ndarray, bins: int = 9) -> np.ndarray:
    """Per-pixel unsigned-orientation votes, (T, H, W, bins).

    Gradient magnitude is split linearly between the two nearest bin
    centers, which sit at multiples of pi/bins.
    """
    S = np.asarray(image_stack, dtype=np.float64)
    gy = np.gradient(S, axis=1)
    gx = np.gradient(S, axis=2)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    pos = theta / (np.pi / bins)
    lo = np.floor(pos).astype(int) % bins
    frac = pos - np.floor(pos)
    hi = (lo + 1) % bins
    votes = np.zeros(S.shape + (bins,))
    np.put_along_axis(votes, lo[..., None], (mag * (1.0 - frac))[..., None], axis=-1)
    cur = np.take_along_axis(votes, hi[..., None], axis=-1)
    np.put_along_axis(votes, hi[..., None], cur + (mag * frac)[..., None], axis=-1)
    return votes


def _cell_weights(n: int, cells: int) -> np.ndarray:
    """(cells, n) linear-interpolation weights of n samples into cells."""
    W = np.zeros((cells, n))
    pos = (np.arange(n) + 0.5) / n * cells - 0.5
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    for i in range(n):
        a, b = lo[i], lo[i] + 1
        if a < 0:
            W[0, i] += 1.0
        elif b > cells - 1:
            W[cells - 1, i] += 1.0
        else:
            W[a, i] += 1.0 - frac[i]
            W[b, i] += frac[i]
    return W


def l2hys(v: np.ndarray, clip: float = L2HYS_CLIP) -> np.ndarray:
    n = np.linalg.norm(v)
    if n <= 1e-12:
        return np.zeros_like(v)
    v = np.minimum(v / n, clip)
    n = np.linalg.norm(v)
    return v / n if n > 1e-12 else np.zeros_like(v)


def support_window(shape: tuple[int, int, int], x: float, y: float, t: float, sigma_s: float, sigma_t: float) -> tuple[slice, slice, slice]:
    """Clamped (t, y, x) slices of a 6-sigma support centered on the rounded point."""
    T, H, W = shape
    rs = max(1, int(round(3 * sigma_s)))
    rt = max(1, int(round(3 * sigma_t)))
    cx, cy, ct = int(round(x)), int(round(y)), int(round(t))
    xs = slice(max(0, cx - rs), min(W, cx + rs + 1))
    ys = slice(max(0, cy - rs), min(H, cy + rs + 1))
    ts = slice(max(0, ct - rt), min(T, ct + rt + 1))
    if xs.stop - xs.start < 1 or ys.stop - ys.start < 1 or ts.stop - ts.start < 1:
        raise DegenerateWindow(f"support of point ({x}, {y}, {t}) is empty")
    return ts, ys, xs


@functools.lru_cache(maxsize=4096)
def _stacked_weights(n: int, counts: tuple[int, ...]) -> np.ndarray:
    """Cell weights of several cell counts stacked row-wise."""
    return np.vstack([_cell_weights(n, c) for c in counts])


def _offsets(counts: tuple[int, ...]) -> dict[int, int]:
    return dict(zip(counts, np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)))


def pooled_histograms(votes: np.ndarray, window: tuple[slice, slice, slice], grids: Iterable[GridConfig]) -> dict[GridConfig, np.ndarray]:
    """Cell-pooled orientation histograms of one vote tensor for several grids, before normalization.

    Each histogram is laid out (t cell, y cell, x cell, bin).
    """
    ts, ys, xs = window
    win = votes[ts, ys, xs]  # (t, y, x, b)
    nt, ny, nx = win.shape[:3]
    grids = list(grids)
    cx = tuple(sorted({g.nx for g in grids}))
    cy = tuple(sorted({g.ny for g in grids}))
    ct = tuple(sorted({g.nt for g in grids}))
    a = np.tensordot(win, _stacked_weights(nx, cx), axes=([2], [1]))  # (t, y, b, X)
    a = np.tensordot(a, _stacked_weights(ny, cy), axes=([1], [1]))  # (t, b, X, Y)
    a = np.tensordot(a, _stacked_weights(nt, ct), axes=([0], [1]))  # (b, X, Y, T)
    ox, oy, ot = _offsets(cx), _offsets(cy), _offsets(ct)
    out = {}
    for g in grids:
        block = a[:, ox[g.nx] : ox[g.nx] + g.nx, oy[g.ny] : oy[g.ny] + g.ny, ot[g.nt] : ot[g.nt] + g.nt]
        out[g] = block.transpose(3, 2, 1, 0).ravel()
    return out


class DescriptorExtractor:
    """Precomputed orientation votes of a video and its flow, for repeated descriptor extraction."""

    def __init__(self, volume: np.ndarray, flow: FlowField | None = None, bins: int = 9):
        self.shape = volume.shape
        self.bins = bins
        self.hog_votes = orientation_votes(volume, bins)
        self.mbh_votes = None
        if flow is not None:
            self.mbh_votes = (orientation_votes(flow.u, bins), orientation_votes(flow.v, bins))

    def hog(self, p, grids: Iterable[GridConfig]) -> dict[GridConfig, np.ndarray]:
        win = support_window(self.shape, p.x, p.y, p.t, p.sigma_s, p.sigma_t)
        return {g: l2hys(h) for g, h in pooled_histograms(self.hog_votes, win, grids).items()}

    def mbh(self, p, grids: Iterable[GridConfig]) -> dict[GridConfig, np.ndarray]:
        if self.mbh_votes is None:
            raise ValueError("extractor was built without flow")
        grids = list(grids)
        win = support_window(self.shape, p.x, p.y, p.t, p.sigma_s, p.sigma_t)
        hu = pooled_histograms(self.mbh_votes[0], win, grids)
        hv = pooled_histograms(self.mbh_votes[1], win, grids)
        return {g: np.concatenate([l2hys(hu[g]), l2hys(hv[g])]) for g in grids}


def hog3d(volume: np.ndarray, p, cfg: GridConfig) -> np.ndarray:
    """Spatio-temporal HoG of one interest point, L2-Hys normalized."""
    return DescriptorExtractor(volume, bins=cfg.bins).hog(p, [cfg])[cfg]


def mbh(flow: FlowField, p, cfg: GridConfig) -> np.ndarray:
    """Motion boundary histogram: HoG of the u and v flow planes, concatenated."""
    bins = cfg.bins
    votes_u = orientation_votes(flow.u, bins)
    votes_v = orientation_votes(flow.v, bins)
    win = support_window(flow.u.shape, p.x, p.y, p.t, p.sigma_s, p.sigma_t)
    hu = pooled_histograms(votes_u, win, [cfg])[cfg]
    hv = pooled_histograms(votes_v, win, [cfg])[cfg]
    return np.concatenate([l2hys(hu), l2hys(hv)])


# ---------------------------------------------------------------- motion feature maps

def flow_magnitude_map(flow: FlowField) -> np.ndarray:
    return flow.magnitude


def _two_means(vecs: np.ndarray, iterations: int = 10) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched 2-means over (P, n, 2) neighborhoods.

    Seeds are the two most distant vectors of each neighborhood. Returns the
    two centers (P, 2) each and the 2-mode SSE (P,).
    """
    P, n, _ = vecs.shape
    d = ((vecs[:, :, None, :] - vecs[:, None, :, :]) ** 2).sum(-1)
    flat = d.reshape(P, -1).argmax(axis=1)
    i, j = np.divmod(flat, n)
    c1 = vecs[np.arange(P), i]
    c2 = vecs[np.arange(P), j]
    for _ in range(iterations):
        d1 = ((vecs - c1[:, None]) ** 2).sum(-1)
        d2 = ((vecs - c2[:, None]) ** 2).sum(-1)
        m = (d1 <= d2)[..., None]
        n1 = m.sum(1)
        n2 = n - n1
        c1 = np.where(n1 > 0, (vecs * m).sum(1) / np.maximum(n1, 1), c1)
        c2 = np.where(n2 > 0, (vecs * ~m).sum(1) / np.maximum(n2, 1), c2)
    d1 = ((vecs - c1[:, None]) ** 2).sum(-1)
    d2 = ((vecs - c2[:, None]) ** 2).sum(-1)
    return c1, c2, np.minimum(d1, d2).sum(1)


def flow_bimodality_map(flow: FlowField, radius: int = 3, max_ratio: float = 10.0, chunk: int = 2048) -> np.ndarray:
    """Distance between the two flow modes of each neighborhood, weighted by exp(s1/s2 - 1).

    s1 and s2 are the 1-mode and 2-mode SSEs; their ratio is capped at
    ``max_ratio`` so perfectly bimodal neighborhoods stay finite.
    """
    T, H, W = flow.u.shape
    out = np.zeros((T, H, W))
    k = 2 * radius + 1
    for t in range(T):
        uv = np.stack([flow.u[t], flow.v[t]], axis=-1)
        padded = np.pad(uv, ((radius, radius), (radius, radius), (0, 0)), mode="edge")
        nb = sliding_window_view(padded, (k, k), axis=(0, 1)).reshape(H * W, 2, k * k).transpose(0, 2, 1)
        resp = np.empty(H * W)
        for s in range(0, H * W, chunk):
            vecs = nb[s : s + chunk]
            s1 = ((vecs - vecs.mean(1, keepdims=True)) ** 2).sum((1, 2))
            c1, c2, s2 = _two_means(vecs)
            dist = np.hypot(*(c1 - c2).T)
            tiny = 1e-12 * np.maximum(s1, 1e-300)
            ratio = np.where(s1 > 0, np.minimum(s1 / np.maximum(s2, tiny), max_ratio), 1.0)
            resp[s : s + chunk] = dist * np.exp(ratio - 1.0)
        out[t] = resp.reshape(H, W)
    return out


def harris3d_response(volume: np.ndarray, sigma: float = 2.0, tau: float = 2.0, k: float = 0.005, integration: float = 2.0) -> np.ndarray:
    """Space-time Harris function det(M) - k trace(M)^3 with scale-normalized derivatives."""
    V = np.asarray(volume, dtype=np.float64)
    L = ndimage.gaussian_filter(V, (tau, sigma, sigma), mode="nearest")
    Lt, Ly, Lx = np.gradient(L)
    Lx, Ly, Lt = Lx * sigma, Ly * sigma, Lt * tau
    scale = (integration * tau, integration * sigma, integration * sigma)

    def smooth(a):
        return ndimage.gaussian_filter(a, scale, mode="nearest")

    xx, yy, tt = smooth(Lx * Lx), smooth(Ly * Ly), smooth(Lt * Lt)
    xy, xt, yt = smooth(Lx * Ly), smooth(Lx * Lt), smooth(Ly * Lt)
    det = xx * (yy * tt - yt * yt) - xy * (xy * tt - yt * xt) + xt * (xy * yt - yy * xt)
    trace = xx + yy + tt
    return det - k * trace**3


def motion_feature_map(kind: str, volume: np.ndarray | None = None, flow: FlowField | None = None, **params) -> np.ndarray:
    """Non-negative (T, H, W) motion feature map: flow_magnitude, flow_bimodality or harris3d."""
    if kind == "flow_magnitude":
        return flow_magnitude_map(flow)
    if kind == "flow_bimodality":
        return flow_bimodality_map(flow, **params)
    if kind == "harris3d":
        return np.maximum(harris3d_response(volume, **params), 0.0)
    raise ValueError(f"unknown motion feature {kind!r}")


# ---------------------------------------------------------------- Harris interest points

HARRIS_SCALES = tuple((s, t) for s in (2.0, 4.0, 8.0) for t in (2.0, 4.0))


def harris_interest_points(
    volume: np.ndarray,
    scales=HARRIS_SCALES,
    relative_threshold: float = 0.05,
    absolute_threshold: float = 1e-14,
    max_points: int | None = None,
):
    """Space-time Harris corners over a fixed scale set with 3x3x3 non-maximum suppression.

    At each scale a local maximum is kept when it exceeds both
    ``absolute_threshold`` and ``relative_threshold`` times the strongest
    response at that scale. Returns InterestPoints sorted by response,
    strongest first.
    """
    from .saliency import InterestPoint

    found = []
    for sigma, tau in scales:
        R = harris3d_response(volume, sigma, tau)
        floor = max(absolute_threshold, relative_threshold * R.max())
        peaks = (R == ndimage.maximum_filter(R, size=3, mode="nearest")) & (R > floor)
        # maxima on the volume border are padding artifacts
        peaks[[0, -1]] = False
        peaks[:, [0, -1]] = False
        peaks[:, :, [0, -1]] = False
        for t, y, x in zip(*np.nonzero(peaks)):
            found.append((R[t, y, x], InterestPoint(float(x), float(y), int(t), sigma, tau)))
    found.sort(key=lambda item: -item[0])
    pts = [p for _, p in found]
    return pts[:max_points] if max_points is not None else pts


def counts_per_frame(points, frame_count: int) -> list[int]:
    counts = [0] * frame_count
    for p in points:
        counts[int(round(p.t))] += 1
    return counts


def descriptor_length(grids: Iterable[GridConfig], channel: str) -> int:
    n = sum(g.length for g in grids)
    return 2 * n if channel == "mbh" else n


def default_bimodality_radius(fovea_px: float) -> int:
    return max(1, int(math.ceil(fovea_px / 2)))
