"""Fixation data model, log ingestion and the impulse-and-blur rasterizer."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

GROUPS = ("active", "free")

# recording geometry of the public corpus: viewing distance, screen size, resolution
VIEW_DISTANCE_CM = 60.0
SCREEN_CM = (47.5, 29.5)
SCREEN_PX = (1280, 1024)


class GazeError(Exception):
    """Base class for data errors raised by the toolkit."""


class MalformedLine(GazeError):
    def __init__(self, line: int, reason: str = ""):
        self.line = line
        super().__init__(f"line {line}: malformed record {reason}".rstrip())


class UnknownVideo(GazeError):
    def __init__(self, video_id: str, line: int | None = None):
        self.video_id = video_id
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}unknown video {video_id!r}")


class OutOfBounds(GazeError):
    def __init__(self, line: int, reason: str = ""):
        self.line = line
        super().__init__(f"line {line}: out of bounds {reason}".rstrip())


class EmptyGrid(GazeError):
    pass


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    width: int
    height: int
    frame_count: int
    fps: float = 25.0
    fovea_px: float = 8.0
    label: str | None = None
    path: str | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.frame_count <= 0:
            raise ValueError(f"video {self.video_id}: dimensions must be positive")
        if self.fovea_px <= 0:
            raise ValueError(f"video {self.video_id}: fovea_px must be positive")

    def grid_shape(self, downsample: int = 1) -> tuple[int, int]:
        """(width, height) of the analysis grid at the given downsampling factor."""
        return (math.ceil(self.width / downsample), math.ceil(self.height / downsample))

    def to_dict(self) -> dict:
        d = {
            "video_id": self.video_id,
            "width": self.width,
            "height": self.height,
            "frame_count": self.frame_count,
            "fps": self.fps,
            "fovea_px": self.fovea_px,
        }
        if self.label is not None:
            d["label"] = self.label
        if self.path is not None:
            d["path"] = self.path
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VideoMeta":
        return cls(
            video_id=str(d["video_id"]),
            width=int(d["width"]),
            height=int(d["height"]),
            frame_count=int(d["frame_count"]),
            fps=float(d.get("fps", 25.0)),
            fovea_px=float(d["fovea_px"]) if "fovea_px" in d else fovea_radius_px(1.5, int(d["width"])),
            label=d.get("label"),
            path=d.get("path"),
        )


def fovea_radius_px(degrees: float, video_width: int) -> float:
    """Pixel radius of a visual angle, for a video scaled to fill the screen width.

    Uses the recording geometry of the public corpus. Videos were rescaled
    to fit the screen preserving aspect ratio, so the horizontal scale sets
    the pixels-per-centimetre of the video.
    """
    screen_px_per_cm = SCREEN_PX[0] / SCREEN_CM[0]
    radius_cm = VIEW_DISTANCE_CM * math.tan(math.radians(degrees))
    return radius_cm * screen_px_per_cm * video_width / SCREEN_PX[0]


@dataclass(frozen=True)
class FixationRecord:
    subject_id: str
    video_id: str
    start_frame: int
    end_frame: int
    x: float
    y: float
    group: str = "active"

    @property
    def duration(self) -> int:
        return self.end_frame - self.start_frame + 1

    def active_at(self, frame: int) -> bool:
        return self.start_frame <= frame <= self.end_frame

    def to_dict(self) -> dict:
        return {
            "subject": self.subject_id,
            "video": self.video_id,
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "x": self.x,
            "y": self.y,
            "group": self.group,
        }


def _sort_key(r: FixationRecord):
    return (r.subject_id, r.video_id, r.start_frame)


@dataclass(frozen=True)
class FixationSet:
    records: tuple[FixationRecord, ...]
    videos: dict[str, VideoMeta] = field(default_factory=dict)

    def __post_init__(self):
        recs = tuple(sorted(self.records, key=_sort_key))
        object.__setattr__(self, "records", recs)
        for r in recs:
            if r.video_id not in self.videos:
                raise UnknownVideo(r.video_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def subjects(self) -> list[str]:
        return sorted({r.subject_id for r in self.records})

    def video_ids(self) -> list[str]:
        """Videos that carry at least one fixation, sorted."""
        return sorted({r.video_id for r in self.records})

    def for_video(self, video_id: str) -> "FixationSet":
        return FixationSet(tuple(r for r in self.records if r.video_id == video_id), self.videos)

    def for_group(self, group: str) -> "FixationSet":
        return FixationSet(tuple(r for r in self.records if r.group == group), self.videos)

    def for_subject(self, subject_id: str) -> "FixationSet":
        return FixationSet(tuple(r for r in self.records if r.subject_id == subject_id), self.videos)

    def by_subject(self) -> dict[str, list[FixationRecord]]:
        out: dict[str, list[FixationRecord]] = {}
        for r in self.records:
            out.setdefault(r.subject_id, []).append(r)
        return out

    def at_frame(self, video_id: str, frame: int) -> list[FixationRecord]:
        return [r for r in self.records if r.video_id == video_id and r.active_at(frame)]

    def frame_index(self, video_id: str) -> dict[int, list[FixationRecord]]:
        """Map frame -> fixations active on it, for one video."""
        out: dict[int, list[FixationRecord]] = {}
        for r in self.records:
            if r.video_id != video_id:
                continue
            for f in range(r.start_frame, r.end_frame + 1):
                out.setdefault(f, []).append(r)
        return out


def load_manifest(data: str | bytes) -> list[VideoMeta]:
    items = json.loads(data)
    if not isinstance(items, list):
        raise GazeError("video manifest must be a JSON array")
    return [VideoMeta.from_dict(d) for d in items]


def dump_manifest(videos: Iterable[VideoMeta]) -> str:
    return json.dumps([v.to_dict() for v in videos], indent=2)


_FIELDS = ("subject", "video", "start_frame", "end_frame", "x", "y", "group")


def _record_from_mapping(d: dict, line: int, videos: dict[str, VideoMeta]) -> FixationRecord:
    try:
        rec = FixationRecord(
            subject_id=str(d["subject"]),
            video_id=str(d["video"]),
            start_frame=int(d["start_frame"]),
            end_frame=int(d["end_frame"]),
            x=float(d["x"]),
            y=float(d["y"]),
            group=str(d.get("group") or "active"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedLine(line, f"({exc})") from None
    if rec.group not in GROUPS:
        raise MalformedLine(line, f"(group {rec.group!r})")
    if not (math.isfinite(rec.x) and math.isfinite(rec.y)):
        raise MalformedLine(line, "(non-finite coordinate)")
    meta = videos.get(rec.video_id)
    if meta is None:
        raise UnknownVideo(rec.video_id, line)
    if not (0 <= rec.x < meta.width and 0 <= rec.y < meta.height):
        raise OutOfBounds(line, f"(x={rec.x}, y={rec.y} outside {meta.width}x{meta.height})")
    if not (0 <= rec.start_frame <= rec.end_frame < meta.frame_count):
        raise OutOfBounds(line, f"(frames {rec.start_frame}-{rec.end_frame} of {meta.frame_count})")
    return rec


def parse_fixation_log(data: bytes | str, fmt: str, manifest: Sequence[VideoMeta]) -> FixationSet:
    """Parse a JSONL or CSV fixation log and validate it against a video manifest.

    Errors carry 1-based line numbers of the offending record (the CSV
    header is line 1).
    """
    if not manifest:
        raise GazeError("video manifest is empty")
    videos = {v.video_id: v for v in manifest}
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    records = []
    if fmt == "jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError:
                raise MalformedLine(lineno, "(invalid JSON)") from None
            if not isinstance(d, dict):
                raise MalformedLine(lineno, "(not an object)")
            records.append(_record_from_mapping(d, lineno, videos))
    elif fmt == "csv":
        if text.strip():
            reader = csv.DictReader(io.StringIO(text))
            missing = [f for f in _FIELDS if f != "group" and f not in (reader.fieldnames or [])]
            if missing:
                raise MalformedLine(1, f"(header lacks {', '.join(missing)})")
            for d in reader:
                records.append(_record_from_mapping(d, reader.line_num, videos))
    else:
        raise ValueError(f"unknown fixation log format {fmt!r}")
    return FixationSet(tuple(records), videos)


def dump_fixations_jsonl(fixations: Iterable[FixationRecord]) -> str:
    return "".join(json.dumps(r.to_dict()) + "\n" for r in fixations)


@dataclass(frozen=True)
class FrameGrid:
    """Non-negative scalar grid over a frame, stored as a (height, width) array."""

    values: np.ndarray
    empty: bool = False

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def gaussian_kernel1d(sigma: float, truncate: float = 4.0) -> np.ndarray:
    radius = max(1, int(math.ceil(truncate * sigma)))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def impulse_accumulator(points: Iterable[tuple[float, float]], shape: tuple[int, int], sigma: float) -> np.ndarray:
    """Blurred impulse image before normalization, as a (height, width) array.

    Unit impulses land at the nearest integer cell and are convolved with a
    separable Gaussian truncated at 4 sigma; mass leaving the grid is lost.
    """
    width, height = shape
    if width <= 0 or height <= 0:
        raise EmptyGrid(f"grid {width}x{height}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    acc = np.zeros((height, width))
    for x, y in points:
        col = min(max(int(round(x)), 0), width - 1)
        row = min(max(int(round(y)), 0), height - 1)
        acc[row, col] += 1.0
    k = gaussian_kernel1d(sigma)
    acc = ndimage.convolve1d(acc, k, axis=0, mode="constant")
    return ndimage.convolve1d(acc, k, axis=1, mode="constant")


def empirical_frame_map(points: Sequence[tuple[float, float]], shape: tuple[int, int], sigma: float) -> FrameGrid:
    """Probability map of one frame from fixated points.

    ``shape`` is (width, height). With no points the uniform grid is returned
    with ``empty`` set.
    """
    width, height = shape
    if width <= 0 or height <= 0:
        raise EmptyGrid(f"grid {width}x{height}")
    if len(points) == 0:
        return FrameGrid(np.full((height, width), 1.0 / (width * height)), empty=True)
    acc = impulse_accumulator(points, shape, sigma)
    total = acc.sum()
    if total <= 0:
        return FrameGrid(np.full((height, width), 1.0 / (width * height)), empty=True)
    return FrameGrid(acc / total)
