"""Binary and text file formats: SALM maps, FLOW fields, raw volumes, PGM frames,
the array container used for models, and atomic writes."""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

SALM_MAGIC = b"SALM"
FLOW_MAGIC = b"FLOW"
VOLUME_MAGIC = b"GVOL"
CONTAINER_MAGIC = b"GZKB"
FORMAT_VERSION = 1

NORMALIZATION_CODES = {"per_volume": 0, "per_frame": 1}
_NORMALIZATION_NAMES = {v: k for k, v in NORMALIZATION_CODES.items()}


class FormatError(ValueError):
    pass


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack_volume(magic: bytes, planes: np.ndarray, extra: bytes = b"") -> bytes:
    # planes: (frames, height, width) or (frames, k, height, width)
    frames, height, width = planes.shape[0], planes.shape[-2], planes.shape[-1]
    header = magic + struct.pack("<HIII", FORMAT_VERSION, width, height, frames) + extra
    return header + np.ascontiguousarray(planes, dtype="<f4").tobytes()


def _unpack_header(magic: bytes, data: bytes) -> tuple[int, int, int, int]:
    if data[:4] != magic:
        raise FormatError(f"bad magic {data[:4]!r}, expected {magic!r}")
    version, width, height, frames = struct.unpack_from("<HIII", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}")
    return version, width, height, frames


def encode_salm(frames: np.ndarray, normalization: str) -> bytes:
    """Serialize a (T, H, W) map volume."""
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise FormatError("SALM payload must be (frames, height, width)")
    return _pack_volume(SALM_MAGIC, frames, struct.pack("<B", NORMALIZATION_CODES[normalization]))


def decode_salm(data: bytes) -> tuple[np.ndarray, str]:
    _, width, height, frames = _unpack_header(SALM_MAGIC, data)
    (mode,) = struct.unpack_from("<B", data, 18)
    if mode not in _NORMALIZATION_NAMES:
        raise FormatError(f"unknown normalization code {mode}")
    n = frames * height * width
    if len(data) < 19 + 4 * n:
        raise FormatError("truncated SALM payload")
    body = np.frombuffer(data, dtype="<f4", count=n, offset=19)
    return body.reshape(frames, height, width).astype(np.float64), _NORMALIZATION_NAMES[mode]


def encode_flow(u: np.ndarray, v: np.ndarray) -> bytes:
    """Serialize per-frame flow as two float planes (u then v) per frame."""
    planes = np.stack([u, v], axis=1)
    return _pack_volume(FLOW_MAGIC, planes)


def decode_flow(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    _, width, height, frames = _unpack_header(FLOW_MAGIC, data)
    n = frames * 2 * height * width
    if len(data) < 18 + 4 * n:
        raise FormatError("truncated FLOW payload")
    body = np.frombuffer(data, dtype="<f4", count=n, offset=18)
    planes = body.reshape(frames, 2, height, width).astype(np.float64)
    return planes[:, 0], planes[:, 1]


def encode_volume(volume: np.ndarray) -> bytes:
    """Raw grayscale video volume, (T, H, W) floats."""
    return _pack_volume(VOLUME_MAGIC, np.asarray(volume))


def decode_volume(data: bytes) -> np.ndarray:
    _, width, height, frames = _unpack_header(VOLUME_MAGIC, data)
    n = frames * height * width
    if len(data) < 18 + 4 * n:
        raise FormatError("truncated volume payload")
    body = np.frombuffer(data, dtype="<f4", count=n, offset=18)
    return body.reshape(frames, height, width).astype(np.float64)


def encode_pgm(frame: np.ndarray, maxval: int = 65535) -> bytes:
    """Binary PGM of one frame, values scaled by the frame maximum."""
    frame = np.asarray(frame, dtype=np.float64)
    peak = frame.max() if frame.size else 0.0
    scaled = np.zeros_like(frame) if peak <= 0 else np.clip(frame / peak, 0.0, 1.0) * maxval
    pix = np.rint(scaled).astype(">u2" if maxval > 255 else "u1")
    h, w = frame.shape
    return f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + pix.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) PGM as floats in [0, 1]."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    pos += 1
    if magic == "P5":
        dtype = ">u2" if maxval > 255 else "u1"
        pix = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
    elif magic == "P2":
        pix = np.array(data[pos:].split()[: w * h], dtype=float)
    else:
        raise FormatError(f"not a PGM file ({magic})")
    return pix.reshape(h, w).astype(np.float64) / maxval


def decode_ppm_gray(data: bytes) -> np.ndarray:
    """Read a binary PPM (P6) and convert to luminance in [0, 1]."""
    if data[:2] != b"P6":
        return decode_pgm(data)
    header = data.split(maxsplit=4)
    w, h, maxval = int(header[1]), int(header[2]), int(header[3])
    offset = len(data) - w * h * 3 * (2 if maxval > 255 else 1)
    dtype = ">u2" if maxval > 255 else "u1"
    rgb = np.frombuffer(data, dtype=dtype, offset=offset).reshape(h, w, 3).astype(np.float64) / maxval
    return rgb @ np.array([0.299, 0.587, 0.114])


def read_video(path: str | os.PathLike) -> np.ndarray:
    """Load a video as a (T, H, W) float volume from a .vol file or a directory of PGM/PPM frames."""
    path = Path(path)
    if path.is_dir():
        frames = sorted(p for p in path.iterdir() if p.suffix.lower() in (".pgm", ".ppm"))
        if not frames:
            raise FormatError(f"no PGM/PPM frames in {path}")
        return np.stack([decode_ppm_gray(p.read_bytes()) for p in frames])
    return decode_volume(path.read_bytes())


def encode_container(arrays: Mapping[str, np.ndarray]) -> bytes:
    """Versioned container of named float32 arrays."""
    out = [CONTAINER_MAGIC, struct.pack("<HI", FORMAT_VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f4")
        key = name.encode("utf-8")
        out.append(struct.pack("<H", len(key)) + key)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def decode_container(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != CONTAINER_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}")
    pos = 10
    out = {}
    for _ in range(count):
        (klen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + klen].decode("utf-8")
        pos += klen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 4 * n
    return out


def save_container(path: str | os.PathLike, arrays: Mapping[str, np.ndarray], params: Mapping | None = None) -> None:
    """Write a container plus its JSON sidecar of hyperparameters (``<path>.json``)."""
    atomic_write(path, encode_container(arrays))
    atomic_write(str(path) + ".json", json.dumps(dict(params or {}), indent=2, sort_keys=True))


def load_container(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    arrays = decode_container(Path(path).read_bytes())
    sidecar = Path(str(path) + ".json")
    params = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return arrays, params
