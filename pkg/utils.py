"""Utility functions shared by the toolkit components."""

import json
import logging
import struct
import yaml
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np

from constants import CONTAINER_HEADER_BYTES
from errors import FormatError, OutputExistsError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def load_structured_file(path: PathLike) -> Any:
    """
    Load a JSON document, or YAML when the suffix is .yml/.yaml.

    Raises:
        FormatError: If the file cannot be parsed
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in (".yml", ".yaml"):
            return yaml.safe_load(text)
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON: {e.msg}", offset=e.pos)
    except yaml.YAMLError as e:
        raise FormatError(f"{path}: invalid YAML: {e}")


def ensure_writable(path: PathLike, force: bool = False) -> Path:
    """
    Refuse to clobber an existing output unless forced.

    Args:
        path: Output file or directory
        force: Allow overwriting

    Returns:
        The output path

    Raises:
        OutputExistsError: If the path exists and force is False
    """
    path = Path(path)
    if path.exists() and not force:
        raise OutputExistsError(f"Output already exists: {path} (use --force to overwrite)")
    return path


def write_text(path: PathLike, text: str) -> Path:
    """Write text with a trailing newline, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not text.endswith("\n"):
        text += "\n"
    path.write_text(text, encoding="utf-8")
    return path


def write_json(path: PathLike, payload: Any) -> Path:
    """Write a deterministic (sorted, indented) JSON document."""
    return write_text(path, json.dumps(payload, indent=2, sort_keys=True))


# ============================================================================
# Binary Containers
# ============================================================================
# Layout: <u64 little-endian manifest length><manifest JSON, utf-8><blobs...>
# The manifest describes every blob; blobs are concatenated in manifest order.


def write_container(path: PathLike, manifest: Dict[str, Any], blobs: Sequence[bytes]) -> Path:
    """
    Write a manifest-plus-blobs container file.

    Args:
        path: Destination file
        manifest: JSON-serializable manifest (serialized with sorted keys)
        blobs: Raw byte blobs appended after the manifest

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)
    return path


def read_container(path: PathLike) -> Tuple[Dict[str, Any], bytes, int]:
    """
    Read a container written by write_container.

    Returns:
        Tuple of (manifest, payload bytes following the manifest, file offset of the payload)

    Raises:
        FormatError: On truncation or an unparseable manifest
    """
    raw = Path(path).read_bytes()
    if len(raw) < CONTAINER_HEADER_BYTES:
        raise FormatError(f"{path}: truncated header", offset=len(raw))

    (length,) = struct.unpack("<Q", raw[:CONTAINER_HEADER_BYTES])
    end = CONTAINER_HEADER_BYTES + length
    if end > len(raw):
        raise FormatError(f"{path}: truncated manifest (expected {length} bytes)", offset=len(raw))

    try:
        manifest = json.loads(raw[CONTAINER_HEADER_BYTES:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        pos = getattr(e, "pos", None) or getattr(e, "start", 0)
        raise FormatError(f"{path}: unreadable manifest", offset=CONTAINER_HEADER_BYTES + pos)
    if not isinstance(manifest, dict):
        raise FormatError(f"{path}: manifest must be a JSON object", offset=CONTAINER_HEADER_BYTES)
    return manifest, raw[end:], end


def take_array(payload: bytes, offset: int, shape: Sequence[int], dtype: str, base_offset: int = 0) -> Tuple[np.ndarray, int]:
    """
    Slice a typed array out of a container payload.

    Args:
        payload: Bytes following the manifest
        offset: Read position within payload
        shape: Array shape
        dtype: Little-endian numpy dtype string ('<f8' or 'u1')
        base_offset: File offset of the payload start (for error messages)

    Returns:
        Tuple of (array copy, next offset)
    """
    dt = np.dtype(dtype)
    count = int(np.prod(shape, dtype=np.int64)) if len(shape) else 1
    nbytes = count * dt.itemsize
    if offset + nbytes > len(payload):
        raise FormatError("truncated data blob", offset=base_offset + len(payload))
    array = np.frombuffer(payload, dtype=dt, count=count, offset=offset).reshape(tuple(shape)).copy()
    return array, offset + nbytes


def array_bytes(array: np.ndarray, dtype: str) -> bytes:
    """Serialize an array as contiguous little-endian bytes."""
    return np.ascontiguousarray(array, dtype=np.dtype(dtype)).tobytes()


def format_duration(seconds: float) -> str:
    """
    Format seconds into a human-readable duration.

    Args:
        seconds: Number of seconds

    Returns:
        Formatted string like "2m 5s" or "1.3s"
    """
    if seconds >= 60:
        minutes = int(seconds // 60)
        return f"{minutes}m {int(seconds - 60 * minutes)}s"
    return f"{seconds:.1f}s"