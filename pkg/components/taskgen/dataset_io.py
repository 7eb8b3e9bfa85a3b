"""
Task files: a container whose manifest holds the task spec, class names and array
shapes, followed by support images (<f8), support labels (u1), query images
(<f8) and query labels (u1).
"""

import logging
from pathlib import Path

import numpy as np

from constants import TASK_FORMAT_VERSION
from errors import ConfigError, FormatError, UnsupportedVersionError
from utils import PathLike, array_bytes, read_container, take_array, write_container

from .generator import FewShotTask, TaskSpec, class_patterns

logger = logging.getLogger(__name__)


def save_task(task: FewShotTask, path: PathLike) -> Path:
    """Write a task file; identical tasks produce identical bytes."""
    manifest = {
        "format": TASK_FORMAT_VERSION,
        "spec": task.spec.to_dict(),
        "class_names": list(task.class_names),
        "image_shape": list(task.support_images.shape[1:]),
        "support_count": len(task.support_images),
        "query_count": len(task.query_images),
    }
    blobs = [
        array_bytes(task.support_images, "<f8"),
        array_bytes(task.support_labels, "u1"),
        array_bytes(task.query_images, "<f8"),
        array_bytes(task.query_labels, "u1"),
    ]
    write_container(path, manifest, blobs)
    logger.info(f"Saved task {task.summary()} to {path}")
    return Path(path)


def load_task(path: PathLike) -> FewShotTask:
    """
    Read a task file.

    Raises:
        UnsupportedVersionError: If the version field is not fsadapt-task/1
        FormatError: On truncation or inconsistent contents (with byte offset)
    """
    manifest, payload, base = read_container(path)
    version = manifest.get("format")
    if version != TASK_FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported task format {version!r} "
                                      f"(expected {TASK_FORMAT_VERSION})")
    try:
        spec = TaskSpec.from_dict(manifest["spec"])
        names = tuple(manifest["class_names"])
        shape = tuple(manifest["image_shape"])
        n_support, n_query = int(manifest["support_count"]), int(manifest["query_count"])
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        raise FormatError(f"{path}: invalid manifest: {e}", offset=0)
    if len(names) != spec.n_classes:
        raise FormatError(f"{path}: {len(names)} class names for {spec.n_classes} classes")

    offset = 0
    support_images, offset = take_array(payload, offset, (n_support,) + shape, "<f8", base)
    support_labels, offset = take_array(payload, offset, (n_support, spec.n_classes), "u1", base)
    query_images, offset = take_array(payload, offset, (n_query,) + shape, "<f8", base)
    query_labels, offset = take_array(payload, offset, (n_query, spec.n_classes), "u1", base)
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} trailing bytes", offset=base + offset)
    for labels in (support_labels, query_labels):
        if np.any(labels > 1):
            raise FormatError(f"{path}: labels must be 0 or 1")

    return FewShotTask(spec=spec, class_names=names, patterns=class_patterns(spec),
                       support_images=support_images, support_labels=support_labels,
                       query_images=query_images, query_labels=query_labels)
