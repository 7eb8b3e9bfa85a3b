"""
Class contexts: descriptive text per class with the class name replaced by [MASK].
"""

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

from constants import CLASS_TOKEN, DEFAULT_TEMPLATE, MASK_FALLBACK_SENTENCE, MASK_TOKEN
from errors import FormatError, InputError
from utils import PathLike, load_structured_file, write_text

logger = logging.getLogger(__name__)


class SupervisionSource(str, Enum):
    """Where a class's text supervision came from."""
    CONTEXT = "context"
    TEMPLATE = "template"
    CLASS_NAME = "class_name"


@dataclass(frozen=True)
class ClassContext:
    """
    Text describing one class.

    replacements counts class-name mentions that were masked; fallback is set
    when no mention was found and a generic [MASK] sentence was appended.
    """

    class_id: int
    class_name: str
    context_text: str
    source: SupervisionSource = SupervisionSource.CONTEXT
    replacements: int = 0
    fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "source", SupervisionSource(self.source))
        if self.source is SupervisionSource.CLASS_NAME:
            if self.context_text != self.class_name or MASK_TOKEN in self.context_text:
                raise InputError(f"class {self.class_id}: class_name context must be the bare class name")
        elif MASK_TOKEN not in self.context_text:
            raise InputError(f"class {self.class_id}: {self.source.value} context has no {MASK_TOKEN}")

    @property
    def mask_count(self) -> int:
        return self.context_text.count(MASK_TOKEN)


def mask_class_mentions(raw_text: str, class_name: str, class_id: int = 0,
                        source: SupervisionSource = SupervisionSource.CONTEXT) -> ClassContext:
    """
    Replace whole-word, case-insensitive mentions of class_name with [MASK].

    Existing [MASK] tokens are kept as they are and never matched.

    Args:
        raw_text: Description of the class
        class_name: Name to mask
        class_id: Class index carried into the result
        source: Supervision source of the text

    Returns:
        ClassContext with the replacement count; if the text ends up with no
        [MASK] at all, the fallback sentence is appended and the context is flagged

    Raises:
        InputError: If the text or the class name is empty
    """
    if not class_name or not class_name.strip():
        raise InputError("class_name must not be empty")
    if not raw_text or not raw_text.strip():
        raise InputError(f"class {class_name!r}: description must not be empty")

    pattern = re.compile(rf"(?<!\w){re.escape(class_name.strip())}(?!\w)", re.IGNORECASE)
    pieces, count = [], 0
    for piece in raw_text.split(MASK_TOKEN):
        piece, n = pattern.subn(MASK_TOKEN, piece)
        pieces.append(piece)
        count += n
    text = MASK_TOKEN.join(pieces)
    fallback = MASK_TOKEN not in text
    if fallback:
        text = f"{text.rstrip()} {MASK_FALLBACK_SENTENCE}"
        logger.warning(f"No mention of {class_name!r} found; appended fallback mask sentence")
    return ClassContext(class_id=class_id, class_name=class_name, context_text=text,
                        source=source, replacements=count, fallback=fallback)


def build_template_context(class_id: int, class_name: str, template: str = DEFAULT_TEMPLATE) -> ClassContext:
    """Fill [CLASS] in a prompt template; the template's own [MASK] is the embedding site."""
    if not class_name or not class_name.strip():
        raise InputError("class_name must not be empty")
    if MASK_TOKEN not in template:
        raise InputError(f"template must contain {MASK_TOKEN}: {template!r}")
    text = template.replace(CLASS_TOKEN, class_name)
    return ClassContext(class_id=class_id, class_name=class_name, context_text=text,
                        source=SupervisionSource.TEMPLATE)


def class_name_context(class_id: int, class_name: str) -> ClassContext:
    """The direct class-name baseline: the text is the name itself."""
    if not class_name or not class_name.strip():
        raise InputError("class_name must not be empty")
    return ClassContext(class_id=class_id, class_name=class_name, context_text=class_name,
                        source=SupervisionSource.CLASS_NAME)


def context_from_entry(class_id: int, name: str, source: str, text: str) -> ClassContext:
    """Build a context from one context-file entry, masking or templating as needed."""
    source = SupervisionSource(source)
    if source is SupervisionSource.CLASS_NAME:
        return ClassContext(class_id=class_id, class_name=name, context_text=text, source=source)
    if source is SupervisionSource.TEMPLATE:
        if MASK_TOKEN in text:
            return ClassContext(class_id=class_id, class_name=name,
                                context_text=text.replace(CLASS_TOKEN, name), source=source)
        return build_template_context(class_id, name, text)
    return mask_class_mentions(text, name, class_id, source)


def load_contexts(path: PathLike) -> Tuple[str, List[ClassContext]]:
    """
    Read a context file.

    Returns:
        Tuple of (task name, contexts ordered as in the file)

    Raises:
        FormatError: On structural problems, naming the offending class
    """
    data = load_structured_file(path)
    if not isinstance(data, dict) or not isinstance(data.get("classes"), list):
        raise FormatError(f"{path}: expected an object with a 'classes' list")
    if not data["classes"]:
        raise FormatError(f"{path}: class list is empty")

    contexts, seen = [], set()
    for entry in data["classes"]:
        try:
            class_id, name, source, text = entry["id"], entry["name"], entry["source"], entry["text"]
        except (KeyError, TypeError):
            raise FormatError(f"{path}: class entries need id, name, source and text: {entry!r}")
        if isinstance(class_id, bool) or not isinstance(class_id, int):
            raise FormatError(f"{path}: class id must be an integer, got {class_id!r}")
        if class_id in seen:
            raise FormatError(f"{path}: duplicate class id {class_id}")
        seen.add(class_id)
        try:
            contexts.append(context_from_entry(class_id, str(name), source, str(text)))
        except (InputError, ValueError) as e:
            raise FormatError(f"{path}: class {class_id}: {e}")
    return str(data.get("task", "")), contexts


def save_contexts(path: PathLike, task: str, contexts: Sequence[ClassContext]) -> None:
    payload = {
        "task": task,
        "classes": [
            {"id": c.class_id, "name": c.class_name, "source": c.source.value, "text": c.context_text}
            for c in contexts
        ],
    }
    write_text(path, json.dumps(payload, indent=2))
