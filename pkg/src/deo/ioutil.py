"""Small file helpers shared across modules."""

from __future__ import annotations

import json
import os
import tempfile

from .errors import DuplicateIdError, FormatError

# mkstemp forces 0600; written files should honor the process umask instead
_UMASK = os.umask(0)
os.umask(_UMASK)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a sibling temp file, then rename over the target.

    Readers never observe a half-written file; on failure the original is
    untouched.
    """
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def read_jsonl(path):
    """Yield (lineno, object) for every non-blank line; malformed JSON raises
    FormatError naming the file and line."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc


def load_texts_jsonl(path) -> dict[str, str]:
    """Load {"id": ..., "text": ...} lines into an ordered id -> text map."""
    out: dict[str, str] = {}
    for lineno, obj in read_jsonl(path):
        if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
            raise FormatError(f"{path}:{lineno}: expected an object with 'id' and 'text'")
        doc_id = str(obj["id"])
        if doc_id in out:
            raise DuplicateIdError(f"{path}:{lineno}: duplicate id {doc_id!r}")
        out[doc_id] = str(obj["text"])
    return out
