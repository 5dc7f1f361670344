"""
Storage - Atomic writes and versioned JSON model documents

Every file gaitid produces goes through atomic_write(): the payload is
written to "<path>.tmp" and swapped in with os.replace, so a crash never
leaves a half-written report or model behind.
"""
import json
import logging
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, Union

import numpy as np

from gaitid.errors import ParseError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

PathLike = Union[str, Path]


@contextmanager
def atomic_write(path: PathLike, force: bool = False, mode: str = "w") -> Iterator[Any]:
    """
    Open a temp file next to ``path`` and atomically move it into place on success.

    Args:
        path: Final destination
        force: Allow replacing an existing file
        mode: "w" for text, "wb" for bytes

    Raises:
        FileExistsError: If the destination exists and force is False

    Example:
        >>> with atomic_write("out/report.json", force=True) as fh:
        ...     fh.write("{}")
    """
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} already exists (use --force to overwrite)")
    path.parent.mkdir(parents=True, exist_ok=True)

    temp_path = path.with_name(path.name + ".tmp")
    encoding = None if "b" in mode else "utf-8"
    try:
        with open(temp_path, mode, encoding=encoding, newline=None if "b" in mode else "") as fh:
            yield fh
        # os.replace is atomic on POSIX and Windows
        os.replace(temp_path, path)
    except BaseException:
        if temp_path.exists():
            temp_path.unlink()
        raise


def write_text(path: PathLike, text: str, force: bool = False) -> Path:
    """Atomically write a text file and return its path."""
    with atomic_write(path, force=force) as fh:
        fh.write(text)
    return Path(path)


def matrix_to_doc(matrix: np.ndarray) -> Dict[str, Any]:
    """Encode a 1-D or 2-D array as a row-major document with a dimensions header."""
    array = np.asarray(matrix, dtype=float)
    if array.ndim == 1:
        array = array.reshape(1, -1) if array.size else array.reshape(0, 0)
        return {"rows": 1, "cols": int(array.shape[1]), "vector": True, "data": array.ravel().tolist()}
    rows, cols = array.shape
    return {"rows": int(rows), "cols": int(cols), "data": array.ravel(order="C").tolist()}


def matrix_from_doc(doc: Dict[str, Any]) -> np.ndarray:
    """Inverse of matrix_to_doc."""
    data = np.asarray(doc["data"], dtype=float)
    rows, cols = int(doc["rows"]), int(doc["cols"])
    if data.size != rows * cols:
        raise ParseError(f"matrix payload has {data.size} values, header says {rows}x{cols}")
    if doc.get("vector"):
        return data.reshape(cols)
    return data.reshape(rows, cols)


def save_document(path: PathLike, kind: str, payload: Dict[str, Any], force: bool = False) -> Path:
    """
    Save a versioned model document.

    Args:
        path: Destination JSON file
        kind: Document kind ("esp", "pca", "kelm", "normalizer", "bundle", ...)
        payload: JSON-serializable body (use matrix_to_doc for arrays)
        force: Allow overwriting

    Returns:
        Path written
    """
    document = {"format": f"gaitid/{kind}", "version": FORMAT_VERSION}
    document.update(payload)
    return write_text(path, json.dumps(document, indent=2, sort_keys=False), force=force)


def load_document(path: PathLike, kind: str) -> Dict[str, Any]:
    """
    Load a versioned model document and check its kind and version.

    Raises:
        ParseError: If the file is not a gaitid document of the expected kind
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            document = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno) from exc

    expected = f"gaitid/{kind}"
    if document.get("format") != expected:
        raise ParseError(f"expected a {expected} document, found {document.get('format')!r}", path=str(path))
    if document.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported {expected} version {document.get('version')!r}", path=str(path))
    return document
