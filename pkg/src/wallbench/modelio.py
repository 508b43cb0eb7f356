"""Versioned model container.

A model file is a zip archive holding ``header.json`` (format name, version,
model kind, JSON metadata) and one ``.npy`` member per array. Member order and
timestamps are fixed, so identical models produce identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import ValidationError

__all__ = ["MODEL_FORMAT", "MODEL_VERSION", "save_model", "load_model"]

MODEL_FORMAT = "wallbench-model"
MODEL_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _member(name):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def save_model(path, kind: str, meta: dict, arrays: dict) -> None:
    header = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": kind, "meta": meta,
              "arrays": sorted(arrays)}
    with zipfile.ZipFile(Path(path), "w") as zf:
        zf.writestr(_member("header.json"), json.dumps(header, indent=1, sort_keys=True) + "\n")
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            zf.writestr(_member(f"{name}.npy"), buf.getvalue())


def load_model(path) -> tuple[str, dict, dict]:
    """Read a container; returns ``(kind, meta, arrays)``."""
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json").decode("utf-8"))
            if header.get("format") != MODEL_FORMAT:
                raise ValidationError(f"{path}: not a {MODEL_FORMAT} file")
            if header.get("version") != MODEL_VERSION:
                raise ValidationError(f"{path}: unsupported model version {header.get('version')}")
            arrays = {}
            for name in header["arrays"]:
                arrays[name] = np.lib.format.read_array(io.BytesIO(zf.read(f"{name}.npy")), allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: corrupt model file ({exc})") from exc
    return header["kind"], header["meta"], arrays
