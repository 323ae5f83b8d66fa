"""Self-describing JSON model containers shared by the MLP and the SVM."""

from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import ParseError, VersionMismatch
from .features import LAYOUT_VERSION

FORMAT_VERSION = 1


def dumps(payload: dict) -> str:
    # sort_keys + repr floats: identical models give identical bytes
    return json.dumps(payload, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_model(path, kind: str, payload: dict) -> None:
    body = {"format": kind, "format_version": FORMAT_VERSION,
            "pipeline_version": LAYOUT_VERSION, **payload}
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps(body), encoding="utf-8")
    os.replace(tmp, path)


def read_model(path, kind: str | None = None) -> dict:
    try:
        body = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file {path} is not valid JSON: {exc.msg}",
                         row=exc.lineno, offset=exc.pos) from None
    if not isinstance(body, dict) or "format" not in body:
        raise ParseError(f"{path} is not a coingrade model file")
    if kind is not None and body["format"] != kind:
        raise ParseError(f"{path} holds a {body['format']!r} model, expected {kind!r}")
    if body.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"model format version {body.get('format_version')} != {FORMAT_VERSION}")
    if body.get("pipeline_version") != LAYOUT_VERSION:
        raise VersionMismatch(
            f"model was built for {body.get('pipeline_version')!r}, this build reads {LAYOUT_VERSION!r}")
    return body


def model_kind(path) -> str:
    return read_model(path)["format"]
