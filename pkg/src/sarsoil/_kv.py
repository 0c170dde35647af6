"""Tiny ``key=value`` text files (model bundles, CLI config)."""

from pathlib import Path

import numpy as np

from .exceptions import FormatError


def read_kv(path):
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected key=value", lineno, path=path)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise FormatError("empty key", lineno, path=path)
        out[key] = value
    return out


def write_kv(mapping, path):
    lines = [
        f"{k}={float(v)!r}" if isinstance(v, (float, np.floating)) else f"{k}={v}"
        for k, v in mapping.items()
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def float_fields(mapping, keys, path):
    try:
        return {k: float(mapping[k]) for k in keys if k in mapping}
    except ValueError as exc:
        raise FormatError(f"bad number: {exc}", path=path) from None
