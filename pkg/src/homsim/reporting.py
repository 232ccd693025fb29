"""Key-value report files and artifact sidecars.

Every artifact the pipeline writes gets a ``<path>.meta`` sidecar carrying
the stage name and the config digest, so downstream stages can verify they
are looking at outputs of the configuration they expect.  The format is
deliberately dumb: one ``key = value`` pair per line, keys unique, values
written with repr-roundtrip precision for floats.  No timestamps anywhere —
reruns must be byte-identical.
"""

from __future__ import annotations

import os

from .ttag import atomic_write_bytes


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_kv(pairs: dict) -> str:
    lines = [f"{k} = {format_value(v)}" for k, v in pairs.items()]
    return "\n".join(lines) + "\n"


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines skip."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def write_kv(path: str, pairs: dict) -> None:
    atomic_write_bytes(path, format_kv(pairs).encode())


def read_kv(path: str) -> dict[str, str]:
    with open(path, "rb") as fh:
        return parse_kv(fh.read().decode())


def sidecar_path(artifact_path: str) -> str:
    return artifact_path + ".meta"


def write_sidecar(artifact_path: str, pairs: dict) -> None:
    write_kv(sidecar_path(artifact_path), pairs)


def read_sidecar(artifact_path: str) -> dict[str, str] | None:
    p = sidecar_path(artifact_path)
    if not os.path.exists(p):
        return None
    return read_kv(p)
