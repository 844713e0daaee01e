"""key=value config files and run manifests."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path) -> dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"), str(path))


def format_kv(items: dict) -> str:
    lines = []
    for key, value in items.items():
        if isinstance(value, (list, tuple)):
            value = json.dumps(list(value))
        elif isinstance(value, bool):
            value = "true" if value else "false"
        text = str(value)
        if "\n" in text or "#" in text:
            raise ValueError(f"value for {key!r} cannot contain newlines or '#'")
        lines.append(f"{key}={text}")
    return "\n".join(lines) + "\n"


def write_kv(items: dict, path) -> None:
    Path(path).write_text(format_kv(items), encoding="utf-8")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


MANIFEST_NAME = "manifest.txt"


def write_manifest(out_dir, command: str, argv: list[str], settings: dict,
                   inputs: dict, outputs: list[str], version: str) -> Path:
    """Record the config snapshot beside a command's outputs.

    ``argv`` is stored so the command can be replayed; output digests let a
    rerun be checked byte for byte.
    """
    out_dir = Path(out_dir)
    items = {"tool": "vcdet", "version": version, "command": command,
             "argv": json.dumps(argv)}
    items.update({f"config.{k}": v for k, v in settings.items()})
    items.update({f"input.{k}": v for k, v in inputs.items()})
    for name in outputs:
        items[f"output.{name}"] = file_sha256(out_dir / name)
    path = out_dir / MANIFEST_NAME
    write_kv(items, path)
    return path


def manifest_argv(path) -> list[str]:
    kv = read_kv(path)
    if kv.get("tool") != "vcdet" or "argv" not in kv:
        raise ValueError(f"{path}: not a vcdet manifest")
    return json.loads(kv["argv"])
