"""Plain ``key = value`` configuration files.

One setting per line; ``#`` starts a comment; blank lines are ignored. Keys
use underscores (``sigma_iou``) and match the CLI long flags with dashes
(``--sigma-iou``). Values are kept as strings and typed by the consumer.
"""
from __future__ import annotations

from .errors import ConfigError

# keys understood outside the tracker itself
RUN_KEYS = ("rescale_top50", "match_iou", "thresholds", "seed", "workers")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


def dump_config(values: dict) -> str:
    lines = []
    for k in sorted(values):
        v = values[k]
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
