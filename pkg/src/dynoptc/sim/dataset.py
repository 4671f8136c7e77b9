"""Buffer datasets stored as plain text.

Each buffer is a header line ``name kind extent`` followed by ``extent``
whitespace-separated values (line breaks are not significant). Kinds are
``int``, ``long``, or ``float``. Blank lines and ``#`` comment lines between
buffers are ignored.
"""

from __future__ import annotations

from pathlib import Path

_KINDS = ("int", "long", "float")


class DatasetError(ValueError):
    pass


def parse_dataset(text: str, source: str = "<dataset>") -> dict[str, tuple[str, list]]:
    tokens: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens.extend(stripped.split())

    out: dict[str, tuple[str, list]] = {}
    i = 0
    while i < len(tokens):
        if i + 3 > len(tokens):
            raise DatasetError(f"{source}: truncated buffer header near "
                               f"'{' '.join(tokens[i:])}'")
        name, kind, extent_text = tokens[i], tokens[i + 1], tokens[i + 2]
        if kind not in _KINDS:
            raise DatasetError(f"{source}: unknown element kind '{kind}' "
                               f"for buffer '{name}'")
        try:
            extent = int(extent_text)
        except ValueError:
            raise DatasetError(f"{source}: bad extent '{extent_text}' "
                               f"for buffer '{name}'") from None
        if extent < 0:
            raise DatasetError(f"{source}: negative extent for buffer '{name}'")
        i += 3
        if i + extent > len(tokens):
            raise DatasetError(f"{source}: buffer '{name}' declares {extent} "
                               f"values but only {len(tokens) - i} remain")
        conv = float if kind == "float" else int
        try:
            values = [conv(t) for t in tokens[i:i + extent]]
        except ValueError as e:
            raise DatasetError(f"{source}: bad value in buffer '{name}': {e}") \
                from None
        i += extent
        if name in out:
            raise DatasetError(f"{source}: duplicate buffer '{name}'")
        out[name] = (kind, values)
    return out


def load_dataset(path) -> dict[str, tuple[str, list]]:
    p = Path(path)
    return parse_dataset(p.read_text(), source=str(p))


def format_dataset(buffers: dict[str, tuple[str, list]]) -> str:
    lines = []
    for name, (kind, values) in buffers.items():
        lines.append(f"{name} {kind} {len(values)}")
        for start in range(0, len(values), 16):
            chunk = values[start:start + 16]
            lines.append(" ".join(repr(v) if kind == "float" else str(v)
                                  for v in chunk))
    return "\n".join(lines) + "\n"


def save_dataset(path, buffers: dict[str, tuple[str, list]]) -> None:
    Path(path).write_text(format_dataset(buffers))
