"""Output formatting, grids and atomic file writes for the command line."""

import json
import math
import os
import re
import tempfile

_RANGE = re.compile(r"^\s*([-+0-9.eE]+)\s*\.\.\s*([-+0-9.eE]+)\s*:\s*([-+0-9.eE]+)\s*$")


def fmt(v):
    """Render a value for CSV/JSON; floats carry 17 significant digits."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return f"{v:.17g}"
    return str(v)


def to_csv(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _json(v, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{_json(str(k), indent, level + 1)}: {_json(x, indent, level + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        items = [pad + _json(x, indent, level + 1) for x in v]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(v, str):
        return json.dumps(v, ensure_ascii=False)
    if v is None:
        return "null"
    if hasattr(v, "item"):  # numpy scalar
        v = v.item()
    return fmt(v)


def to_json(obj, indent=2):
    return _json(obj, indent, 0) + "\n"


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.path.abspath(path)
    d = os.path.dirname(path)
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def parse_grid(text):
    """Parse ``1,2,3`` or ``a..b:step`` (inclusive), or a comma list mixing both."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise ValueError(f"empty entry in grid {text!r}")
        m = _RANGE.match(part)
        if m:
            a, b, step = (float(t) for t in m.groups())
            if not step > 0:
                raise ValueError(f"range step must be positive in {part!r}")
            if b < a:
                raise ValueError(f"empty range {part!r}")
            k = int(math.floor((b - a) / step + 1e-9))
            out.extend(a + i * step for i in range(k + 1))
        elif ".." in part or ":" in part:
            raise ValueError(f"malformed range {part!r}, expected a..b:step")
        else:
            out.append(float(part))
    if not out:
        raise ValueError("empty grid")
    return out


def sidecar(path, suffix):
    root, ext = os.path.splitext(path)
    return f"{root}.{suffix}{ext or '.csv'}"
