"""Reading and writing spectral-data files, partitions and CSV tables.

A spectral-data file (``.sd``) is a JSON document (YAML is accepted on
input) with fields ``name``, ``t``, ``nu``, ``a``, ``b``, optional ``tail``
and ``generator``, and optionally a ``model`` recipe naming a shipped
construction.  Complex numbers are ``[re, im]`` pairs; reals may be written
bare.  Floats are printed in shortest round-trip form, so a save/load cycle
is exact.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile

import numpy as np
import yaml

from .spectral_core import GENERATOR_FAMILIES, SpectralData, TailRule, generate, validate


class ParseError(ValueError):
    """Malformed input; ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, path: str = "", line: int | None = None,
                 column: int | None = None):
        where = path or "<input>"
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line
        self.column = column


# --------------------------------------------------------------------------
# atomic output


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and a rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x) -> str:
    """Shortest round-trip text for a real number."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------
# spectral data


def _parse_text(text: str, path: str):
    stripped = text.lstrip()
    if stripped.startswith("{") or stripped.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, path, e.lineno, e.colno) from None
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ParseError(str(e.problem or e), path, line, col) from None
    except yaml.YAMLError as e:
        raise ParseError(str(e), path) from None


def _number(v, where: str, path: str, real: bool = False):
    try:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ValueError
            z = complex(float(v[0]), float(v[1]))
        elif isinstance(v, bool):
            raise ValueError
        else:
            z = complex(float(v))
    except (TypeError, ValueError):
        raise ParseError(f"{where}: expected a number or [re, im] pair, got {v!r}", path) from None
    if real:
        if z.imag != 0:
            raise ParseError(f"{where}: expected a real number", path)
        return z.real
    return z


def _vector(doc: dict, key: str, path: str, real: bool = False) -> np.ndarray:
    if key not in doc:
        raise ParseError(f"missing field {key!r}", path)
    v = doc[key]
    if not isinstance(v, list):
        raise ParseError(f"field {key!r} must be a list", path)
    out = [_number(x, f"{key}[{i + 1}]", path, real) for i, x in enumerate(v)]
    return np.array(out, dtype=float if real else complex)


def data_from_dict(doc, path: str = "") -> SpectralData:
    if not isinstance(doc, dict):
        raise ParseError("top level must be a mapping", path)
    name = str(doc.get("name", ""))
    if "generator" in doc:
        g = doc["generator"]
        if not isinstance(g, dict) or "family" not in g:
            raise ParseError("generator needs a 'family'", path)
        if g["family"] not in GENERATOR_FAMILIES:
            raise ParseError(f"unknown generator family {g['family']!r}", path)
        try:
            return generate(g["family"], dict(g.get("params") or {}), name=name)
        except (TypeError, ValueError, KeyError) as e:
            raise ParseError(f"generator: {e}", path) from None
    t = _vector(doc, "t", path)
    nu = _vector(doc, "nu", path, real=True)
    a = _vector(doc, "a", path)
    b = _vector(doc, "b", path)
    tail = None
    if doc.get("tail") is not None:
        tr = doc["tail"]
        if not isinstance(tr, dict) or "family" not in tr:
            raise ParseError("tail needs a 'family'", path)
        try:
            tail = TailRule(tr["family"], dict(tr.get("params") or {}))
        except ValueError as e:
            raise ParseError(f"tail: {e}", path) from None
    return SpectralData(t=t, nu=nu, a=a, b=b, tail=tail, name=name)


def load_document(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ParseError(e.strerror or str(e), path) from None
    return _parse_text(text, path)


def load_data(path: str, check: bool = True) -> SpectralData:
    """Load a spectral-data file; with ``check`` the validation report must be clean."""
    data = data_from_dict(load_document(path), path)
    if check:
        rep = validate(data)
        if not rep.valid:
            raise ParseError(f"invalid spectral data: {rep}", path)
        data = data.canonical()
    return data


def _pair(z) -> list:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def data_to_dict(data: SpectralData, model: dict | None = None) -> dict:
    doc = {
        "name": data.name,
        "t": [_pair(z) for z in data.t],
        "nu": [float(x) for x in data.nu],
        "a": [_pair(z) for z in data.a],
        "b": [_pair(z) for z in data.b],
    }
    if data.tail is not None:
        doc["tail"] = {"family": data.tail.family, "params": data.tail.params}
    if model is not None:
        doc["model"] = model
    return doc


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, allow_nan=True) + "\n"


def save_data(path: str, data: SpectralData, model: dict | None = None) -> None:
    write_atomic(path, dumps(data_to_dict(data, model)))


# --------------------------------------------------------------------------
# partitions


def parse_partition(text: str, count: int, path: str = "") -> np.ndarray:
    """Sides (1 or 2) for ``count`` points of Lambda.

    Each non-blank line is ``index side`` with a 1-based index; ``#`` starts
    a comment.  Unlisted points go to side 2.
    """
    side = np.full(count, 2, dtype=int)
    seen = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        parts = line.replace(",", " ").split()
        col = len(line) - len(line.lstrip()) + 1
        if len(parts) != 2:
            raise ParseError("expected 'index side'", path, ln, col)
        try:
            idx = int(parts[0])
        except ValueError:
            raise ParseError(f"bad index {parts[0]!r}", path, ln, col) from None
        scol = line.index(parts[1], col - 1 + len(parts[0])) + 1
        if parts[1] not in ("1", "2"):
            raise ParseError(f"side must be 1 or 2, got {parts[1]!r}", path, ln, scol)
        if not 1 <= idx <= count:
            raise ParseError(f"index {idx} out of range 1..{count}", path, ln, col)
        if idx in seen:
            raise ParseError(f"index {idx} already assigned on line {seen[idx]}", path, ln, col)
        seen[idx] = ln
        side[idx - 1] = int(parts[1])
    return side


def load_partition(path: str, count: int) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ParseError(e.strerror or str(e), path) from None
    return parse_partition(text, count, path)


def partition_text(side) -> str:
    return "".join(f"{i + 1} {int(s)}\n" for i, s in enumerate(side))
