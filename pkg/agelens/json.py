# Copyright © 2024 age-lens contributors
# SPDX-License-Identifier: MIT

from typing import Any, Dict, Iterable, Iterator, Optional, Type

import hashlib
import json
import re
from enum import Enum
from importlib import import_module
from os import fspath, makedirs, path

from . import core

COMMENTS_RE = re.compile(r"^\s*//.*$", re.MULTILINE)
def uncomment(s):
    return COMMENTS_RE.sub("", s)

def loads(s, **kwargs):
    """Load a JSON document from string `s`, ignoring // comments."""
    return json.loads(uncomment(s), **kwargs)

def dumps(js):
    return json.dumps(js, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

KNOWN_COMPRESSIONS = {
    ".gz": "gzip",
    ".xz": "lzma",
}

def open_text(fpath, mode="rt", errors="strict"):
    """Open `fpath` as UTF-8 text, decompressing based on its extension.

    Pass ``errors="surrogateescape"`` to read undecodable bytes through, then
    check each line with `decode_line`.
    """
    fpath = fspath(fpath)
    mod = KNOWN_COMPRESSIONS.get(path.splitext(fpath)[1])
    if "w" in mode:
        parent = path.dirname(path.abspath(fpath))
        makedirs(parent, exist_ok=True)
    if mod is None:
        return open(fpath, mode=mode.replace("t", ""), encoding="utf-8", errors=errors)
    return import_module(mod).open(fpath, mode=mode, encoding="utf-8", errors=errors) # type: ignore

def decode_line(line: str) -> str:
    r"""Reject a line read with ``errors="surrogateescape"`` if it held invalid UTF-8.

    >>> decode_line("caf\u00e9")
    'café'
    >>> decode_line("caf\udce9")
    Traceback (most recent call last):
    ...
    UnicodeDecodeError: 'utf-8' codec can't decode byte 0xe9 in position 3: unexpected end of data
    """
    return line.encode("utf-8", "surrogateescape").decode("utf-8")

class RecordSerializer:
    """Convert namedtuples, enums and containers to and from plain JSON.

    >>> from .core import Rating
    >>> enc = RecordSerializer.encode([Rating("u", "i", 5, 3)]); enc
    [{'user_id': 'u', 'item_id': 'i', 'rating': 5, 'day': 3}]
    >>> RecordSerializer.decode(Rating, enc[0])
    Rating(user_id='u', item_id='i', rating=5, day=3)
    """
    @staticmethod
    def encode(obj) -> Any:
        if isinstance(obj, Enum):
            return obj.value
        if hasattr(obj, "_fields"):
            return {k: RecordSerializer.encode(v) for k, v in zip(obj._fields, obj)}
        if isinstance(obj, (list, tuple)):
            return [RecordSerializer.encode(x) for x in obj]
        if isinstance(obj, dict):
            return {str(k): RecordSerializer.encode(v) for k, v in obj.items()}
        if hasattr(obj, "item"): # numpy scalars
            return obj.item()
        assert obj is None or isinstance(obj, (bool, int, float, str)), type(obj)
        return obj

    @staticmethod
    def decode(cls: Type, js: Dict[str, Any]):
        fields = getattr(cls, "_field_types", None) or getattr(cls, "__annotations__", {})
        kwargs = {}
        for name, value in js.items():
            if name not in cls._fields:
                raise core.DataError(cls.__name__, "unexpected field {!r}".format(name))
            ftype = fields.get(name)
            if isinstance(ftype, type) and issubclass(ftype, Enum):
                value = ftype(value)
            kwargs[name] = value
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise core.DataError(cls.__name__, str(e)) from e

def dump_records(records: Iterable[Any], fpath):
    with open_text(fpath, "wt") as f:
        for record in records:
            f.write(json.dumps(RecordSerializer.encode(record), ensure_ascii=False))
            f.write("\n")

def load_records(cls: Type, fpath) -> Iterator[Any]:
    with open_text(fpath, "rt", errors="surrogateescape") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                js = json.loads(decode_line(line))
            except ValueError as e:
                raise core.DataError("{}:{}".format(fpath, lineno), str(e)) from e
            yield RecordSerializer.decode(cls, js)

def dump_json(js, fpath):
    with open_text(fpath, "wt") as f:
        f.write(dumps(RecordSerializer.encode(js)))

def load_json(fpath):
    try:
        with open_text(fpath, "rt") as f:
            return loads(f.read())
    except ValueError as e: # JSONDecodeError and UnicodeDecodeError
        raise core.DataError(fpath, "not a JSON document ({})".format(e)) from e

# Stage stamps
# ============

def file_digest(fpath, chunk_size=1 << 20):
    h = hashlib.sha256()
    with open(fspath(fpath), mode="rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            h.update(chunk)
    return h.hexdigest()

class BaseCache:
    def fresh(self) -> bool:
        raise NotImplementedError

    def stamp(self):
        raise NotImplementedError

class StageCache(BaseCache):
    """Content-addressed record of how a stage output was produced.

    The digest covers the stage name, its parameters, and the bytes of every
    input file; an output whose stamp matches the current digest is reused.
    """
    STAMP_VERSION = "1"

    def __init__(self, stage: str, output: str, params: Dict[str, Any], inputs: Iterable[str]):
        self.stage, self.output = stage, fspath(output)
        self.stamp_file = self.output + ".stamp.json"
        self.metadata = {"stage": stage,
                         "params": self.normalize(params),
                         "inputs": {fspath(i): file_digest(i) for i in sorted(inputs) if i},
                         "stamp_version": self.STAMP_VERSION}
        self.digest = hashlib.sha256(
            json.dumps(self.metadata, sort_keys=True).encode("utf-8")).hexdigest()

    @staticmethod
    def normalize(obj: Any) -> Any:
        if isinstance(obj, (list, tuple)):
            return [StageCache.normalize(o) for o in obj]
        if isinstance(obj, dict):
            return {str(k): StageCache.normalize(v) for (k, v) in sorted(obj.items())}
        if isinstance(obj, Enum):
            return obj.value
        return obj

    def _read(self) -> Optional[Dict[str, Any]]:
        try:
            with open(self.stamp_file, encoding="utf-8") as f:
                return json.load(f)
        except (FileNotFoundError, ValueError):
            return None

    def fresh(self):
        if not path.exists(self.output):
            return False
        data = self._read()
        return data is not None and data.get("digest") == self.digest

    def stamp(self):
        with open(self.stamp_file, mode="w", encoding="utf-8") as f:
            json.dump({"digest": self.digest, "metadata": self.metadata}, f,
                      indent=2, sort_keys=True)

class DummyCache(BaseCache):
    def __init__(self, *_args):
        pass

    def fresh(self):
        return False

    def stamp(self):
        pass

def Cache(stage, output, params, inputs) -> BaseCache:
    cls = StageCache if output not in (None, "-") else DummyCache
    return cls(stage, output, params, inputs)
