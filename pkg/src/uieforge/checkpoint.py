"""Single-file checkpoint archive.

Layout::

    uieforge-ckpt-v1\\n
    manifest-bytes <n>\\n
    <n bytes of manifest text>
    <raw little-endian tensor bytes>

Each manifest line is ``name<TAB>dtype<TAB>shape<TAB>offset<TAB>nbytes`` with
``shape`` comma separated (empty for scalars) and ``offset`` relative to the
start of the data block.  A final ``#meta<TAB><json>`` line carries run
metadata (config, step counters, RNG state).
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import torch

MAGIC = "uieforge-ckpt-v1"

_DTYPES = {
    torch.float32: "float32",
    torch.float64: "float64",
    torch.int64: "int64",
    torch.uint8: "uint8",
}
_NP = {"float32": "<f4", "float64": "<f8", "int64": "<i8", "uint8": "u1"}


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, tensors: dict[str, torch.Tensor], meta: dict | None = None) -> None:
    lines, blobs, offset = [], [], 0
    for name in sorted(tensors):
        if any(c in name for c in "\t\n"):
            raise CheckpointError(f"illegal character in tensor name {name!r}")
        t = tensors[name].detach().cpu().contiguous()
        if t.dtype not in _DTYPES:
            raise CheckpointError(f"{name}: unsupported dtype {t.dtype}")
        kind = _DTYPES[t.dtype]
        raw = t.numpy().astype(_NP[kind], copy=False).tobytes()
        shape = ",".join(str(s) for s in t.shape)
        lines.append(f"{name}\t{kind}\t{shape}\t{offset}\t{len(raw)}")
        blobs.append(raw)
        offset += len(raw)
    lines.append("#meta\t" + json.dumps(meta or {}, sort_keys=True))
    manifest = ("\n".join(lines) + "\n").encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"{MAGIC}\nmanifest-bytes {len(manifest)}\n".encode("ascii"))
        fh.write(manifest)
        for raw in blobs:
            fh.write(raw)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, torch.Tensor], dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    head, _, rest = data.partition(b"\n")
    if head.decode("ascii", "replace") != MAGIC:
        raise CheckpointError(f"{path}: bad header {head[:40]!r}, expected {MAGIC!r}")
    sizeline, _, rest = rest.partition(b"\n")
    try:
        tag, n = sizeline.decode("ascii").split(" ")
        n = int(n)
        assert tag == "manifest-bytes"
    except (ValueError, AssertionError, UnicodeDecodeError):
        raise CheckpointError(f"{path}: malformed manifest size line {sizeline[:40]!r}") from None
    if len(rest) < n:
        raise CheckpointError(f"{path}: manifest truncated ({len(rest)} < {n} bytes)")
    manifest, body = rest[:n].decode("utf-8"), rest[n:]
    tensors: dict[str, torch.Tensor] = {}
    meta: dict = {}
    for lineno, line in enumerate(manifest.splitlines(), 1):
        if line.startswith("#meta\t"):
            meta = json.loads(line[6:])
            continue
        try:
            name, kind, shape, off, nbytes = line.split("\t")
            off, nbytes = int(off), int(nbytes)
            dims = tuple(int(s) for s in shape.split(",")) if shape else ()
            dtype = _NP[kind]
        except (ValueError, KeyError):
            raise CheckpointError(f"{path}: manifest line {lineno} malformed: {line[:80]!r}") from None
        if off + nbytes > len(body):
            raise CheckpointError(
                f"{path}: tensor {name} needs bytes {off}..{off + nbytes}, data block has {len(body)}"
            )
        arr = np.frombuffer(body, dtype=dtype, count=nbytes // np.dtype(dtype).itemsize, offset=off)
        if arr.size != int(np.prod(dims)):
            raise CheckpointError(f"{path}: tensor {name} size {arr.size} does not match shape {dims}")
        tensors[name] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="), copy=True).reshape(dims))
    return tensors, meta
