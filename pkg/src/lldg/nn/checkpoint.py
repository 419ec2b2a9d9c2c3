"""Checkpoint files: named arrays plus JSON metadata in one ``.npz`` archive.

Layout (format ``lldg-checkpoint/1``):

* ``__format__``  -- 0-d unicode array holding the format tag
* ``__meta__``    -- 0-d unicode array holding a JSON object
* ``param/<name>`` -- little-endian float64 parameter arrays
* ``optim/<name>`` -- optimizer state arrays (float64 or int64, little-endian)

Arrays are stored uncompressed in the ``.npy`` format, which records dtype
and byte order in its header, so values round-trip bit-exactly.
"""
import json
import os

import numpy as np

__all__ = ["FORMAT", "save_checkpoint", "load_checkpoint"]

FORMAT = "lldg-checkpoint/1"


def _le(a):
    a = np.asarray(a)
    return a.astype(a.dtype.newbyteorder("<"), copy=False)


def save_checkpoint(path, params, metadata=None, optimizer_state=None):
    """Write ``params`` (name -> array) and metadata to ``path``."""
    arrays = {"__format__": np.array(FORMAT), "__meta__": np.array(json.dumps(metadata or {}, sort_keys=True))}
    for name, value in params.items():
        arrays[f"param/{name}"] = _le(np.asarray(value, dtype=np.float64))
    for name, value in (optimizer_state or {}).items():
        arrays[f"optim/{name}"] = _le(value)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Return ``(params, metadata, optimizer_state)`` from a checkpoint file."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        fmt = str(z["__format__"]) if "__format__" in z.files else None
        if fmt != FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {fmt!r}")
        meta = json.loads(str(z["__meta__"]))
        params, optim = {}, {}
        for key in z.files:
            if key.startswith("param/"):
                params[key[len("param/"):]] = z[key]
            elif key.startswith("optim/"):
                optim[key[len("optim/"):]] = z[key]
    return params, meta, optim
