"""Named parameter tensors, seeded initialization, and checkpoint files."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT_VERSION = 1


class ParamError(ValueError):
    pass


class ParamTensor:
    """A named weight array with a same-shaped gradient accumulator."""

    __slots__ = ("name", "values", "grad")

    def __init__(self, name: str, values: np.ndarray):
        self.name = name
        self.values = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ParamError(f"non-finite values in parameter {name!r}")
        self.grad = np.zeros_like(self.values)

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self) -> None:
        self.grad[:] = 0.0

    def __repr__(self):
        return f"ParamTensor({self.name!r}, shape={self.values.shape})"


def uniform_init(name: str, shape: tuple[int, ...], rng: np.random.Generator) -> ParamTensor:
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; fan_in is the last axis."""
    fan_in = shape[-1]
    bound = 1.0 / np.sqrt(fan_in)
    return ParamTensor(name, rng.uniform(-bound, bound, size=shape))


class ParamStore:
    """Ordered mapping of parameter name to tensor."""

    def __init__(self, tensors: list[ParamTensor] | None = None):
        self._tensors: dict[str, ParamTensor] = {}
        for t in tensors or []:
            self.add(t)

    def add(self, tensor: ParamTensor) -> ParamTensor:
        if tensor.name in self._tensors:
            raise ParamError(f"duplicate parameter name {tensor.name!r}")
        self._tensors[tensor.name] = tensor
        return tensor

    def __getitem__(self, name: str) -> ParamTensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors.values())

    def names(self) -> list[str]:
        return list(self._tensors)

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def signature(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(t.shape) for name, t in self._tensors.items()}


def save_checkpoint(path: str | Path, store: ParamStore, meta: dict | None = None) -> None:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "meta": meta or {},
        "names": store.names(),
    }
    arrays = {f"param/{name}": store[name].values for name in store.names()}
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.frombuffer(json.dumps(doc).encode("utf-8"), dtype=np.uint8), **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path, expected_signature: dict[str, tuple[int, ...]] | None = None):
    """Returns (ParamStore, meta). Fails loudly on name or shape mismatch."""
    with np.load(Path(path)) as npz:
        if "__meta__" not in npz:
            raise ParamError(f"{path}: not a checkpoint file (missing meta block)")
        doc = json.loads(bytes(npz["__meta__"]).decode("utf-8"))
        if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ParamError(f"{path}: unsupported checkpoint format_version {doc.get('format_version')!r}")
        store = ParamStore()
        for name in doc["names"]:
            key = f"param/{name}"
            if key not in npz:
                raise ParamError(f"{path}: checkpoint is missing array for {name!r}")
            store.add(ParamTensor(name, npz[key]))
    if expected_signature is not None:
        got = store.signature()
        if set(got) != set(expected_signature):
            missing = sorted(set(expected_signature) - set(got))
            extra = sorted(set(got) - set(expected_signature))
            raise ParamError(f"{path}: parameter names mismatch (missing={missing}, unexpected={extra})")
        for name, shape in expected_signature.items():
            if tuple(got[name]) != tuple(shape):
                raise ParamError(f"{path}: shape mismatch for {name!r}: {got[name]} != expected {tuple(shape)}")
    return store, doc["meta"]
