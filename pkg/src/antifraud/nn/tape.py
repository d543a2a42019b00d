"""Reverse-mode tape over the handful of primitives the policies need.

Forward ops append records; `backward` replays them in exact reverse order.
Max aggregations store their argmax routing, so gradients are exact
subgradients with deterministic tie handling (lowest input index wins).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .backend import kernels as default_kernels
from .params import ParamTensor


class TapeError(ValueError):
    pass


class Value:
    """A node in the recorded computation: an ndarray plus a grad slot."""

    __slots__ = ("data", "grad", "param", "needs")

    def __init__(self, data, param: Optional[ParamTensor] = None, needs: bool = False):
        self.data = data
        self.grad = None
        self.param = param
        self.needs = needs or param is not None

    def __repr__(self):
        return f"Value(shape={np.shape(self.data)}, needs={self.needs})"


class Tape:
    def __init__(self, kernels=None):
        self.kernels = kernels or default_kernels
        self.records: list[tuple] = []  # (op, output, inputs, aux)

    # -- leaves ---------------------------------------------------------------

    def const(self, data) -> Value:
        return Value(np.asarray(data, dtype=np.float64))

    def param(self, tensor: ParamTensor) -> Value:
        return Value(tensor.values, param=tensor)

    def _emit(self, op: str, out: Value, inputs: tuple, aux=None) -> Value:
        out.needs = out.needs or any(v.needs for v in inputs)
        self.records.append((op, out, inputs, aux))
        return out

    # -- vector primitives ------------------------------------------------------

    def affine(self, W: Value, x: Value, b: Optional[Value] = None) -> Value:
        if W.data.shape[1] != x.data.shape[0]:
            raise TapeError(f"affine shape mismatch: {W.data.shape} @ {x.data.shape}")
        y = W.data @ x.data
        if b is not None:
            if b.data.shape != y.shape:
                raise TapeError(f"affine bias shape mismatch: {b.data.shape} vs {y.shape}")
            y = y + b.data
        return self._emit("affine", Value(y), (W, x) if b is None else (W, x, b))

    def tanh(self, x: Value) -> Value:
        return self._emit("tanh", Value(np.tanh(x.data)), (x,))

    def set_max(self, xs: list[Value], width: int) -> Value:
        """Element-wise max over a set of equal-width vectors; empty set gives
        the zero vector and passes no gradient."""
        if not xs:
            return Value(np.zeros(width, dtype=np.float64))
        stack = np.stack([v.data for v in xs])
        arg = stack.argmax(axis=0)  # first max = lowest input index
        out = stack[arg, np.arange(stack.shape[1])]
        return self._emit("set_max", Value(out), tuple(xs), arg)

    def concat(self, xs: list[Value]) -> Value:
        out = np.concatenate([v.data for v in xs])
        widths = [v.data.shape[0] for v in xs]
        return self._emit("concat", Value(out), tuple(xs), widths)

    def masked_softmax(self, logits: Value, mask: np.ndarray) -> Value:
        """Probabilities that are exactly zero on masked entries."""
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise TapeError("masked_softmax: all actions masked")
        shifted = np.where(mask, logits.data, -np.inf)
        shifted = shifted - shifted.max()
        expl = np.exp(shifted)
        probs = expl / expl.sum()
        return self._emit("masked_softmax", Value(probs), (logits,), mask)

    def log_masked_softmax_pick(self, logits: Value, mask: np.ndarray, index: int) -> Value:
        """log softmax(logits within mask)[index], fused for stability."""
        mask = np.asarray(mask, dtype=bool)
        if not mask[index]:
            raise TapeError(f"picked action {index} is masked")
        shifted = np.where(mask, logits.data, -np.inf)
        m = shifted.max()
        expl = np.exp(shifted - m)
        z = expl.sum()
        probs = expl / z
        logp = logits.data[index] - m - np.log(z)
        return self._emit("log_pick", Value(np.float64(logp)), (logits,), (probs, index))

    def dot(self, a: Value, b: Value) -> Value:
        return self._emit("dot", Value(np.float64(a.data @ b.data)), (a, b))

    def take0(self, x: Value) -> Value:
        return self._emit("take0", Value(np.float64(x.data[0])), (x,))

    def sub_const(self, x: Value, c: float) -> Value:
        return self._emit("sub_const", Value(x.data - c), (x,))

    def square(self, x: Value) -> Value:
        return self._emit("square", Value(x.data * x.data), (x,))

    def scale_add(self, terms: list[Value], coeffs: list[float]) -> Value:
        if len(terms) != len(coeffs):
            raise TapeError("scale_add: terms and coeffs differ in length")
        total = np.float64(sum(float(t.data) * c for t, c in zip(terms, coeffs)))
        return self._emit("scale_add", Value(total), tuple(terms), list(coeffs))

    # -- row-block primitives (the hot path) -----------------------------------

    def rows_affine_tanh(self, W: Value, X: Value) -> Value:
        H = self.kernels.rows_affine_tanh_fwd(X.data, W.data)
        return self._emit("rows_affine_tanh", Value(H), (W, X))

    def segment_max(self, H: Value, indptr: np.ndarray, src: np.ndarray) -> Value:
        out, arg = self.kernels.segment_max_fwd(H.data, indptr, src)
        return self._emit("segment_max", Value(out), (H,), arg)

    def hstack(self, blocks: list[Value]) -> Value:
        out = np.concatenate([b.data for b in blocks], axis=1)
        widths = [b.data.shape[1] for b in blocks]
        return self._emit("hstack", Value(out), tuple(blocks), widths)

    def rows_pick(self, X: Value, idx: np.ndarray) -> Value:
        idx = np.asarray(idx, dtype=np.int64)
        return self._emit("rows_pick", Value(X.data[idx]), (X,), idx)

    def tile_row(self, x: Value, n: int) -> Value:
        out = np.broadcast_to(x.data, (n, x.data.shape[0]))
        return self._emit("tile_row", Value(out), (x,))

    def rows_dot_bias(self, X: Value, w: Value, b: Value) -> Value:
        logits = X.data @ w.data + b.data[0]
        return self._emit("rows_dot_bias", Value(logits), (X, w, b))

    def row(self, X: Value, i: int) -> Value:
        return self._emit("row", Value(X.data[i]), (X,), i)

    def rows_max(self, X: Value) -> Value:
        """Element-wise max over all rows of a matrix (argmax-routed backward)."""
        arg = X.data.argmax(axis=0)
        out = X.data[arg, np.arange(X.data.shape[1])]
        return self._emit("rows_max", Value(out), (X,), arg)

    def vstack(self, blocks: list[Value]) -> Value:
        """Stack vectors and/or matrices into a taller matrix."""
        mats = [b.data if b.data.ndim == 2 else b.data[None, :] for b in blocks]
        heights = [m.shape[0] for m in mats]
        return self._emit("vstack", Value(np.concatenate(mats, axis=0)), tuple(blocks), heights)

    def add_bias0(self, s: Value, b: Value) -> Value:
        return self._emit("add_bias0", Value(np.float64(s.data + b.data[0])), (s, b))

    # -- backward ---------------------------------------------------------------

    @staticmethod
    def _buffer(v: Value):
        """The array gradients accumulate into, or None if v does not need them."""
        if v.param is not None:
            return v.param.grad
        if not v.needs:
            return None
        if v.grad is None:
            v.grad = np.zeros_like(v.data)
        return v.grad

    @classmethod
    def _accum(cls, v: Value, g) -> None:
        buf = cls._buffer(v)
        if buf is not None:
            buf += g

    def backward(self, root: Value, seed: float = 1.0) -> None:
        if root.param is not None:
            raise TapeError("cannot backprop from a parameter leaf")
        root.grad = np.full_like(np.asarray(root.data, dtype=np.float64), seed)
        for op, out, inputs, aux in reversed(self.records):
            g = out.grad
            if g is None:
                continue
            if op == "affine":
                W, x = inputs[0], inputs[1]
                self._accum(W, np.outer(g, x.data))
                self._accum(x, W.data.T @ g)
                if len(inputs) == 3:
                    self._accum(inputs[2], g)
            elif op == "tanh":
                self._accum(inputs[0], g * (1.0 - out.data * out.data))
            elif op == "set_max":
                arg = aux
                for i, v in enumerate(inputs):
                    if not v.needs:
                        continue
                    sel = arg == i
                    if sel.any():
                        gi = np.where(sel, g, 0.0)
                        self._accum(v, gi)
            elif op == "concat":
                pos = 0
                for v, w in zip(inputs, aux):
                    self._accum(v, g[pos : pos + w])
                    pos += w
            elif op == "masked_softmax":
                p = out.data
                self._accum(inputs[0], p * (g - np.dot(g, p)))
            elif op == "log_pick":
                probs, index = aux
                dlog = -float(g) * probs
                dlog[index] += float(g)
                self._accum(inputs[0], dlog)
            elif op == "dot":
                a, b = inputs
                self._accum(a, float(g) * b.data)
                self._accum(b, float(g) * a.data)
            elif op == "take0":
                buf = self._buffer(inputs[0])
                if buf is not None:
                    buf[0] += float(g)
            elif op == "sub_const":
                self._accum(inputs[0], g)
            elif op == "square":
                self._accum(inputs[0], 2.0 * inputs[0].data * g)
            elif op == "scale_add":
                for v, c in zip(inputs, aux):
                    self._accum(v, float(g) * c)
            elif op == "rows_affine_tanh":
                W, X = inputs
                dW = self._buffer(W)
                dX = self._buffer(X)
                if dW is not None or dX is not None:
                    self.kernels.rows_affine_tanh_bwd(X.data, W.data, out.data, g, dX, dW)
            elif op == "segment_max":
                buf = self._buffer(inputs[0])
                if buf is not None:
                    self.kernels.segment_max_bwd(g, aux, buf)
            elif op == "hstack":
                pos = 0
                for v, w in zip(inputs, aux):
                    self._accum(v, g[:, pos : pos + w])
                    pos += w
            elif op == "rows_pick":
                buf = self._buffer(inputs[0])
                if buf is not None:
                    np.add.at(buf, aux, g)
            elif op == "tile_row":
                self._accum(inputs[0], g.sum(axis=0))
            elif op == "rows_dot_bias":
                X, w, b = inputs
                self._accum(X, np.outer(g, w.data))
                self._accum(w, X.data.T @ g)
                bbuf = self._buffer(b)
                if bbuf is not None:
                    bbuf[0] += g.sum()
            elif op == "row":
                buf = self._buffer(inputs[0])
                if buf is not None:
                    buf[aux] += g
            elif op == "rows_max":
                buf = self._buffer(inputs[0])
                if buf is not None:
                    buf[aux, np.arange(g.shape[0])] += g
            elif op == "vstack":
                pos = 0
                for v, height in zip(inputs, aux):
                    piece = g[pos : pos + height]
                    self._accum(v, piece if v.data.ndim == 2 else piece[0])
                    pos += height
            elif op == "add_bias0":
                self._accum(inputs[0], g)
                bbuf = self._buffer(inputs[1])
                if bbuf is not None:
                    bbuf[0] += float(g)
            else:  # pragma: no cover
                raise TapeError(f"unknown op {op!r}")
