"""LSTM with full backpropagation through time, plus a bidirectional wrapper.

Gate order in the fused weight matrices is (input, forget, cell, output).
Cell equations, with a = x_t @ wx + h_{t-1} @ wh + b split into (ai, af,
ag, ao):

    i = sigmoid(ai)   f = sigmoid(af)   g = tanh(ag)   o = sigmoid(ao)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

h_0 = c_0 = 0. The input projection for all timesteps is computed as one
matrix product; the recurrent loop only adds h_{t-1} @ wh.
"""

from __future__ import annotations

import numpy as np

from .layers import ShapeMismatchError, sigmoid, uniform_init


class LSTM:
    """Single-direction LSTM over (batch, time, features).

    ``reverse=True`` processes time back to front and returns outputs in the
    original order, so stacking stays index-aligned.
    """

    def __init__(self, input_size, hidden_size, reverse=False, rng=None,
                 dtype=np.float32):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.reverse = reverse
        wx = uniform_init(rng, (input_size, 4 * hidden_size), input_size, dtype)
        wh = uniform_init(rng, (hidden_size, 4 * hidden_size), hidden_size, dtype)
        b = np.zeros(4 * hidden_size, dtype=dtype)
        b[hidden_size:2 * hidden_size] = 1.0  # forget-gate bias
        self.params = {"wx": wx, "wh": wh, "b": b}
        self.grads = {}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeMismatchError(
                f"expected (B, T, {self.input_size}), got {x.shape}")
        if self.reverse:
            return self._run(x[:, ::-1])[:, ::-1]
        return self._run(x)

    def backward(self, dh: np.ndarray) -> np.ndarray:
        if self.reverse:
            return self._run_backward(np.ascontiguousarray(dh[:, ::-1]))[:, ::-1]
        return self._run_backward(dh)

    def _run(self, x: np.ndarray) -> np.ndarray:
        b_sz, t_len, _ = x.shape
        hs = self.hidden_size
        wx, wh, bias = self.params["wx"], self.params["wh"], self.params["b"]

        xp = x.reshape(-1, self.input_size) @ wx
        xp = xp.reshape(b_sz, t_len, 4 * hs) + bias

        gates_i = np.empty((b_sz, t_len, hs), dtype=x.dtype)
        gates_f = np.empty_like(gates_i)
        gates_g = np.empty_like(gates_i)
        gates_o = np.empty_like(gates_i)
        cells = np.empty_like(gates_i)
        tanh_c = np.empty_like(gates_i)
        hidden = np.empty_like(gates_i)

        h_prev = np.zeros((b_sz, hs), dtype=x.dtype)
        c_prev = np.zeros((b_sz, hs), dtype=x.dtype)
        for t in range(t_len):
            a = xp[:, t] + h_prev @ wh
            i = sigmoid(a[:, :hs])
            f = sigmoid(a[:, hs:2 * hs])
            g = np.tanh(a[:, 2 * hs:3 * hs])
            o = sigmoid(a[:, 3 * hs:])
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            gates_i[:, t] = i
            gates_f[:, t] = f
            gates_g[:, t] = g
            gates_o[:, t] = o
            cells[:, t] = c
            tanh_c[:, t] = tc
            hidden[:, t] = h
            h_prev, c_prev = h, c

        self._cache = (x, gates_i, gates_f, gates_g, gates_o, cells, tanh_c, hidden)
        return hidden

    def _run_backward(self, dh_out: np.ndarray) -> np.ndarray:
        x, gi, gf, gg, go, cells, tanh_c, hidden = self._cache
        b_sz, t_len, _ = x.shape
        hs = self.hidden_size
        wx, wh = self.params["wx"], self.params["wh"]

        d_pre = np.empty((b_sz, t_len, 4 * hs), dtype=x.dtype)
        dwh = np.zeros_like(wh)
        dh_next = np.zeros((b_sz, hs), dtype=x.dtype)
        dc_next = np.zeros((b_sz, hs), dtype=x.dtype)
        zeros = np.zeros((b_sz, hs), dtype=x.dtype)

        for t in range(t_len - 1, -1, -1):
            i, f, g, o = gi[:, t], gf[:, t], gg[:, t], go[:, t]
            tc = tanh_c[:, t]
            dh = dh_out[:, t] + dh_next
            do = dh * tc * o * (1 - o)
            dc = dc_next + dh * o * (1 - tc * tc)
            di = dc * g * i * (1 - i)
            dg = dc * i * (1 - g * g)
            c_prev = cells[:, t - 1] if t > 0 else zeros
            df = dc * c_prev * f * (1 - f)
            da = np.concatenate([di, df, dg, do], axis=1)
            d_pre[:, t] = da

            h_prev = hidden[:, t - 1] if t > 0 else zeros
            dwh += h_prev.T @ da
            dh_next = da @ wh.T
            dc_next = dc * f

        flat_x = x.reshape(-1, self.input_size)
        flat_da = d_pre.reshape(-1, 4 * hs)
        self.grads = {
            "wx": flat_x.T @ flat_da,
            "wh": dwh,
            "b": flat_da.sum(axis=0),
        }
        return (flat_da @ wx.T).reshape(x.shape)


class BiLSTM:
    """Forward and reversed LSTM passes, features concatenated (width 2H)."""

    def __init__(self, input_size, hidden_size, rng=None, dtype=np.float32):
        self.hidden_size = hidden_size
        self.fw = LSTM(input_size, hidden_size, reverse=False, rng=rng, dtype=dtype)
        self.bw = LSTM(input_size, hidden_size, reverse=True, rng=rng, dtype=dtype)

    @property
    def params(self):
        out = {f"fw.{k}": v for k, v in self.fw.params.items()}
        out.update({f"bw.{k}": v for k, v in self.bw.params.items()})
        return out

    @property
    def grads(self):
        out = {f"fw.{k}": v for k, v in self.fw.grads.items()}
        out.update({f"bw.{k}": v for k, v in self.bw.grads.items()})
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate([self.fw.forward(x), self.bw.forward(x)], axis=2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        hs = self.hidden_size
        dx = self.fw.backward(np.ascontiguousarray(dy[:, :, :hs]))
        dx = dx + self.bw.backward(np.ascontiguousarray(dy[:, :, hs:]))
        return dx
