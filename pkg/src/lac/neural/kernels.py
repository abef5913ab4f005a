"""Sequential LSTM recurrence kernels, the hot loops of training and scoring.

The step loops below are written once in numba-compatible numpy Python.
When numba is importable they are JIT-compiled; otherwise (or when the
LAC_NUMBA environment variable disables it) the same functions run under
the plain numpy interpreter.

    LAC_NUMBA=0   force the pure-numpy path
    LAC_NUMBA=1   require numba, fail loudly if it is missing
    unset         use numba when available

Only the time recurrences live here. Input projections, weight-gradient
contractions and all dense layers are position-wise and run as single BLAS
matmuls outside the loops (see layers/model).

Gate layout: fused weight matrices carry rows [input; forget; output;
candidate], each block of height H.
"""

from __future__ import annotations

import os

import numpy as np


def _lstm_forward_loop(w_h, bias, a_in, h0, c0):
    """Run the LSTM recurrence over precomputed input contributions.

    w_h: (4H, H) recurrent weights; a_in: (T, 4H) input projections x@W_x.T;
    bias: (4H,). Returns the cache arrays (hidden states, cell states,
    post-activation gates, tanh of cells).
    """
    steps = a_in.shape[0]
    hidden = h0.shape[0]
    hs = np.empty((steps, hidden))
    cs = np.empty((steps, hidden))
    gates = np.empty((steps, 4 * hidden))
    tcs = np.empty((steps, hidden))
    h = h0.copy()
    c = c0.copy()
    for t in range(steps):
        a = a_in[t] + np.dot(w_h, h) + bias
        ig = 1.0 / (1.0 + np.exp(-a[:hidden]))
        fg = 1.0 / (1.0 + np.exp(-a[hidden:2 * hidden]))
        og = 1.0 / (1.0 + np.exp(-a[2 * hidden:3 * hidden]))
        gg = np.tanh(a[3 * hidden:])
        c = fg * c + ig * gg
        tc = np.tanh(c)
        h = og * tc
        gates[t, :hidden] = ig
        gates[t, hidden:2 * hidden] = fg
        gates[t, 2 * hidden:3 * hidden] = og
        gates[t, 3 * hidden:] = gg
        cs[t] = c
        tcs[t] = tc
        hs[t] = h
    return hs, cs, gates, tcs


def _lstm_hidden_loop(w_h, bias, a_in, h0, c0):
    """Forward recurrence keeping only hidden states (scoring path)."""
    steps = a_in.shape[0]
    hidden = h0.shape[0]
    hs = np.empty((steps, hidden))
    h = h0.copy()
    c = c0.copy()
    for t in range(steps):
        a = a_in[t] + np.dot(w_h, h) + bias
        ig = 1.0 / (1.0 + np.exp(-a[:hidden]))
        fg = 1.0 / (1.0 + np.exp(-a[hidden:2 * hidden]))
        og = 1.0 / (1.0 + np.exp(-a[2 * hidden:3 * hidden]))
        gg = np.tanh(a[3 * hidden:])
        c = fg * c + ig * gg
        h = og * np.tanh(c)
        hs[t] = h
    return hs


def _lstm_backward_loop(w_h_t, gates, cs, tcs, c0, dh_out):
    """Reverse recurrence producing per-step pre-activation gate gradients.

    w_h_t: (H, 4H) transposed recurrent weights. Returns (da_all, dh0, dc0);
    the caller contracts da_all against inputs and previous hidden states to
    form weight gradients.
    """
    steps = dh_out.shape[0]
    hidden = c0.shape[0]
    da_all = np.empty((steps, 4 * hidden))
    dh_next = np.zeros(hidden)
    dc_next = np.zeros(hidden)
    for t in range(steps - 1, -1, -1):
        ig = gates[t, :hidden]
        fg = gates[t, hidden:2 * hidden]
        og = gates[t, 2 * hidden:3 * hidden]
        gg = gates[t, 3 * hidden:]
        tc = tcs[t]
        dh = dh_out[t] + dh_next
        dc = dh * og * (1.0 - tc * tc) + dc_next
        if t > 0:
            c_prev = cs[t - 1]
        else:
            c_prev = c0
        da_all[t, :hidden] = dc * gg * ig * (1.0 - ig)
        da_all[t, hidden:2 * hidden] = dc * c_prev * fg * (1.0 - fg)
        da_all[t, 2 * hidden:3 * hidden] = dh * tc * og * (1.0 - og)
        da_all[t, 3 * hidden:] = dc * ig * (1.0 - gg * gg)
        dc_next = dc * fg
        dh_next = np.dot(w_h_t, da_all[t])
    return da_all, dh_next, dc_next


def _resolve_backend() -> str:
    flag = os.environ.get("LAC_NUMBA", "").strip().lower()
    if flag in ("0", "off", "false", "no"):
        return "numpy"
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        if flag in ("1", "on", "true", "yes", "require"):
            raise ImportError("LAC_NUMBA requires numba but it is not installed")
        return "numpy"


BACKEND = _resolve_backend()
USING_NUMBA = BACKEND == "numba"

lstm_forward_numpy = _lstm_forward_loop
lstm_hidden_numpy = _lstm_hidden_loop
lstm_backward_numpy = _lstm_backward_loop

if USING_NUMBA:
    from numba import njit

    lstm_forward_numba = njit(cache=True)(_lstm_forward_loop)
    lstm_hidden_numba = njit(cache=True)(_lstm_hidden_loop)
    lstm_backward_numba = njit(cache=True)(_lstm_backward_loop)
    lstm_forward = lstm_forward_numba
    lstm_hidden = lstm_hidden_numba
    lstm_backward = lstm_backward_numba
else:
    lstm_forward = lstm_forward_numpy
    lstm_hidden = lstm_hidden_numpy
    lstm_backward = lstm_backward_numpy
