"""Periodic cubic B-spline interpolation on uniform 1D and 2D grids.

The interpolation coefficients solve the circulant system
(c_{i-1} + 4 c_i + c_{i+1})/6 = f_i, done in O(N log N) by FFT; evaluation
uses the standard 4-point cubic B-spline window, with analytic first
derivatives.  Exactly periodic by construction, which is what band
functions and Berry data on the torus require.
"""

from __future__ import annotations

import numpy as np


def _bspline_weights(u):
    """Window weights for offsets (-1, 0, 1, 2) at fraction u in [0, 1)."""
    v = 1.0 - u
    w_m1 = v**3 / 6.0
    w_0 = 2.0 / 3.0 - u**2 + 0.5 * u**3
    w_1 = 2.0 / 3.0 - v**2 + 0.5 * v**3
    w_2 = u**3 / 6.0
    return w_m1, w_0, w_1, w_2


def _bspline_dweights(u):
    """d/dt of the window weights (t in grid units)."""
    v = 1.0 - u
    d_m1 = -0.5 * v**2
    d_0 = -2.0 * u + 1.5 * u**2
    d_1 = 2.0 * v - 1.5 * v**2
    d_2 = 0.5 * u**2
    return d_m1, d_0, d_1, d_2


def _solve_coefficients_1d(values, axis):
    n = values.shape[axis]
    freq = np.fft.fft(np.asarray(values, dtype=float), axis=axis)
    kernel = (4.0 + 2.0 * np.cos(2.0 * np.pi * np.arange(n) / n)) / 6.0
    shape = [1] * values.ndim
    shape[axis] = n
    return np.real(np.fft.ifft(freq / kernel.reshape(shape), axis=axis))


class PeriodicSpline1D:
    """Periodic cubic spline through samples f(i * L / N), i = 0..N-1."""

    def __init__(self, values, period):
        self.values = np.asarray(values, dtype=float)
        self.period = float(period)
        self.n = self.values.shape[0]
        self.coeff = _solve_coefficients_1d(self.values, axis=0)

    def _window(self, x, weights_fn):
        t = np.asarray(x, dtype=float) / self.period * self.n
        i0 = np.floor(t).astype(int)
        u = t - i0
        w = weights_fn(u)
        out = np.zeros_like(u)
        for off, wk in zip((-1, 0, 1, 2), w):
            out += wk * self.coeff[(i0 + off) % self.n]
        return out

    def __call__(self, x):
        return self._window(x, _bspline_weights)

    def derivative(self, x):
        return self._window(x, _bspline_dweights) * (self.n / self.period)


class PeriodicSpline2D:
    """Tensor-product periodic cubic spline on [0, L1) x [0, L2)."""

    def __init__(self, values, periods):
        self.values = np.asarray(values, dtype=float)
        self.periods = (float(periods[0]), float(periods[1]))
        self.n1, self.n2 = self.values.shape
        coeff = _solve_coefficients_1d(self.values, axis=0)
        self.coeff = _solve_coefficients_1d(coeff, axis=1)

    def _window(self, x1, x2, wfn1, wfn2):
        t1 = np.asarray(x1, dtype=float) / self.periods[0] * self.n1
        t2 = np.asarray(x2, dtype=float) / self.periods[1] * self.n2
        t1, t2 = np.broadcast_arrays(t1, t2)
        i0 = np.floor(t1).astype(int)
        j0 = np.floor(t2).astype(int)
        u = t1 - i0
        v = t2 - j0
        wu = wfn1(u)
        wv = wfn2(v)
        out = np.zeros_like(u)
        for a, wa in zip((-1, 0, 1, 2), wu):
            row = (i0 + a) % self.n1
            for b, wb in zip((-1, 0, 1, 2), wv):
                out += wa * wb * self.coeff[row, (j0 + b) % self.n2]
        return out

    def __call__(self, x1, x2):
        return self._window(x1, x2, _bspline_weights, _bspline_weights)

    def dx1(self, x1, x2):
        return self._window(x1, x2, _bspline_dweights, _bspline_weights) * (
            self.n1 / self.periods[0]
        )

    def dx2(self, x1, x2):
        return self._window(x1, x2, _bspline_weights, _bspline_dweights) * (
            self.n2 / self.periods[1]
        )
