"""Reverse-mode autodiff over numpy arrays, sized for spectral flux operators.

A Tensor wraps one float64 or complex128 ndarray and remembers how it was
produced; backward() walks the tape in reverse topological order and
accumulates cotangents into .grad. Gradients of complex-valued nodes are
stored as dL/dRe + 1j * dL/dIm.

The primitive set is exactly what the flux operator's forward pass and the
training losses need: truncated real DFT and its inverse, per-mode complex
mixing, width-1..k odd convolution, exact-erf GELU, pointwise affine maps,
periodic rolls, channel concatenation, and sum-of-squares reductions. All
reductions use fixed-order numpy sums so repeated runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

__all__ = [
    "Tensor",
    "constant",
    "add",
    "sub",
    "mul_const",
    "roll",
    "concat_channels",
    "sum_sq",
    "dot_probe",
    "rdft_trunc",
    "irdft",
    "spectral_apply",
    "conv1",
    "gelu",
    "affine_pointwise",
    "grad_check",
    "GradCheckReport",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """One node of the tape: an ndarray plus the closure that backpropagates it."""

    __slots__ = ("data", "grad", "_parents", "_bwd")

    def __init__(self, data, _parents=(), _bwd=None):
        self.data = np.asarray(data)
        self.grad = None
        self._parents = _parents
        self._bwd = _bwd

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def backward(self) -> None:
        """Seed this scalar node with cotangent 1 and sweep the tape."""
        if self.data.shape != ():
            raise ValueError(f"backward() needs a scalar node, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.asarray(1.0)
        for node in reversed(order):
            if node._bwd is not None and node.grad is not None:
                node._bwd(node.grad)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def constant(data) -> Tensor:
    """A leaf holding data that no gradient will be asked of."""
    return Tensor(np.asarray(data, dtype=np.float64))


def _binary_check(a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b)
    out = Tensor(a.data + b.data, (a, b))

    def _bwd(g):
        a._accumulate(g)
        b._accumulate(g)

    out._bwd = _bwd
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_check(a, b)
    out = Tensor(a.data - b.data, (a, b))

    def _bwd(g):
        a._accumulate(g)
        b._accumulate(-g)

    out._bwd = _bwd
    return out


def mul_const(a: Tensor, c) -> Tensor:
    """Multiply by a constant scalar or broadcastable ndarray (not a Tensor)."""
    c = np.asarray(c)
    out = Tensor(a.data * c, (a,))

    def _bwd(g):
        ga = g * c
        if ga.shape != a.data.shape:
            # undo broadcasting of c against a
            ga = _unbroadcast(ga, a.data.shape)
        a._accumulate(ga)

    out._bwd = _bwd
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if g.shape[ax] != n:
            g = g.sum(axis=ax, keepdims=True)
    return g


def roll(a: Tensor, shift: int, axis: int = 1) -> Tensor:
    """Periodic shift along the grid axis; content moves rightward for shift > 0."""
    out = Tensor(np.roll(a.data, shift, axis=axis), (a,))

    def _bwd(g):
        a._accumulate(np.roll(g, -shift, axis=axis))

    out._bwd = _bwd
    return out


def concat_channels(parts: list[Tensor]) -> Tensor:
    """Concatenate [B, N, C_i] tensors along the channel axis."""
    out = Tensor(np.concatenate([p.data for p in parts], axis=2), tuple(parts))
    splits = np.cumsum([p.data.shape[2] for p in parts])[:-1]

    def _bwd(g):
        for part, gs in zip(parts, np.split(g, splits, axis=2)):
            part._accumulate(gs)

    out._bwd = _bwd
    return out


def sum_sq(a: Tensor) -> Tensor:
    """Sum of squared entries of a real tensor, as a scalar node."""
    if np.iscomplexobj(a.data):
        raise ValueError("sum_sq is defined for real tensors only")
    out = Tensor(np.sum(a.data * a.data), (a,))

    def _bwd(g):
        a._accumulate((2.0 * float(g)) * a.data)

    out._bwd = _bwd
    return out


def dot_probe(a: Tensor, w: np.ndarray) -> Tensor:
    """Scalar probe sum(Re(conj(w) * a)); pairs real or complex a with fixed w."""
    w = np.asarray(w)
    if w.shape != a.data.shape:
        raise ValueError(f"probe shape {w.shape} does not match {a.data.shape}")
    if np.iscomplexobj(a.data):
        val = np.sum(w.real * a.data.real + w.imag * a.data.imag)
    else:
        val = np.sum(w.real * a.data)
    out = Tensor(np.asarray(val), (a,))

    def _bwd(g):
        scale = float(g)
        if np.iscomplexobj(a.data):
            a._accumulate(scale * w.astype(np.complex128))
        else:
            a._accumulate(scale * np.real(w).astype(np.float64))

    out._bwd = _bwd
    return out


def rdft_trunc(v: Tensor, kmax: int) -> Tensor:
    """Unnormalized real DFT keeping modes 0..kmax of the grid axis.

    Input [B, N, C] float64, output [B, kmax+1, C] complex128 with
    c_k = sum_j v_j exp(-2*pi*i*j*k/N).
    """
    if v.data.ndim != 3:
        raise ValueError(f"expected [B, N, C], got shape {v.data.shape}")
    n = v.data.shape[1]
    if kmax < 0 or kmax + 1 > n // 2 + 1:
        raise ValueError(f"kmax={kmax} out of range for n={n} (need kmax+1 <= n//2+1)")
    out = Tensor(np.fft.rfft(v.data, axis=1)[:, : kmax + 1, :], (v,))

    def _bwd(g):
        full = np.zeros((g.shape[0], n, g.shape[2]), dtype=np.complex128)
        full[:, : kmax + 1, :] = g
        # adjoint of the truncated forward transform: sum_k g_k exp(+i theta)
        v._accumulate(np.fft.ifft(full, axis=1).real * n)

    out._bwd = _bwd
    return out


def irdft(c: Tensor, n: int) -> Tensor:
    """Inverse of the truncated real DFT onto n grid points (1/n normalized).

    Modes above the stored kmax are treated as zero. The imaginary parts of
    mode 0 and, when retained, the Nyquist mode do not influence the output
    and receive zero gradient.
    """
    if c.data.ndim != 3:
        raise ValueError(f"expected [B, K, C], got shape {c.data.shape}")
    k = c.data.shape[1]
    half = n // 2 + 1
    if k > half:
        raise ValueError(f"{k} modes exceed capacity {half} of n={n}")
    pad = np.zeros((c.data.shape[0], half, c.data.shape[2]), dtype=np.complex128)
    pad[:, :k, :] = c.data
    out = Tensor(np.fft.irfft(pad, n=n, axis=1), (c,))
    has_nyquist = (n % 2 == 0) and (k == half)

    def _bwd(g):
        spec = np.fft.rfft(g, axis=1)[:, :k, :]
        weights = np.full(k, 2.0 / n)
        weights[0] = 1.0 / n
        if has_nyquist:
            weights[-1] = 1.0 / n
        gc = spec * weights[None, :, None]
        gc[:, 0, :] = gc[:, 0, :].real
        if has_nyquist:
            gc[:, -1, :] = gc[:, -1, :].real
        c._accumulate(gc)

    out._bwd = _bwd
    return out


def spectral_apply(r_re: Tensor, r_im: Tensor, c: Tensor) -> Tensor:
    """Per-mode channel mixing out[b,k,o] = sum_i R[k,i,o] * c[b,k,i].

    R is carried as separate real/imaginary parameter tensors [K, C_in, C_out]
    so optimizers see only real arrays.
    """
    if r_re.data.shape != r_im.data.shape:
        raise ValueError(f"R parts disagree: {r_re.data.shape} vs {r_im.data.shape}")
    if c.data.ndim != 3 or r_re.data.ndim != 3:
        raise ValueError("spectral_apply expects R[K, Ci, Co] and c[B, K, Ci]")
    if c.data.shape[1] != r_re.data.shape[0] or c.data.shape[2] != r_re.data.shape[1]:
        raise ValueError(
            f"coefficients [B,K,Ci]={c.data.shape} do not match R[K,Ci,Co]={r_re.data.shape}"
        )
    r = r_re.data + 1j * r_im.data
    c_kbi = np.ascontiguousarray(c.data.transpose(1, 0, 2))  # [K, B, Ci]
    out = Tensor(np.matmul(c_kbi, r).transpose(1, 0, 2), (r_re, r_im, c))

    def _bwd(g):
        g_kbo = np.ascontiguousarray(g.transpose(1, 0, 2))  # [K, B, Co]
        gr = np.matmul(np.conj(c_kbi).transpose(0, 2, 1), g_kbo)  # [K, Ci, Co]
        r_re._accumulate(gr.real)
        r_im._accumulate(gr.imag)
        gc = np.matmul(g_kbo, np.conj(r).transpose(0, 2, 1))  # [K, B, Ci]
        c._accumulate(gc.transpose(1, 0, 2))

    out._bwd = _bwd
    return out


def conv1(kernel: Tensor, v: Tensor, bias: Tensor | None = None) -> Tensor:
    """Zero-padded 1D cross-correlation along the grid axis.

    kernel [k, C_in, C_out] with odd k; v [B, N, C_in]; optional bias [C_out].
    out[b, j, o] = sum_{t, i} kernel[t, i, o] * v_padded[b, j + t, i].
    """
    kw = kernel.data.shape[0]
    if kw % 2 != 1:
        raise ValueError(f"kernel width must be odd, got {kw}")
    if v.data.ndim != 3 or kernel.data.ndim != 3:
        raise ValueError("conv1 expects kernel[k, Ci, Co] and v[B, N, Ci]")
    if v.data.shape[2] != kernel.data.shape[1]:
        raise ValueError(
            f"input channels {v.data.shape[2]} do not match kernel {kernel.data.shape}"
        )
    if bias is not None and bias.data.shape != (kernel.data.shape[2],):
        raise ValueError(f"bias shape {bias.data.shape} does not match kernel outputs")
    pad = kw // 2
    parents = (kernel, v) if bias is None else (kernel, v, bias)
    b_sz, n, ci = v.data.shape
    co = kernel.data.shape[2]
    if kw == 1:
        # pointwise case runs as one flat matmul
        v2d = v.data.reshape(b_sz * n, ci)
        data = np.matmul(v2d, kernel.data[0]).reshape(b_sz, n, co)
        if bias is not None:
            data = data + bias.data
        out = Tensor(data, parents)

        def _bwd(g):
            g2d = g.reshape(b_sz * n, co)
            kernel._accumulate(np.matmul(v2d.T, g2d)[None])
            v._accumulate(np.matmul(g2d, kernel.data[0].T).reshape(b_sz, n, ci))
            if bias is not None:
                bias._accumulate(g2d.sum(axis=0))

        out._bwd = _bwd
        return out

    vp = np.pad(v.data, ((0, 0), (pad, pad), (0, 0)))
    windows = sliding_window_view(vp, kw, axis=1)  # [B, N, Ci, k]
    data = np.einsum("bnit,tio->bno", windows, kernel.data)
    if bias is not None:
        data = data + bias.data
    out = Tensor(data, parents)

    def _bwd(g):
        kernel._accumulate(np.einsum("bno,bnit->tio", g, windows))
        gp = np.pad(g, ((0, 0), (pad, pad), (0, 0)))
        gwin = sliding_window_view(gp, kw, axis=1)  # [B, N, Co, k]
        v._accumulate(np.einsum("bnos,sio->bni", gwin, kernel.data[::-1]))
        if bias is not None:
            bias._accumulate(g.sum(axis=(0, 1)))

    out._bwd = _bwd
    return out


def gelu(v: Tensor) -> Tensor:
    """Exact GELU x * Phi(x) with Phi the standard normal CDF via erf."""
    x = v.data
    if np.iscomplexobj(x):
        raise ValueError("gelu is defined for real tensors only")
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    # d/dx (x * Phi) = Phi + x * pdf, cached while the forward arrays are hot
    slope = phi + x * (_INV_SQRT_2PI * np.exp(-0.5 * x * x))
    out = Tensor(x * phi, (v,))

    def _bwd(g):
        v._accumulate(g * slope)

    out._bwd = _bwd
    return out


def affine_pointwise(w: Tensor, b: Tensor, v: Tensor) -> Tensor:
    """Channel-mixing affine map out[b,j,o] = sum_i v[b,j,i] W[i,o] + b[o]."""
    if v.data.ndim != 3 or w.data.ndim != 2:
        raise ValueError("affine_pointwise expects W[Ci, Co], b[Co], v[B, N, Ci]")
    if v.data.shape[2] != w.data.shape[0] or b.data.shape != (w.data.shape[1],):
        raise ValueError(
            f"shapes disagree: v={v.data.shape}, W={w.data.shape}, b={b.data.shape}"
        )
    b_sz, n, ci = v.data.shape
    co = w.data.shape[1]
    v2d = v.data.reshape(b_sz * n, ci)
    out = Tensor((np.matmul(v2d, w.data) + b.data).reshape(b_sz, n, co), (w, b, v))

    def _bwd(g):
        g2d = g.reshape(b_sz * n, co)
        w._accumulate(np.matmul(v2d.T, g2d))
        b._accumulate(g2d.sum(axis=0))
        v._accumulate(np.matmul(g2d, w.data.T).reshape(b_sz, n, ci))

    out._bwd = _bwd
    return out


@dataclass
class GradCheckReport:
    """Outcome of a finite-difference probe of one taped computation."""

    passed: bool
    max_rel_err: float
    n_checked: int
    failures: list[tuple[int, int, float, float]] = field(default_factory=list)

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"grad_check {status}: max rel err {self.max_rel_err:.3e} over {self.n_checked} entries"


def grad_check(
    fn,
    leaves: list[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-6,
    probe_seed: int = 0,
) -> GradCheckReport:
    """Compare tape gradients of scalar probe(fn(leaves)) against central differences.

    fn maps the leaf tensors to one output Tensor; a fixed random cotangent
    turns that output into a scalar. Every leaf entry is perturbed by +-eps
    (real and imaginary parts separately for complex leaves) and the relative
    error is measured against max(1, |fd|). Non-finite analytic gradients
    fail immediately with their location.
    """
    for leaf in leaves:
        leaf.data = np.ascontiguousarray(leaf.data)  # perturbations must alias leaf.data
        leaf.grad = None
    out = fn(*leaves)
    rng = np.random.default_rng(probe_seed)
    if np.iscomplexobj(out.data):
        w = rng.standard_normal(out.data.shape) + 1j * rng.standard_normal(out.data.shape)
    else:
        w = rng.standard_normal(out.data.shape)
    dot_probe(out, w).backward()
    analytic = []
    for idx, leaf in enumerate(leaves):
        g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        g = np.asarray(g)
        if not np.all(np.isfinite(g.view(np.float64))):
            bad = int(np.flatnonzero(~np.isfinite(g.view(np.float64).ravel()))[0])
            return GradCheckReport(False, float("inf"), 0, [(idx, bad, float("nan"), 0.0)])
        analytic.append(g.copy())

    def probe_value() -> float:
        res = fn(*leaves).data
        if np.iscomplexobj(res):
            return float(np.sum(w.real * res.real + w.imag * res.imag))
        return float(np.sum(w.real * res))

    max_rel = 0.0
    n_checked = 0
    failures: list[tuple[int, int, float, float]] = []
    for idx, leaf in enumerate(leaves):
        flat = leaf.data.ravel()
        deltas = (eps, 1j * eps) if np.iscomplexobj(flat) else (eps,)
        for j in range(flat.size):
            for delta in deltas:
                orig = flat[j]
                flat[j] = orig + delta
                plus = probe_value()
                flat[j] = orig - delta
                minus = probe_value()
                flat[j] = orig
                fd = (plus - minus) / (2.0 * eps)
                ad = complex(analytic[idx].ravel()[j])
                ad_part = ad.imag if isinstance(delta, complex) and delta.imag else ad.real
                rel = abs(ad_part - fd) / max(1.0, abs(fd))
                max_rel = max(max_rel, rel)
                n_checked += 1
                if rel > tol:
                    failures.append((idx, j, ad_part, fd))
    return GradCheckReport(not failures, max_rel, n_checked, failures)
