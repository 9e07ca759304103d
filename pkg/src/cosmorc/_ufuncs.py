"""Elementwise math kernels shared by the rest of the package.

numpy's float64 sin/cos fall back to scalar libm on hosts without AVX-512,
and numpy reallocates large temporaries through mmap on every op; both
dominate training time at desk scale.  When torch is importable, the hot
kernels therefore run on torch CPU tensors (vectorized trig, caching
allocator, two-thread elementwise loops) while every public boundary stays
numpy.  Without torch the same code runs on numpy arrays: the helpers below
are the only seam between the two.

Complex transcendentals are always evaluated through their real/imaginary
decomposition; complex sin/cos/exp ufuncs are slow in both backends.
"""

import numpy as np

try:
    import torch as _torch

    HAVE_TORCH = True
except ImportError:  # pragma: no cover - exercised only without torch
    _torch = None
    HAVE_TORCH = False


# -- backend seam -----------------------------------------------------------
# "dev" arrays are torch tensors when torch is available, numpy arrays
# otherwise. Python arithmetic operators, .real/.imag/.conj() and boolean
# masking behave identically on both.

if HAVE_TORCH:

    def dev(x):
        """numpy array -> backend array (zero-copy)."""
        return _torch.from_numpy(x)

    def host(x):
        """backend array -> numpy array (zero-copy)."""
        return x.numpy()

    def bsin(x):
        return _torch.sin(x)

    def bcos(x):
        return _torch.cos(x)

    def bexp(x):
        return _torch.exp(x)

    def brecip(x):
        return _torch.reciprocal(x)

    def bcomplex(re, im):
        return _torch.complex(re, im)

    def bmuladd(a, b, c, value):
        """a + value * (b * c) in one pass."""
        return _torch.addcmul(a, b, c, value=value)

    def bany(mask):
        return bool(mask.any())

    def bsum_real(x):
        return float(x.real.sum())

    def bpatch(arr, mask, values_np):
        """Scatter numpy values into arr at a boolean mask."""
        arr[mask] = _torch.from_numpy(np.ascontiguousarray(values_np))

    def bmasked(x, mask):
        return x[mask].numpy()

else:  # pragma: no cover - numpy fallback

    def dev(x):
        return x

    def host(x):
        return x

    bsin, bcos, bexp = np.sin, np.cos, np.exp

    def brecip(x):
        return 1.0 / x

    def bcomplex(re, im):
        out = np.empty(np.broadcast(re, im).shape, dtype=np.complex128)
        out.real = re
        out.imag = im
        return out

    def bmuladd(a, b, c, value):
        return a + value * (b * c)

    def bany(mask):
        return bool(np.any(mask))

    def bsum_real(x):
        return float(np.sum(x.real))

    def bpatch(arr, mask, values_np):
        arr[mask] = values_np

    def bmasked(x, mask):
        return np.asarray(x[mask])


def bsincos(x):
    return bsin(x), bcos(x)


def bcoshsinh(x):
    e = bexp(x)
    einv = brecip(e)
    return 0.5 * (e + einv), 0.5 * (e - einv)


def _torch_mm_ok(a, b):
    return HAVE_TORCH and a.dtype == b.dtype and a.ndim == 2 and b.ndim == 2


def matmul(a, b):
    """Matrix product routed through the backend (numpy in, numpy out)."""
    if _torch_mm_ok(a, b):
        return (dev(np.ascontiguousarray(a)) @ dev(np.ascontiguousarray(b))).numpy()
    return a @ b


def matmul_conj_t(a, b):
    """a @ conj(b).T without materializing the conjugate."""
    if _torch_mm_ok(a, b):
        return (dev(np.ascontiguousarray(a)) @ dev(np.ascontiguousarray(b)).mH).numpy()
    return a @ np.conj(b).T


def matmul_t_conj(a, b):
    """conj(a).T @ b without materializing the conjugate."""
    if _torch_mm_ok(a, b):
        return (dev(np.ascontiguousarray(a)).mH @ dev(np.ascontiguousarray(b))).numpy()
    return np.conj(a).T @ b


# -- numpy-facing transcendentals (shapes preserved, 0-d safe) ---------------


def _np_unary(op_torch, op_np):
    if not HAVE_TORCH:
        return op_np

    def f(x):
        x = np.asarray(x, dtype=np.float64, order="C")
        return op_torch(_torch.from_numpy(x)).numpy()

    return f


sin = _np_unary(_torch.sin if HAVE_TORCH else None, np.sin)
cos = _np_unary(_torch.cos if HAVE_TORCH else None, np.cos)
exp = _np_unary(_torch.exp if HAVE_TORCH else None, np.exp)


def sincos(x):
    """sin(x) and cos(x) of a real numpy array."""
    return sin(x), cos(x)


def coshsinh(x):
    """cosh(x) and sinh(x) of a real numpy array via two exponentials."""
    e = exp(x)
    einv = exp(-np.asarray(x))
    return 0.5 * (e + einv), 0.5 * (e - einv)


def sin_cos(z):
    """(sin z, cos z) of a real or complex numpy array, sharing trig work."""
    if not np.iscomplexobj(z):
        return sin(z), cos(z)
    x = np.asarray(z.real, order="C")
    y = np.asarray(z.imag, order="C")
    sx, cx = sincos(x)
    ch, sh = coshsinh(y)
    s = np.empty(z.shape, dtype=np.complex128)
    s.real = sx * ch
    s.imag = cx * sh
    c = np.empty(z.shape, dtype=np.complex128)
    c.real = cx * ch
    c.imag = -(sx * sh)
    return s, c


def csin(z):
    """sin of a real or complex numpy array."""
    if not np.iscomplexobj(z):
        return sin(z)
    return sin_cos(z)[0]


def ccos(z):
    """cos of a real or complex numpy array."""
    if not np.iscomplexobj(z):
        return cos(z)
    return sin_cos(z)[1]


def cexp(z):
    """exp of a real or complex numpy array."""
    if not np.iscomplexobj(z):
        return exp(z)
    x = np.asarray(z.real, order="C")
    y = np.asarray(z.imag, order="C")
    ex = exp(x)
    sy, cy = sincos(y)
    out = np.empty(z.shape, dtype=np.complex128)
    out.real = ex * cy
    out.imag = ex * sy
    return out
