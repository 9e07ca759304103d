"""Fused raised-cosine / cosmo kernels over real arrays.

The network's hot path evaluates, per hidden layer and epoch,

    g(z) = (1/T) sinc(z/T) cosfrac(2 beta z/T) [* exp(2 pi j zeta z)]

and its backward on ~500k complex elements.  Written as individual array
ops this chain is memory-bound (~40 passes over RAM); fused into one pass
it is compute-bound and an order of magnitude faster.  The kernel bodies
below use only operations that numpy and torch spell identically, over
separate real/imaginary arrays; removable singularities are handled with
`where` so the kernels stay branch-free and fusable.

When torch is available, large inputs run through `torch.compile`
(vectorized single-pass C++); small inputs and the no-torch fallback run
the same bodies eagerly, so every path computes the same formulas.

The backward recomputes the forward pieces instead of saving them: inside
a fused kernel recomputation is far cheaper than streaming a dozen saved
arrays through memory.
"""

import math
import os

import numpy as np

from ._ufuncs import HAVE_TORCH

if HAVE_TORCH:
    import torch

    _B = torch
else:
    _B = np

_PI = math.pi
SEAM_VALUE = 1e-8
SEAM_SINC_DERIV = 1e-2
SEAM_FRAC_DERIV = 2e-3
# series of cos(pi v/2)/(1-v^2) around v = +-1 (in t = sign(v)*v - 1)
_C2 = math.pi / 16 - math.pi**3 / 96
_C3 = -math.pi / 32 + math.pi**3 / 192

# compiled kernels pay off only past this element count
COMPILE_MIN_ELEMS = 16384
_DISABLE_COMPILE = bool(os.environ.get("COSMORC_NO_COMPILE"))


def _sinc_parts(xp, wr, wi, aw2):
    """S = sin(w)/w as (Sr, Si) plus the trig pieces for reuse."""
    swr = xp.sin(wr)
    cwr = xp.cos(wr)
    e = xp.exp(wi)
    ei = 1.0 / e
    ch = 0.5 * (e + ei)
    sh = 0.5 * (e - ei)
    sinwr = swr * ch
    sinwi = cwr * sh
    iw = 1.0 / aw2
    ivr = wr * iw
    ivi = -(wi * iw)
    Sr = sinwr * ivr - sinwi * ivi
    Si = sinwr * ivi + sinwi * ivr
    seam = aw2 < SEAM_VALUE**2
    Sr = xp.where(seam, 1.0 - (wr * wr - wi * wi) / 6.0, Sr)
    Si = xp.where(seam, -(wr * wi) / 3.0, Si)
    return Sr, Si, swr, cwr, ch, sh, ivr, ivi


def _frac_parts(xp, wr, wi, beta):
    """h = cos(beta w)/(1 - v^2), v = (2 beta/pi) w, plus reuse pieces."""
    scv = xp.sin(beta * wr)
    ccv = xp.cos(beta * wr)
    e2 = xp.exp(beta * wi)
    ei2 = 1.0 / e2
    ch2 = 0.5 * (e2 + ei2)
    sh2 = 0.5 * (e2 - ei2)
    cccr = ccv * ch2
    ccci = -(scv * sh2)
    k = 2.0 * beta / _PI
    vr = k * wr
    vi = k * wi
    dr = 1.0 - (vr * vr - vi * vi)
    di = -2.0 * (vr * vi)
    ad2 = dr * dr + di * di
    idd = 1.0 / ad2
    idr = dr * idd
    idi = -(di * idd)
    hr = cccr * idr - ccci * idi
    hi = cccr * idi + ccci * idr
    seam = ad2 < SEAM_VALUE**2
    sk = xp.where(vr < 0, -1.0, 1.0)
    tr = sk * vr - 1.0
    ti = sk * vi
    hr = xp.where(seam, _PI / 4 - (_PI / 8) * tr, hr)
    hi = xp.where(seam, -(_PI / 8) * ti, hi)
    return hr, hi, scv, ccv, ch2, sh2, vr, vi, ad2, idr, idi, sk, tr, ti


def _forward(xp, beta, zr, zi, T, m):
    """m is 2*pi*zeta, or None for the unmodulated raised cosine."""
    c1 = _PI / T
    wr = c1 * zr
    wi = c1 * zi
    aw2 = wr * wr + wi * wi
    Sr, Si, *_ = _sinc_parts(xp, wr, wi, aw2)
    hr, hi, *_ = _frac_parts(xp, wr, wi, beta)
    Pr = Sr * hr - Si * hi
    Pi = Sr * hi + Si * hr
    invT = 1.0 / T
    gr = Pr * invT
    gi = Pi * invT
    if m is not None:
        sem = xp.sin(m * zr)
        cem = xp.cos(m * zr)
        ea = xp.exp(-(m * zi))
        Er = ea * cem
        Ei = ea * sem
        gr, gi = gr * Er - gi * Ei, gr * Ei + gi * Er
    return gr, gi


def _backward(xp, beta, zr, zi, T, m, cr, ci):
    """Cotangents (czr, czi), scalar sums sT and (if modulated) sZ."""
    c1 = _PI / T
    wr = c1 * zr
    wi = c1 * zi
    aw2 = wr * wr + wi * wi
    Sr, Si, swr, cwr, ch, sh, ivr, ivi = _sinc_parts(xp, wr, wi, aw2)
    hr, hi, scv, ccv, ch2, sh2, vr, vi, ad2, idr, idi, sk, tr, ti = _frac_parts(xp, wr, wi, beta)

    # S'(u) = pi (cos w - S)/w, series  pi*w*(-1/3 + w^2/30 - w^4/840)
    coswr = cwr * ch
    coswi = -(swr * sh)
    nr = coswr - Sr
    ni = coswi - Si
    Spr = _PI * (nr * ivr - ni * ivi)
    Spi = _PI * (nr * ivi + ni * ivr)
    w2r = wr * wr - wi * wi
    w2i = 2.0 * (wr * wi)
    inr = -1.0 / 3.0 + w2r / 30.0 - (w2r * w2r - w2i * w2i) / 840.0
    ini = w2i / 30.0 - (2.0 * w2r * w2i) / 840.0
    seam = aw2 < SEAM_SINC_DERIV**2
    Spr = xp.where(seam, _PI * (wr * inr - wi * ini), Spr)
    Spi = xp.where(seam, _PI * (wr * ini + wi * inr), Spi)

    # h'(v) = (-(pi/2) sin((pi/2)v) + 2 v h)/(1 - v^2),
    # series  sk*(-pi/8 + 2 C2 t + 3 C3 t^2)
    sincr = scv * ch2
    sinci = ccv * sh2
    nr = -(_PI / 2) * sincr + 2.0 * (vr * hr - vi * hi)
    ni = -(_PI / 2) * sinci + 2.0 * (vr * hi + vi * hr)
    hpr = nr * idr - ni * idi
    hpi = nr * idi + ni * idr
    inr = -_PI / 8 + 2.0 * _C2 * tr + 3.0 * _C3 * (tr * tr - ti * ti)
    ini = 2.0 * _C2 * ti + 3.0 * _C3 * (2.0 * tr * ti)
    seam = ad2 < SEAM_FRAC_DERIV**2
    hpr = xp.where(seam, sk * inr, hpr)
    hpi = xp.where(seam, sk * ini, hpi)

    # A = d(S h)/du ; dphi/dz = A/T^2 ; dphi/dT = -(P + u A)/T^2
    Ar = Spr * hr - Spi * hi + 2.0 * beta * (Sr * hpr - Si * hpi)
    Ai = Spr * hi + Spi * hr + 2.0 * beta * (Sr * hpi + Si * hpr)
    Pr = Sr * hr - Si * hi
    Pi = Sr * hi + Si * hr
    invT = 1.0 / T
    iT2 = invT * invT
    dzr = Ar * iT2
    dzi = Ai * iT2
    ur = wr / _PI
    ui = wi / _PI
    dTr = -(Pr + ur * Ar - ui * Ai) * iT2
    dTi = -(Pi + ur * Ai + ui * Ar) * iT2
    sZ = None
    if m is not None:
        phir = Pr * invT
        phii = Pi * invT
        sem = xp.sin(m * zr)
        cem = xp.cos(m * zr)
        ea = xp.exp(-(m * zi))
        Er = ea * cem
        Ei = ea * sem
        t1r = dzr - m * phii
        t1i = dzi + m * phir
        dzr = t1r * Er - t1i * Ei
        dzi = t1r * Ei + t1i * Er
        t1r, t1i = dTr, dTi
        dTr = t1r * Er - t1i * Ei
        dTi = t1r * Ei + t1i * Er
        gr = phir * Er - phii * Ei
        gi = phir * Ei + phii * Er
        dZr = -2.0 * _PI * (gr * zi + gi * zr)
        dZi = 2.0 * _PI * (gr * zr - gi * zi)
        sZ = xp.sum(cr * dZr + ci * dZi)
    sT = xp.sum(cr * dTr + ci * dTi)
    czr = cr * dzr + ci * dzi
    czi = ci * dzr - cr * dzi
    return czr, czi, sT, sZ


# beta enters the kernels as a python float, so torch.compile specializes
# on it (it is fixed at 0.05 and never trained); each beta gets its own
# compiled variant via the cache key.


def _bind(fn, beta, xp):
    def bound(*args):
        return fn(xp, beta, *args)

    return bound


class RaisedCosineKernels:
    """Forward/backward callables for one (beta, modulated) configuration."""

    _compiled_cache = {}

    def __init__(self, beta, modulated):
        self.beta = beta
        self.modulated = modulated

    def _eager(self, which):
        fn = _forward if which == "fwd" else _backward
        return _bind(fn, self.beta, _B)

    def _compiled(self, which):
        key = (self.beta, self.modulated, which)
        cache = RaisedCosineKernels._compiled_cache
        if key not in cache:
            eager = self._eager(which)
            try:
                cache[key] = torch.compile(eager, dynamic=True)
            except Exception:  # pragma: no cover - inductor unavailable
                cache[key] = eager
        return cache[key]

    def _pick(self, which, n):
        if HAVE_TORCH and not _DISABLE_COMPILE and n >= COMPILE_MIN_ELEMS:
            return self._compiled(which)
        return self._eager(which)

    @staticmethod
    def _scalar(x):
        if HAVE_TORCH:
            return torch.tensor(float(x), dtype=torch.float64)
        return np.float64(x)

    def forward(self, zr, zi, T, zeta):
        """zr, zi: contiguous float64 numpy arrays; returns (gr, gi) numpy."""
        fn = self._pick("fwd", zr.size)
        Tb = self._scalar(T)
        mb = self._scalar(2.0 * _PI * zeta) if self.modulated else None
        if HAVE_TORCH:
            gr, gi = fn(torch.from_numpy(zr), torch.from_numpy(zi), Tb, mb)
            return gr.numpy(), gi.numpy()
        return fn(zr, zi, Tb, mb)

    def backward(self, zr, zi, T, zeta, cr, ci):
        """Returns (czr, czi, sT, sZ) with sZ None when unmodulated."""
        fn = self._pick("bwd", zr.size)
        Tb = self._scalar(T)
        mb = self._scalar(2.0 * _PI * zeta) if self.modulated else None
        if HAVE_TORCH:
            czr, czi, sT, sZ = fn(
                torch.from_numpy(zr), torch.from_numpy(zi), Tb, mb,
                torch.from_numpy(cr), torch.from_numpy(ci),
            )
            return czr.numpy(), czi.numpy(), float(sT), None if sZ is None else float(sZ)
        czr, czi, sT, sZ = fn(zr, zi, Tb, mb, cr, ci)
        return czr, czi, float(sT), None if sZ is None else float(sZ)


def warm_kernels(beta=0.05):
    """Compile the four hot kernels ahead of time (no-op without torch)."""
    if not HAVE_TORCH or _DISABLE_COMPILE:
        return
    n = COMPILE_MIN_ELEMS
    zr = np.zeros(n)
    zi = np.zeros(n)
    ones = np.ones(n)
    for modulated in (False, True):
        k = RaisedCosineKernels(beta, modulated)
        k.forward(zr, zi, 5.0, 1.5 if modulated else None)
        k.backward(zr, zi, 5.0, 1.5 if modulated else None, ones, ones)
