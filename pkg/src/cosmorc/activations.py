"""The activation dictionary and its complex-sinusoid modulation.

Six activation families: relu, sine, gaussian, sinc, raised_cosine, and
cosmo (any non-cosmo base multiplied by exp(2pi*j*zeta*z)).  Every formula
is extended analytically to complex arguments, because hidden pre-
activations of the network are complex-valued.  The two removable
singularities of the raised cosine,

    phi(z) = (1/T) * sinc(z/T) * cos(pi*beta*z/T) / (1 - (2*beta*z/T)^2),
    sinc(u) = sin(pi*u)/(pi*u),

are detected by |denominator| < 1e-8 and evaluated by a two-term Taylor
expansion; the cosine fraction tends to pi/4 at 2*beta*z/T = +-1.
Derivative formulas use wider series windows because their direct forms
lose all significant digits near the singular points well before the
value formulas do.

`tape_activation` records the activation on a GradTape as one fused
primitive.  Its forward and backward are evaluated in row chunks with the
complex algebra spelled out over separate real arrays: this keeps the
working set cache-resident and routes the transcendentals through the
vectorized kernels in `_ufuncs`, which together dominate training speed.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _rc_kernel, _ufuncs

TWO_PI = 2.0 * math.pi

# Value-formula seams (spec'd): two-term Taylor inside |denominator| < 1e-8.
SEAM_VALUE = 1e-8
# Derivative-formula seams: the regular forms cancel catastrophically near
# the singular points, so the series window must be much wider.
SEAM_SINC_DERIV = 1e-2  # on |pi*u|
SEAM_FRAC_DERIV = 2e-3  # on |1 - v^2|

# cos(pi*v/2)/(1-v^2) around v = 1+t:  pi/4 - (pi/8) t + C2 t^2 + C3 t^3 ...
_C2 = math.pi / 16 - math.pi**3 / 96
_C3 = -math.pi / 32 + math.pi**3 / 192


class ActivationError(ValueError):
    pass


@dataclass(frozen=True)
class ActivationSpec:
    """One activation family plus its parameters.

    kind       one of relu | sine | gaussian | sinc | raised_cosine | cosmo
    omega0     sine frequency
    s          gaussian / sinc scale, > 0
    T, beta    raised-cosine bandwidth (> 0) and roll-off (in (0, 1])
    zeta       modulation frequency, >= 0 (cosmo only)
    base       wrapped spec (cosmo only, never another cosmo)
    """

    kind: str
    omega0: float = None
    s: float = None
    T: float = None
    beta: float = None
    zeta: float = None
    base: "ActivationSpec" = field(default=None)

    def __post_init__(self):
        k = self.kind
        if k == "sine":
            if self.omega0 is None:
                raise ActivationError("sine needs omega0")
        elif k in ("gaussian", "sinc"):
            if self.s is None or self.s <= 0:
                raise ActivationError(f"{k} needs a scale s > 0")
        elif k == "raised_cosine":
            if self.T is None or self.T <= 0:
                raise ActivationError("raised_cosine needs T > 0")
            if self.beta is None or not 0 < self.beta <= 1:
                raise ActivationError("raised_cosine needs beta in (0, 1]")
        elif k == "cosmo":
            if self.base is None or not isinstance(self.base, ActivationSpec):
                raise ActivationError("cosmo wraps exactly one base activation")
            if self.base.kind == "cosmo":
                raise ActivationError("cosmo cannot wrap another cosmo")
            if self.zeta is None or self.zeta < 0:
                raise ActivationError("cosmo needs zeta >= 0")
        elif k != "relu":
            raise ActivationError(f"unknown activation kind {k!r}")

    @property
    def label(self):
        if self.kind == "relu":
            return "relu"
        if self.kind == "sine":
            return f"sine(omega0={self.omega0:g})"
        if self.kind == "gaussian":
            return f"gaussian(s={self.s:g})"
        if self.kind == "sinc":
            return f"sinc(s={self.s:g})"
        if self.kind == "raised_cosine":
            return f"raised_cosine(T={self.T:g},beta={self.beta:g})"
        return f"cosmo({self.base.label},zeta={self.zeta:g})"


def relu():
    return ActivationSpec("relu")


def sine(omega0):
    return ActivationSpec("sine", omega0=float(omega0))


def gaussian(s):
    return ActivationSpec("gaussian", s=float(s))


def sinc(s):
    return ActivationSpec("sinc", s=float(s))


def raised_cosine(T=1.0, beta=0.05):
    return ActivationSpec("raised_cosine", T=float(T), beta=float(beta))


def cosmo(base, zeta):
    return ActivationSpec("cosmo", zeta=float(zeta), base=base)


# ---------------------------------------------------------------------------
# scalar/array evaluation (analytic extension, dtype-generic)
# ---------------------------------------------------------------------------


def _patch(out, mask, values_fn, *args):
    """Overwrite `out[mask]` with `values_fn(*(a[mask] for a in args))`.

    `out` must be at least 1-d (callers normalize scalars first).
    """
    flat = np.asarray(mask).reshape(-1)
    if not flat.any():
        return
    idx = np.flatnonzero(flat)
    out.reshape(-1)[idx] = values_fn(*[np.asarray(a).reshape(-1)[idx] for a in args])


def _sinc_value(u):
    """sin(pi u)/(pi u) with the removable singularity at u = 0 patched."""
    w = np.pi * u
    sw, _ = _ufuncs.sin_cos(w)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = sw / w
    _patch(out, np.abs(w) < SEAM_VALUE, lambda wk: 1.0 - wk * wk / 6.0, w)
    return out


def _sinc_pair(u):
    """(S, dS/du) for S(u) = sin(pi u)/(pi u), both singularity-safe."""
    w = np.pi * u
    sw, cw = _ufuncs.sin_cos(w)
    with np.errstate(divide="ignore", invalid="ignore"):
        winv = 1.0 / w
        S = sw * winv
        Sp = np.pi * (cw - S) * winv
    aw = np.abs(w)
    _patch(S, aw < SEAM_VALUE, lambda wk: 1.0 - wk * wk / 6.0, w)
    _patch(
        Sp,
        aw < SEAM_SINC_DERIV,
        lambda wk: np.pi * wk * (-1.0 / 3.0 + wk * wk * (1.0 / 30.0 - wk * wk / 840.0)),
        w,
    )
    return S, Sp


def _frac_taylor_value(t):
    return math.pi / 4 - (math.pi / 8) * t


def _frac_value(v):
    """cos(pi v / 2) / (1 - v^2) with the singularities at v = +-1 patched."""
    _, cc = _ufuncs.sin_cos((np.pi / 2) * v)
    den = 1.0 - v * v
    with np.errstate(divide="ignore", invalid="ignore"):
        out = cc / den
    sign = np.where(np.real(v) < 0, -1.0, 1.0)
    _patch(out, np.abs(den) < SEAM_VALUE, lambda sk, vk: _frac_taylor_value(sk * vk - 1.0), sign, v)
    return out


def _frac_pair(v):
    """(h, dh/dv) for h(v) = cos(pi v / 2) / (1 - v^2), singularity-safe."""
    sc, cc = _ufuncs.sin_cos((np.pi / 2) * v)
    den = 1.0 - v * v
    with np.errstate(divide="ignore", invalid="ignore"):
        dinv = 1.0 / den
        h = cc * dinv
        hp = (-(np.pi / 2) * sc + 2.0 * v * h) * dinv
    ad = np.abs(den)
    sign = np.where(np.real(v) < 0, -1.0, 1.0)
    _patch(h, ad < SEAM_VALUE, lambda sk, vk: _frac_taylor_value(sk * vk - 1.0), sign, v)

    def hp_series(sk, vk):
        t = sk * vk - 1.0
        return sk * (-math.pi / 8 + t * (2 * _C2 + 3 * _C3 * t))

    _patch(hp, ad < SEAM_FRAC_DERIV, hp_series, sign, v)
    return h, hp


def _eval_kernel(spec, z):
    k = spec.kind
    if k == "relu":
        return np.maximum(z, 0.0)
    if k == "sine":
        s, _ = _ufuncs.sin_cos(spec.omega0 * z)
        return s
    if k == "gaussian":
        u = spec.s * z
        return _ufuncs.cexp(-(u * u))
    if k == "sinc":
        return _sinc_value(spec.s * z)
    if k == "raised_cosine":
        u = z / spec.T
        return (1.0 / spec.T) * _sinc_value(u) * _frac_value(2.0 * spec.beta * u)
    # cosmo
    base = _eval_kernel(spec.base, z)
    return base * _ufuncs.cexp(np.asarray((TWO_PI * spec.zeta * 1j) * z))


def _deriv_kernel(spec, z):
    k = spec.kind
    if k == "relu":
        return np.where(z > 0, 1.0, 0.0)
    if k == "sine":
        _, c = _ufuncs.sin_cos(spec.omega0 * z)
        return spec.omega0 * c
    if k == "gaussian":
        u = spec.s * z
        return _ufuncs.cexp(-(u * u)) * (-2.0 * spec.s * u)
    if k == "sinc":
        _, Sp = _sinc_pair(spec.s * z)
        return spec.s * Sp
    if k == "raised_cosine":
        T, beta = spec.T, spec.beta
        u = z / T
        S, Sp = _sinc_pair(u)
        h, hp = _frac_pair(2.0 * beta * u)
        return (Sp * h + 2.0 * beta * S * hp) / (T * T)
    # cosmo: g' = (phi' + 2 pi j zeta phi) * exp(2 pi j zeta z)
    phi = _eval_kernel(spec.base, z)
    dphi = _deriv_kernel(spec.base, z)
    mod = _ufuncs.cexp(np.asarray((TWO_PI * spec.zeta * 1j) * z))
    return (dphi + (TWO_PI * spec.zeta * 1j) * phi) * mod


def _prepare(spec, z):
    """Normalize input for eval/eval_derivative; returns (array, was_scalar)."""
    arr = np.atleast_1d(np.asarray(z))
    scalar = np.ndim(z) == 0
    if np.iscomplexobj(arr):
        if spec.kind == "relu" and np.any(arr.imag != 0):
            raise ActivationError("relu accepts only real inputs (imaginary part must be 0)")
        if np.all(arr.imag == 0):
            # keep the pure-real code path so results match the real formula
            # bit for bit, then report in the input's dtype
            return np.asarray(arr.real, order="C").astype(np.float64), scalar, True
        return arr.astype(np.complex128), scalar, False
    return arr.astype(np.float64), scalar, False


def _finish(out, scalar, recomplex):
    out = np.asarray(out)
    if recomplex and not np.iscomplexobj(out):
        out = out.astype(np.complex128)
    if scalar:
        return out.reshape(-1)[0]
    return out


def eval(spec, z):
    """Activation value at a real or complex argument (scalar or array)."""
    arr, scalar, recomplex = _prepare(spec, z)
    out = _eval_kernel(spec, arr)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"{spec.label} produced a non-finite value")
    return _finish(out, scalar, recomplex)


def eval_derivative(spec, z):
    """Complex derivative d(activation)/dz, consistent with the real-pair
    backward rule; uses series limits at the removable singularities.

    relu at 0 returns the subgradient 0 by convention.
    """
    arr, scalar, recomplex = _prepare(spec, z)
    out = _deriv_kernel(spec, arr)
    return _finish(out, scalar, recomplex)


def modulus_preservation_check(spec, points):
    """max over real points of | |cosmo(x)| - |base(x)| |.

    The unit-modulus factor exp(2 pi j zeta x) only has modulus one on the
    real axis, so non-real points are rejected.
    """
    if spec.kind != "cosmo":
        raise ActivationError("modulus preservation is a property of cosmo activations")
    pts = np.asarray(points)
    if np.iscomplexobj(pts):
        if np.any(pts.imag != 0):
            raise ActivationError("modulus preservation holds on the real axis only")
        pts = pts.real
    g = np.abs(eval(spec, pts.astype(np.float64)))
    phi = np.abs(eval(spec.base, pts.astype(np.float64)))
    return float(np.max(np.abs(g - phi)))


# ---------------------------------------------------------------------------
# activation expression grammar:  name | name(arg, key=value, ...)
# ---------------------------------------------------------------------------

_GRAMMAR_KINDS = {
    "relu": ("relu", ()),
    "sine": ("sine", ("omega0",)),
    "gaussian": ("gaussian", ("s",)),
    "sinc": ("sinc", ("s",)),
    "raised_cosine": ("raised_cosine", ("T", "beta")),
    "cosmo": ("cosmo", ("zeta",)),
}
_DEFAULTS = {"raised_cosine": {"T": 1.0, "beta": 0.05}}


class ParseError(ValueError):
    def __init__(self, message, pos):
        super().__init__(f"at position {pos}: {message}")
        self.pos = pos


class _Tokens:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch):
        self._skip_ws()
        if self.peek() != ch:
            raise ParseError(f"expected {ch!r}", self.pos)
        self.pos += 1

    def name(self):
        self._skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
            self.pos += 1
        if self.pos == start:
            raise ParseError("expected a name", start)
        return self.text[start:self.pos], start

    def number(self):
        self._skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] in "+-0123456789.eE":
            self.pos += 1
        try:
            return float(self.text[start:self.pos])
        except ValueError:
            raise ParseError("expected a number", start) from None


def parse_activation(text):
    """Parse an activation expression such as
    ``cosmo(raised_cosine(T=1.0, beta=0.05), zeta=1.0)``."""
    toks = _Tokens(text)
    spec = _parse_expr(toks)
    toks._skip_ws()
    if toks.pos != len(text):
        raise ParseError("trailing input", toks.pos)
    return spec


def _parse_expr(toks):
    name, start = toks.name()
    if name not in _GRAMMAR_KINDS:
        raise ParseError(f"unknown activation {name!r}", start)
    kind, allowed = _GRAMMAR_KINDS[name]
    kwargs = dict(_DEFAULTS.get(kind, {}))
    base = None
    if toks.peek() == "(":
        toks.expect("(")
        first = True
        while toks.peek() != ")":
            if not first:
                toks.expect(",")
            first = False
            if toks.peek().isalpha():
                save = toks.pos
                argname, argstart = toks.name()
                if toks.peek() == "=":
                    toks.expect("=")
                    if argname not in allowed:
                        raise ParseError(f"{name} takes no parameter {argname!r}", argstart)
                    kwargs[argname] = toks.number()
                else:
                    # a nested activation expression (cosmo base)
                    toks.pos = save
                    if kind != "cosmo" or base is not None:
                        raise ParseError(f"{name} takes no nested activation", toks.pos)
                    base = _parse_expr(toks)
            else:
                raise ParseError("expected name=value or a nested activation", toks.pos)
        toks.expect(")")
    try:
        if kind == "cosmo":
            if base is None:
                raise ParseError("cosmo needs a base activation", start)
            return cosmo(base, kwargs.get("zeta", 1.0))
        if kind == "relu":
            return relu()
        if kind == "sine":
            return sine(kwargs["omega0"])
        if kind == "gaussian":
            return gaussian(kwargs["s"])
        if kind == "sinc":
            return sinc(kwargs["s"])
        return raised_cosine(kwargs["T"], kwargs["beta"])
    except KeyError as e:
        raise ParseError(f"{name} is missing parameter {e.args[0]!r}", start) from None
    except ActivationError as e:
        raise ParseError(str(e), start) from None


# ---------------------------------------------------------------------------
# fused tape primitive
# ---------------------------------------------------------------------------


def tape_activation(tape, spec, z, T=None, zeta=None):
    """Record activation(z) on the tape as one fused primitive.

    For raised_cosine and cosmo(raised_cosine) the bandwidth may be a
    scalar node `T`, and the modulation frequency a scalar node `zeta`;
    their gradients are then produced by the fused backward.  Other kinds
    (and fixed-parameter raised cosines) take all parameters from `spec`.
    """
    base = spec.base if spec.kind == "cosmo" else spec
    if base.kind == "raised_cosine" and (T is not None or zeta is not None):
        if T is None:
            raise ActivationError("learnable raised cosine needs a T node")
        if spec.kind == "cosmo" and zeta is None:
            raise ActivationError("learnable cosmo needs a zeta node")
        parents = [z, T] + ([zeta] if spec.kind == "cosmo" else [])
        op = _RaisedCosineOp(base.beta, modulated=spec.kind == "cosmo")
        return tape.custom(parents, op, name=spec.kind)

    def op(zv):
        out = _eval_kernel(spec, np.asarray(zv, dtype=np.complex128))

        def vjp(g):
            return (g * np.conj(_deriv_kernel(spec, np.asarray(zv, dtype=np.complex128))),)

        return out, vjp

    return tape.custom([z], op, name=spec.label)


class _RaisedCosineOp:
    """Fused forward/backward of (1/T) sinc(z/T) cosfrac(z/T) [* exp(2 pi j zeta z)].

    Delegates to the single-pass kernels in `_rc_kernel`; the backward
    recomputes the forward pieces inside its own fused pass, so nothing
    but the recorded inputs is kept alive between the two.
    """

    def __init__(self, beta, modulated):
        self.beta = beta
        self.modulated = modulated
        self._kernels = _rc_kernel.RaisedCosineKernels(beta, modulated)

    def __call__(self, zv, Tv, zetav=None):
        T = float(Tv)
        zeta = float(zetav) if self.modulated else None
        shape = np.shape(zv)
        z = np.asarray(zv, dtype=np.complex128).reshape(-1)
        zr = np.ascontiguousarray(z.real)
        zi = np.ascontiguousarray(z.imag)

        with np.errstate(all="ignore"):
            gr, gi = self._kernels.forward(zr, zi, T, zeta)
        out = np.empty(z.shape, dtype=np.complex128)
        out.real = gr
        out.imag = gi

        def vjp(cot):
            c = np.asarray(cot, dtype=np.complex128).reshape(-1)
            cr = np.ascontiguousarray(c.real)
            ci = np.ascontiguousarray(c.imag)
            with np.errstate(all="ignore"):
                czr, czi, sT, sZ = self._kernels.backward(zr, zi, T, zeta, cr, ci)
            cz = np.empty(z.shape, dtype=np.complex128)
            cz.real = czr
            cz.imag = czi
            outs = [cz.reshape(shape), np.float64(sT)]
            if self.modulated:
                outs.append(np.float64(sZ))
            return tuple(outs)

        return out.reshape(shape), vjp
