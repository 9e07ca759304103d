"""Reverse-mode automatic differentiation over ndarray-valued tapes.

A :class:`GradTape` records primitive operations in creation order; the
backward pass visits them in exact reverse order, so gradient accumulation
is deterministic and bit-reproducible.  Values are float64 or complex128
numpy arrays.

Complex values are differentiated as independent (real, imaginary) pairs.
For compactness the two real partials of a complex node z = x + jy are
packed into a single complex "cotangent" c = dL/dx + j*dL/dy.  With that
packing the adjoint of any holomorphic primitive f is simply

    c_in = c_out * conj(f'(z))

and the adjoint of a matrix product Z = A @ B is c_A = c @ conj(B).T,
c_B = conj(A).T @ c.  A cotangent flowing into a real-dtype node keeps its
real part only (a real quantity has no imaginary perturbation).  No
Wirtinger derivatives appear anywhere in the API: parameters and gradients
are plain real vectors.
"""

import numpy as np

from . import _ufuncs


class TapeError(ValueError):
    pass


class ReplayMismatch(AssertionError):
    pass


def _as_value(x):
    a = np.asarray(x)
    if a.dtype == np.complex128 or a.dtype == np.float64:
        return a
    if np.iscomplexobj(a):
        return a.astype(np.complex128)
    return a.astype(np.float64)


def _unbroadcast(g, shape):
    """Sum a gradient down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


class Node:
    """One recorded value. Leaves have no parents."""

    __slots__ = ("tape", "value", "parents", "grad", "_fwd", "_vjp", "name")

    def __init__(self, tape, value, parents=(), fwd=None, vjp=None, name=None):
        self.tape = tape
        self.value = _as_value(value)
        self.parents = parents
        self.grad = None
        self._fwd = fwd
        self._vjp = vjp
        self.name = name
        tape._nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_complex(self):
        return self.value.dtype == np.complex128

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(self, other)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        return self.tape.mul(self, other)

    def __truediv__(self, other):
        return self.tape.div(self, other)

    def __rtruediv__(self, other):
        return self.tape.div(other, self)

    def __neg__(self):
        return self.tape.neg(self)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __repr__(self):
        return f"Node(shape={self.value.shape}, dtype={self.value.dtype}, name={self.name})"


class GradTape:
    """Ordered record of primitive operations with saved forward values."""

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    @property
    def nodes(self):
        return tuple(self._nodes)

    def leaf(self, value, name=None):
        return Node(self, value, name=name)

    def constant(self, value):
        """A recorded value that never receives a gradient."""
        return Node(self, value, name="const")

    def _coerce(self, x):
        if isinstance(x, Node):
            if x.tape is not self:
                raise TapeError("operands recorded on different tapes")
            return x
        return self.constant(x)

    # -- primitives ----------------------------------------------------------
    # Each primitive stores a replay closure (recomputes the value from the
    # parent values) and a vjp closure (maps the output cotangent to parent
    # cotangents, already unbroadcast to the parent shapes).

    def add(self, a, b):
        a, b = self._coerce(a), self._coerce(b)
        sa, sb = a.value.shape, b.value.shape
        return Node(
            self,
            a.value + b.value,
            (a, b),
            fwd=lambda x, y: x + y,
            vjp=lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        )

    def sub(self, a, b):
        a, b = self._coerce(a), self._coerce(b)
        sa, sb = a.value.shape, b.value.shape
        return Node(
            self,
            a.value - b.value,
            (a, b),
            fwd=lambda x, y: x - y,
            vjp=lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
        )

    def neg(self, a):
        a = self._coerce(a)
        return Node(self, -a.value, (a,), fwd=lambda x: -x, vjp=lambda g: (-g,))

    def mul(self, a, b):
        a, b = self._coerce(a), self._coerce(b)
        av, bv = a.value, b.value
        return Node(
            self,
            av * bv,
            (a, b),
            fwd=lambda x, y: x * y,
            vjp=lambda g: (
                _unbroadcast(g * np.conj(bv), av.shape),
                _unbroadcast(g * np.conj(av), bv.shape),
            ),
        )

    def div(self, a, b):
        a, b = self._coerce(a), self._coerce(b)
        av, bv = a.value, b.value
        out = av / bv
        return Node(
            self,
            out,
            (a, b),
            fwd=lambda x, y: x / y,
            vjp=lambda g: (
                _unbroadcast(g * np.conj(1.0 / bv), av.shape),
                _unbroadcast(g * np.conj(-out / bv), bv.shape),
            ),
        )

    def reciprocal(self, a):
        a = self._coerce(a)
        out = 1.0 / a.value
        return Node(
            self,
            out,
            (a,),
            fwd=lambda x: 1.0 / x,
            vjp=lambda g: (g * np.conj(-out * out),),
        )

    def matmul(self, a, b):
        a, b = self._coerce(a), self._coerce(b)
        av, bv = a.value, b.value
        return Node(
            self,
            _ufuncs.matmul(av, bv),
            (a, b),
            fwd=_ufuncs.matmul,
            vjp=lambda g: (_ufuncs.matmul_conj_t(g, bv), _ufuncs.matmul_t_conj(av, g)),
        )

    def sin(self, a):
        a = self._coerce(a)
        return Node(
            self,
            _ufuncs.csin(a.value),
            (a,),
            fwd=_ufuncs.csin,
            vjp=lambda g: (g * np.conj(_ufuncs.ccos(a.value)),),
        )

    def cos(self, a):
        a = self._coerce(a)
        return Node(
            self,
            _ufuncs.ccos(a.value),
            (a,),
            fwd=_ufuncs.ccos,
            vjp=lambda g: (g * np.conj(-_ufuncs.csin(a.value)),),
        )

    def exp(self, a):
        a = self._coerce(a)
        out = _ufuncs.cexp(a.value)
        return Node(self, out, (a,), fwd=_ufuncs.cexp, vjp=lambda g: (g * np.conj(out),))

    def sqrt(self, a):
        a = self._coerce(a)
        if a.is_complex:
            raise TapeError("sqrt is recorded for real values only")
        out = np.sqrt(a.value)
        return Node(
            self,
            out,
            (a,),
            fwd=np.sqrt,
            vjp=lambda g: (g * (0.5 / out),),
        )

    def sigmoid(self, a):
        a = self._coerce(a)
        if a.is_complex:
            raise TapeError("sigmoid is recorded for real values only")
        out = 1.0 / (1.0 + _ufuncs.exp(np.asarray(-a.value)))
        return Node(
            self,
            out,
            (a,),
            fwd=lambda x: 1.0 / (1.0 + _ufuncs.exp(np.asarray(-x))),
            vjp=lambda g: (g * (out * (1.0 - out)),),
        )

    def real(self, a):
        a = self._coerce(a)
        return Node(
            self,
            np.asarray(a.value.real, order="C"),
            (a,),
            fwd=lambda x: np.asarray(x.real, order="C"),
            vjp=lambda g: (g,),  # accumulation into a complex parent keeps dL/dx
        )

    def imag(self, a):
        a = self._coerce(a)
        return Node(
            self,
            np.asarray(a.value.imag, order="C"),
            (a,),
            fwd=lambda x: np.asarray(x.imag, order="C"),
            vjp=lambda g: (1j * g,),
        )

    def conj(self, a):
        a = self._coerce(a)
        return Node(
            self,
            np.conj(a.value),
            (a,),
            fwd=np.conj,
            vjp=lambda g: (np.conj(g),),
        )

    def modulus(self, a):
        """|z| elementwise; gradient is c * z/|z| (zero where z = 0)."""
        a = self._coerce(a)
        out = np.abs(a.value)

        def vjp(g):
            safe = np.where(out == 0.0, 1.0, out)
            return (g * (a.value / safe),)

        return Node(self, out, (a,), fwd=np.abs, vjp=vjp)

    def amax(self, a, axis, keepdims=True):
        """Max over one axis of a real array; gradient to the first argmax."""
        a = self._coerce(a)
        if a.is_complex:
            raise TapeError("amax is recorded for real values only")
        av = a.value
        out = np.max(av, axis=axis, keepdims=keepdims)
        idx = np.argmax(av, axis=axis)

        def vjp(g):
            full = np.zeros_like(av)
            gg = g if keepdims else np.expand_dims(g, axis)
            np.put_along_axis(full, np.expand_dims(idx, axis), np.real(gg), axis=axis)
            return (full,)

        return Node(self, out, (a,), fwd=lambda x: np.max(x, axis=axis, keepdims=keepdims), vjp=vjp)

    def clamp_min(self, a, floor):
        """max(a, floor) with a constant floor; gradient passes where a > floor."""
        a = self._coerce(a)
        if a.is_complex:
            raise TapeError("clamp_min is recorded for real values only")
        av = a.value
        mask = av > floor
        return Node(
            self,
            np.maximum(av, floor),
            (a,),
            fwd=lambda x: np.maximum(x, floor),
            vjp=lambda g: (np.real(g) * mask,),
        )

    def where(self, mask, a, b):
        """Select by a constant boolean mask; gradients route accordingly."""
        a, b = self._coerce(a), self._coerce(b)
        mask = np.asarray(mask, dtype=bool)
        sa, sb = a.value.shape, b.value.shape
        return Node(
            self,
            np.where(mask, a.value, b.value),
            (a, b),
            fwd=lambda x, y: np.where(mask, x, y),
            vjp=lambda g: (
                _unbroadcast(np.where(mask, g, 0.0), sa),
                _unbroadcast(np.where(mask, 0.0, g), sb),
            ),
        )

    def sum(self, a, axis=None, keepdims=False):
        a = self._coerce(a)
        shape = a.value.shape

        def vjp(g):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            return (np.broadcast_to(gg, shape).copy(),)

        return Node(
            self,
            np.sum(a.value, axis=axis, keepdims=keepdims),
            (a,),
            fwd=lambda x: np.sum(x, axis=axis, keepdims=keepdims),
            vjp=vjp,
        )

    def mean(self, a, axis=None):
        a = self._coerce(a)
        n = a.value.size if axis is None else a.value.shape[axis]
        return self.mul(self.sum(a, axis=axis), 1.0 / n)

    def custom(self, parents, op, name=None):
        """Record a fused primitive.

        `op(*values)` returns (out_value, vjp) where vjp maps the output
        cotangent to one cotangent per parent.  Replay re-executes op.
        """
        parents = tuple(self._coerce(p) for p in parents)
        out, vjp = op(*[p.value for p in parents])
        return Node(self, out, parents, fwd=lambda *v: op(*v)[0], vjp=vjp, name=name)

    # -- engine ----------------------------------------------------------

    def backward(self, loss):
        """Accumulate cotangents from a real scalar loss into every node."""
        if not isinstance(loss, Node) or loss.tape is not self:
            raise TapeError("loss is not a node of this tape")
        if loss.value.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.value.shape}")
        if loss.is_complex:
            im = float(np.abs(loss.value.imag).max())
            if im != 0.0:
                raise TapeError(f"loss has nonzero imaginary part ({im:.3e}); take the real part first")
        for n in self._nodes:
            n.grad = None
        loss.grad = np.ones_like(loss.value, dtype=np.float64)
        stop = self._nodes.index(loss)
        for node in reversed(self._nodes[: stop + 1]):
            if node.grad is None or node._vjp is None:
                continue
            contribs = node._vjp(node.grad)
            for parent, g in zip(node.parents, contribs):
                if not parent.is_complex and np.iscomplexobj(g):
                    g = np.asarray(g.real, order="C")
                if parent.grad is None:
                    parent.grad = np.zeros(
                        parent.value.shape,
                        dtype=np.complex128 if parent.is_complex else np.float64,
                    )
                parent.grad += g

    def gradients(self, loss, wrt):
        """Backward pass, then gradient of each node in `wrt` (zeros if unused)."""
        self.backward(loss)
        out = []
        for node in wrt:
            if node.grad is None:
                out.append(
                    np.zeros(
                        node.value.shape,
                        dtype=np.complex128 if node.is_complex else np.float64,
                    )
                )
            else:
                out.append(node.grad)
        return out

    def replay(self):
        """Re-execute every recorded op; raise unless results match bit-for-bit."""
        for i, node in enumerate(self._nodes):
            if node._fwd is None:
                continue
            new = _as_value(node._fwd(*[p.value for p in node.parents]))
            same = new.dtype == node.value.dtype and np.array_equal(new, node.value)
            if not same:
                raise ReplayMismatch(f"node {i} ({node.name}) does not replay bit-for-bit")


def grad(tape, loss, params):
    """Gradient of a recorded real scalar loss with respect to leaf nodes.

    Returns one array per entry of `params`, each real for real leaves and
    packed (dL/dre + j dL/dim) for complex leaves.
    """
    return tape.gradients(loss, list(params))


def grad_check(f, point, h=1e-5):
    """Max relative error between tape gradients and central differences.

    `f(tape, p)` must build and return a real scalar loss node from the leaf
    `p` holding the real vector `point`.  The relative error of component i
    uses the denominator max(|analytic_i|, 1e-8).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    point = np.asarray(point, dtype=np.float64).ravel()

    tape = GradTape()
    p = tape.leaf(point.copy(), name="point")
    loss = f(tape, p)
    analytic = tape.gradients(loss, [p])[0]

    def value_at(x):
        t = GradTape()
        return float(f(t, t.leaf(x)).value.real)

    worst = 0.0
    for i in range(point.size):
        xp = point.copy()
        xm = point.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = value_at(xp), value_at(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite value while differencing component {i}")
        fd = (fp - fm) / (2.0 * h)
        err = abs(analytic[i] - fd) / max(abs(analytic[i]), 1e-8)
        worst = max(worst, err)
    return worst
