"""Complex-valued coordinate MLP with modulated raised-cosine activations.

Architecture per hidden layer: complex linear map, activation with
per-layer learnable bandwidth T (and modulation frequency zeta when the
activation is modulated), then a phase-preserving rescale into the unit
disk.  The final layer is linear and its real part is the output.

All trainable quantities live in one flat float64 vector; complex weights
are complex128 views into it (each complex entry is a (re, im) pair of
adjacent floats), and the learnable activation parameters are stored as
unconstrained reals mapped through a sigmoid into their (a, b) bounds, so
the effective T and zeta stay strictly inside the bounds at every step.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import _ufuncs, activations
from .autodiff import GradTape
from .optim import AdamHyper, AdamState, adam_step, lr_schedule

DEFAULT_BOUNDS = {"T": (0.0, 10.0), "zeta": (0.0, 3.0)}


class NetworkError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    """Raised when the loss goes non-finite; carries the last good state."""

    def __init__(self, epoch, record, last_good_params):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch
        self.record = record
        self.last_good_params = last_good_params


def bounded_param(theta_hat, a, b):
    """theta = a + (b-a) * sigmoid(theta_hat): strictly inside (a, b)."""
    if a >= b:
        raise NetworkError(f"bounds must satisfy a < b, got ({a}, {b})")
    return a + (b - a) / (1.0 + np.exp(-np.asarray(theta_hat, dtype=np.float64)))


@dataclass(frozen=True)
class NetworkConfig:
    depth: int = 5
    width: int = 256
    in_dim: int = 2
    out_dim: int = 3
    activation: str = "cosmo(raised_cosine(T=5,beta=0.05),zeta=1.5)"
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    seed: int = 0

    def __post_init__(self):
        if self.depth < 2:
            raise NetworkError("depth must be at least 2")
        if self.width < 1:
            raise NetworkError("width must be at least 1")
        for name, (a, b) in self.bounds.items():
            if a >= b:
                raise NetworkError(f"bound {name}: a < b required, got ({a}, {b})")

    @property
    def spec(self):
        return activations.parse_activation(self.activation)

    def to_dict(self):
        return {
            "depth": self.depth,
            "width": self.width,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "activation": self.activation,
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d):
        return NetworkConfig(
            depth=d["depth"],
            width=d["width"],
            in_dim=d["in_dim"],
            out_dim=d["out_dim"],
            activation=d["activation"],
            bounds={k: tuple(v) for k, v in d["bounds"].items()},
            seed=d["seed"],
        )


def _layer_dims(cfg):
    dims = [cfg.in_dim] + [cfg.width] * (cfg.depth - 1) + [cfg.out_dim]
    return list(zip(dims[:-1], dims[1:]))


class Network:
    """Parameter container plus views; all math goes through forward()."""

    def __init__(self, cfg, params=None):
        self.cfg = cfg
        spec = cfg.spec
        self.spec = spec
        base = spec.base if spec.kind == "cosmo" else spec
        self.learn_T = base.kind == "raised_cosine"
        self.learn_zeta = spec.kind == "cosmo" and base.kind == "raised_cosine"
        self.n_hidden = cfg.depth - 1

        dims = _layer_dims(cfg)
        n_weight = sum(fi * fo + fo for fi, fo in dims)
        n_act = self.n_hidden * (int(self.learn_T) + int(self.learn_zeta))
        total = 2 * n_weight + n_act
        if params is None:
            params = np.zeros(total, dtype=np.float64)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (total,):
            raise NetworkError(f"expected {total} parameters, got {params.shape}")
        self.params = params

        self.layers = []
        off = 0
        for fi, fo in dims:
            W = params[off : off + 2 * fi * fo].view(np.complex128).reshape(fi, fo)
            off += 2 * fi * fo
            b = params[off : off + 2 * fo].view(np.complex128)
            off += 2 * fo
            self.layers.append((W, b))
        self.act_params = []
        for _ in range(self.n_hidden):
            entry = {}
            if self.learn_T:
                entry["T"] = params[off : off + 1]
                off += 1
            if self.learn_zeta:
                entry["zeta"] = params[off : off + 1]
                off += 1
            self.act_params.append(entry)
        assert off == total

    @property
    def parameter_count(self):
        return self.params.size

    def layer_param_slices(self):
        """Flat-vector slice per layer (weights+bias), for gradient-flow checks."""
        out = []
        off = 0
        for fi, fo in _layer_dims(self.cfg):
            n = 2 * (fi * fo + fo)
            out.append(slice(off, off + n))
            off += n
        return out

    def effective_act_params(self):
        """Per hidden layer, the bounded (T, zeta) actually used."""
        out = []
        for entry in self.act_params:
            d = {}
            if "T" in entry:
                d["T"] = float(bounded_param(entry["T"][0], *self.cfg.bounds["T"]))
            if "zeta" in entry:
                d["zeta"] = float(bounded_param(entry["zeta"][0], *self.cfg.bounds["zeta"]))
            out.append(d)
        return out

    def forward(self, coords, taps=False):
        """Evaluate the network at coords in [-1, 1]^in_dim.

        Returns the real (n, out_dim) output, plus the per-hidden-layer
        complex outputs when `taps` is set.
        """
        tape = GradTape()
        pred, tap_nodes, _ = forward_on_tape(tape, self, coords)
        if taps:
            return pred.value, [t.value for t in tap_nodes]
        return pred.value


def init_network(cfg):
    """Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) real and imaginary parts,
    zero biases, activation parameters at their bound midpoints."""
    net = Network(cfg)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(cfg.seed)))
    for W, b in net.layers:
        fan_in = W.shape[0]
        bound = np.sqrt(6.0 / fan_in)
        W.real = rng.uniform(-bound, bound, W.shape)
        W.imag = rng.uniform(-bound, bound, W.shape)
        b[:] = 0.0
    for entry in net.act_params:
        for v in entry.values():
            v[:] = 0.0
    return net


# ---------------------------------------------------------------------------
# tape assembly
# ---------------------------------------------------------------------------


def _normalize_op(zv):
    """Rescale each row into the unit disk: z / max(max_i |z_i|, 1).

    One positive real scale per row, so every phase is preserved exactly
    and rows already inside the disk pass through unchanged.  The scale
    participates in gradients through the row's (first) largest-modulus
    element.
    """
    mod = np.abs(zv)
    am = np.argmax(mod, axis=1)
    rows = np.arange(zv.shape[0])
    rowmax = mod[rows, am]
    scale = np.maximum(rowmax, 1.0)
    inv = (1.0 / scale)[:, None]
    out = zv * inv

    def vjp(c):
        cz = c * inv
        active = rowmax > 1.0
        if np.any(active):
            # dL/dscale_r = -Re(sum_j c_rj conj(z_rj)) / scale_r^2, routed to
            # the argmax element through d|z_am|/dz_am = z_am/|z_am|
            srow = np.sum((c * np.conj(zv)).real, axis=1)
            dscale = np.where(active, -srow * inv[:, 0] * inv[:, 0], 0.0)
            zam = zv[rows, am]
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(rowmax > 0, zam / np.where(rowmax > 0, rowmax, 1.0), 0.0)
            np.add.at(cz, (rows, am), dscale * unit)
        return (cz,)

    return out, vjp


def normalize_layer(z):
    """Array-level unit-disk rescale (same math as the recorded op)."""
    out, _ = _normalize_op(np.asarray(z, dtype=np.complex128))
    return out


def forward_on_tape(tape, net, coords, weights_as_leaves=True):
    """Record the full forward pass; returns (pred, taps, leaves).

    `leaves` lists the parameter nodes in flat-vector order so gradients
    can be scattered back into a flat array.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != net.cfg.in_dim:
        raise NetworkError(f"coords must be (n, {net.cfg.in_dim})")
    if coords.size and (coords.min() < -1.0 or coords.max() > 1.0):
        raise NetworkError("coordinates must lie in [-1, 1] (normalization contract)")

    spec = net.spec
    leaves = []
    x = tape.constant(coords.astype(np.complex128))
    taps = []
    bounds = net.cfg.bounds
    for li, (W, b) in enumerate(net.layers):
        Wn = tape.leaf(W, name=f"W{li}")
        bn = tape.leaf(b, name=f"b{li}")
        leaves.extend([Wn, bn])
        z = tape.matmul(x, Wn) + bn
        if li == len(net.layers) - 1:
            out = tape.real(z)
            break
        T_node = zeta_node = None
        entry = net.act_params[li]
        if "T" in entry:
            th = tape.leaf(entry["T"], name=f"That{li}")
            leaves.append(th)
            a, bb = bounds["T"]
            T_node = tape.sum(a + (bb - a) * tape.sigmoid(th))
        if "zeta" in entry:
            zh = tape.leaf(entry["zeta"], name=f"zhat{li}")
            leaves.append(zh)
            a, bb = bounds["zeta"]
            zeta_node = tape.sum(a + (bb - a) * tape.sigmoid(zh))
        g = activations.tape_activation(tape, spec, z, T=T_node, zeta=zeta_node)
        x = tape.custom([g], _normalize_op, name=f"norm{li}")
        taps.append(x)
    return out, taps, leaves


def flat_gradient(net, leaves, grads):
    """Scatter per-leaf gradients into one flat float64 vector."""
    out = np.empty_like(net.params)
    off = 0
    for node, g in zip(leaves, grads):
        if node.is_complex:
            n = 2 * g.size
            out[off : off + n] = np.ascontiguousarray(g).view(np.float64).ravel()
        else:
            n = g.size
            out[off : off + n] = g.ravel()
        off += n
    assert off == out.size
    return out


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    lr0: float = 0.01
    decay: float = 0.01
    seed: int = 0
    log_every: int = 10

    def __post_init__(self):
        if self.epochs < 0:
            raise NetworkError("epochs must be non-negative")


@dataclass
class TrainRecord:
    entries: list = field(default_factory=list)  # (epoch, loss, metric)
    final_loss: float = float("nan")
    final_metric: float = float("nan")
    metric_name: str = "metric"
    wallclock_s: float = 0.0
    config_hash: str = ""
    seed: int = 0


def config_hash(obj):
    """Short stable hash of a json-serializable configuration."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def make_mse_loss(targets, weights=None):
    """Mean squared error against fixed targets; optional 0/1 pixel weights
    (n, 1) restrict the mean to observed rows."""
    targets = np.asarray(targets, dtype=np.float64)
    if weights is None:

        def loss(tape, pred):
            r = pred - targets
            return tape.mean(r * r)

    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
        denom = float(w.sum()) * targets.shape[1]
        if denom == 0:
            raise NetworkError("loss weights are all zero")

        def loss(tape, pred):
            r = pred - targets
            return tape.mul(tape.sum(r * r * w), 1.0 / denom)

    return loss


def train(net, coords, targets, tcfg, loss=None, metric=None, metric_name="metric"):
    """Full-batch Adam training of the network in place.

    `loss(tape, pred_node) -> scalar node` defaults to MSE against
    `targets`; `metric(pred_array) -> float` is logged every `log_every`
    epochs.  Raises TrainingDiverged on a non-finite loss, carrying the
    record so far and the last finite parameter vector.
    """
    t_start = time.perf_counter()
    coords = np.asarray(coords, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if coords.shape[0] != targets.shape[0]:
        raise NetworkError("coords and targets row counts differ")
    if loss is None:
        loss = make_mse_loss(targets)

    chash = config_hash({"net": net.cfg.to_dict(), "train": [tcfg.epochs, tcfg.lr0, tcfg.decay, tcfg.seed]})
    record = TrainRecord(metric_name=metric_name, config_hash=chash, seed=tcfg.seed)
    if tcfg.epochs == 0:
        record.wallclock_s = time.perf_counter() - t_start
        return net, record

    state = AdamState(net.params, AdamHyper(lr=tcfg.lr0))
    last_good = net.params.copy()
    for epoch in range(tcfg.epochs):
        tape = GradTape()
        pred, _, leaves = forward_on_tape(tape, net, coords)
        loss_node = loss(tape, pred)
        loss_val = float(loss_node.value)
        if not np.isfinite(loss_val):
            record.wallclock_s = time.perf_counter() - t_start
            raise TrainingDiverged(epoch, record, last_good)
        for entry, eff in zip(net.act_params, net.effective_act_params()):
            for name, val in eff.items():
                a, b = net.cfg.bounds[name]
                assert a < val < b, f"{name} escaped its bounds"
        if epoch % tcfg.log_every == 0 or epoch == tcfg.epochs - 1:
            m = float(metric(pred.value)) if metric is not None else float("nan")
            record.entries.append((epoch, loss_val, m))
        last_good = net.params.copy()
        grads = tape.gradients(loss_node, leaves)
        gflat = flat_gradient(net, leaves, grads)
        adam_step(state, gflat, lr=lr_schedule(epoch, tcfg.epochs, tcfg.lr0, tcfg.decay))

    tape = GradTape()
    pred, _, _ = forward_on_tape(tape, net, coords)
    record.final_loss = float(loss(tape, pred).value)
    record.final_metric = float(metric(pred.value)) if metric is not None else float("nan")
    record.wallclock_s = time.perf_counter() - t_start
    return net, record


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "cosmorc-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(net, path):
    """Textual checkpoint; floats are serialized losslessly (repr)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": net.cfg.to_dict(),
        "params": net.params.tolist(),
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise NetworkError(f"{path} is not a cosmorc checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise NetworkError(f"unsupported checkpoint version {doc.get('version')}")
    cfg = NetworkConfig.from_dict(doc["config"])
    return Network(cfg, params=np.asarray(doc["params"], dtype=np.float64))
