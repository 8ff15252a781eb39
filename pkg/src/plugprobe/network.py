"""Multi-label CNN with a load-count head, trained by plain SGD.

Architecture: two valid-padding conv layers with leaky ReLU, a softmax
normalization over the flattened conv output (config-switchable to
ordinary standardization for ablation), two hidden fully connected layers
with leaky ReLU, and an output layer of K class logits plus three
load-count logits.  The two logit groups get independent softmaxes (the
split softmax), so the class distribution and the count prediction are
trained jointly but normalized separately.

Everything here is plain numpy with hand-written backprop; the gradient
checker below is the authority that keeps it honest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergedToNaN, SchemaVersionMismatch, ShapeMismatch

NET_SCHEMA = "plugprobe.net/1"


@dataclass(frozen=True)
class NetConfig:
    """Architecture and training hyperparameters."""

    in_channels: int = 2
    in_rows: int = 14
    in_cols: int = 20
    conv1_channels: int = 8
    conv1_kernel: tuple = (3, 3)
    conv2_channels: int = 16
    conv2_kernel: tuple = (3, 3)
    fc1_width: int = 128
    fc2_width: int = 64
    n_classes: int = 11
    count_outputs: int = 3
    leaky_slope: float = 0.2
    conv_norm: str = "softmax_channel"
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 180
    batch_size: int = 16
    init_seed: int = 0
    init_gain: float = 1.0
    channel_gain_ladder: float = 0.65

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.count_outputs not in (0, 3):
            raise ValueError("count_outputs must be 0 (single-label) or 3")
        if min(self.conv1_channels, self.conv2_channels,
               self.fc1_width, self.fc2_width) < 1:
            raise ValueError("layer widths must be >= 1")
        if self.conv1_out_shape[1] < 1 or self.conv1_out_shape[2] < 1:
            raise ValueError("conv1 kernel larger than its input")
        if self.conv2_out_shape[1] < 1 or self.conv2_out_shape[2] < 1:
            raise ValueError("conv2 kernel larger than its input")
        if self.conv_norm not in ("log_compress", "softmax_location",
                                   "softmax_channel", "log_softmax_channel",
                                   "softmax_flat", "standardize"):
            raise ValueError("conv_norm must be one of 'log_compress', "
                             "'softmax_location', 'softmax_channel', "
                             "'log_softmax_channel', 'softmax_flat', "
                             "'standardize'")
        if self.leaky_slope < 0 or self.learning_rate <= 0:
            raise ValueError("invalid leaky_slope or learning_rate")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid epochs or batch_size")
        if not 0.0 < self.channel_gain_ladder <= 1.0:
            raise ValueError("channel_gain_ladder must be in (0, 1]")

    @property
    def conv1_out_shape(self) -> tuple:
        kh, kw = self.conv1_kernel
        return (self.conv1_channels, self.in_rows - kh + 1, self.in_cols - kw + 1)

    @property
    def conv2_out_shape(self) -> tuple:
        _, h, w = self.conv1_out_shape
        kh, kw = self.conv2_kernel
        return (self.conv2_channels, h - kh + 1, w - kw + 1)

    @property
    def flat_size(self) -> int:
        c, h, w = self.conv2_out_shape
        return c * h * w

    @property
    def n_outputs(self) -> int:
        return self.n_classes + self.count_outputs


_PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
                "fc1_w", "fc1_b", "fc2_w", "fc2_b", "out_w", "out_b")


@dataclass
class NetParams:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in _PARAM_NAMES}

    def copy(self) -> "NetParams":
        return NetParams(**{k: v.copy() for k, v in self.as_dict().items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.as_dict().values())


def expected_shapes(cfg: NetConfig) -> dict:
    k1h, k1w = cfg.conv1_kernel
    k2h, k2w = cfg.conv2_kernel
    return {
        "conv1_w": (cfg.conv1_channels, cfg.in_channels, k1h, k1w),
        "conv1_b": (cfg.conv1_channels,),
        "conv2_w": (cfg.conv2_channels, cfg.conv1_channels, k2h, k2w),
        "conv2_b": (cfg.conv2_channels,),
        "fc1_w": (cfg.flat_size, cfg.fc1_width),
        "fc1_b": (cfg.fc1_width,),
        "fc2_w": (cfg.fc1_width, cfg.fc2_width),
        "fc2_b": (cfg.fc2_width,),
        "out_w": (cfg.fc2_width, cfg.n_outputs),
        "out_b": (cfg.n_outputs,),
    }


def init(cfg: NetConfig) -> NetParams:
    """Scaled uniform fan-in initialization, deterministic per init_seed.

    Weights draw from U(-a, a) with a = init_gain / sqrt(fan_in); biases
    start at zero.  The layer fed by the softmax normalization is the one
    exception: a softmax over F cells emits values of order 1/F rather
    than order 1, so its fan-in scale is referenced to the uniform-softmax
    operating point (input norm 1/sqrt(F)) instead; without that, every
    activation downstream starts around 1e-4 and SGD stalls.
    """
    rng = np.random.default_rng(cfg.init_seed)
    arrays = {}
    for name, shape in expected_shapes(cfg).items():
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
        a = cfg.init_gain / np.sqrt(fan_in)
        if name == "conv1_w":
            # Odd channels start as approximate contrast filters between the
            # real-power and apparent-power input planes.  The power-factor
            # contrast they compute is scale-free, which keeps a small
            # distorting load visible next to a large resistive one.
            w = rng.uniform(-a, a, size=shape)
            if shape[1] == 2:
                w[1::2, 1] = -w[1::2, 0]
            arrays[name] = w
            continue
        if name == "conv2_w":
            # Geometric per-channel gain ladder centered on unit gain:
            # measurement magnitudes span several decades across load
            # classes, and a softmax normalization is only informative
            # where its input spread is order one.  Laddered channel
            # scales put every signal level in some channel's
            # discriminative zone from the first step.  Odd channels also
            # start blind to the even (summing) first-layer channels, so
            # they stay pure amplifiers of the power-factor contrast that
            # the first layer's odd channels compute.
            w = rng.uniform(-a, a, size=shape)
            exponents = np.arange(shape[0]) - (shape[0] - 1) / 2.0
            ladder = cfg.channel_gain_ladder ** exponents
            w *= ladder[:, None, None, None]
            if shape[1] >= 2:
                w[1::2, 0::2] = 0.0
            arrays[name] = w
            continue
        if name == "fc1_w" and cfg.conv_norm in ("softmax_flat", "softmax_channel",
                                                  "softmax_location"):
            # Weight scale referenced to the norm of a uniform softmax
            # output over the F = C*H*W conv cells: 1/sqrt(F) flattened,
            # C/sqrt(F) with per-channel softmaxes (entries 1/(H*W)), and
            # sqrt(F)/C with per-location softmaxes (entries 1/C).
            if cfg.conv_norm == "softmax_flat":
                u_norm = 1.0 / np.sqrt(fan_in)
            elif cfg.conv_norm == "softmax_channel":
                u_norm = cfg.conv2_channels / np.sqrt(fan_in)
            else:
                u_norm = np.sqrt(fan_in) / cfg.conv2_channels
            a = cfg.init_gain * np.sqrt(3.0) / u_norm
        arrays[name] = rng.uniform(-a, a, size=shape)
    return NetParams(**arrays)


# ---------------------------------------------------------------------------
# Layer primitives
# ---------------------------------------------------------------------------


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid 2-D correlation: x (B,C,H,W), w (O,C,kh,kw) -> (B,O,H',W')."""
    bsz, _, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho, wo = h - kh + 1, wd - kw + 1
    acc = np.zeros((bsz, ho, wo, o))
    for i in range(kh):
        for j in range(kw):
            acc += np.tensordot(x[:, :, i:i + ho, j:j + wo], w[:, :, i, j],
                                axes=([1], [1]))
    acc += b
    return acc.transpose(0, 3, 1, 2)


def _conv_backward(x, w, d_out):
    """Gradients of _conv_forward; d_out (B,O,H',W') -> (dx, dw, db)."""
    bsz, _, h, wd = x.shape
    o, c, kh, kw = w.shape
    ho, wo = d_out.shape[2], d_out.shape[3]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for i in range(kh):
        for j in range(kw):
            patch = x[:, :, i:i + ho, j:j + wo]
            dw[:, :, i, j] = np.tensordot(d_out, patch, axes=([0, 2, 3], [0, 2, 3]))
            contrib = np.tensordot(d_out, w[:, :, i, j], axes=([1], [0]))
            dx[:, :, i:i + ho, j:j + wo] += contrib.transpose(0, 3, 1, 2)
    db = d_out.sum(axis=(0, 2, 3))
    return dx, dw, db


def _leaky(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, z, slope * z)


def _leaky_grad(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0, 1.0, slope)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_backward(s: np.ndarray, d_s: np.ndarray) -> np.ndarray:
    return s * (d_s - np.sum(s * d_s, axis=1, keepdims=True))


_STD_EPS = 1e-12
_LOGSM_SCALE = 0.125


def _standardize(z: np.ndarray):
    mu = z.mean(axis=1, keepdims=True)
    sd = z.std(axis=1, keepdims=True) + _STD_EPS
    return (z - mu) / sd, sd


def _standardize_backward(z_hat, sd, d_out):
    centered = d_out - d_out.mean(axis=1, keepdims=True)
    return (centered - z_hat * (d_out * z_hat).mean(axis=1, keepdims=True)) / sd


def _forward_cache(p: NetParams, x: np.ndarray, cfg: NetConfig) -> dict:
    """Run the network on a batch, keeping every intermediate for backprop."""
    cache = {"x": x}
    z1 = _conv_forward(x, p.conv1_w, p.conv1_b)
    a1 = _leaky(z1, cfg.leaky_slope)
    z2 = _conv_forward(a1, p.conv2_w, p.conv2_b)
    a2 = _leaky(z2, cfg.leaky_slope)
    flat = a2.reshape(x.shape[0], -1)
    if cfg.conv_norm == "log_compress":
        # Signed logarithmic range compression: bijective, so nothing the
        # convolutions extracted is lost, and the two-decade magnitude
        # range of the load classes maps into a well-conditioned band.
        norm = np.sign(flat) * np.log1p(np.abs(flat))
        cache["norm_absflat"] = np.abs(flat)
    elif cfg.conv_norm == "softmax_location":
        # Channels compete at every spatial cell; with laddered channel
        # gains the winner index soft-quantizes the local magnitude.
        z = a2 - a2.max(axis=1, keepdims=True)
        s = np.exp(z)
        s /= s.sum(axis=1, keepdims=True)
        norm = s.reshape(flat.shape)
        cache["norm_s_loc"] = s
    elif cfg.conv_norm == "softmax_flat":
        norm = _softmax(flat)
        cache["norm_s"] = norm
    elif cfg.conv_norm == "softmax_channel":
        by_ch = flat.reshape(x.shape[0], cfg.conv2_channels, -1)
        s = np.exp(by_ch - by_ch.max(axis=2, keepdims=True))
        s /= s.sum(axis=2, keepdims=True)
        norm = s.reshape(flat.shape)
        cache["norm_s_ch"] = s
    elif cfg.conv_norm == "log_softmax_channel":
        by_ch = flat.reshape(x.shape[0], cfg.conv2_channels, -1)
        shifted = by_ch - by_ch.max(axis=2, keepdims=True)
        logs = shifted - np.log(np.exp(shifted).sum(axis=2, keepdims=True))
        norm = _LOGSM_SCALE * logs.reshape(flat.shape)
        cache["norm_s_ch"] = np.exp(logs)
    else:
        norm, sd = _standardize(flat)
        cache["norm_sd"] = sd
        cache["norm_zhat"] = norm
    z3 = norm @ p.fc1_w + p.fc1_b
    a3 = _leaky(z3, cfg.leaky_slope)
    z4 = a3 @ p.fc2_w + p.fc2_b
    a4 = _leaky(z4, cfg.leaky_slope)
    logits = a4 @ p.out_w + p.out_b
    cache.update(z1=z1, a1=a1, z2=z2, a2=a2, flat=flat, norm=norm,
                 z3=z3, a3=a3, z4=z4, a4=a4, logits=logits)
    return cache


def _backward(p: NetParams, cfg: NetConfig, cache: dict,
              d_logits: np.ndarray) -> dict:
    """Gradients of a scalar loss with given d(loss)/d(logits)."""
    grads = {}
    d_a4 = d_logits @ p.out_w.T
    grads["out_w"] = cache["a4"].T @ d_logits
    grads["out_b"] = d_logits.sum(axis=0)

    d_z4 = d_a4 * _leaky_grad(cache["z4"], cfg.leaky_slope)
    d_a3 = d_z4 @ p.fc2_w.T
    grads["fc2_w"] = cache["a3"].T @ d_z4
    grads["fc2_b"] = d_z4.sum(axis=0)

    d_z3 = d_a3 * _leaky_grad(cache["z3"], cfg.leaky_slope)
    d_norm = d_z3 @ p.fc1_w.T
    grads["fc1_w"] = cache["norm"].T @ d_z3
    grads["fc1_b"] = d_z3.sum(axis=0)

    if cfg.conv_norm == "log_compress":
        d_flat = d_norm / (1.0 + cache["norm_absflat"])
    elif cfg.conv_norm == "softmax_location":
        s = cache["norm_s_loc"]
        du = d_norm.reshape(s.shape)
        d_z2_direct = s * (du - np.sum(s * du, axis=1, keepdims=True))
        d_flat = d_z2_direct.reshape(d_norm.shape)
    elif cfg.conv_norm == "softmax_flat":
        d_flat = _softmax_backward(cache["norm_s"], d_norm)
    elif cfg.conv_norm == "softmax_channel":
        s = cache["norm_s_ch"]
        du = d_norm.reshape(s.shape)
        d_flat = (s * (du - np.sum(s * du, axis=2, keepdims=True))).reshape(
            d_norm.shape)
    elif cfg.conv_norm == "log_softmax_channel":
        s = cache["norm_s_ch"]
        du = _LOGSM_SCALE * d_norm.reshape(s.shape)
        d_flat = (du - s * du.sum(axis=2, keepdims=True)).reshape(d_norm.shape)
    else:
        d_flat = _standardize_backward(cache["norm_zhat"], cache["norm_sd"], d_norm)

    d_a2 = d_flat.reshape(cache["a2"].shape)
    d_z2 = d_a2 * _leaky_grad(cache["z2"], cfg.leaky_slope)
    d_a1, grads["conv2_w"], grads["conv2_b"] = _conv_backward(
        cache["a1"], p.conv2_w, d_z2)
    d_z1 = d_a1 * _leaky_grad(cache["z1"], cfg.leaky_slope)
    _, grads["conv1_w"], grads["conv1_b"] = _conv_backward(
        cache["x"], p.conv1_w, d_z1)
    return grads


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


@dataclass
class Prediction:
    """Split-softmax output plus the derived top-N class set."""

    class_probs: np.ndarray
    count_probs: np.ndarray
    n_hat: int
    top_set: frozenset


def top_k_classes(class_probs: np.ndarray, k: int) -> list:
    """Indices of the k largest probabilities, ties broken by lower index."""
    order = np.lexsort((np.arange(class_probs.shape[0]), -class_probs))
    return [int(i) for i in order[:k]]


def _check_input(x: np.ndarray, cfg: NetConfig) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    want = (cfg.in_channels, cfg.in_rows, cfg.in_cols)
    if arr.shape == want:
        arr = arr[None]
    elif arr.ndim != 4 or arr.shape[1:] != want:
        raise ShapeMismatch(f"expected input shaped {want} (optionally batched), "
                            f"got {arr.shape}")
    return arr


def predict_probs(p: NetParams, x: np.ndarray, cfg: NetConfig):
    """Batched class/count probabilities: (N,K) and (N,count_outputs)."""
    arr = _check_input(x, cfg)
    logits = _forward_cache(p, arr, cfg)["logits"]
    class_probs = _softmax(logits[:, :cfg.n_classes])
    if cfg.count_outputs:
        count_probs = _softmax(logits[:, cfg.n_classes:])
    else:
        count_probs = np.zeros((arr.shape[0], 0))
    return class_probs, count_probs


def forward(p: NetParams, x, cfg: NetConfig) -> Prediction:
    """Classify one feature tensor (accepts FeatureTensor or array)."""
    arr = getattr(x, "channels", x)
    class_probs, count_probs = predict_probs(p, arr, cfg)
    cp, np_ = class_probs[0], count_probs[0]
    n_hat = int(np.argmax(np_)) + 1 if cfg.count_outputs else 1
    return Prediction(class_probs=cp, count_probs=np_, n_hat=n_hat,
                      top_set=frozenset(top_k_classes(cp, n_hat)))


def loss(logits, target, cfg: NetConfig | None = None, k: int | None = None) -> float:
    """Split cross-entropy of one sample's output logits against its target.

    The class term is cross-entropy between the softmax of the first K
    logits and the (possibly multi-class) target distribution; the count
    term does the same over the last three logits.
    """
    z = np.asarray(logits, dtype=float).reshape(1, -1)
    k = k if k is not None else (cfg.n_classes if cfg else z.shape[1] - 3)
    t_class = np.asarray(target.class_part, dtype=float).reshape(1, -1)
    total = -(t_class * _log_softmax(z[:, :k])).sum()
    if z.shape[1] > k:
        t_count = np.asarray(target.count_part, dtype=float).reshape(1, -1)
        total += -(t_count * _log_softmax(z[:, k:])).sum()
    return float(total)


def _batch_loss_and_grads(p: NetParams, cfg: NetConfig, x, t_class, t_count):
    cache = _forward_cache(p, x, cfg)
    logits = cache["logits"]
    n = x.shape[0]
    k = cfg.n_classes
    class_logp = _log_softmax(logits[:, :k])
    total = -(t_class * class_logp).sum() / n
    d_logits = np.empty_like(logits)
    d_logits[:, :k] = (np.exp(class_logp) - t_class) / n
    if cfg.count_outputs:
        count_logp = _log_softmax(logits[:, k:])
        total += -(t_count * count_logp).sum() / n
        d_logits[:, k:] = (np.exp(count_logp) - t_count) / n
    grads = _backward(p, cfg, cache, d_logits)
    return total, grads


@dataclass
class TrainResult:
    params: NetParams
    epoch_losses: list


def train(p: NetParams, train_set, cfg: NetConfig) -> TrainResult:
    """Mini-batch SGD at a fixed learning rate.

    Args:
        p: Initial parameters (not mutated).
        train_set: Tuple (x, class_targets, count_targets); count_targets
            may be None when the config has no count head.
        cfg: Hyperparameters; shuffling derives its seed from init_seed.

    Returns:
        TrainResult with final parameters and the mean loss per epoch.

    Raises:
        DivergedToNaN: If parameters stop being finite.
    """
    x, t_class, t_count = train_set
    x = _check_input(x, cfg)
    n = x.shape[0]
    if n == 0:
        raise ValueError("train set must be non-empty")
    t_class = np.asarray(t_class, dtype=float)
    if cfg.count_outputs:
        t_count = np.asarray(t_count, dtype=float)

    params = p.copy()
    rng = np.random.default_rng([cfg.init_seed, 0x5EED])
    velocity = {name: np.zeros_like(arr) for name, arr in params.as_dict().items()}
    losses = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            batch_loss, grads = _batch_loss_and_grads(
                params, cfg, x[idx], t_class[idx],
                t_count[idx] if cfg.count_outputs else None)
            epoch_loss += batch_loss * len(idx)
            for name, g in grads.items():
                v = velocity[name]
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                getattr(params, name)[...] += v
        losses.append(epoch_loss / n)
        if not params.all_finite():
            raise DivergedToNaN(
                f"non-finite parameters after epoch {len(losses)}; "
                "lower the learning rate")
    return TrainResult(params=params, epoch_losses=losses)


def grad_check(cfg: NetConfig, sample, n_coords: int = 250, seed: int = 0,
               _sign_flip: str | None = None) -> float:
    """Compare analytic gradients against central finite differences.

    Args:
        cfg: Network configuration (use a reduced net; every parameter
            array is probed).
        sample: Tuple (x, target) with x shaped like one input and target
            a TargetVector.
        n_coords: Number of randomly chosen parameter coordinates.
        seed: Coordinate selection seed.
        _sign_flip: Test hook; name of a parameter whose analytic gradient
            is negated before comparison.

    Returns:
        Maximum relative error over the probed coordinates.
    """
    x, target = sample
    x = _check_input(x, cfg)
    t_class = np.asarray(target.class_part, dtype=float)[None]
    t_count = np.asarray(target.count_part, dtype=float)[None] \
        if cfg.count_outputs else None

    params = init(cfg)
    _, grads = _batch_loss_and_grads(params, cfg, x, t_class, t_count)
    if _sign_flip is not None:
        grads[_sign_flip] = -grads[_sign_flip]

    def loss_at() -> float:
        val, _ = _batch_loss_and_grads(params, cfg, x, t_class, t_count)
        return val

    # Stratified coordinate choice: every parameter array gets probed, so a
    # wrong gradient in any one layer cannot hide behind the big layers.
    rng = np.random.default_rng(seed)
    names = list(_PARAM_NAMES)
    sizes = np.array([getattr(params, n).size for n in names])
    total = int(sizes.sum())
    offsets = np.cumsum(sizes) - sizes
    chosen = []
    for which, size in enumerate(sizes):
        quota = min(int(size), max(5, round(n_coords * int(size) / total)))
        local = rng.choice(int(size), size=quota, replace=False)
        chosen.extend(offsets[which] + local)

    h = 1e-5
    # Central differences on an O(1) loss carry ~eps/h = 1e-11 roundoff, so
    # gradients below the 1e-6 floor are compared absolutely at that scale
    # instead of being amplified into spurious relative error.
    denom_floor = 1e-6
    max_rel = 0.0
    for flat_index in chosen:
        which = int(np.searchsorted(offsets, flat_index, side="right")) - 1
        arr = getattr(params, names[which])
        local = int(flat_index - offsets[which])
        idx = np.unravel_index(local, arr.shape)
        keep = arr[idx]
        arr[idx] = keep + h
        up = loss_at()
        arr[idx] = keep - h
        down = loss_at()
        arr[idx] = keep
        numeric = (up - down) / (2 * h)
        analytic = grads[names[which]][idx]
        denom = max(abs(numeric) + abs(analytic), denom_floor)
        max_rel = max(max_rel, abs(numeric - analytic) / denom)
    return max_rel


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_params(p: NetParams, cfg: NetConfig, path) -> None:
    doc = {
        "schema": NET_SCHEMA,
        "config": {f: getattr(cfg, f) for f in cfg.__dataclass_fields__},
        "arrays": {name: arr.ravel().tolist() for name, arr in p.as_dict().items()},
    }
    doc["config"]["conv1_kernel"] = list(cfg.conv1_kernel)
    doc["config"]["conv2_kernel"] = list(cfg.conv2_kernel)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_params(path) -> tuple:
    """Load a checkpoint; returns (params, config) after shape validation."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != NET_SCHEMA:
        raise SchemaVersionMismatch(
            f"expected '{NET_SCHEMA}', found '{doc.get('schema')}'")
    cfg_fields = dict(doc["config"])
    cfg_fields["conv1_kernel"] = tuple(cfg_fields["conv1_kernel"])
    cfg_fields["conv2_kernel"] = tuple(cfg_fields["conv2_kernel"])
    cfg = NetConfig(**cfg_fields)
    shapes = expected_shapes(cfg)
    arrays = {}
    for name, shape in shapes.items():
        flat = np.asarray(doc["arrays"][name], dtype=float)
        if flat.size != int(np.prod(shape)):
            raise ShapeMismatch(
                f"checkpoint array '{name}' has {flat.size} values, "
                f"config implies {shape}")
        arrays[name] = flat.reshape(shape)
    return NetParams(**arrays), cfg
