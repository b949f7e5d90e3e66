"""Convolutional prototype network trained with distance softmax + prototype loss.

Architecture (80x80 input): conv 1->8 5x5/2, conv 8->16 5x5/2,
conv 16->32 3x3/2, all ReLU, 2x2 maxpool, fully connected to a
16-dim feature. Class prototypes are trained jointly with the network.
Backpropagation is written out by hand so every parameter gradient can
be checked against finite differences.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .kernels import conv_forward, conv_backward, maxpool_forward, maxpool_backward
from .spdmetric import MetricKind

_D_FLOOR = 1e-12  # guards 1/(2*sqrt(S)) at coincident points
_CROSS_GUARD = 1e-30
_MAGIC = b"CPN1"
_METRIC_CODES = {MetricKind.SLED: 0, MetricKind.ED: 1}
_CODE_METRICS = {v: k for k, v in _METRIC_CODES.items()}


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: int
    stride: int


DEFAULT_CONVS = (ConvSpec(8, 5, 2), ConvSpec(16, 5, 2), ConvSpec(32, 3, 2))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    lr: float = 1.5e-4
    lr_decay_epochs: int = 15
    lr_decay_factor: float = 0.1
    batch_size: int = 32
    lambda_loss: float | None = None  # None -> 1.0 for SLED, 0.5 for ED
    seed: int = 0
    ce_distance_power: int = 1  # softmax over -D (1) or -D^2 (2)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs <= 0 or self.lr <= 0 or self.batch_size <= 0:
            raise ValueError("epochs, lr and batch_size must be positive")
        if self.lambda_loss is not None and self.lambda_loss < 0:
            raise ValueError("lambda_loss must be nonnegative")
        if self.ce_distance_power not in (1, 2):
            raise ValueError("ce_distance_power must be 1 or 2")

    def resolve_lambda(self, metric: MetricKind) -> float:
        if self.lambda_loss is not None:
            return self.lambda_loss
        return 1.0 if metric == MetricKind.SLED else 0.5


@dataclass
class CpnModel:
    conv_specs: tuple
    conv_w: list  # (out, in, k, k) per layer
    conv_b: list  # (out,) per layer
    fc_w: np.ndarray  # (fan_in, d)
    fc_b: np.ndarray  # (d,)
    prototypes: np.ndarray  # (k, d)
    metric: MetricKind
    input_hw: int = 80
    pool: int = 2
    # affine input standardization fitted on training data (identity until fit)
    input_mean: np.ndarray | None = None
    input_std: np.ndarray | None = None
    history: dict | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.fc_b.size

    @property
    def k(self) -> int:
        return self.prototypes.shape[0]

    def params(self) -> list:
        return [*self.conv_w, *self.conv_b, self.fc_w, self.fc_b, self.prototypes]

    def set_params(self, values: list) -> None:
        n = len(self.conv_w)
        self.conv_w = list(values[:n])
        self.conv_b = list(values[n : 2 * n])
        self.fc_w, self.fc_b, self.prototypes = values[2 * n :]


def init_cpn(
    k: int,
    d: int = 16,
    metric: MetricKind = MetricKind.SLED,
    seed: int = 0,
    input_hw: int = 80,
    conv_specs=DEFAULT_CONVS,
    pool: int = 2,
) -> CpnModel:
    if k < 2:
        raise ValueError("need at least 2 target classes")
    if metric not in _METRIC_CODES:
        raise ValueError(f"CPN supports SLED or ED, got {metric}")
    rng = np.random.default_rng(seed)
    conv_w, conv_b = [], []
    hw, in_ch = input_hw, 1
    for spec in conv_specs:
        fan_in = in_ch * spec.kernel * spec.kernel
        conv_w.append(rng.standard_normal((spec.out_channels, in_ch, spec.kernel, spec.kernel)) * np.sqrt(2.0 / fan_in))
        conv_b.append(np.zeros(spec.out_channels))
        hw = (hw - spec.kernel) // spec.stride + 1
        if hw < 1:
            raise ValueError("input too small for the convolution stack")
        in_ch = spec.out_channels
    hw //= pool
    fan_in = in_ch * hw * hw
    fc_w = rng.standard_normal((fan_in, d)) * np.sqrt(2.0 / fan_in)
    fc_b = np.zeros(d)
    prototypes = rng.standard_normal((k, d)) * 0.1
    return CpnModel(tuple(conv_specs), conv_w, conv_b, fc_w, fc_b, prototypes, metric, input_hw, pool)


# ------------------------------------------------------------------- forward

def _forward(model: CpnModel, x: np.ndarray):
    """Batch forward pass; returns features (B, d) and the backprop cache."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None, :, :]
    if x.shape[2] != model.input_hw or x.shape[3] != model.input_hw:
        raise ValueError(f"expected {model.input_hw}x{model.input_hw} input, got {x.shape[2]}x{x.shape[3]}")
    if model.input_mean is not None:
        x = (x - model.input_mean) / model.input_std
    cache = {"inputs": [], "masks": []}
    a = x
    for w, b, spec in zip(model.conv_w, model.conv_b, model.conv_specs):
        cache["inputs"].append(a)
        z = conv_forward(a, w, b, spec.stride)
        mask = z > 0
        a = z * mask
        cache["masks"].append(mask)
    cache["pre_pool_shape"] = a.shape
    if model.pool > 1:
        a, idx = maxpool_forward(a, model.pool)
        cache["pool_idx"] = idx
    cache["flat"] = a.reshape(a.shape[0], -1)
    feats = cache["flat"] @ model.fc_w + model.fc_b
    return feats, cache


def cpn_forward(model: CpnModel, x: np.ndarray) -> np.ndarray:
    """Feature vector(s) for one map (H, W) or a batch (B, H, W)."""
    single = np.asarray(x).ndim == 2
    batch = np.asarray(x, dtype=np.float64)
    if single:
        batch = batch[None]
    feats, _ = _forward(model, batch)
    return feats[0] if single else feats


def _backward(model: CpnModel, cache: dict, dfeats: np.ndarray) -> list:
    """Parameter gradients in model.params() order, given d loss/d features."""
    flat = cache["flat"]
    dfc_w = flat.T @ dfeats
    dfc_b = dfeats.sum(axis=0)
    b, c, hp, wp = cache["pre_pool_shape"]
    da = dfeats @ model.fc_w.T
    if model.pool > 1:
        da = da.reshape(b, c, hp // model.pool, wp // model.pool)
        da = maxpool_backward(np.ascontiguousarray(da), cache["pool_idx"], model.pool, hp, wp)
    else:
        da = da.reshape(b, c, hp, wp)
    d_conv_w, d_conv_b = [], []
    for w, spec, x_in, mask in zip(
        reversed(model.conv_w), reversed(model.conv_specs),
        reversed(cache["inputs"]), reversed(cache["masks"]),
    ):
        dz = np.ascontiguousarray(da * mask)
        da, dw, db = conv_backward(x_in, w, spec.stride, dz)
        d_conv_w.append(dw)
        d_conv_b.append(db)
    d_conv_w.reverse()
    d_conv_b.reverse()
    return [*d_conv_w, *d_conv_b, dfc_w, dfc_b]


# ----------------------------------------------------- distances & loss terms

def _sled_terms(feats: np.ndarray, protos: np.ndarray):
    """Squared SLED (B, k) plus gradients wrt features and prototypes."""
    na = np.einsum("bd,bd->b", feats, feats)  # (B,)
    nb = np.einsum("kd,kd->k", protos, protos)  # (k,)
    dot = feats @ protos.T  # (B, k)
    ap = np.log1p(na)[:, None]  # (B, 1)
    bp = np.log1p(nb)[None, :]  # (1, k)
    denom = na[:, None] * nb[None, :]
    live = denom >= _CROSS_GUARD
    safe = np.where(live, denom, 1.0)
    na_safe = np.where(na > 0, na, 1.0)[:, None]
    nb_safe = np.where(nb > 0, nb, 1.0)[None, :]
    c = np.where(live, dot * dot / safe, 0.0)
    s = np.maximum(ap * ap + bp * bp - 2.0 * ap * bp * c, 0.0)

    dap = 2.0 * feats / (na[:, None] + 1.0)  # (B, d)
    dbp = 2.0 * protos / (nb[:, None] + 1.0)  # (k, d)
    # cross-term chain pieces, zeroed on the guarded branch
    dc_df = np.where(
        live[..., None],
        2.0 * dot[..., None] * protos[None, :, :] / safe[..., None]
        - 2.0 * (dot * dot / (na_safe * safe))[..., None] * feats[:, None, :],
        0.0,
    )  # (B, k, d)
    dc_dm = np.where(
        live[..., None],
        2.0 * dot[..., None] * feats[:, None, :] / safe[..., None]
        - 2.0 * (dot * dot / (nb_safe * safe))[..., None] * protos[None, :, :],
        0.0,
    )
    gs_f = (2.0 * ap - 2.0 * bp * c)[..., None] * dap[:, None, :] - (2.0 * ap * bp)[..., None] * dc_df
    gs_m = (2.0 * bp - 2.0 * ap * c)[..., None] * dbp[None, :, :] - (2.0 * ap * bp)[..., None] * dc_dm
    return s, gs_f, gs_m


def _ed_terms(feats: np.ndarray, protos: np.ndarray):
    diff = feats[:, None, :] - protos[None, :, :]  # (B, k, d)
    s = np.einsum("bkd,bkd->bk", diff, diff)
    return s, 2.0 * diff, -2.0 * diff


def prototype_probabilities(distances: np.ndarray) -> np.ndarray:
    """Stable softmax over negated distances."""
    d = np.asarray(distances, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d < 0):
        raise ValueError("distances must be finite and nonnegative")
    logits = -(d - d.min(axis=-1, keepdims=True))
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


def _loss_and_feature_grads(model: CpnModel, feats: np.ndarray, labels: np.ndarray,
                            lam: float, ce_power: int):
    """Mean loss, d loss/d features and d loss/d prototypes for a batch."""
    b = feats.shape[0]
    if model.metric == MetricKind.SLED:
        s, gs_f, gs_m = _sled_terms(feats, model.prototypes)
    else:
        s, gs_f, gs_m = _ed_terms(feats, model.prototypes)
    dist = np.sqrt(np.maximum(s, _D_FLOOR))
    ce_arg = dist if ce_power == 1 else s
    shifted = -(ce_arg - ce_arg.min(axis=1, keepdims=True))
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(b)
    ce = -np.log(p[rows, labels])
    pl = s[rows, labels]
    loss = float(np.mean(ce + lam * pl))

    # d ce / d ce_arg_i = delta_iy - p_i; chain to S via dD/dS where needed
    dce_darg = -p
    dce_darg[rows, labels] += 1.0
    if ce_power == 1:
        ds = dce_darg / (2.0 * dist)
    else:
        ds = dce_darg.copy()
    ds[rows, labels] += lam  # prototype-loss term on S_y
    ds /= b
    dfeats = np.einsum("bk,bkd->bd", ds, gs_f)
    dprotos = np.einsum("bk,bkd->kd", ds, gs_m)
    return loss, dfeats, dprotos


def cpn_distances(model: CpnModel, feats: np.ndarray) -> np.ndarray:
    """Distance D (not squared) from each feature to each prototype."""
    feats = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    if model.metric == MetricKind.SLED:
        s, _, _ = _sled_terms(feats, model.prototypes)
    else:
        s, _, _ = _ed_terms(feats, model.prototypes)
    return np.sqrt(np.maximum(s, 0.0))


def cpn_loss(model: CpnModel, maps: np.ndarray, labels: np.ndarray, cfg: TrainConfig = TrainConfig()) -> float:
    """Mean total loss (cross entropy + lambda * prototype loss) of a batch."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= model.k:
        raise ValueError("label out of range")
    feats, _ = _forward(model, np.asarray(maps, dtype=np.float64))
    lam = cfg.resolve_lambda(model.metric)
    loss, _, _ = _loss_and_feature_grads(model, feats, labels, lam, cfg.ce_distance_power)
    return loss


def cpn_loss_grads(model: CpnModel, maps: np.ndarray, labels: np.ndarray, cfg: TrainConfig = TrainConfig()):
    """Loss and gradients for every parameter in model.params() order."""
    labels = np.asarray(labels)
    feats, cache = _forward(model, np.asarray(maps, dtype=np.float64))
    lam = cfg.resolve_lambda(model.metric)
    loss, dfeats, dprotos = _loss_and_feature_grads(model, feats, labels, lam, cfg.ce_distance_power)
    grads = _backward(model, cache, dfeats)
    grads.append(dprotos)
    return loss, grads


# ------------------------------------------------------------------ training

def cpn_train(maps: np.ndarray, labels: np.ndarray, cfg: TrainConfig = TrainConfig(),
              model: CpnModel | None = None, metric: MetricKind = MetricKind.SLED,
              d: int = 16) -> CpnModel:
    """Adam training with step lr decay; deterministic given cfg.seed."""
    maps = np.asarray(maps, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0) or labels.min() < 0:
        raise ValueError("class without samples")
    if model is None:
        model = init_cpn(k, d=d, metric=metric, seed=cfg.seed, input_hw=maps.shape[-1])
        # standardize the raw feature-map scale (waveform length dwarfs MAV)
        mean = maps.mean(axis=0)
        std = maps.std(axis=0)
        std[std < 1e-12] = 1.0
        model.input_mean = mean
        model.input_std = std
        # warm-start prototypes at the class means of the initial features;
        # with SLED a cold random start collapses toward the origin, where
        # the lifted representation is direction-blind
        feats = np.concatenate(
            [cpn_forward(model, maps[s : s + 256]) for s in range(0, maps.shape[0], 256)]
        )
        for c in range(k):
            model.prototypes[c] = feats[labels == c].mean(axis=0)
    lam = cfg.resolve_lambda(model.metric)

    params = model.params()
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    t = 0
    rng = np.random.default_rng(cfg.seed)
    n = maps.shape[0]
    epoch_losses = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_epochs)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = cpn_loss_grads(model, maps[idx], labels[idx], cfg)
            losses.append(loss)
            t += 1
            for j, (p, g) in enumerate(zip(params, grads)):
                m_state[j] = cfg.beta1 * m_state[j] + (1 - cfg.beta1) * g
                v_state[j] = cfg.beta2 * v_state[j] + (1 - cfg.beta2) * g * g
                mhat = m_state[j] / (1 - cfg.beta1**t)
                vhat = v_state[j] / (1 - cfg.beta2**t)
                p -= lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        epoch_losses.append(float(np.mean(losses)))
    feats = cpn_forward(model, maps)
    pred = np.argmin(cpn_distances(model, feats), axis=1)
    model.history = {
        "epoch_losses": epoch_losses,
        "train_accuracy": float(np.mean(pred == labels)),
        "lambda_loss": lam,
    }
    return model


# -------------------------------------------------------------- serialization

def save_cpn(model: CpnModel, path: str) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<6i", len(model.conv_specs), model.d, model.k,
                            model.pool, model.input_hw, _METRIC_CODES[model.metric]))
        in_ch = 1
        for spec in model.conv_specs:
            f.write(struct.pack("<4i", in_ch, spec.out_channels, spec.kernel, spec.stride))
            in_ch = spec.out_channels
        hw = model.input_hw
        mean = model.input_mean if model.input_mean is not None else np.zeros((hw, hw))
        std = model.input_std if model.input_std is not None else np.ones((hw, hw))
        for arr in (mean, std, *model.params()):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_cpn(path: str) -> CpnModel:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a CPN model file")
        n_conv, d, k, pool, input_hw, mcode = struct.unpack("<6i", f.read(24))
        specs = []
        shapes = []
        for _ in range(n_conv):
            in_ch, out_ch, kern, stride = struct.unpack("<4i", f.read(16))
            specs.append(ConvSpec(out_ch, kern, stride))
            shapes.append((out_ch, in_ch, kern, kern))
        read = lambda *shape: np.frombuffer(
            f.read(8 * int(np.prod(shape))), dtype="<f8"
        ).reshape(shape).astype(np.float64)
        input_mean = read(input_hw, input_hw)
        input_std = read(input_hw, input_hw)
        conv_w = [read(*s) for s in shapes]
        conv_b = [read(s[0]) for s in shapes]
        hw, in_ch = input_hw, 1
        for spec in specs:
            hw = (hw - spec.kernel) // spec.stride + 1
            in_ch = spec.out_channels
        hw //= pool
        fc_w = read(in_ch * hw * hw, d)
        fc_b = read(d)
        protos = read(k, d)
    return CpnModel(tuple(specs), conv_w, conv_b, fc_w, fc_b, protos,
                    _CODE_METRICS[mcode], input_hw, pool,
                    input_mean=input_mean, input_std=input_std)
