"""TDNN speaker-embedding network with statistics pooling.

Five time-delay layers splice context windows over a 40-dim feature
stream, a pooling layer concatenates per-dimension mean and standard
deviation over all valid frames, an affine layer produces the 256-dim
embedding (pre-activation), and a bias-free projection yields per-class
cosines trained with an additive-angular-margin softmax. Everything is
float64 numpy with hand-derived analytic gradients, so the whole network
is finite-difference checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import derive_seed

# (name, splice offsets, output dim); input dim is len(offsets) * previous dim
FRAME_LAYERS: tuple[tuple[str, tuple[int, ...], int], ...] = (
    ("frame1", (-2, -1, 0, 1, 2), 256),
    ("frame2", (-2, 0, 2), 256),
    ("frame3", (-3, 0, 3), 256),
    ("frame4", (0,), 256),
    ("frame5", (0,), 512),
)
FEAT_DIM = 40
EMBED_DIM = 256
STATS_DIM = 2 * FRAME_LAYERS[-1][2]
# total splice context: frames needed to produce one pooled frame
MIN_FRAMES = 1 + sum(max(offs) - min(offs) for _, offs, _ in FRAME_LAYERS)
VARIANCE_FLOOR = 1e-10

PARAMS_MAGIC = "TDNNPARAMS"
PARAMS_VERSION = 1


@dataclass
class TdnnConfig:
    num_classes: int
    feat_dim: int = FEAT_DIM

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")


@dataclass
class AamParams:
    margin: float = 0.2
    scale: float = 32.0

    def __post_init__(self) -> None:
        if self.margin < 0 or self.scale <= 0:
            raise ValueError("margin must be >= 0 and scale > 0")


@dataclass
class TdnnParams:
    """Immutable bundle of named tensors; layer.W rows are output units."""

    config: TdnnConfig
    tensors: dict[str, np.ndarray]

    def tensor_names(self) -> list[str]:
        return list(self.tensors)


def layer_dims(feat_dim: int = FEAT_DIM) -> list[tuple[str, int, int]]:
    """(name, spliced input dim, output dim) per frame layer."""
    dims = []
    prev = feat_dim
    for name, offsets, out_dim in FRAME_LAYERS:
        dims.append((name, len(offsets) * prev, out_dim))
        prev = out_dim
    return dims


def init_tdnn(cfg: TdnnConfig, seed: int) -> TdnnParams:
    """Gaussian weights with standard deviation 1/sqrt(fan_in), zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    tensors: dict[str, np.ndarray] = {}
    for name, in_dim, out_dim in layer_dims(cfg.feat_dim):
        tensors[f"{name}.W"] = rng.standard_normal((out_dim, in_dim)) / math.sqrt(in_dim)
        tensors[f"{name}.b"] = np.zeros(out_dim)
    tensors["segment6.W"] = rng.standard_normal((EMBED_DIM, STATS_DIM)) / math.sqrt(STATS_DIM)
    tensors["segment6.b"] = np.zeros(EMBED_DIM)
    tensors["projection.W"] = rng.standard_normal((EMBED_DIM, cfg.num_classes)) / math.sqrt(
        EMBED_DIM
    )
    return TdnnParams(cfg, tensors)


def splice(x: np.ndarray, offsets: tuple[int, ...]) -> np.ndarray:
    """Concatenate offset copies of x along the feature axis, valid frames
    only: output row k gathers input rows k+off-min(offsets)."""
    lo = -min(offsets)
    out_frames = len(x) - (max(offsets) - min(offsets))
    if out_frames < 1:
        raise ValueError(
            f"{len(x)} frames is too short for splice offsets {offsets}"
        )
    return np.hstack([x[lo + off : lo + off + out_frames] for off in offsets])


def stats_pool(h: np.ndarray, floor: float = VARIANCE_FLOOR) -> np.ndarray:
    """Concatenated per-dimension mean and floored standard deviation."""
    if len(h) < 1:
        raise ValueError("stats pooling needs at least one frame")
    mean = h.mean(axis=0)
    var = np.mean((h - mean) ** 2, axis=0)
    std = np.sqrt(np.maximum(var, floor))
    return np.concatenate([mean, std])


def forward_activations(params: TdnnParams, feats: np.ndarray) -> dict[str, np.ndarray]:
    """Forward pass keeping every intermediate (for audits and backprop)."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != params.config.feat_dim:
        raise ValueError(
            f"expected (T, {params.config.feat_dim}) features, got {feats.shape}"
        )
    if len(feats) < MIN_FRAMES:
        raise ValueError(f"need at least {MIN_FRAMES} frames, got {len(feats)}")
    acts: dict[str, np.ndarray] = {"input": feats}
    x = feats
    for name, offsets, _ in FRAME_LAYERS:
        spliced = splice(x, offsets)
        pre = spliced @ params.tensors[f"{name}.W"].T + params.tensors[f"{name}.b"]
        x = np.maximum(pre, 0.0)
        acts[f"{name}.spliced"] = spliced
        acts[f"{name}.pre"] = pre
        acts[f"{name}.out"] = x
    pooled = stats_pool(x)
    embedding = pooled @ params.tensors["segment6.W"].T + params.tensors["segment6.b"]
    acts["pooled"] = pooled
    acts["embedding"] = embedding
    acts["cosines"] = _cosines(embedding, params.tensors["projection.W"])
    return acts


def forward(params: TdnnParams, feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(embedding, per-class cosine logits)."""
    acts = forward_activations(params, feats)
    return acts["embedding"], acts["cosines"]


def _cosines(embedding: np.ndarray, proj: np.ndarray) -> np.ndarray:
    e_norm = np.linalg.norm(embedding)
    if e_norm == 0.0:
        raise ValueError("zero-norm embedding has no direction")
    w_norms = np.linalg.norm(proj, axis=0)
    if np.any(w_norms == 0.0):
        raise ValueError("projection has a zero-norm class column")
    return np.clip((embedding / e_norm) @ (proj / w_norms), -1.0, 1.0)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z)
    exp = np.exp(shifted)
    return exp / exp.sum()


def aam_loss(
    embedding: np.ndarray, proj: np.ndarray, label: int, aam: AamParams
) -> tuple[float, np.ndarray, np.ndarray]:
    """Additive-angular-margin cross entropy with analytic gradients.

    Logits are scale * cos(theta_j), except the target class which gets
    scale * cos(theta_y + margin); past theta_y + margin > pi the target
    logit falls back to the monotone linear form cos(theta_y) -
    margin*sin(margin). Returns (loss, d loss/d embedding, d loss/d proj).
    """
    embedding = np.asarray(embedding, dtype=np.float64)
    proj = np.asarray(proj, dtype=np.float64)
    n_classes = proj.shape[1]
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    e_norm = np.linalg.norm(embedding)
    if e_norm == 0.0:
        raise ValueError("zero-norm embedding")
    w_norms = np.linalg.norm(proj, axis=0)
    if np.any(w_norms == 0.0):
        raise ValueError("zero-norm projection column")
    u = embedding / e_norm
    v = proj / w_norms
    cos = np.clip(u @ v, -1.0, 1.0)

    cos_m, sin_m = math.cos(aam.margin), math.sin(aam.margin)
    c_y = cos[label]
    if c_y > math.cos(math.pi - aam.margin):
        sin_y = math.sqrt(max(1.0 - c_y * c_y, 0.0))
        psi = c_y * cos_m - sin_y * sin_m
        dpsi = cos_m + sin_m * c_y / sin_y if sin_y > 0.0 else cos_m
    else:
        psi = c_y - aam.margin * sin_m
        dpsi = 1.0

    logits = aam.scale * cos
    logits[label] = aam.scale * psi
    probs = _softmax(logits)
    loss = -math.log(max(probs[label], 1e-300))

    # dL/dcos_j, with the margin's slope folded into the target class
    g = probs.copy()
    g[label] -= 1.0
    g *= aam.scale
    g[label] *= dpsi

    grad_e = (v - u[:, None] * cos) @ g / e_norm
    grad_w = (u[:, None] - v * cos) * (g / w_norms)
    return loss, grad_e, grad_w


def loss_and_grads(
    params: TdnnParams, feats: np.ndarray, label: int, aam: AamParams
) -> tuple[float, dict[str, np.ndarray]]:
    """Full-network loss and gradients for one utterance."""
    acts = forward_activations(params, feats)
    loss, grad_emb, grad_proj = aam_loss(
        acts["embedding"], params.tensors["projection.W"], label, aam
    )
    grads: dict[str, np.ndarray] = {"projection.W": grad_proj}

    pooled = acts["pooled"]
    grads["segment6.W"] = np.outer(grad_emb, pooled)
    grads["segment6.b"] = grad_emb
    d_pooled = params.tensors["segment6.W"].T @ grad_emb

    h = acts["frame5.out"]
    num_frames, dim = h.shape
    mean = pooled[:dim]
    std = pooled[dim:]
    d_mean = d_pooled[:dim]
    d_std = d_pooled[dim:]
    var = np.mean((h - mean) ** 2, axis=0)
    # std is clamped at the floor; there the derivative vanishes
    live = var > VARIANCE_FLOOR
    d_h = np.tile(d_mean / num_frames, (num_frames, 1))
    d_h += np.where(live, d_std / std, 0.0) * (h - mean) / num_frames

    d_x = d_h
    for name, offsets, _ in reversed(FRAME_LAYERS):
        d_pre = d_x * (acts[f"{name}.pre"] > 0.0)
        grads[f"{name}.W"] = d_pre.T @ acts[f"{name}.spliced"]
        grads[f"{name}.b"] = d_pre.sum(axis=0)
        d_spliced = d_pre @ params.tensors[f"{name}.W"]
        below = acts["input"] if name == "frame1" else acts[_prev_layer(name) + ".out"]
        d_below = np.zeros_like(below)
        lo = -min(offsets)
        out_frames = len(d_pre)
        width = below.shape[1]
        for j, off in enumerate(offsets):
            d_below[lo + off : lo + off + out_frames] += d_spliced[
                :, j * width : (j + 1) * width
            ]
        d_x = d_below
    return loss, grads


def _prev_layer(name: str) -> str:
    names = [n for n, _, _ in FRAME_LAYERS]
    return names[names.index(name) - 1]


def train_step(
    params: TdnnParams,
    batch: list[tuple[np.ndarray, int]],
    lr: float,
    aam: AamParams,
) -> tuple[TdnnParams, float]:
    """One gradient-descent update on the batch-mean loss."""
    if not batch:
        raise ValueError("empty batch")
    if lr < 0:
        raise ValueError(f"lr must be >= 0, got {lr}")
    total: dict[str, np.ndarray] = {
        name: np.zeros_like(t) for name, t in params.tensors.items()
    }
    loss_sum = 0.0
    for feats, label in batch:
        loss, grads = loss_and_grads(params, feats, label, aam)
        loss_sum += loss
        for name, g in grads.items():
            total[name] += g
    mean_loss = loss_sum / len(batch)
    if not math.isfinite(mean_loss):
        raise FloatingPointError(f"non-finite training loss {mean_loss}")
    scale = lr / len(batch)
    updated = {
        name: params.tensors[name] - scale * total[name] for name in params.tensors
    }
    return TdnnParams(params.config, updated), mean_loss


def transfer_init(source: TdnnParams, new_num_classes: int, seed: int) -> TdnnParams:
    """Copy everything below the projection; reinitialize the projection
    for a new class count. Embeddings are unchanged by construction."""
    if new_num_classes < 1:
        raise ValueError(f"new_num_classes must be >= 1, got {new_num_classes}")
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "projection")))
    tensors = {
        name: t.copy() for name, t in source.tensors.items() if name != "projection.W"
    }
    tensors["projection.W"] = rng.standard_normal((EMBED_DIM, new_num_classes)) / math.sqrt(
        EMBED_DIM
    )
    return TdnnParams(TdnnConfig(new_num_classes, source.config.feat_dim), tensors)


def average_embeddings(embeddings: list[np.ndarray]) -> np.ndarray:
    if not embeddings:
        raise ValueError("cannot average zero embeddings")
    return np.mean(np.stack([np.asarray(e, dtype=np.float64) for e in embeddings]), axis=0)


# --- parameter files ------------------------------------------------------
#
# Text header:  TDNNPARAMS <version> <num_classes> <feat_dim> <tensor count>
# then one "name rows cols" line per tensor, a blank line, and the tensors'
# row-major little-endian float64 payloads in header order.


def save_params(path: str | Path, params: TdnnParams) -> None:
    header = [
        f"{PARAMS_MAGIC} {PARAMS_VERSION} {params.config.num_classes} "
        f"{params.config.feat_dim} {len(params.tensors)}"
    ]
    blobs = []
    for name, t in params.tensors.items():
        arr = np.ascontiguousarray(np.atleast_2d(np.asarray(t, dtype="<f8")))
        header.append(f"{name} {arr.shape[0]} {arr.shape[1]}")
        blobs.append(arr.tobytes())
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "wb") as fh:
        fh.write(("\n".join(header) + "\n\n").encode("utf-8"))
        for blob in blobs:
            fh.write(blob)


def load_params(path: str | Path) -> TdnnParams:
    data = Path(path).read_bytes()
    sep = data.find(b"\n\n")
    if sep < 0:
        raise ValueError(f"{path}: missing parameter header")
    lines = data[:sep].decode("utf-8").splitlines()
    magic = lines[0].split()
    if len(magic) != 5 or magic[0] != PARAMS_MAGIC:
        raise ValueError(f"{path}: not a parameter file")
    if int(magic[1]) != PARAMS_VERSION:
        raise ValueError(f"{path}: unsupported version {magic[1]}")
    num_classes, feat_dim, count = int(magic[2]), int(magic[3]), int(magic[4])
    if len(lines) - 1 != count:
        raise ValueError(f"{path}: header declares {count} tensors, lists {len(lines) - 1}")
    tensors: dict[str, np.ndarray] = {}
    offset = sep + 2
    for line in lines[1:]:
        name, rows_s, cols_s = line.split()
        rows, cols = int(rows_s), int(cols_s)
        nbytes = rows * cols * 8
        if offset + nbytes > len(data):
            raise ValueError(f"{path}: truncated payload for tensor {name}")
        arr = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=offset)
        tensors[name] = arr.reshape(rows, cols).copy()
        offset += nbytes
    for name in list(tensors):
        if name.endswith(".b"):
            tensors[name] = tensors[name].reshape(-1)
    return TdnnParams(TdnnConfig(num_classes, feat_dim), tensors)
