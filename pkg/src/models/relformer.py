"""
Relformer Network
=================
Relative pose regression from an image pair (I1 = reference with known
pose, I2 = query):

    backbone (shared)  ->  F_t^1, F_t^2 per task t in {trans, rot}
    concat channels + 1x1 conv  ->  paired map (H_f, W_f, C_h)
    flatten row-major, prepend task token  ->  (H_f * W_f + 1, C_h)
    pre-LN transformer encoder, positional encoding re-added per layer
    token output  ->  MLP head  ->  dx (3) / rotation vector (4 | 6 | 9)

Variants:
- aggregator "conv": two 3x3 conv + relu layers and a global average pool
  replace the sequence/encoder path
- aggregator "baseline": pooled last-stage descriptors of both images,
  concatenated, straight into the heads

Positional encoding layout: E_x has W_f + 1 rows, E_y has H_f + 1 rows,
each C_h / 2 wide. Grid cell (i, j), 1-based, is [E_x[j]; E_y[i]] and the
token takes [E_x[0]; E_y[0]].
"""

import numpy as np

from src.diffcore import (
    Tensor,
    concat,
    dropout,
    embedding,
    gelu,
    global_avg_pool,
    relu,
    softmax,
)
from src.errors import ShapeError
from src.models.backbone import Backbone, extract_features, pooled_descriptor
from src.models.config import EncoderConfig, ModelConfig
from src.models.layers import Conv2d, LayerNorm, Linear, MLPHead, Module, parameter, trunc_normal


# ---------------------------------------------------------------------------
# Sequence construction
# ---------------------------------------------------------------------------

class PositionalEncoding(Module):
    """Learned 2D encoding: column table E_x and row table E_y."""

    def __init__(self, height: int, width: int, hidden: int, rng: np.random.Generator):
        if hidden % 2:
            raise ShapeError(f"positional encoding: hidden dim {hidden} must be even")
        self.height, self.width, self.hidden = height, width, hidden
        self.col_embed = parameter(trunc_normal(rng, (width + 1, hidden // 2)))   # E_x
        self.row_embed = parameter(trunc_normal(rng, (height + 1, hidden // 2)))  # E_y

    def grid_indices(self) -> tuple:
        """(row, col) indices of every sequence slot, token first then row-major grid."""
        rows, cols = np.meshgrid(
            np.arange(1, self.height + 1), np.arange(1, self.width + 1), indexing="ij"
        )
        return (
            np.concatenate([[0], rows.reshape(-1)]),
            np.concatenate([[0], cols.reshape(-1)]),
        )

    def forward(self) -> Tensor:
        """(H_f * W_f + 1, C_h) encoding sequence."""
        rows, cols = self.grid_indices()
        return concat([embedding(self.col_embed, cols), embedding(self.row_embed, rows)], axis=-1)


def pair_and_project(f1: Tensor, f2: Tensor, proj: Conv2d) -> Tensor:
    """Channelwise concat [F1, F2] then 1x1 projection to C_h."""
    if f1.shape != f2.shape:
        raise ShapeError(f"pair_and_project: feature maps differ ({f1.shape} vs {f2.shape})")
    return proj(concat([f1, f2], axis=-1))


def build_sequence(fmap: Tensor, token: Tensor, penc: PositionalEncoding) -> tuple:
    """
    Flatten a paired map (B, H_f, W_f, C_h) row-major and prepend the task
    token. Returns (sequence (B, H_f*W_f + 1, C_h), encoding (H_f*W_f + 1, C_h)).
    """
    B, H, W, C = fmap.shape
    if (H, W, C) != (penc.height, penc.width, penc.hidden):
        raise ShapeError(
            f"build_sequence: map {H}x{W}x{C} does not match encoding tables "
            f"{penc.height}x{penc.width}x{penc.hidden}"
        )
    if token.shape != (C,):
        raise ShapeError(f"build_sequence: token shape {token.shape} != ({C},)")
    tokens = Tensor(np.ones((B, 1, 1), dtype=fmap.dtype)) * token.reshape(1, 1, C)
    sequence = concat([tokens, fmap.reshape(B, H * W, C)], axis=1)
    return sequence, penc()


# ---------------------------------------------------------------------------
# Transformer encoder
# ---------------------------------------------------------------------------

class MultiHeadAttention(Module):
    def __init__(self, hidden: int, heads: int, rng: np.random.Generator):
        self.heads = heads
        self.wq = Linear(hidden, hidden, rng)
        self.wk = Linear(hidden, hidden, rng)
        self.wv = Linear(hidden, hidden, rng)
        self.wo = Linear(hidden, hidden, rng)

    def _split(self, x: Tensor) -> Tensor:
        B, N, C = x.shape
        return x.reshape(B, N, self.heads, C // self.heads).transpose(0, 2, 1, 3)

    def forward(self, x: Tensor) -> tuple:
        """Returns (output (B, N, C), attention weights (B, heads, N, N))."""
        B, N, C = x.shape
        q, k, v = self._split(self.wq(x)), self._split(self.wk(x)), self._split(self.wv(x))
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(C // self.heads))
        weights = softmax(scores, axis=-1)
        out = (weights @ v).transpose(0, 2, 1, 3).reshape(B, N, C)
        return self.wo(out), weights


class EncoderLayer(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.p = cfg.dropout
        self.norm_attn = LayerNorm(cfg.hidden)
        self.attn = MultiHeadAttention(cfg.hidden, cfg.heads, rng)
        self.norm_mlp = LayerNorm(cfg.hidden)
        self.fc1 = Linear(cfg.hidden, cfg.mlp_dim, rng)
        self.fc2 = Linear(cfg.mlp_dim, cfg.hidden, rng)

    def forward(self, x: Tensor, pos: Tensor, rng: np.random.Generator = None) -> tuple:
        attended, weights = self.attn(self.norm_attn(x + pos))
        x = x + dropout(attended, self.p, self.training, rng)
        hidden = self.fc2(gelu(self.fc1(self.norm_mlp(x))))
        x = x + dropout(hidden, self.p, self.training, rng)
        return x, weights


class TransformerEncoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.layers = [EncoderLayer(cfg, rng) for _ in range(cfg.layers)]
        self.norm = LayerNorm(cfg.hidden)

    def forward(self, sequence: Tensor, pos: Tensor, rng: np.random.Generator = None,
                return_attention: bool = False):
        """Token output r_t' of shape (B, C_h); optionally the per-layer attention weights."""
        if sequence.shape[1:] != pos.shape:
            raise ShapeError(f"encoder: sequence {sequence.shape} and encoding {pos.shape} differ")
        x, maps = sequence, []
        for layer in self.layers:
            x, weights = layer(x, pos, rng)
            maps.append(weights.data)
        token = self.norm(x[:, 0, :])
        return (token, maps) if return_attention else token


def encoder_forward(sequence: Tensor, pos: Tensor, encoder: TransformerEncoder,
                    train: bool = False, rng: np.random.Generator = None) -> Tensor:
    encoder.train(train)
    return encoder(sequence, pos, rng)


class ConvAggregator(Module):
    """Two 3x3 conv + relu layers then global average pooling to C_h."""

    def __init__(self, hidden: int, rng: np.random.Generator):
        self.conv1 = Conv2d(hidden, hidden, 3, rng)
        self.conv2 = Conv2d(hidden, hidden, 3, rng)

    def forward(self, fmap: Tensor) -> Tensor:
        return global_avg_pool(relu(self.conv2(relu(self.conv1(fmap)))))


def conv_aggregator_forward(fmap: Tensor, aggregator: ConvAggregator) -> Tensor:
    return aggregator(fmap)


def regress_head(r: Tensor, head: MLPHead) -> Tensor:
    return head(r)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

class Branch(Module):
    """Everything task-specific: projection, encoding tables, token, aggregator, head."""

    def __init__(self, feature_shape: tuple, cfg: ModelConfig, out_dim: int, rng: np.random.Generator):
        H, W, C = feature_shape
        hidden = cfg.encoder.hidden
        self.proj = Conv2d(2 * C, hidden, 1, rng)
        if cfg.aggregator == "transformer":
            self.penc = PositionalEncoding(H, W, hidden, rng)
            self.token = parameter(trunc_normal(rng, (hidden,)))
            self.encoder = TransformerEncoder(cfg.encoder, rng)
        else:
            self.conv = ConvAggregator(hidden, rng)
        self.head = MLPHead(hidden, out_dim, rng)

    def aggregate(self, f1: Tensor, f2: Tensor, rng=None, return_attention: bool = False):
        paired = pair_and_project(f1, f2, self.proj)
        if hasattr(self, "encoder"):
            sequence, pos = build_sequence(paired, self.token, self.penc)
            return self.encoder(sequence, pos, rng, return_attention=return_attention)
        r = conv_aggregator_forward(paired, self.conv)
        return (r, []) if return_attention else r

    def forward(self, f1: Tensor, f2: Tensor, rng=None) -> Tensor:
        return regress_head(self.aggregate(f1, f2, rng), self.head)


class RelformerModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.backbone = Backbone(cfg.backbone, rng)
        if cfg.aggregator == "baseline":
            width = 2 * cfg.backbone.descriptor_dim
            self.trans_head = MLPHead(width, 3, rng)
            self.rot_head = MLPHead(width, cfg.rot_dim, rng)
        else:
            trans_shape, rot_shape = cfg.feature_shapes()
            self.trans = Branch(trans_shape, cfg, 3, rng)
            self.rot = Branch(rot_shape, cfg, cfg.rot_dim, rng)

    def _split_batch(self, images1: Tensor, images2: Tensor) -> Tensor:
        if images1.shape != images2.shape:
            raise ShapeError(f"relformer: image batches differ ({images1.shape} vs {images2.shape})")
        # one backbone pass over both images keeps the siamese weights identical
        return concat([images1, images2], axis=0)

    def forward(self, images1: Tensor, images2: Tensor, rng: np.random.Generator = None) -> tuple:
        """(dx (B, 3), rotation vector (B, 4 | 6 | 9)) for reference images1 and query images2."""
        B = images1.shape[0]
        both = self._split_batch(images1, images2)
        if self.cfg.aggregator == "baseline":
            return baseline_forward(both, B, self)
        f_trans, f_rot = extract_features(both, self.backbone, self.cfg)
        dx = self.trans(f_trans[:B], f_trans[B:], rng)
        rot = self.rot(f_rot[:B], f_rot[B:], rng)
        return dx, rot

    def attention_maps(self, images1: Tensor, images2: Tensor) -> dict:
        """Per-branch list of (B, heads, N, N) attention weights, eval mode."""
        if self.cfg.aggregator != "transformer":
            return {"trans": [], "rot": []}
        self.eval()
        B = images1.shape[0]
        f_trans, f_rot = extract_features(self._split_batch(images1, images2), self.backbone, self.cfg)
        _, trans_maps = self.trans.aggregate(f_trans[:B], f_trans[B:], return_attention=True)
        _, rot_maps = self.rot.aggregate(f_rot[:B], f_rot[B:], return_attention=True)
        return {"trans": trans_maps, "rot": rot_maps}


def baseline_forward(both: Tensor, batch: int, model: RelformerModel) -> tuple:
    """Concatenated global descriptors of (reference, query) into the two heads."""
    desc = pooled_descriptor(both, model.backbone)
    paired = concat([desc[:batch], desc[batch:]], axis=-1)
    return model.trans_head(paired), model.rot_head(paired)


def relformer_forward(images1: Tensor, images2: Tensor, model: RelformerModel,
                      train: bool = False, rng: np.random.Generator = None) -> tuple:
    model.train(train)
    return model(images1, images2, rng)
