"""Query-based text spotting network.

A small stride-2 conv stack embeds the image into a G x G token grid;
learned queries cross-attend into it through L decoder layers; optional
coarse-to-fine refinement re-attends with logits clamped to each
query's current attention support; parallel per-position heads read the
transcription out of the refined support. Location is never an input
or a regression target - it is read off the attention maps.

All parameters live in a flat name -> Tensor dict so the optimizer,
the container format, and tests can treat them uniformly.
"""

from __future__ import annotations

import functools
import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .charset import NUM_CLASSES, T_MAX
from .rng import Rng, derive_seed

MASK_NEG = -1e30   # additive attention mask; exp underflows to exactly 0


class DimensionError(ValueError):
    """Input image size unsupported by the encoder."""


class FormatError(ValueError):
    """Model container malformed (reported with byte offset)."""


@dataclass
class ModelConfig:
    """Architecture knobs.

    conv_channels lists the intermediate conv block widths; a final
    block emitting embed_dim channels is always appended, so the grid
    side is image_size / 2**(len(conv_channels) + 1). Fewer blocks mean
    a finer grid and a smaller receptive field per cell.
    """
    embed_dim: int = 64
    n_queries: int = 10
    layers: int = 2
    heads: int = 4
    refine_r: int = 1
    t_max: int = T_MAX
    alpha: float = 0.3
    conv_channels: tuple[int, ...] = (16, 32)

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.refine_r not in (0, 1, 2):
            raise ValueError(f"refine_r must be 0, 1, or 2, got {self.refine_r}")
        if self.n_queries < 1:
            raise ValueError("n_queries must be >= 1")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if isinstance(self.conv_channels, list):
            self.conv_channels = tuple(self.conv_channels)


@dataclass
class SpotPrediction:
    query_id: int
    char_logits: T.Tensor        # (t_max, K)
    confidence: T.Tensor         # (1, 1), sigmoid output
    attention_map: T.Tensor      # (G, G) coarse map, rows sum to 1
    refined_map: T.Tensor        # (G, G) after R refinement stages


# ---------------------------------------------------------------------------
# parameters


def param_specs(config: ModelConfig):
    """(name, shape, kind) for every parameter; kind drives the init."""
    d = config.embed_dim
    specs = []
    chans = [1, *config.conv_channels, d]
    for k in range(len(chans) - 1):
        specs.append((f"conv{k}_w", (9 * chans[k], chans[k + 1]), "w"))
        specs.append((f"conv{k}_b", (1, chans[k + 1]), "zero"))
    specs += [("enc_ln_g", (1, d), "one"), ("enc_ln_b", (1, d), "zero"),
              ("queries", (config.n_queries, d), "emb")]
    for l in range(config.layers):
        p = f"layer{l}_"
        for blk in ("self", "cross"):
            specs += [(f"{p}{blk}_wq", (d, d), "w"), (f"{p}{blk}_wk", (d, d), "w"),
                      (f"{p}{blk}_wv", (d, d), "w"), (f"{p}{blk}_wo", (d, d), "w"),
                      (f"{p}{blk}_bo", (1, d), "zero")]
        specs += [(f"{p}ffn_w1", (d, 2 * d), "w"), (f"{p}ffn_b1", (1, 2 * d), "zero"),
                  (f"{p}ffn_w2", (2 * d, d), "w"), (f"{p}ffn_b2", (1, d), "zero")]
        for ln in ("ln1", "ln2", "ln3"):
            specs += [(f"{p}{ln}_g", (1, d), "one"), (f"{p}{ln}_b", (1, d), "zero")]
    for r in range(config.refine_r):
        p = f"refine{r}_"
        specs += [(f"{p}wq", (d, d), "w"), (f"{p}wk", (d, d), "w"),
                  (f"{p}wv", (d, d), "w"), (f"{p}wo", (d, d), "w"),
                  (f"{p}bo", (1, d), "zero"),
                  (f"{p}ln_g", (1, d), "one"), (f"{p}ln_b", (1, d), "zero")]
    specs += [("pos_emb", (config.t_max, d), "emb"),
              ("rec_q_w", (2 * d, d), "w"), ("rec_q_b", (1, d), "zero"),
              ("rec_ln_g", (1, d), "one"), ("rec_ln_b", (1, d), "zero"),
              ("rec_w1", (2 * d, 2 * d), "w"), ("rec_b1", (1, 2 * d), "zero"),
              ("rec_w2", (2 * d, NUM_CLASSES), "w"), ("rec_b2", (1, NUM_CLASSES), "zero"),
              ("conf_w", (d, 1), "w"), ("conf_b", (1, 1), "zero")]
    return specs


def init_params(config: ModelConfig, seed: int) -> dict[str, T.Tensor]:
    """Uniform(-1/sqrt(fan_in)) weights, zero biases, unit LN gains.

    Each tensor draws from its own name-derived stream, so adding or
    reordering parameters never perturbs the others.
    """
    params = {}
    for name, shape, kind in param_specs(config):
        if kind == "w":
            bound = 1.0 / math.sqrt(shape[0])
            data = Rng(derive_seed(seed, name)).uniform(-bound, bound, shape)
        elif kind == "emb":
            bound = 1.0 / math.sqrt(shape[1])
            data = Rng(derive_seed(seed, name)).uniform(-bound, bound, shape)
        elif kind == "zero":
            data = np.zeros(shape)
        elif kind == "one":
            data = np.ones(shape)
        else:  # pragma: no cover
            raise AssertionError(kind)
        params[name] = T.Tensor(data, requires_grad=True)
    return params


# ---------------------------------------------------------------------------
# encoder


@functools.lru_cache(maxsize=8)
def _conv_ids(h: int, w: int) -> tuple[np.ndarray, int, int]:
    """Gather indices of a 3x3 stride-2 pad-1 conv over an h x w map.

    Index h*w points at an appended all-zero row, realizing padding.
    """
    ho, wo = h // 2, w // 2
    zero = h * w
    ids = np.empty(ho * wo * 9, dtype=np.int64)
    n = 0
    for oy in range(ho):
        for ox in range(wo):
            for ky in range(3):
                for kx in range(3):
                    iy = 2 * oy - 1 + ky
                    ix = 2 * ox - 1 + kx
                    ids[n] = iy * w + ix if 0 <= iy < h and 0 <= ix < w else zero
                    n += 1
    return ids, ho, wo


def _conv_block(x: T.Tensor, weight: T.Tensor, bias: T.Tensor,
                h: int, w: int) -> tuple[T.Tensor, int, int]:
    """relu(conv3x3-stride2(x)) on an (h*w, c) feature map."""
    c = x.data.shape[1]
    ids, ho, wo = _conv_ids(h, w)
    table = T.concat([x, T.Tensor(np.zeros((1, c)))], axis=0)
    patches = T.embedding(table, ids)                 # (ho*wo*9, c)
    rows = T.reshape(patches, (ho * wo, 9 * c))       # im2col layout
    out = T.add(T.matmul(rows, weight), bias)
    return T.relu(out), ho, wo


@functools.lru_cache(maxsize=8)
def _position_encoding(g: int, d: int) -> np.ndarray:
    """2-D sinusoidal encoding: first half of channels = row, second = col."""
    half = d // 2
    pe = np.zeros((g * g, d))
    rows, cols = np.divmod(np.arange(g * g), g)
    for axis_vals, offset in ((rows, 0), (cols, half)):
        for k in range(half // 2):
            freq = 1.0 / (10000.0 ** (2 * k / half))
            pe[:, offset + 2 * k] = np.sin(axis_vals * freq)
            pe[:, offset + 2 * k + 1] = np.cos(axis_vals * freq)
    return pe


@functools.lru_cache(maxsize=8)
def _cell_coords(g: int) -> np.ndarray:
    """(g*g, 2) cell-center coordinates in [0, 1] as (x, y) pairs."""
    rows, cols = np.divmod(np.arange(g * g), g)
    return np.stack([(cols + 0.5) / g, (rows + 0.5) / g], axis=1)


def encode_image(image: T.Tensor, params: dict, config: ModelConfig) -> T.Tensor:
    """Image -> (G*G, d) token grid with positional encoding added."""
    shape = image.data.shape
    if len(shape) != 2 or shape[0] != shape[1] or shape[0] not in (64, 128):
        raise DimensionError(
            f"expected square 64 or 128 px image, got shape {shape}")
    h = w = shape[0]
    x = T.reshape(image, (h * w, 1))
    for k in range(len(config.conv_channels) + 1):
        x, h, w = _conv_block(x, params[f"conv{k}_w"], params[f"conv{k}_b"], h, w)
    x = T.layer_norm(x, params["enc_ln_g"], params["enc_ln_b"])
    return T.add(x, T.Tensor(_position_encoding(h, config.embed_dim)))


# ---------------------------------------------------------------------------
# decoder


def _attention(q_in: T.Tensor, kv_in: T.Tensor, params: dict, prefix: str,
               heads: int, mask_add: np.ndarray | None = None
               ) -> tuple[T.Tensor, T.Tensor]:
    """Multi-head attention; returns (output, head-mean weights).

    mask_add, if given, is added to every head's logits (shape (A, B));
    MASK_NEG entries force exact zeros after softmax.
    """
    a = q_in.data.shape[0]
    b = kv_in.data.shape[0]
    d = q_in.data.shape[1]
    dh = d // heads
    scale = T.Tensor(np.asarray(1.0 / math.sqrt(dh)))

    q = T.reshape(T.matmul(q_in, params[prefix + "_wq"]), (a * heads, dh))
    k = T.reshape(T.matmul(kv_in, params[prefix + "_wk"]), (b * heads, dh))
    v = T.reshape(T.matmul(kv_in, params[prefix + "_wv"]), (b * heads, dh))

    outs, weights = [], []
    for head in range(heads):
        qh = T.embedding(q, np.arange(a) * heads + head)
        kh = T.embedding(k, np.arange(b) * heads + head)
        vh = T.embedding(v, np.arange(b) * heads + head)
        scores = T.mul(T.matmul(qh, T.transpose(kh)), scale)
        if mask_add is not None:
            scores = T.add(scores, T.Tensor(mask_add))
        w = T.softmax_rows(scores)
        outs.append(T.matmul(w, vh))
        weights.append(w)
    out = T.add(T.matmul(T.concat(outs, axis=1), params[prefix + "_wo"]),
                params[prefix + "_bo"])
    mean_w = weights[0]
    for w in weights[1:]:
        mean_w = T.add(mean_w, w)
    mean_w = T.mul(mean_w, T.Tensor(np.asarray(1.0 / heads)))
    return out, mean_w


def decode_queries(embeddings: T.Tensor, params: dict, config: ModelConfig
                   ) -> tuple[T.Tensor, T.Tensor]:
    """L decoder layers; returns (states (N, d), maps (N, G*G)).

    Maps are the head-mean of the last layer's cross-attention rows;
    each row is a distribution over grid tokens.
    """
    states = params["queries"]
    maps = None
    for l in range(config.layers):
        p = f"layer{l}_"
        sa, _ = _attention(states, states, params, p + "self", config.heads)
        states = T.layer_norm(T.add(states, sa),
                              params[p + "ln1_g"], params[p + "ln1_b"])
        ca, maps = _attention(states, embeddings, params, p + "cross", config.heads)
        states = T.layer_norm(T.add(states, ca),
                              params[p + "ln2_g"], params[p + "ln2_b"])
        hidden = T.relu(T.add(T.matmul(states, params[p + "ffn_w1"]),
                              params[p + "ffn_b1"]))
        ff = T.add(T.matmul(hidden, params[p + "ffn_w2"]), params[p + "ffn_b2"])
        states = T.layer_norm(T.add(states, ff),
                              params[p + "ln3_g"], params[p + "ln3_b"])
    return states, maps


def refine(states: T.Tensor, maps: T.Tensor, embeddings: T.Tensor,
           params: dict, config: ModelConfig, r: int
           ) -> tuple[T.Tensor, T.Tensor]:
    """R coarse-to-fine stages; R=0 returns the inputs unchanged.

    Each stage thresholds the current map at alpha * per-query max
    (detached), then re-attends with logits outside that mask forced to
    MASK_NEG, so the refined map's support nests inside the mask.
    """
    for stage in range(r):
        key = f"refine{stage}_wq"
        if key not in params:
            raise ValueError(
                f"no weights for refinement stage {stage}; model built "
                f"with refine_r={config.refine_r}")
        support = maps.data >= config.alpha * maps.data.max(axis=1, keepdims=True)
        mask_add = np.where(support, 0.0, MASK_NEG)
        ca, maps = _attention(states, embeddings, params, f"refine{stage}",
                              config.heads, mask_add=mask_add)
        states = T.layer_norm(T.add(states, ca),
                              params[f"refine{stage}_ln_g"],
                              params[f"refine{stage}_ln_b"])
    return states, maps


def recognize(states: T.Tensor, maps: T.Tensor, embeddings: T.Tensor,
              params: dict, config: ModelConfig,
              coarse_maps: T.Tensor | None = None) -> list[SpotPrediction]:
    """Per-query transcription logits and confidence.

    Each character position runs its own attention readout over the
    grid embeddings, weighted by the query's coarse attention map: the
    content softmax is multiplied by the map values, so reading only
    works through cells the map covers. Because the product is
    differentiable, every character position pushes map mass onto the
    cells it needs to read - localization emerges with no geometric
    supervision. Reading uses the coarse map rather than the refined
    one: the refined map is sharpened to a few near-peak cells (that
    is its job - it is the localization output), far fewer than a
    word's glyphs span, while the coarse map stays spread enough that
    the content term can steer different positions to different cells.

    The content query for position t blends the query state with a
    position embedding, so successive positions are free to focus on
    different parts of the word; the classifier sees the position
    embedding alongside the readout. With a fine grid, one cell's
    receptive field covers roughly one glyph, so correct transcription
    requires the attention to actually visit the right cells.
    """
    n, d = states.data.shape
    t_max = config.t_max
    g2 = embeddings.data.shape[0]
    grid = int(math.isqrt(g2))

    rep_ids = np.repeat(np.arange(n), t_max)
    state_rep = T.embedding(states, rep_ids)
    pos_rep = T.embedding(params["pos_emb"], np.tile(np.arange(t_max), n))

    read_maps = maps if coarse_maps is None else coarse_maps
    queries = T.add(T.matmul(T.concat([state_rep, pos_rep], axis=1),
                             params["rec_q_w"]), params["rec_q_b"])
    content = T.mul(T.matmul(queries, T.transpose(embeddings)),
                    T.Tensor(np.full((1, 1), 1.0 / math.sqrt(d))))
    weights = T.mul(T.softmax_rows(content), T.embedding(read_maps, rep_ids))
    readout = T.layer_norm(T.matmul(weights, embeddings),
                           params["rec_ln_g"], params["rec_ln_b"])

    feats = T.concat([pos_rep, readout], axis=1)
    hidden = T.relu(T.add(T.matmul(feats, params["rec_w1"]),
                          params["rec_b1"]))
    logits_all = T.add(T.matmul(hidden, params["rec_w2"]), params["rec_b2"])
    confidences = T.sigmoid(T.add(T.matmul(states, params["conf_w"]),
                                  params["conf_b"]))

    if coarse_maps is None:
        coarse_maps = maps
    preds = []
    for q in range(n):
        preds.append(SpotPrediction(
            query_id=q,
            char_logits=T.embedding(logits_all, np.arange(t_max) + q * t_max),
            confidence=T.embedding(confidences, np.array([q])),
            attention_map=T.reshape(T.embedding(coarse_maps, np.array([q])),
                                    (grid, grid)),
            refined_map=T.reshape(T.embedding(maps, np.array([q])),
                                  (grid, grid)),
        ))
    return preds


def forward(image: T.Tensor, params: dict, config: ModelConfig,
            r: int | None = None) -> list[SpotPrediction]:
    """encode -> decode -> refine(R) -> recognize."""
    emb = encode_image(image, params, config)
    states, coarse = decode_queries(emb, params, config)
    states, refined = refine(states, coarse, emb, params, config,
                             config.refine_r if r is None else r)
    return recognize(states, refined, emb, params, config, coarse_maps=coarse)


# ---------------------------------------------------------------------------
# container format


MAGIC = b"ECHO1"


def save_model(path: Path | str, params: dict[str, T.Tensor],
               config: ModelConfig) -> None:
    """magic | u32 config-JSON length | JSON | u32 count | tensors.

    Per tensor: u32 name length, name bytes, u32 rank, u32 dims,
    float64 little-endian payload. Tensors are written in sorted name
    order so identical params produce identical bytes.
    """
    blob = bytearray()
    blob += MAGIC
    cfg = json.dumps(asdict(config), sort_keys=True).encode()
    blob += struct.pack("<I", len(cfg)) + cfg
    names = sorted(params)
    blob += struct.pack("<I", len(names))
    for name in names:
        data = params[name].data
        nb = name.encode()
        blob += struct.pack("<I", len(nb)) + nb
        blob += struct.pack("<I", data.ndim)
        blob += struct.pack(f"<{data.ndim}I", *data.shape)
        blob += data.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.buf):
            raise FormatError(
                f"truncated container: needed {n} bytes for {what} at byte "
                f"{self.off}, file has {len(self.buf)}")
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_model(path: Path | str) -> tuple[dict[str, T.Tensor], ModelConfig]:
    """Inverse of save_model; bit-identical round trip."""
    r = _Reader(Path(path).read_bytes())
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    cfg_len = r.u32("config length")
    config = ModelConfig(**json.loads(r.take(cfg_len, "config JSON")))
    count = r.u32("tensor count")
    params = {}
    for _ in range(count):
        name = r.take(r.u32("name length"), "tensor name").decode()
        rank = r.u32(f"rank of {name}")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"dims of {name}"))
        n_items = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = r.take(8 * n_items, f"payload of {name}")
        data = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
        params[name] = T.Tensor(data, requires_grad=True)
    if r.off != len(r.buf):
        raise FormatError(
            f"{len(r.buf) - r.off} trailing bytes at byte {r.off}")
    return params, config
