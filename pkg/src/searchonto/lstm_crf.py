"""Bidirectional LSTM + linear-chain CRF tagger for product spans (IOB).

The recurrent cell couples input and forget gates and uses peephole
terms on the input gate (previous cell) and output gate (current cell):

    i_t = sigmoid(W_xi x_t + W_hi h_{t-1} + w_ci * c_{t-1} + b_i)
    c_t = (1 - i_t) * c_{t-1} + i_t * tanh(W_xc x_t + W_hc h_{t-1} + b_c)
    o_t = sigmoid(W_xo x_t + W_ho h_{t-1} + w_co * c_t + b_o)
    h_t = o_t * tanh(c_t)

Peephole weights are diagonal, stored as vectors.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import nn
from .evaluation import CandidateList
from .nn import checkpoint
from .nn.layers import DTYPE, glorot_uniform, logsumexp, sigmoid
from .text import stem_token

TAGS = ("O", "B-PRODUCT", "I-PRODUCT")
O, B, I = 0, 1, 2
TAG_INDEX = {t: i for i, t in enumerate(TAGS)}
# I-PRODUCT may only follow B-PRODUCT or I-PRODUCT
TRANSITION_MASK = np.array([
    [0.0, 0.0, -np.inf],
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0],
])
START_MASK = np.array([0.0, 0.0, -np.inf])


class DataFormatError(ValueError):
    pass


# embeddings ---------------------------------------------------------------------

@dataclass
class EmbeddingTable:
    vectors: dict[str, np.ndarray]
    dim: int

    def __post_init__(self):
        for term, v in self.vectors.items():
            if v.shape != (self.dim,):
                raise DataFormatError(f"embedding for {term!r} has shape {v.shape}, expected ({self.dim},)")

    def lookup(self, tokens: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """(vectors [T, D] with zeros at OOV rows, OOV mask [T])."""
        out = np.zeros((len(tokens), self.dim))
        oov = np.zeros(len(tokens), dtype=bool)
        for t, tok in enumerate(tokens):
            v = self.vectors.get(tok)
            if v is None:
                oov[t] = True
            else:
                out[t] = v
        return out, oov


def read_embeddings(path: str | Path) -> EmbeddingTable:
    """Text file, ``term v1 ... vD`` per line; terms are stemmed on load."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric vector component") from None
            if dim is None:
                dim = len(vec)
            if len(vec) != dim or dim == 0:
                raise DataFormatError(f"{path}:{lineno}: expected {dim} components, got {len(vec)}")
            vectors.setdefault(stem_token(parts[0].lower()), vec)
    if dim is None:
        raise DataFormatError(f"{path}: no embeddings")
    return EmbeddingTable(vectors, dim)


def write_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for term in sorted(table.vectors):
            fh.write(term + " " + " ".join(repr(float(x)) for x in table.vectors[term]) + "\n")


# IOB data -------------------------------------------------------------------------

@dataclass
class IobSequence:
    tokens: list[str]
    tags: list[str]
    category: str = ""

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise DataFormatError("tokens and tags differ in length")
        for t in self.tags:
            if t not in TAG_INDEX:
                raise DataFormatError(f"unknown tag {t!r}")
        if not is_valid_iob([TAG_INDEX[t] for t in self.tags]):
            raise DataFormatError(f"I-PRODUCT must follow B-/I-PRODUCT: {' '.join(self.tags)}")


def is_valid_iob(tag_ids: Sequence[int]) -> bool:
    prev = None
    for t in tag_ids:
        if t == I and prev not in (B, I):
            return False
        prev = t
    return True


def read_iob(path: str | Path) -> list[IobSequence]:
    """``token<TAB>tag`` lines, blank line between queries. An optional
    ``# category: name`` line before a query sets its category."""
    out: list[IobSequence] = []
    tokens: list[str] = []
    tags: list[str] = []
    category = ""

    def flush(lineno):
        nonlocal tokens, tags, category
        if tokens:
            try:
                out.append(IobSequence(tokens, tags, category))
            except DataFormatError as e:
                raise DataFormatError(f"{path}: query ending line {lineno}: {e}") from None
        tokens, tags, category = [], [], ""

    with open(path, encoding="utf-8") as fh:
        lineno = 0
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush(lineno)
                continue
            if line.startswith("# category:"):
                category = line.split(":", 1)[1].strip()
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataFormatError(f"{path}:{lineno}: expected token<TAB>tag")
            tok, tag = parts
            if tag == "I-PPRODUCT":
                tag = "I-PRODUCT"
            tokens.append(stem_token(tok.lower()))
            tags.append(tag)
        flush(lineno)
    return out


def write_iob(sequences: Iterable[IobSequence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            if seq.category:
                fh.write(f"# category: {seq.category}\n")
            for tok, tag in zip(seq.tokens, seq.tags):
                fh.write(f"{tok}\t{tag}\n")
            fh.write("\n")


def extract_product_spans(tokens: Sequence[str], tags: Sequence[str]) -> list[str]:
    """Each maximal B-PRODUCT I-PRODUCT* run, joined by single spaces."""
    spans: list[str] = []
    current: list[str] | None = None
    for tok, tag in zip(tokens, tags):
        if tag == "I-PRODUCT" and current is not None:
            current.append(tok)
            continue
        if current:
            spans.append(" ".join(current))
        current = [tok] if tag == "B-PRODUCT" else None
    if current:
        spans.append(" ".join(current))
    return spans


def spans_to_iob(tokens: Sequence[str], spans: Sequence[tuple[int, int]]) -> list[str]:
    tags = ["O"] * len(tokens)
    for start, end in spans:
        tags[start] = "B-PRODUCT"
        for k in range(start + 1, end):
            tags[k] = "I-PRODUCT"
    return tags


# LSTM -------------------------------------------------------------------------------

LSTM_PARAM_NAMES = ("W_xi", "W_hi", "w_ci", "b_i", "W_xc", "W_hc", "b_c", "W_xo", "W_ho", "w_co", "b_o")


def init_lstm_params(rng: np.random.Generator, input_dim: int, hidden: int) -> dict[str, np.ndarray]:
    p = {}
    for gate in "ico":
        p[f"W_x{gate}"] = glorot_uniform(rng, (hidden, input_dim), input_dim, hidden)
        p[f"W_h{gate}"] = glorot_uniform(rng, (hidden, hidden), hidden, hidden)
        p[f"b_{gate}"] = np.zeros(hidden, DTYPE)
    p["w_ci"] = rng.uniform(-0.1, 0.1, hidden)
    p["w_co"] = rng.uniform(-0.1, 0.1, hidden)
    return {k: p[k] for k in LSTM_PARAM_NAMES}


def lstm_cell(x, h_prev, c_prev, p: dict[str, np.ndarray]):
    """One step; works on [D] vectors or [B, D] batches. Returns (h, c)."""
    h, c, _ = _lstm_step(np.asarray(x, DTYPE), np.asarray(h_prev, DTYPE), np.asarray(c_prev, DTYPE), p)
    return h, c


def _lstm_step(x, h_prev, c_prev, p):
    if x.shape[-1] != p["W_xi"].shape[1] or h_prev.shape[-1] != p["W_hi"].shape[1]:
        raise nn.ShapeError(f"lstm step got x {x.shape}, h {h_prev.shape} for params {p['W_xi'].shape}")
    i = sigmoid(x @ p["W_xi"].T + h_prev @ p["W_hi"].T + p["w_ci"] * c_prev + p["b_i"])
    g = np.tanh(x @ p["W_xc"].T + h_prev @ p["W_hc"].T + p["b_c"])
    c = (1.0 - i) * c_prev + i * g
    o = sigmoid(x @ p["W_xo"].T + h_prev @ p["W_ho"].T + p["w_co"] * c + p["b_o"])
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, g, c, o, tc)


def _lstm_step_backward(dh, dc, cache, p, grads):
    """Given dL/dh_t and the cell gradient arriving from step t+1, accumulate
    parameter gradients and return (dx, dh_prev, dc_prev)."""
    x, h_prev, c_prev, i, g, c, o, tc = cache
    do = dh * tc
    da_o = do * o * (1.0 - o)
    dc = dc + dh * o * (1.0 - tc * tc) + da_o * p["w_co"]
    di = dc * (g - c_prev)
    da_i = di * i * (1.0 - i)
    da_c = dc * i * (1.0 - g * g)
    dc_prev = dc * (1.0 - i) + da_i * p["w_ci"]

    x2, h2 = np.atleast_2d(x), np.atleast_2d(h_prev)
    for gate, da in (("i", da_i), ("c", da_c), ("o", da_o)):
        da2 = np.atleast_2d(da)
        grads[f"W_x{gate}"] += da2.T @ x2
        grads[f"W_h{gate}"] += da2.T @ h2
        grads[f"b_{gate}"] += da2.sum(axis=0)
    grads["w_ci"] += np.atleast_2d(da_i * c_prev).sum(axis=0)
    grads["w_co"] += np.atleast_2d(da_o * c).sum(axis=0)

    dx = da_i @ p["W_xi"] + da_c @ p["W_xc"] + da_o @ p["W_xo"]
    dh_prev = da_i @ p["W_hi"] + da_c @ p["W_hc"] + da_o @ p["W_ho"]
    return dx, dh_prev, dc_prev


class LstmLayer:
    """Unrolls the cell over a [B, T, D] batch from zero state. Sequences
    are left-aligned; padding after a sequence never reaches its outputs."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.params = params
        self._caches = None

    @property
    def hidden(self) -> int:
        return self.params["W_hi"].shape[0]

    def forward(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, DTYPE)
        batch, steps, _ = xs.shape
        h = np.zeros((batch, self.hidden))
        c = np.zeros((batch, self.hidden))
        hs = np.zeros((batch, steps, self.hidden))
        self._caches = []
        for t in range(steps):
            h, c, cache = _lstm_step(xs[:, t], h, c, self.params)
            self._caches.append(cache)
            hs[:, t] = h
        return hs

    def backward(self, dhs: np.ndarray, grads: dict[str, np.ndarray]) -> np.ndarray:
        if self._caches is None:
            raise nn.BackwardBeforeForward("LstmLayer.backward called before forward")
        batch, steps, hidden = dhs.shape
        dxs = np.zeros((batch, steps, self._caches[0][0].shape[-1]))
        dh_next = np.zeros((batch, hidden))
        dc_next = np.zeros((batch, hidden))
        for t in reversed(range(steps)):
            dx, dh_next, dc_next = _lstm_step_backward(
                dhs[:, t] + dh_next, dc_next, self._caches[t], self.params, grads
            )
            dxs[:, t] = dx
        return dxs


def reverse_padded(xs: np.ndarray, lengths: Sequence[int]) -> np.ndarray:
    """Reverse each sequence within its own length; padding stays at the end."""
    out = np.zeros_like(xs)
    for b, n in enumerate(lengths):
        out[b, :n] = xs[b, :n][::-1]
    return out


class BiLstm:
    def __init__(self, fwd: dict[str, np.ndarray], bwd: dict[str, np.ndarray]):
        self.fwd = LstmLayer(fwd)
        self.bwd = LstmLayer(bwd)
        self._lengths = None

    def forward(self, xs: np.ndarray, lengths: Sequence[int] | None = None) -> np.ndarray:
        """xs [B, T, D] -> [B, T, 2H] = [left context, right context]."""
        xs = np.asarray(xs, DTYPE)
        if xs.ndim != 3 or xs.shape[1] == 0:
            raise nn.ShapeError(f"bilstm needs a non-empty [B, T, D] batch, got {xs.shape}")
        lengths = [xs.shape[1]] * xs.shape[0] if lengths is None else list(lengths)
        self._lengths = lengths
        hf = self.fwd.forward(xs)
        hb = reverse_padded(self.bwd.forward(reverse_padded(xs, lengths)), lengths)
        return np.concatenate([hf, hb], axis=-1)

    def backward(self, dout: np.ndarray, grads_f: dict, grads_b: dict) -> np.ndarray:
        if self._lengths is None:
            raise nn.BackwardBeforeForward("BiLstm.backward called before forward")
        H = self.fwd.hidden
        dx = self.fwd.backward(dout[..., :H], grads_f)
        dxb = self.bwd.backward(reverse_padded(dout[..., H:], self._lengths), grads_b)
        return dx + reverse_padded(dxb, self._lengths)


def bilstm(sequence: np.ndarray, fwd: dict, bwd: dict) -> np.ndarray:
    """[T, D] -> [T, 2H]."""
    sequence = np.asarray(sequence, DTYPE)
    if sequence.ndim != 2 or len(sequence) == 0:
        raise nn.ShapeError("bilstm needs a non-empty [T, D] sequence")
    return BiLstm(fwd, bwd).forward(sequence[None])[0]


# CRF -----------------------------------------------------------------------------------

@dataclass
class CrfParams:
    transitions: np.ndarray  # [3, 3] from -> to, learned part
    start: np.ndarray  # [3]
    stop: np.ndarray  # [3]

    @classmethod
    def zeros(cls) -> "CrfParams":
        return cls(np.zeros((3, 3)), np.zeros(3), np.zeros(3))

    def masked(self):
        return self.transitions + TRANSITION_MASK, self.start + START_MASK, self.stop


def path_score(emissions: np.ndarray, tags: Sequence[int], crf: CrfParams) -> float:
    trans, start, stop = crf.masked()
    score = start[tags[0]] + emissions[0, tags[0]]
    for t in range(1, len(tags)):
        score += trans[tags[t - 1], tags[t]] + emissions[t, tags[t]]
    return float(score + stop[tags[-1]])


def _forward_alphas(emissions, crf):
    trans, start, _ = crf.masked()
    alphas = np.empty_like(emissions)
    alphas[0] = start + emissions[0]
    for t in range(1, len(emissions)):
        alphas[t] = logsumexp(alphas[t - 1][:, None] + trans, axis=0) + emissions[t]
    return alphas


def _backward_betas(emissions, crf):
    trans, _, stop = crf.masked()
    betas = np.empty_like(emissions)
    betas[-1] = stop
    for t in range(len(emissions) - 2, -1, -1):
        betas[t] = logsumexp(trans + (emissions[t + 1] + betas[t + 1])[None, :], axis=1)
    return betas


def log_partition(emissions: np.ndarray, crf: CrfParams) -> float:
    """log sum over all tag paths of exp(path score), by the forward algorithm."""
    emissions = np.asarray(emissions, DTYPE)
    if emissions.ndim != 2 or emissions.shape[1] != 3 or len(emissions) == 0:
        raise nn.ShapeError(f"emissions must be [T>=1, 3], got {emissions.shape}")
    alphas = _forward_alphas(emissions, crf)
    return float(logsumexp(alphas[-1] + crf.stop))


def _check_tags(tags, n):
    tags = [int(t) for t in tags]
    if len(tags) != n or any(t not in (O, B, I) for t in tags):
        raise ValueError(f"tags must be {n} ids in 0..2, got {tags}")
    return tags


def crf_log_likelihood(emissions: np.ndarray, tags: Sequence[int], crf: CrfParams) -> float:
    emissions = np.asarray(emissions, DTYPE)
    tags = _check_tags(tags, len(emissions))
    return path_score(emissions, tags, crf) - log_partition(emissions, crf)


def crf_nll_and_grads(emissions: np.ndarray, tags: Sequence[int], crf: CrfParams):
    """Negative log-likelihood and its gradients w.r.t. emissions,
    transitions, start and stop (expected minus observed counts)."""
    emissions = np.asarray(emissions, DTYPE)
    tags = _check_tags(tags, len(emissions))
    trans, start, stop = crf.masked()
    alphas = _forward_alphas(emissions, crf)
    betas = _backward_betas(emissions, crf)
    log_z = float(logsumexp(alphas[-1] + stop))
    nll = log_z - path_score(emissions, tags, crf)

    unary = np.exp(alphas + betas - log_z)  # [T, 3] marginals
    d_emit = unary.copy()
    d_trans = np.zeros((3, 3))
    for t in range(1, len(emissions)):
        pair = alphas[t - 1][:, None] + trans + (emissions[t] + betas[t])[None, :] - log_z
        d_trans += np.exp(pair)
    d_start = unary[0].copy()
    d_stop = unary[-1].copy()
    for t, y in enumerate(tags):
        d_emit[t, y] -= 1.0
        if t:
            d_trans[tags[t - 1], y] -= 1.0
    d_start[tags[0]] -= 1.0
    d_stop[tags[-1]] -= 1.0
    d_trans[np.isinf(TRANSITION_MASK)] = 0.0
    d_start[np.isinf(START_MASK)] = 0.0
    return nll, {"emissions": d_emit, "transitions": d_trans, "start": d_start, "stop": d_stop}


def viterbi_decode(emissions: np.ndarray, crf: CrfParams) -> tuple[list[int], float]:
    """Best valid tag path and its score. Ties go to the lower tag index."""
    emissions = np.asarray(emissions, DTYPE)
    if emissions.ndim != 2 or len(emissions) == 0:
        raise nn.ShapeError(f"emissions must be [T>=1, 3], got {emissions.shape}")
    trans, start, stop = crf.masked()
    score = start + emissions[0]
    back = []
    for t in range(1, len(emissions)):
        cand = score[:, None] + trans
        best_prev = np.argmax(cand, axis=0)
        back.append(best_prev)
        score = cand[best_prev, np.arange(3)] + emissions[t]
    final = score + stop
    last = int(np.argmax(final))
    path = [last]
    for bp in reversed(back):
        path.append(int(bp[path[-1]]))
    path.reverse()
    return path, float(final[last])


# model ---------------------------------------------------------------------------------

@dataclass
class LstmCrfConfig:
    hidden: int = 32
    embedding_dim: int = 32
    epochs: int = 8
    batch_size: int = 16
    lr: float = 1e-2
    clip: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.embedding_dim < 1:
            raise ValueError("hidden and embedding_dim must be >= 1")


class LstmCrfModel:
    def __init__(self, config: LstmCrfConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        D, H = config.embedding_dim, config.hidden
        self.fwd = init_lstm_params(rng, D, H)
        self.bwd = init_lstm_params(rng, D, H)
        self.emit_W = glorot_uniform(rng, (3, 2 * H), 2 * H, 3)
        self.emit_b = np.zeros(3)
        self.crf = CrfParams.zeros()
        self.oov = rng.uniform(-0.1, 0.1, D)

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {f"fwd.{k}": v for k, v in self.fwd.items()}
        out.update({f"bwd.{k}": v for k, v in self.bwd.items()})
        out.update({
            "emit.W": self.emit_W,
            "emit.b": self.emit_b,
            "crf.transitions": self.crf.transitions,
            "crf.start": self.crf.start,
            "crf.stop": self.crf.stop,
            "oov": self.oov,
        })
        return out

    def embed(self, vectors: np.ndarray, oov_mask: np.ndarray) -> np.ndarray:
        return np.where(oov_mask[..., None], self.oov, vectors)

    def emissions(self, xs: np.ndarray, lengths=None) -> np.ndarray:
        """[B, T, D] embedded inputs -> [B, T, 3] tag scores."""
        self._bilstm = BiLstm(self.fwd, self.bwd)
        self._h = self._bilstm.forward(xs, lengths)
        return self._h @ self.emit_W.T + self.emit_b

    def loss_and_grads(self, batch):
        """Summed CRF negative log-likelihood over a batch of
        (vectors [T, D], oov mask [T], tag ids [T]) triples."""
        if not batch:
            raise ValueError("empty batch")
        lengths = [len(tags) for _, _, tags in batch]
        T, D = max(lengths), self.config.embedding_dim
        xs = np.zeros((len(batch), T, D))
        oov = np.zeros((len(batch), T), dtype=bool)
        for b, (vecs, mask, _) in enumerate(batch):
            xs[b, : len(vecs)] = vecs
            oov[b, : len(mask)] = mask
        xs = self.embed(xs, oov)
        emis = self.emissions(xs, lengths)

        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        d_emis = np.zeros_like(emis)
        total = 0.0
        for b, (_, _, tags) in enumerate(batch):
            n = lengths[b]
            nll, g = crf_nll_and_grads(emis[b, :n], tags, self.crf)
            total += nll
            d_emis[b, :n] = g["emissions"]
            grads["crf.transitions"] += g["transitions"]
            grads["crf.start"] += g["start"]
            grads["crf.stop"] += g["stop"]

        grads["emit.W"] += np.einsum("btk,bth->kh", d_emis, self._h)
        grads["emit.b"] += d_emis.sum(axis=(0, 1))
        dh = d_emis @ self.emit_W
        gf = {k: grads[f"fwd.{k}"] for k in self.fwd}
        gb = {k: grads[f"bwd.{k}"] for k in self.bwd}
        dxs = self._bilstm.backward(dh, gf, gb)
        grads["oov"] += dxs[oov].sum(axis=0)
        return total, grads

    def decode(self, vectors: np.ndarray, oov_mask: np.ndarray) -> list[str]:
        if len(vectors) == 0:
            return []
        emis = self.emissions(self.embed(vectors, oov_mask)[None])[0]
        path, _ = viterbi_decode(emis, self.crf)
        return [TAGS[t] for t in path]

    def tag(self, tokens: Sequence[str], embeddings: EmbeddingTable) -> list[str]:
        return self.decode(*embeddings.lookup(list(tokens)))

    # persistence
    def state(self) -> tuple[dict, dict]:
        return {k: v.copy() for k, v in self.params.items()}, {"model": "lstm-crf", **asdict(self.config)}

    @classmethod
    def from_state(cls, params: dict, config: dict) -> "LstmCrfModel":
        config = dict(config)
        if config.pop("model", "lstm-crf") != "lstm-crf":
            raise checkpoint.CheckpointError("checkpoint is not an LSTM-CRF tagger")
        model = cls(LstmCrfConfig(**config))
        own = model.params
        if set(own) != set(params):
            raise checkpoint.CheckpointError(f"parameter names differ: {sorted(set(own) ^ set(params))}")
        for name, arr in params.items():
            if own[name].shape != arr.shape:
                raise checkpoint.CheckpointError(f"{name}: shape {arr.shape} != {own[name].shape}")
            own[name][...] = arr
        return model

    def save(self, path):
        checkpoint.save(path, *self.state())

    @classmethod
    def load(cls, path) -> "LstmCrfModel":
        return cls.from_state(*checkpoint.load(path))


@dataclass
class TrainResult:
    model: LstmCrfModel
    loss: float
    history: list[float] = field(default_factory=list)


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm > 0:
        for g in grads.values():
            g *= max_norm / norm


def train(
    data: Sequence[IobSequence],
    embeddings: EmbeddingTable,
    config: LstmCrfConfig | None = None,
    log=None,
) -> TrainResult:
    """Maximize CRF log-likelihood with mini-batch Adam (mean NLL per batch)."""
    if not data:
        raise ValueError("empty training set")
    config = config or LstmCrfConfig(embedding_dim=embeddings.dim)
    if config.embedding_dim != embeddings.dim:
        raise ValueError(f"config embedding_dim {config.embedding_dim} != table dim {embeddings.dim}")
    examples = []
    for seq in data:
        vecs, oov = embeddings.lookup(seq.tokens)
        examples.append((vecs, oov, [TAG_INDEX[t] for t in seq.tags]))
    model = LstmCrfModel(config)
    opt = nn.Adam(lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [examples[k] for k in order[start:start + config.batch_size]]
            loss, grads = model.loss_and_grads(batch)
            for g in grads.values():
                g /= len(batch)
            _clip(grads, config.clip)
            opt.step(model.params, grads)
            total += loss
        history.append(total / len(examples))
        if log:
            log(f"lstm-crf epoch {epoch + 1}/{config.epochs} nll/query {history[-1]:.4f}")
    return TrainResult(model, history[-1] if history else float("nan"), history)


def extract_candidates(
    model: LstmCrfModel, queries: Sequence[Sequence[str]], embeddings: EmbeddingTable
) -> CandidateList:
    """Product spans from every query, counted once per contributing query."""
    counts: Counter[str] = Counter()
    for q in queries:
        if q:
            counts.update(set(extract_product_spans(q, model.tag(q, embeddings))))
    return CandidateList.from_counts(counts)
