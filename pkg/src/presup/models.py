"""The weighted-pooling attention classifier and its four baselines.

All neural variants share one bidirectional LSTM encoder and the same dense
head; the WP model differs from the mean-pooling LSTM baseline only in how
the encoder states are pooled, so the two have identical parameter counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from . import tensor as T
from .config import ModelConfig
from .errors import UsageError
from .extraction import MARKER, Sample
from .optim import ParamStore
from .rng import Rng, dropout_mask
from .tensor import Tensor
from .vocab import EmbeddingTable, Vocab

INIT_SCALE = 0.08  # uniform init range for recurrent and dense weights


@dataclass
class ForwardTrace:
    """Intermediate quantities of one weighted-pooling forward pass."""
    X: np.ndarray
    H: np.ndarray
    M: np.ndarray
    M_row: np.ndarray
    M_col: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    c: np.ndarray
    z: np.ndarray
    y_hat: np.ndarray


def param_count(params: ParamStore) -> int:
    """Trainable parameter total; frozen tensors (e.g. word embeddings)
    do not count."""
    return params.param_count()


# ---------------------------------------------------------------------------
# shared building blocks


def embed_sequence(sample: Sample, vocab: Vocab, embeddings: EmbeddingTable,
                   cfg: ModelConfig, params: ParamStore | None = None) -> Tensor:
    """Rows are word vectors, optionally concatenated with a POS feature
    (one-hot or learned 40-dim embedding)."""
    ids = vocab.token_ids(sample.tokens)
    words = Tensor(embeddings.matrix[ids])
    if cfg.pos_mode == "off":
        return words
    pos_ids = vocab.pos_ids(sample.pos)
    if cfg.pos_mode == "one_hot":
        onehot = np.zeros((len(pos_ids), len(vocab.pos_tags)))
        onehot[np.arange(len(pos_ids)), pos_ids] = 1.0
        return Tensor(np.hstack([embeddings.matrix[ids], onehot]))
    # learned POS embedding rows go through the tape so they receive gradient
    pos_part = T.gather_rows(params["pos_embedding"], pos_ids)
    return T.concat([words, pos_part], axis=1)


def input_width(cfg: ModelConfig, vocab: Vocab) -> int:
    if cfg.pos_mode == "off":
        return cfg.embed_dim
    if cfg.pos_mode == "one_hot":
        return cfg.embed_dim + len(vocab.pos_tags)
    return cfg.embed_dim + cfg.pos_dim


def init_lstm_params(params: ParamStore, n: int, s: int, rng: Rng) -> None:
    """Combined-gate weights per direction: W is (4s x (n+s)) over the
    concatenated [x_t; h_prev], gate order i, f, g, o. Forget biases start
    at 1.0, everything else uniform(-0.08, 0.08) / zero."""
    for direction in ("fwd", "bwd"):
        w = rng.uniform(-INIT_SCALE, INIT_SCALE, (4 * s, n + s))
        b = np.zeros((4 * s, 1))
        b[s:2 * s] = 1.0
        params.add(f"lstm_{direction}_W", Tensor(w))
        params.add(f"lstm_{direction}_b", Tensor(b))


def _sigmoid(a):
    pos = a >= 0
    z = np.empty_like(a)
    z[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    z[~pos] = e / (1.0 + e)
    return z


def lstm_sequence(X: Tensor, W: Tensor, b: Tensor, reverse: bool) -> Tensor:
    """Run one LSTM direction over X ((T, n) rows = timesteps) as a single
    fused tape node, returning hidden states as an (s, T) matrix.

    W is (4s x (n+s)) with gate order i, f, g, o over [x_t ; h_prev]; initial
    h and c are zero. The closed-form vector-Jacobian product runs standard
    backpropagation through time over cached gate activations. Fusing the
    whole direction keeps the tape to one node instead of ~14 per timestep,
    which dominates training speed at desk scale.
    """
    s = W.shape[0] // 4
    steps, n = X.shape
    order = list(range(steps - 1, -1, -1)) if reverse else list(range(steps))

    def fwd_full():
        H = np.zeros((s, steps))
        cache = []
        h = np.zeros((s, 1))
        c = np.zeros((s, 1))
        for t in order:
            xh = np.vstack([X.data[t:t + 1].T, h])
            a = W.data @ xh + b.data
            i = _sigmoid(a[0:s])
            f = _sigmoid(a[s:2 * s])
            g = np.tanh(a[2 * s:3 * s])
            o = _sigmoid(a[3 * s:4 * s])
            c_prev = c
            c = f * c_prev + i * g
            h = o * np.tanh(c)
            H[:, t:t + 1] = h
            cache.append((t, xh, i, f, g, o, c, c_prev))
        return H, cache

    out_data, cache = fwd_full()
    out = Tensor(out_data)

    def vjp(grad):
        d_W = np.zeros_like(W.data)
        d_b = np.zeros_like(b.data)
        d_X = np.zeros_like(X.data)
        dh_next = np.zeros((s, 1))
        dc_next = np.zeros((s, 1))
        for t, xh, i, f, g, o, c, c_prev in reversed(cache):
            gh = grad[:, t:t + 1] + dh_next
            tc = np.tanh(c)
            d_o = gh * tc
            dc = dc_next + gh * o * (1.0 - tc ** 2)
            d_a = np.vstack([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g ** 2),
                d_o * o * (1.0 - o),
            ])
            d_W += d_a @ xh.T
            d_b += d_a
            d_xh = W.data.T @ d_a
            d_X[t] = d_xh[:n, 0]
            dh_next = d_xh[n:]
            dc_next = dc * f
        return d_X, d_W, d_b

    return T._record(out, (X, W, b), lambda: fwd_full()[0], vjp)


def bilstm_forward(X: Tensor, params: ParamStore, s: int) -> Tensor:
    """Forward and backward LSTM passes from zero initial states; output
    column t is [h_fwd_t ; h_bwd_t], so H is (2s x T)."""
    fwd = lstm_sequence(X, params["lstm_fwd_W"], params["lstm_fwd_b"], reverse=False)
    bwd = lstm_sequence(X, params["lstm_bwd_W"], params["lstm_bwd_b"], reverse=True)
    return T.concat([fwd, bwd], axis=0)


def attention_weights(H: Tensor):
    """Attention-over-attention on the Gram matrix of hidden states.

    M = H^T H; rows of M_row and columns of M_col are softmax distributions;
    beta holds the column means of M_row; alpha = M_col beta. Because M is
    symmetric, M_col equals M_row^T, so alpha also equals M_row^T beta; both
    forms are computed and cross-checked on every call.
    """
    M = T.matmul(T.transpose(H), H)
    M_row = T.softmax_axis(M, "rows")
    M_col = T.softmax_axis(M, "cols")
    beta = T.transpose(T.mean_axis(M_row, "cols"))  # (T, 1)
    alpha = T.matmul(M_col, beta)
    alt = M_row.data.T @ beta.data
    if np.max(np.abs(alpha.data - alt)) > 1e-10:
        raise ArithmeticError("attention dual-form mismatch: M_col beta != M_row^T beta")
    return M, M_row, M_col, beta, alpha


def weighted_pool(H: Tensor, alpha: Tensor) -> Tensor:
    """c = sum_t alpha_t h_t, i.e. H @ alpha."""
    return T.matmul(H, alpha)


def _activation(name: str):
    return {"relu": T.relu, "tanh": T.tanh}[name]


# ---------------------------------------------------------------------------
# recurrent classifiers (WP and mean-pooling LSTM baseline)


class RecurrentClassifier:
    """Bi-LSTM encoder, pooled states, dense layer, softmax head.

    pooling="attention" gives the weighted-pooling model; pooling="mean"
    gives the LSTM baseline (uniform weights over time steps). Both run the
    pooled vector through the exact same ops, so forcing uniform attention
    reproduces the baseline bitwise.
    """

    pooling = "attention"

    def __init__(self, cfg: ModelConfig, vocab: Vocab, embeddings: EmbeddingTable,
                 rng: Rng | None = None):
        self.cfg = cfg
        self.vocab = vocab
        self.embeddings = embeddings
        self.params = ParamStore()
        if rng is not None:
            self.init_params(rng)

    def init_params(self, rng: Rng) -> None:
        cfg = self.cfg
        n = input_width(cfg, self.vocab)
        s = cfg.hidden_size
        init_lstm_params(self.params, n, s, rng)
        self.params.add("dense_W", Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE,
                                                      (cfg.dense_units, 2 * s))))
        self.params.add("dense_b", Tensor(np.zeros((cfg.dense_units, 1))))
        self.params.add("out_W", Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE,
                                                    (2, cfg.dense_units))))
        self.params.add("out_b", Tensor(np.zeros((2, 1))))
        if cfg.pos_mode == "embed":
            self.params.add("pos_embedding",
                            Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE,
                                               (len(self.vocab.pos_tags), cfg.pos_dim))))

    def forward(self, sample: Sample, mode: str = "eval", rng: Rng | None = None,
                dropout_p: float = 0.5, alpha_override: np.ndarray | None = None,
                return_trace: bool = False):
        if mode not in ("train", "eval"):
            raise UsageError(f"mode must be 'train' or 'eval', got {mode!r}")
        cfg = self.cfg
        X = embed_sequence(sample, self.vocab, self.embeddings, cfg, self.params)
        H = bilstm_forward(X, self.params, cfg.hidden_size)
        steps = H.shape[1]
        trace_parts = None
        if alpha_override is not None:
            alpha = Tensor(np.asarray(alpha_override).reshape(steps, 1))
        elif self.pooling == "attention":
            M, M_row, M_col, beta, alpha = attention_weights(H)
            trace_parts = (M, M_row, M_col, beta)
        else:
            alpha = Tensor(np.full((steps, 1), 1.0 / steps))
        c = weighted_pool(H, alpha)
        z = _activation(cfg.activation)(T.add(T.matmul(self.params["dense_W"], c),
                                              self.params["dense_b"]))
        if mode == "train" and dropout_p > 0.0:
            if rng is None:
                raise UsageError("train mode with dropout needs an Rng")
            z = T.mul(z, dropout_mask(z.shape, dropout_p, rng))
        logits = T.add(T.matmul(self.params["out_W"], z), self.params["out_b"])
        y_hat = T.softmax_axis(logits, "cols")
        if not return_trace:
            return y_hat, None
        if trace_parts is None:
            m = np.full((steps, steps), np.nan)
            trace_parts = (Tensor(m), Tensor(m), Tensor(m),
                           Tensor(np.full((steps, 1), np.nan)))
        M, M_row, M_col, beta = trace_parts
        trace = ForwardTrace(
            X=X.data.copy(), H=H.data.copy(), M=M.data.copy(),
            M_row=M_row.data.copy(), M_col=M_col.data.copy(),
            beta=beta.data.copy(), alpha=alpha.data.copy(), c=c.data.copy(),
            z=z.data.copy(), y_hat=y_hat.data.copy())
        return y_hat, trace

    def predict_label(self, sample: Sample) -> int:
        y_hat, _ = self.forward(sample, mode="eval")
        return int(np.argmax(y_hat.data.reshape(-1)))

    def predict_proba(self, sample: Sample) -> np.ndarray:
        y_hat, _ = self.forward(sample, mode="eval")
        return y_hat.data.reshape(-1).copy()


class WPModel(RecurrentClassifier):
    pooling = "attention"


class LstmBaselineModel(RecurrentClassifier):
    pooling = "mean"


def wp_forward(sample, model: WPModel, mode="eval", rng=None, dropout_p=0.5):
    y_hat, trace = model.forward(sample, mode=mode, rng=rng, dropout_p=dropout_p,
                                 return_trace=True)
    return y_hat, trace


def lstm_baseline_forward(sample, model: LstmBaselineModel, mode="eval", rng=None,
                          dropout_p=0.5):
    y_hat, _ = model.forward(sample, mode=mode, rng=rng, dropout_p=dropout_p)
    return y_hat


# ---------------------------------------------------------------------------
# CNN baseline


class CnnModel:
    """Parallel 1-D convolutions over the zero-padded input, relu,
    max-over-time pooling, dropout, affine + softmax."""

    def __init__(self, cfg: ModelConfig, vocab: Vocab, embeddings: EmbeddingTable,
                 rng: Rng | None = None):
        self.cfg = cfg
        self.vocab = vocab
        self.embeddings = embeddings
        self.params = ParamStore()
        if rng is not None:
            self.init_params(rng)

    def init_params(self, rng: Rng) -> None:
        cfg = self.cfg
        n = input_width(cfg, self.vocab)
        for w in cfg.cnn_widths:
            self.params.add(f"conv{w}_W",
                            Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, (w * n, cfg.cnn_maps))))
            self.params.add(f"conv{w}_b", Tensor(np.zeros((1, cfg.cnn_maps))))
        total = cfg.cnn_maps * len(cfg.cnn_widths)
        self.params.add("out_W", Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, (2, total))))
        self.params.add("out_b", Tensor(np.zeros((2, 1))))
        if cfg.pos_mode == "embed":
            self.params.add("pos_embedding",
                            Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE,
                                               (len(self.vocab.pos_tags), cfg.pos_dim))))

    def forward(self, sample: Sample, mode: str = "eval", rng: Rng | None = None,
                dropout_p: float = 0.5):
        cfg = self.cfg
        n = input_width(cfg, self.vocab)
        X = embed_sequence(sample, self.vocab, self.embeddings, cfg, self.params)
        steps = X.shape[0]
        if steps > cfg.max_len:
            raise UsageError(f"sample longer than max_len={cfg.max_len}")
        if steps < cfg.max_len:
            X = T.concat([X, Tensor(np.zeros((cfg.max_len - steps, n)))], axis=0)
        L = cfg.max_len
        pooled = []
        for w in cfg.cnn_widths:
            W = self.params[f"conv{w}_W"]
            # convolution as a sum of shifted matmuls: offset j contributes
            # X[j : L-w+1+j] @ W[j*n : (j+1)*n]
            contributions = [
                T.matmul(T.slice_rows(X, j, L - w + 1 + j),
                         T.slice_rows(W, j * n, (j + 1) * n))
                for j in range(w)
            ]
            A = T.relu(T.add(T.add_n(contributions), self.params[f"conv{w}_b"]))
            pooled.append(T.max_axis(A, "cols"))
        feat = T.transpose(T.concat(pooled, axis=1))
        if mode == "train" and dropout_p > 0.0:
            if rng is None:
                raise UsageError("train mode with dropout needs an Rng")
            feat = T.mul(feat, dropout_mask(feat.shape, dropout_p, rng))
        logits = T.add(T.matmul(self.params["out_W"], feat), self.params["out_b"])
        y_hat = T.softmax_axis(logits, "cols")
        return y_hat, None

    def predict_label(self, sample: Sample) -> int:
        y_hat, _ = self.forward(sample, mode="eval")
        return int(np.argmax(y_hat.data.reshape(-1)))

    def predict_proba(self, sample: Sample) -> np.ndarray:
        y_hat, _ = self.forward(sample, mode="eval")
        return y_hat.data.reshape(-1).copy()


def cnn_forward(sample, model: CnnModel, mode="eval", rng=None, dropout_p=0.5):
    y_hat, _ = model.forward(sample, mode=mode, rng=rng, dropout_p=dropout_p)
    return y_hat


# ---------------------------------------------------------------------------
# logistic regression baseline

BIGRAM_JOIN = "▁"


def logreg_featurize(sample: Sample, use_pos: bool = False) -> dict:
    """Unigram and bigram token counts (POS n-grams added when enabled)."""
    feats: dict[str, int] = {}

    def bump(key):
        feats[key] = feats.get(key, 0) + 1

    toks = sample.tokens
    for t in toks:
        bump(t)
    for a, b in zip(toks, toks[1:]):
        bump(a + BIGRAM_JOIN + b)
    if use_pos:
        for t in sample.pos:
            bump("P:" + t)
        for a, b in zip(sample.pos, sample.pos[1:]):
            bump("P:" + a + BIGRAM_JOIN + b)
    return feats


class LogRegModel:
    """Binary logistic regression over n-gram counts, trained by full-batch
    gradient descent on cross-entropy with an L2 penalty. Unseen n-grams at
    prediction time are ignored."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.feature_index: dict[str, int] = {}
        self.w: np.ndarray | None = None
        self.b = 0.0

    @property
    def use_pos(self) -> bool:
        return self.cfg.pos_mode != "off"

    def _matrix(self, samples, grow: bool):
        rows, cols, vals = [], [], []
        for r, sample in enumerate(samples):
            for feat, count in logreg_featurize(sample, self.use_pos).items():
                idx = self.feature_index.get(feat)
                if idx is None:
                    if not grow:
                        continue
                    idx = len(self.feature_index)
                    self.feature_index[feat] = idx
                rows.append(r)
                cols.append(idx)
                vals.append(float(count))
        return scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(len(samples), len(self.feature_index)))

    def fit(self, train) -> None:
        train = list(train)
        if not train:
            raise UsageError("LogRegModel.fit: empty training set")
        X = self._matrix(train, grow=True)
        y = np.array([1.0 if s.label != "none" else 0.0 for s in train])
        n = len(train)
        self.w = np.zeros(len(self.feature_index))
        self.b = 0.0
        for _ in range(self.cfg.logreg_epochs):
            scores = X @ self.w + self.b
            p = 1.0 / (1.0 + np.exp(-np.clip(scores, -500, 500)))
            err = p - y
            grad_w = (X.T @ err) / n + self.cfg.logreg_l2 * self.w
            grad_b = err.mean()
            self.w -= self.cfg.logreg_lr * grad_w
            self.b -= self.cfg.logreg_lr * grad_b

    def predict_proba(self, sample: Sample) -> np.ndarray:
        score = self.b
        if self.w is not None:
            for feat, count in logreg_featurize(sample, self.use_pos).items():
                idx = self.feature_index.get(feat)
                if idx is not None:
                    score += self.w[idx] * count
        p = 1.0 / (1.0 + np.exp(-np.clip(score, -500, 500)))
        return np.array([1.0 - p, p])

    def predict_label(self, sample: Sample) -> int:
        return int(self.predict_proba(sample)[1] >= 0.5)


def logreg_forward(sample, model: LogRegModel) -> np.ndarray:
    return model.predict_proba(sample)


# ---------------------------------------------------------------------------
# most-frequent-class baseline


class MfcModel:
    """Constant predictor of the training-majority class; ties go to 1."""

    def __init__(self):
        self.majority: int | None = None

    def fit(self, train) -> None:
        train = list(train)
        if not train:
            raise UsageError("MfcModel.fit: empty training set")
        pos = sum(1 for s in train if s.label != "none")
        neg = len(train) - pos
        self.majority = 1 if pos >= neg else 0

    def predict_label(self, sample: Sample) -> int:
        if self.majority is None:
            raise UsageError("MfcModel used before fit")
        return self.majority

    def predict_proba(self, sample: Sample) -> np.ndarray:
        label = self.predict_label(sample)
        return np.array([1.0 - label, float(label)])


def mfc_fit(train) -> MfcModel:
    model = MfcModel()
    model.fit(train)
    return model


def mfc_predict(model: MfcModel, sample: Sample) -> int:
    return model.predict_label(sample)
