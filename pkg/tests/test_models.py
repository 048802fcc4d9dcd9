import numpy as np
import pytest

from oracles import fd_gradient, max_rel_err
from presup import tensor as T
from presup.checkpoint import load_checkpoint, save_checkpoint
from presup.config import ModelConfig
from presup.errors import UsageError
from presup.extraction import MARKER, Sample
from presup.models import (CnnModel, LogRegModel, LstmBaselineModel, MfcModel,
                           WPModel, attention_weights, bilstm_forward,
                           embed_sequence, input_width, lstm_sequence,
                           logreg_featurize, mfc_fit, mfc_predict, param_count)
from presup.optim import ParamStore
from presup.rng import Rng
from presup.tensor import Tape, Tensor, backward
from presup.training import batch_loss, sample_target
from presup.vocab import EmbeddingTable, build_vocab


def _samples():
    return [
        Sample("again", ["we", "go", MARKER, "run", "fast", "."],
               ["PRP", "VB", MARKER, "VB", "RB", "."], "2"),
        Sample("none", ["he", "eats", MARKER, "runs", "home", "now", "."],
               ["PRP", "VBZ", MARKER, "VBZ", "NN", "RB", "."], "3"),
    ]


def _setup(variant="wp", seed=5, **cfg_kwargs):
    samples = _samples()
    vocab = build_vocab(samples)
    rng = Rng(seed)
    defaults = dict(variant=variant, hidden_size=4, embed_dim=6, pos_mode="off",
                    dense_units=5)
    defaults.update(cfg_kwargs)
    cfg = ModelConfig(**defaults)
    emb = EmbeddingTable(rng.child("emb").uniform(-0.5, 0.5,
                                                  (len(vocab.tokens), cfg.embed_dim)))
    cls = {"wp": WPModel, "lstm": LstmBaselineModel, "cnn": CnnModel}[variant]
    model = cls(cfg, vocab, emb, rng=rng.child("init"))
    return samples, vocab, model


# ---------------------------------------------------------------------------
# encoder


def _manual_lstm(X, W, b, reverse):
    """Straight-line reference LSTM, independent of the fused implementation."""
    s = W.shape[0] // 4
    steps = X.shape[0]
    H = np.zeros((s, steps))
    h = np.zeros((s, 1))
    c = np.zeros((s, 1))
    order = range(steps - 1, -1, -1) if reverse else range(steps)

    def sig(a):
        return 1.0 / (1.0 + np.exp(-a))

    for t in order:
        xh = np.vstack([X[t:t + 1].T, h])
        a = W @ xh + b
        i, f = sig(a[:s]), sig(a[s:2 * s])
        g, o = np.tanh(a[2 * s:3 * s]), sig(a[3 * s:4 * s])
        c = f * c + i * g
        h = o * np.tanh(c)
        H[:, t:t + 1] = h
    return H


def test_lstm_sequence_matches_reference():
    rng = Rng(11)
    s, n, steps = 3, 4, 6
    X = Tensor(rng.uniform(-1, 1, (steps, n)))
    W = Tensor(rng.uniform(-0.5, 0.5, (4 * s, n + s)))
    b = Tensor(rng.uniform(-0.2, 0.2, (4 * s, 1)))
    for reverse in (False, True):
        out = lstm_sequence(X, W, b, reverse=reverse)
        np.testing.assert_allclose(out.data, _manual_lstm(X.data, W.data, b.data,
                                                          reverse), atol=1e-12)


def test_lstm_sequence_gradients():
    rng = Rng(12)
    s, n, steps = 3, 4, 5
    X = Tensor(rng.uniform(-1, 1, (steps, n)))
    W = Tensor(rng.uniform(-0.5, 0.5, (4 * s, n + s)))
    b = Tensor(rng.uniform(-0.2, 0.2, (4 * s, 1)))
    proj = Tensor(rng.uniform(-1, 1, (steps, s)))

    def loss():
        with Tape() as tape:
            H = lstm_sequence(X, W, b, reverse=True)
            out = T.mean_axis(T.mean_axis(T.matmul(H, proj), "rows"), "cols")
        return tape, out

    tape, out = loss()
    grads = backward(tape, out)
    assert tape.replay()
    for t in (X, W, b):
        fd = fd_gradient(lambda: loss()[1].item(), t.data)
        assert max_rel_err(fd, grads.wrt(t)) < 1e-6


def test_bilstm_shape_and_init():
    samples, vocab, model = _setup()
    s = model.cfg.hidden_size
    X = embed_sequence(samples[0], vocab, model.embeddings, model.cfg, model.params)
    H = bilstm_forward(X, model.params, s)
    assert H.shape == (2 * s, len(samples[0].tokens))
    for direction in ("fwd", "bwd"):
        b = model.params[f"lstm_{direction}_b"].data
        np.testing.assert_array_equal(b[s:2 * s], 1.0)  # forget gate bias
        assert np.all(b[:s] == 0.0) and np.all(b[2 * s:] == 0.0)
        W = model.params[f"lstm_{direction}_W"].data
        assert np.all(np.abs(W) <= 0.08)


# ---------------------------------------------------------------------------
# attention pooling


def test_attention_invariants_small():
    rng = Rng(3)
    H = Tensor(rng.uniform(-2, 2, (8, 7)))
    M, M_row, M_col, beta, alpha = attention_weights(H)
    np.testing.assert_allclose(M.data, H.data.T @ H.data, atol=1e-12)
    np.testing.assert_allclose(M_row.data.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(M_col.data.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(beta.data, M_row.data.mean(axis=0)[:, None],
                               atol=1e-12)
    assert np.all(alpha.data >= 0)
    assert alpha.data.sum() == pytest.approx(1.0, abs=1e-12)
    # symmetry of the Gram matrix makes the two attention forms coincide
    np.testing.assert_allclose(alpha.data, M_row.data.T @ beta.data, atol=1e-12)


def test_attention_uniform_on_identical_states():
    h = Rng(4).uniform(-1, 1, (6, 1))
    H = Tensor(np.repeat(h, 5, axis=1))
    *_, alpha = attention_weights(H)
    np.testing.assert_allclose(alpha.data, np.full((5, 1), 0.2), atol=1e-12)


def test_wp_and_baseline_share_parameter_count():
    _, _, wp = _setup("wp")
    _, _, baseline = _setup("lstm")
    assert param_count(wp.params) == param_count(baseline.params)


def test_uniform_alpha_reproduces_mean_pooling():
    samples, _, wp = _setup("wp")
    _, _, baseline = _setup("lstm")
    baseline.params.load_values(wp.params.copy_values())
    for sample in samples:
        steps = len(sample.tokens)
        forced, _ = wp.forward(sample, alpha_override=np.full((steps, 1), 1 / steps))
        mean_pooled, _ = baseline.forward(sample)
        assert np.array_equal(forced.data, mean_pooled.data)


def test_forward_trace_contents():
    samples, _, wp = _setup("wp")
    y_hat, trace = wp.forward(samples[0], return_trace=True)
    steps = len(samples[0].tokens)
    assert trace.H.shape == (8, steps)
    assert trace.M.shape == (steps, steps)
    assert trace.alpha.shape == (steps, 1)
    np.testing.assert_allclose(trace.alpha.sum(), 1.0, atol=1e-12)
    np.testing.assert_array_equal(trace.y_hat, y_hat.data)
    assert y_hat.shape == (2, 1)
    assert y_hat.data.sum() == pytest.approx(1.0, abs=1e-12)


def test_forward_mode_validation():
    samples, _, wp = _setup("wp")
    with pytest.raises(UsageError):
        wp.forward(samples[0], mode="predict")
    with pytest.raises(UsageError):
        wp.forward(samples[0], mode="train", rng=None, dropout_p=0.5)


def test_dropout_only_in_train_mode():
    # tanh keeps every dense unit active, so dropout visibly perturbs the output
    samples, _, wp = _setup("wp", activation="tanh")
    a = wp.forward(samples[0], mode="eval")[0].data
    b = wp.forward(samples[0], mode="eval")[0].data
    assert np.array_equal(a, b)
    t1 = wp.forward(samples[0], mode="train", rng=Rng(1), dropout_p=0.5)[0].data
    assert not np.array_equal(t1, a)


# ---------------------------------------------------------------------------
# inputs


def test_embed_sequence_widths_and_unknowns():
    samples, vocab, model = _setup("wp")
    emb = model.embeddings
    cfg_off = model.cfg
    X = embed_sequence(samples[0], vocab, emb, cfg_off, model.params)
    assert X.shape == (6, input_width(cfg_off, vocab)) == (6, 6)

    cfg_hot = ModelConfig(variant="wp", hidden_size=4, embed_dim=6,
                          pos_mode="one_hot")
    X_hot = embed_sequence(samples[0], vocab, emb, cfg_hot, None)
    assert X_hot.shape == (6, 6 + len(vocab.pos_tags))
    row = X_hot.data[0]
    assert row[6:].sum() == 1.0  # exactly one active POS bit

    unknown = Sample("none", ["zzz", MARKER, "run"], ["XX", MARKER, "VB"], "0")
    X_unk = embed_sequence(unknown, vocab, emb, cfg_off, None)
    np.testing.assert_array_equal(X_unk.data[0], emb.matrix[vocab.unk_id])


def test_pos_embedding_is_learned():
    samples, _, model = _setup("wp", pos_mode="embed", pos_dim=3)
    assert "pos_embedding" in model.params
    X = embed_sequence(samples[0], model.vocab, model.embeddings, model.cfg,
                       model.params)
    assert X.shape == (6, 6 + 3)
    with Tape() as tape:
        y_hat, _ = model.forward(samples[0])
        loss = batch_loss([y_hat], [1])
    g = backward(tape, loss).wrt(model.params["pos_embedding"])
    assert np.any(g != 0.0)


# ---------------------------------------------------------------------------
# CNN baseline


def test_cnn_forward_shape_and_gradients():
    samples, _, cnn = _setup("cnn", cnn_widths=(2, 3), cnn_maps=4, max_len=10)
    y_hat, _ = cnn.forward(samples[0])
    assert y_hat.shape == (2, 1)
    assert y_hat.data.sum() == pytest.approx(1.0, abs=1e-12)

    def loss():
        with Tape() as tape:
            out, _ = cnn.forward(samples[0])
            l = batch_loss([out], [sample_target(samples[0])])
        return tape, l

    tape, l = loss()
    grads = backward(tape, l)
    for name, t in cnn.params.trainable_items():
        fd = fd_gradient(lambda: loss()[1].item(), t.data)
        assert max_rel_err(fd, grads.wrt(t)) < 1e-4, name


def test_cnn_rejects_overlong_input():
    samples, _, cnn = _setup("cnn", max_len=4)
    with pytest.raises(UsageError):
        cnn.forward(samples[0])


# ---------------------------------------------------------------------------
# logistic regression and majority baselines


def test_logreg_featurize_counts():
    sample = Sample("again", ["a", "b", "a"], ["X", "Y", "X"], "0")
    feats = logreg_featurize(sample)
    assert feats["a"] == 2 and feats["b"] == 1
    assert feats["a▁b"] == 1 and feats["b▁a"] == 1
    with_pos = logreg_featurize(sample, use_pos=True)
    assert with_pos["P:X"] == 2 and with_pos["P:X▁Y"] == 1


def test_logreg_learns_separable_data():
    pos = [Sample("again", ["cue", MARKER, "verb"], ["N", MARKER, "V"], "0")] * 10
    neg = [Sample("none", ["other", MARKER, "verb"], ["N", MARKER, "V"], "0")] * 10
    model = LogRegModel(ModelConfig(variant="logreg"))
    model.fit(pos + neg)
    assert model.predict_label(pos[0]) == 1
    assert model.predict_label(neg[0]) == 0
    # unseen n-grams at prediction time are ignored, not an error
    odd = Sample("none", ["brand", "new", MARKER, "verb"],
                 ["N", "N", MARKER, "V"], "0")
    assert model.predict_proba(odd).sum() == pytest.approx(1.0)


def test_mfc_majority_and_ties():
    pos = [Sample("again", ["a", MARKER, "b"], ["x", MARKER, "y"], "0")]
    neg = [Sample("none", ["c", MARKER, "d"], ["x", MARKER, "y"], "0")]
    assert mfc_fit(pos + neg * 2).majority == 0
    assert mfc_fit(pos * 2 + neg).majority == 1
    assert mfc_fit(pos + neg).majority == 1  # ties go to the positive class
    model = MfcModel()
    with pytest.raises(UsageError):
        model.predict_label(pos[0])
    with pytest.raises(UsageError):
        model.fit([])
    assert mfc_predict(mfc_fit(pos), neg[0]) == 1


# ---------------------------------------------------------------------------
# checkpoints


def _assert_same_predictions(a, b, samples):
    for s in samples:
        np.testing.assert_array_equal(a.predict_proba(s), b.predict_proba(s))


def test_checkpoint_round_trip_neural(tmp_path):
    for variant in ("wp", "lstm", "cnn"):
        kwargs = {"cnn_widths": (2, 3), "cnn_maps": 4, "max_len": 10} \
            if variant == "cnn" else {}
        samples, _, model = _setup(variant, **kwargs)
        path = tmp_path / f"{variant}.json"
        save_checkpoint(path, model, dataset_id="all",
                        extra={"best_epoch": 3})
        loaded, dataset_id = load_checkpoint(path)
        assert dataset_id == "all"
        assert type(loaded) is type(model)
        _assert_same_predictions(model, loaded, samples)
        # frozen embeddings stay frozen through the round trip
        assert loaded.params.param_count() == model.params.param_count()


def test_checkpoint_round_trip_logreg_and_mfc(tmp_path):
    pos = [Sample("again", ["cue", MARKER, "verb"], ["N", MARKER, "V"], "0")] * 5
    neg = [Sample("none", ["other", MARKER, "verb"], ["N", MARKER, "V"], "0")] * 5
    logreg = LogRegModel(ModelConfig(variant="logreg"))
    logreg.fit(pos + neg)
    save_checkpoint(tmp_path / "lr.json", logreg, dataset_id="again")
    loaded, dataset_id = load_checkpoint(tmp_path / "lr.json")
    assert dataset_id == "again"
    _assert_same_predictions(logreg, loaded, pos + neg)

    mfc = mfc_fit(pos + neg)
    save_checkpoint(tmp_path / "mfc.json", mfc)
    loaded_mfc, _ = load_checkpoint(tmp_path / "mfc.json")
    assert loaded_mfc.majority == mfc.majority


def test_checkpoint_bytes_are_deterministic(tmp_path):
    _, _, model = _setup("wp")
    save_checkpoint(tmp_path / "a.json", model, dataset_id="all")
    save_checkpoint(tmp_path / "b.json", model, dataset_id="all")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_checkpoint_rejects_foreign_files(tmp_path):
    p = tmp_path / "junk.json"
    p.write_text('{"format": "something-else"}')
    with pytest.raises(UsageError):
        load_checkpoint(p)


def test_param_store_rejects_unknown_names():
    store = ParamStore()
    with pytest.raises(KeyError):
        store["nope"]
