import json
import sys
import threading

import numpy as np
import pytest

from cle.datasets import SparseDataset, synthetic_polarity
from cle.errors import PeerExit, ProtocolError, SingleClass, Timeout, Unsupported
from cle.models import (HttpModel, SubprocessModel, ToySentimentModel, gold_features,
                        oob_accuracy, train_forest, train_knn, train_logreg, train_tree)
from cle.models.external import n_batches, parse_response
from cle.models.featurize import TextVectorizer
from cle.models.logreg import _one_hot, fit_params, loss_and_grad
from cle.models.stub import StubPeer, make_http_server
from cle.models.tree import _Grower, bin_codes, gini, gini_gain, make_thresholds
from cle.netpbm import decode_ppm, encode_ppm, read_pgm, read_ppm, write_pgm, write_ppm


def text_ds(docs, labels, test=()):
    splits = ["test" if i in set(test) else "train" for i in range(len(docs))]
    return SparseDataset(list(docs), list(labels), splits, "text")


@pytest.fixture(scope="module")
def small_polarity():
    return synthetic_polarity(n_docs=300, n_test=60, n_neutral=200, doc_length=(20, 40), seed=5)


# -- logistic regression ---------------------------------------------------------------

def _central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.mark.parametrize("c", [2, 3])
def test_logreg_gradient_matches_finite_differences(c):
    rng = np.random.default_rng(c)
    X = rng.poisson(1.0, size=(30, 6)).astype(float)
    Y = _one_hot(rng.integers(0, c, 30), c)
    k = 1 if c == 2 else c
    for _ in range(5):
        params = rng.normal(size=6 * k + k)
        _, g = loss_and_grad(params, X, Y, 0.1)
        num = _central_diff(lambda p: loss_and_grad(p, X, Y, 0.1)[0], params)
        assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-5


def test_logreg_separable_training_accuracy():
    ds = text_ds(["a x", "a y", "a x y", "b x", "b y", "b"] * 3, (["pos"] * 3 + ["neg"] * 3) * 3)
    model = train_logreg(ds, l2=1e-3)
    assert np.all(model.predict(ds.instances) == ds.label_ids())


def test_logreg_huge_l2_gives_prior():
    ds = text_ds(["a", "a", "a", "b"] * 4, ["p", "p", "p", "n"] * 4)
    model = train_logreg(ds, l2=1e4)
    assert np.abs(model.W).max() < 1e-4
    assert np.allclose(model.predict_proba(["a", "b"])[:, 1], 0.75, atol=1e-4)


def test_logreg_loss_non_increasing(small_polarity):
    fz = TextVectorizer.fit(small_polarity.split("train").instances)
    X = fz.transform(small_polarity.split("train").instances)
    Y = _one_hot(small_polarity.split("train").label_ids(), 2)
    hist = []
    fit_params(X, Y, 1e-2, tol=1e-5, history=hist)
    assert len(hist) > 5
    assert np.all(np.diff(hist) <= 1e-12)


def test_logreg_max_features_and_gold(small_polarity):
    model = train_logreg(small_polarity, max_features=10)
    gold = gold_features(model)
    assert 0 < len(gold) <= 10


def test_planted_informative_features_are_gold():
    rng = np.random.default_rng(0)
    filler = [f"n{i}" for i in range(40)]
    planted = ["alpha", "beta", "gamma"]
    docs, labels = [], []
    for i in range(300):
        words = list(rng.choice(filler, 8, replace=False))
        y = i % 2
        chosen = [w for w in planted if rng.random() < (0.8 if y else 0.1)]
        docs.append(" ".join(words + chosen))
        labels.append("pos" if y else "neg")
    ds = text_ds(docs, labels)
    assert set(planted) <= set(gold_features(train_logreg(ds, max_features=10)))
    assert set(planted) <= set(gold_features(train_tree(ds, max_distinct_features=10)))


def test_single_class_rejected():
    ds = text_ds(["a b", "b c"], ["x", "x"])
    for trainer in (train_logreg, train_tree, train_forest, train_knn):
        with pytest.raises(SingleClass):
            trainer(ds)


# -- trees -----------------------------------------------------------------------------------

def test_gini_eight_rows_by_hand():
    # parent 4/4, left 3/1, right 1/3
    assert gini([4, 4]) == 0.5
    assert gini([3, 1]) == pytest.approx(1 - (9 + 1) / 16)
    assert gini_gain([4, 4], [3, 1], [1, 3]) == pytest.approx(0.125)
    X = np.array([[0], [0], [0], [0], [1], [1], [1], [1]], dtype=float)
    y = np.array([0, 0, 0, 1, 0, 1, 1, 1])
    thr = make_thresholds(X)
    g = _Grower(bin_codes(X, thr), thr, y, 2)
    gain, f, k = g.best_split(np.arange(8))
    assert (f, k) == (0, 0) and thr[0][k] == 0.5
    assert gain == pytest.approx(8 * 0.125)


def test_pure_split_gives_depth_one_tree():
    docs = ["x filler", "x filler more", "filler", "filler more"] * 3
    ds = text_ds(docs, ["p", "p", "n", "n"] * 3)
    model = train_tree(ds)
    assert model.full_tree.depth == 1
    assert gold_features(model) == ["x"]


def test_tree_feature_budget(small_polarity):
    assert len(gold_features(train_tree(small_polarity, max_distinct_features=3))) <= 3
    assert len(gold_features(train_tree(small_polarity, max_distinct_features=10))) <= 10


def test_single_tree_forest_equals_cart(small_polarity):
    cart = train_tree(small_polarity)
    forest = train_forest(small_polarity, n_trees=1, bootstrap=False, max_features=None)
    test = small_polarity.split("test").instances
    assert np.array_equal(cart.predict_proba(test).argmax(1), forest.predict(test))
    assert np.array_equal(cart.predict(test), forest.predict(test))


def test_forest_determinism(small_polarity):
    test = small_polarity.split("test").instances
    a = train_forest(small_polarity, n_trees=5, seed=3).predict_proba(test)
    b = train_forest(small_polarity, n_trees=5, seed=3).predict_proba(test)
    c = train_forest(small_polarity, n_trees=5, seed=4).predict_proba(test)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_forest_oob_tracks_test_accuracy():
    ds = synthetic_polarity(n_docs=600, n_test=200, n_neutral=200, doc_length=(20, 40),
                            agreement=0.95, negation=0.0, seed=2)
    forest = train_forest(ds, n_trees=30, seed=0)
    test = ds.split("test")
    acc = np.mean(forest.predict(test.instances) == test.label_ids())
    assert abs(oob_accuracy(forest) - acc) < 0.10


def test_forest_and_knn_have_no_gold(small_polarity):
    for model in (train_forest(small_polarity, n_trees=2), train_knn(small_polarity)):
        with pytest.raises(Unsupported):
            gold_features(model)


# -- kNN -----------------------------------------------------------------------------------

def test_knn_exact_match_k1(small_polarity):
    model = train_knn(small_polarity, k=1)
    train = small_polarity.split("train")
    probs = model.predict_proba(train.instances[:20])
    assert np.all(probs[np.arange(20), train.label_ids()[:20]] == 1.0)


def test_knn_k_n_gives_prior():
    ds = text_ds(["a b", "a c", "b c", "c d", "a d"], ["p", "p", "p", "n", "n"])
    model = train_knn(ds, k=5)
    assert np.allclose(model.predict_proba(["a", "zzz"]), [[0.4, 0.6]] * 2)


def test_knn_neighbors_match_brute_force():
    docs = ["a b", "a a c", "b c d", "d d", "a d", "c", "b b b", "a b c d", "e a", "c e"]
    labels = list("pnpnpnpnpn")
    ds = text_ds(docs, labels)
    model = train_knn(ds, k=4)
    fz = model.featurizer
    T = fz.transform(docs).toarray()
    for q in ["a b", "c d", "e", "b d d"]:
        v = fz.transform([q]).toarray()[0]
        sims = [float(v @ t) / (np.linalg.norm(v) * np.linalg.norm(t) or 1.0) for t in T]
        # sort by similarity descending, ties by index
        want = sorted(range(10), key=lambda i: (-round(sims[i], 12), i))[:4]
        assert list(model.neighbors([q])[0]) == want


# -- contract properties --------------------------------------------------------------------

def test_rows_sum_to_one_and_relabel_covariance(small_polarity):
    test = small_polarity.split("test").instances
    swapped = SparseDataset(small_polarity.instances,
                            ["zz" if l == "negative" else l for l in small_polarity.labels],
                            small_polarity.splits, "text")
    assert swapped.classes == ["positive", "zz"]
    for trainer, tol in ((train_logreg, 1e-4), (train_tree, 0), (train_knn, 0)):
        a = trainer(small_polarity).predict_proba(test)
        b = trainer(swapped).predict_proba(test)
        assert np.allclose(a.sum(1), 1, atol=1e-6)
        assert np.allclose(a, b[:, ::-1], atol=tol)


# -- external models ------------------------------------------------------------------------

def stub_cmd(*args):
    return [sys.executable, "-m", "cle.models.stub", *args]


def test_subprocess_stub_ok():
    with SubprocessModel(stub_cmd(), classes=["n", "p"], batch_size=3) as m:
        probs = m.predict_proba([f"doc {i}" for i in range(7)])
    assert np.allclose(probs, [[0.3, 0.7]] * 7)


def test_subprocess_infers_classes():
    with SubprocessModel(stub_cmd("--probs", "0.2,0.5,0.3")) as m:
        assert m.predict_proba(["a", "b"]).shape == (2, 3)
        assert m.classes == ["0", "1", "2"]


@pytest.mark.parametrize("mode,err", [("badsum", ProtocolError), ("reorder", ProtocolError),
                                      ("garbage", ProtocolError), ("exit", PeerExit)])
def test_subprocess_faults(mode, err):
    with SubprocessModel(stub_cmd("--mode", mode), classes=["n", "p"]) as m:
        with pytest.raises(err):
            m.predict_proba(["a", "b"])


def test_subprocess_timeout():
    with SubprocessModel(stub_cmd("--sleep", "1.0"), classes=["n", "p"], timeout=0.2) as m:
        with pytest.raises(Timeout):
            m.predict_proba(["a"])


def test_parse_response_checks():
    assert parse_response('{"id": 2, "probs": [[0.5, 0.5]]}', 2, 1).shape == (1, 2)
    for bad in ['{"id": 1, "probs": [[0.5, 0.5]]}', '{"id": 2, "probs": [[0.5, 0.6]]}',
                '{"id": 2, "probs": [[0.5, 0.5], [1, 0]]}', '{"id": 2}', "[]",
                '{"id": 2, "probs": [[1.5, -0.5]]}']:
        with pytest.raises(ProtocolError):
            parse_response(bad, 2, 1)


class IndexPeer(StubPeer):
    """Answers instance "i" with [i/n, 1 - i/n] and records request ids."""

    def __init__(self, n):
        super().__init__()
        self.n = n
        self.ids = []
        self.lock = threading.Lock()

    def respond(self, line):
        req = json.loads(line)
        with self.lock:
            self.ids.append(req["id"])
        rows = [[int(x) / self.n, 1 - int(x) / self.n] for x in req["instances"]]
        return json.dumps({"id": req["id"], "probs": rows}) + "\n"


@pytest.fixture
def http_server():
    servers = []

    def start(peer):
        srv = make_http_server(peer)
        threading.Thread(target=srv.serve_forever, daemon=True).start()
        servers.append(srv)
        return f"http://127.0.0.1:{srv.server_address[1]}/"

    yield start
    for srv in servers:
        srv.shutdown()
        srv.server_close()


def test_http_batches_preserve_order(http_server):
    n = 15000
    peer = IndexPeer(n)
    model = HttpModel(http_server(peer), classes=["a", "b"], max_in_flight=4)
    probs = model.predict_proba([str(i) for i in range(n)])
    assert n_batches(n) == 59 and len(peer.ids) == 59
    assert sorted(peer.ids) == list(range(1, 60))
    assert np.allclose(probs[:, 0], np.arange(n) / n)


def test_http_badsum(http_server):
    model = HttpModel(http_server(StubPeer(mode="badsum")), classes=["a", "b"])
    with pytest.raises(ProtocolError):
        model.predict_proba(["x"])


def test_http_unreachable():
    with pytest.raises(PeerExit):
        HttpModel("http://127.0.0.1:9/", classes=["a", "b"], timeout=2).predict_proba(["x"])


def test_toy_model_pairs():
    p = ToySentimentModel().predict_proba(["not bad", "bad", "good", "not good"])[:, 1]
    assert np.allclose(p, [0.55, 0.20, 0.75, 0.0 + 0.30 + 0.45 - 0.10 - 0.40])


# -- netpbm --------------------------------------------------------------------------------------

def test_ppm_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, size=(5, 7, 3)).astype(np.uint8)
    assert np.array_equal(decode_ppm(encode_ppm(img)), img)
    write_ppm(tmp_path / "a.ppm", img)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)


@pytest.mark.parametrize("plain", [True, False])
@pytest.mark.parametrize("maxval", [9, 255, 4000])
def test_pgm_round_trip(tmp_path, plain, maxval):
    px = np.random.default_rng(maxval).integers(0, maxval + 1, size=(4, 6))
    px[0, 0] = maxval
    write_pgm(tmp_path / "a.pgm", px, plain=plain)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), px)


def test_plain_ppm_with_comments():
    data = b"P3\n# comment\n2 1\n255\n1 2 3  4 5 6\n"
    assert decode_ppm(data).tolist() == [[[1, 2, 3], [4, 5, 6]]]
    with pytest.raises(ValueError):
        decode_ppm(b"P3\n2 1\n255\n1 2 3\n")
