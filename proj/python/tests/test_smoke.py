import math

import numpy as np
import pytest

import ctxdb


def softmax_out(q, k, v):
    z = (k.astype(np.float64) @ q.astype(np.float64)) / math.sqrt(q.shape[0])
    w = np.exp(z - z.max())
    w /= w.sum()
    return w @ v.astype(np.float64), w


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def test_beta_conversion():
    assert ctxdb.alpha_to_beta(1.0, 64) == 0.0
    assert ctxdb.alpha_to_beta(0.5, 128) == pytest.approx(-math.sqrt(128) * math.log(0.5))
    assert ctxdb.beta_to_alpha(ctxdb.alpha_to_beta(0.3, 16), 16) == pytest.approx(0.3)
    with pytest.raises(ctxdb.Error):
        ctxdb.alpha_to_beta(0.0, 4)


def test_attention_matches_numpy(rng):
    k = rng.normal(size=(300, 32)).astype(np.float32)
    v = rng.normal(size=(300, 32)).astype(np.float32)
    q = rng.normal(size=32).astype(np.float32)
    want, w = softmax_out(q, k, v)
    np.testing.assert_allclose(ctxdb.full_attention(q, k, v), want, atol=1e-5)
    np.testing.assert_allclose(ctxdb.sparse_attention(q, k, v, list(range(300))), want, atol=1e-5)
    sel = list(range(0, 300, 2))
    assert ctxdb.recovery_ratio(q, k, sel) == pytest.approx(w[sel].sum(), rel=1e-6)


def test_dipr_and_topk(rng):
    k = rng.normal(size=(500, 16)).astype(np.float32)
    q = rng.normal(size=16).astype(np.float32)
    ip = k.astype(np.float64) @ q
    got = ctxdb.dipr_bruteforce(q, k, 3.0)
    want = sorted(np.nonzero(ip >= ip.max() - 3.0)[0].tolist())
    assert got == want
    assert ctxdb.dipr_bruteforce(q, k, 3.0, limit=100) == sorted(
        np.nonzero(ip[:100] >= ip[:100].max() - 3.0)[0].tolist())
    assert set(ctxdb.flat_topk(q, k, 5)) == set(np.argsort(-ip)[:5].tolist())


def test_graph_search(rng):
    centers = rng.normal(size=(8, 32)) * 3
    k = (centers[rng.integers(0, 8, 2000)] + 0.3 * rng.normal(size=(2000, 32))).astype(np.float32)
    qs = (k[rng.integers(0, 2000, 600)] + 0.1 * rng.normal(size=(600, 32))).astype(np.float32)
    g = ctxdb.build_graph(k, qs[:500])
    assert g.size == 2000 and g.fully_reachable()
    recall = []
    for q in qs[500:]:
        truth = set(ctxdb.dipr_bruteforce(q, k, 6.0))
        got = set(g.diprs(q, 64, 6.0))
        recall.append(len(truth & got) / len(truth))
        assert all(t < 700 for t in g.filtered_diprs(q, 700, 64, 6.0, "always"))
    assert np.mean(recall) >= 0.9


def test_planner():
    assert ctxdb.plan(100, 0)["query"] == "full"
    p = ctxdb.plan(100000, 0, layer=3, reused_prefix_len=50000)
    assert p["query"] == "filtered-dipr" and p["prefix_len"] == 50000


def test_vector_file_round_trip(tmp_path, rng):
    x = rng.normal(size=(321, 24)).astype(np.float32)
    path = tmp_path / "x.avdb"
    ctxdb.write_vector_file(path, x)
    np.testing.assert_array_equal(ctxdb.read_vector_file(path), x)


def test_store_session_flow(tmp_path, rng):
    layers, heads, n, d = 2, 2, 1500, 16
    keys = rng.normal(size=(layers, heads, n, d)).astype(np.float32)
    values = rng.normal(size=(layers, heads, n, d)).astype(np.float32)
    db = ctxdb.DB(tmp_path)
    tokens = list(range(n))
    base = db.import_context(tokens, keys, values)
    np.testing.assert_array_equal(db.read_keys(base, 1, 0), keys[1, 0])

    session, rest = db.create_session(tokens[:1000] + [99999])
    assert session.prefix_len == 1000 and rest == [99999]
    for layer in range(layers):
        assert session.update(layer, rng.normal(size=(heads, d)), rng.normal(size=(heads, d))) == 1001
    session.append_token_ids([99999])
    out, selected = session.attention(0, rng.normal(size=(heads, d)).astype(np.float32))
    assert out.shape == (heads, d)
    assert all(1000 in s for s in selected)  # the newest token is in the window

    stored = db.store(session)
    assert db.context_length(stored) == 1001
    _, rest = db.create_session(db.context_token_ids(stored))
    assert rest == []
    np.testing.assert_array_equal(db.read_keys(base, 0, 0), keys[0, 0])
