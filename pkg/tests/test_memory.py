import numpy as np
import pytest

from modbridge.calibration import PrototypeSet
from modbridge.core import FeatureMatrix, PseudoLabeling, l2_normalize
from modbridge.losses import Batch
from modbridge.memory import (MemoryBank, build_hybrid, hybrid_update,
                              init_from_centroids, momentum_update)
from modbridge.otmatch import CrossModalMatch


def _unit_rows(rng, n, d):
    rows = rng.normal(size=(n, d))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _protos(rows):
    rows = np.asarray(rows, dtype=float)
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    return PrototypeSet(protos=rows, kind="robust")


def test_bank_validation():
    with pytest.raises(ValueError):
        MemoryBank(rows=np.zeros((0, 3)), mu=0.1, kind="visible")
    with pytest.raises(ValueError):
        MemoryBank(rows=np.ones((2, 2)), mu=0.1, kind="bogus")
    with pytest.raises(ValueError):
        MemoryBank(rows=np.ones((2, 2)), mu=1.5, kind="visible")


def test_init_from_centroids_two_clusters():
    features = l2_normalize(FeatureMatrix(np.array(
        [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])))
    labeling = PseudoLabeling(labels=np.array([0, 0, 1, 1]), y_count=2)
    bank = init_from_centroids(features, labeling, mu=0.1, kind="visible")
    assert np.allclose(bank.rows, np.eye(2))
    assert bank.y == 2


def test_init_from_centroids_skips_outliers():
    features = l2_normalize(FeatureMatrix(np.array(
        [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])))
    labeling = PseudoLabeling(labels=np.array([0, 0, -1]), y_count=1)
    bank = init_from_centroids(features, labeling, mu=0.1, kind="visible")
    assert bank.y == 1
    assert np.allclose(bank.rows[0], [1.0, 0.0])


def test_momentum_update_hand_value():
    # normalize(0.9*e1 + 0.1*e2) = (0.9, 0.1)/sqrt(0.82)
    bank = MemoryBank(rows=np.eye(2)[:1], mu=0.9, kind="visible")
    momentum_update(bank, 0, np.array([0.0, 1.0]), mu=0.9)
    assert np.allclose(bank.rows[0], np.array([0.9, 0.1]) / np.sqrt(0.82))


def test_momentum_endpoints_bit_exact():
    rng = np.random.default_rng(3)
    rows = _unit_rows(rng, 4, 8)
    frozen = MemoryBank(rows=rows.copy(), mu=1.0, kind="visible")
    f = _unit_rows(rng, 1, 8)[0]
    momentum_update(frozen, 2, f, mu=1.0)
    assert np.array_equal(frozen.rows, rows)
    replace = MemoryBank(rows=rows.copy(), mu=0.0, kind="visible")
    momentum_update(replace, 2, f, mu=0.0)
    assert np.array_equal(replace.rows[2], f)
    assert np.array_equal(replace.rows[[0, 1, 3]], rows[[0, 1, 3]])


def test_momentum_update_keeps_unit_norm():
    rng = np.random.default_rng(5)
    bank = MemoryBank(rows=_unit_rows(rng, 3, 6), mu=0.1, kind="infrared")
    for _ in range(20):
        momentum_update(bank, int(rng.integers(0, 3)),
                        _unit_rows(rng, 1, 6)[0], mu=0.1)
    assert np.allclose(np.linalg.norm(bank.rows, axis=1), 1.0)


def test_momentum_update_label_bounds():
    bank = MemoryBank(rows=np.eye(2), mu=0.1, kind="visible")
    with pytest.raises(ValueError):
        momentum_update(bank, 2, np.array([1.0, 0.0]), mu=0.1)


def test_build_hybrid_endpoints_bit_match():
    rng = np.random.default_rng(7)
    pv = _protos(rng.normal(size=(4, 6)))
    pr = _protos(rng.normal(size=(3, 6)))
    match = CrossModalMatch(v2r=np.array([0, 1, 2, 0]), r2v=np.array([0, 1, 2]))
    mr = MemoryBank(rows=pr.protos.copy(), mu=0.1, kind="infrared")
    only_r = build_hybrid(mr, pv, pr, match, alpha=1.0)
    assert np.array_equal(only_r.rows, pr.protos)
    only_v = build_hybrid(mr, pv, pr, match, alpha=0.0)
    assert np.array_equal(only_v.rows, pv.protos[match.r2v])
    mixed = build_hybrid(mr, pv, pr, match, alpha=0.5)
    assert mixed.kind == "hybrid"
    assert np.allclose(np.linalg.norm(mixed.rows, axis=1), 1.0)


def test_build_hybrid_validates_match():
    rng = np.random.default_rng(8)
    pv = _protos(rng.normal(size=(2, 4)))
    pr = _protos(rng.normal(size=(3, 4)))
    mr = MemoryBank(rows=pr.protos.copy(), mu=0.1, kind="infrared")
    with pytest.raises(ValueError):
        build_hybrid(mr, pv, pr, CrossModalMatch(v2r=np.array([0, 1]),
                                                 r2v=np.array([0, 1])), 0.5)
    with pytest.raises(ValueError):
        build_hybrid(mr, pv, pr, CrossModalMatch(v2r=np.array([0, 1]),
                                                 r2v=np.array([0, 1, 2])), 0.5)


def test_hybrid_update_parity_contract():
    rng = np.random.default_rng(9)
    bank = MemoryBank(rows=_unit_rows(rng, 3, 4), mu=0.1, kind="hybrid")
    visible = Batch(features=_unit_rows(rng, 2, 4), labels=np.array([0, 1]),
                    modality="visible")
    infrared = Batch(features=_unit_rows(rng, 2, 4), labels=np.array([0, 1]),
                     modality="infrared")
    with pytest.raises(ValueError):
        hybrid_update(bank, 0, infrared, v2r_map=np.arange(3), mu=0.1)
    with pytest.raises(ValueError):
        hybrid_update(bank, 1, visible, v2r_map=np.arange(3), mu=0.1)
    with pytest.raises(ValueError):
        hybrid_update(bank, 0, visible, v2r_map=None, mu=0.1)
    plain = MemoryBank(rows=bank.rows.copy(), mu=0.1, kind="visible")
    with pytest.raises(ValueError):
        hybrid_update(plain, 1, infrared, v2r_map=None, mu=0.1)


def test_hybrid_update_routes_through_map():
    bank = MemoryBank(rows=np.eye(3), mu=0.1, kind="hybrid")
    before = bank.rows.copy()
    batch = Batch(features=np.array([[0.0, 0.0, 1.0]]), labels=np.array([0]),
                  modality="visible")
    hybrid_update(bank, 0, batch, v2r_map=np.array([2, 1, 0]), mu=0.0)
    assert np.array_equal(bank.rows[2], [0.0, 0.0, 1.0])
    assert np.array_equal(bank.rows[:2], before[:2])


def test_hybrid_update_order_matters_deterministically():
    rng = np.random.default_rng(11)
    rows = _unit_rows(rng, 2, 4)
    feats = _unit_rows(rng, 3, 4)
    batch = Batch(features=feats, labels=np.array([0, 0, 1]), modality="infrared")
    a = MemoryBank(rows=rows.copy(), mu=0.1, kind="hybrid")
    b = MemoryBank(rows=rows.copy(), mu=0.1, kind="hybrid")
    hybrid_update(a, 1, batch, v2r_map=None, mu=0.1)
    hybrid_update(b, 1, batch, v2r_map=None, mu=0.1)
    assert np.array_equal(a.rows, b.rows)
    # sequential semantics: two pushes into row 0 compose, not average
    expected = rows[0]
    for f in feats[:2]:
        mixed = 0.1 * expected + 0.9 * f
        expected = mixed / np.linalg.norm(mixed)
    assert np.allclose(a.rows[0], expected)


def test_copy_is_independent():
    bank = MemoryBank(rows=np.eye(2), mu=0.1, kind="visible")
    dup = bank.copy()
    momentum_update(dup, 0, np.array([0.0, 1.0]), mu=0.0)
    assert np.array_equal(bank.rows, np.eye(2))
