import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import svm_bias, svm_generic_qp, svm_lattice_best
from tsk.seqdata import Sequence
from tsk.stringkernel import KernelParams, cross_kernel, gram_matrix
from tsk.wsvm import (SvmError, SvmModel, SvmTrainConfig, decision_score,
                      decision_scores_from_kernel, dual_objective, kkt_violations, load_model,
                      predict_batch, save_model, train_weighted_svm)


def random_problem(rng, n, k=3, m=1, lo=8, hi=20):
    seqs = [Sequence(f"s{i}", rng.choice(4, size=int(rng.integers(lo, hi + 1)))) for i in range(n)]
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    rng.shuffle(y)
    return seqs, y, gram_matrix(seqs, KernelParams(k, m, True))


def test_two_point_closed_form():
    model = train_weighted_svm(np.eye(2), [1, -1], [1, 1], SvmTrainConfig(C=1e6))
    assert model.alphas.tolist() == pytest.approx([1.0, 1.0], abs=1e-9)
    assert model.b == pytest.approx(0.0, abs=1e-9)
    scores = decision_scores_from_kernel(model, np.eye(2))
    assert scores.tolist() == pytest.approx([1.0, -1.0], abs=1e-9)


def test_config_validation():
    with pytest.raises(SvmError):
        SvmTrainConfig(C=0)
    with pytest.raises(SvmError):
        SvmTrainConfig(tol=-1)
    with pytest.raises(SvmError):
        SvmTrainConfig(max_passes=0)


def test_rejects_single_class_and_bad_shapes():
    with pytest.raises(SvmError, match="single class"):
        train_weighted_svm(np.eye(3), [1, 1, 1])
    with pytest.raises(SvmError):
        train_weighted_svm(np.eye(3), [1, -1])
    with pytest.raises(SvmError):
        train_weighted_svm(np.eye(2), [1, -1], [1.0])
    with pytest.raises(SvmError):
        train_weighted_svm(np.eye(2), [1, 2])
    with pytest.raises(SvmError):
        train_weighted_svm(np.eye(2), [1, -1], [1.0, -0.5])


@pytest.mark.parametrize("seed", range(8))
def test_zero_weight_gives_zero_alpha(seed):
    rng = np.random.default_rng(seed)
    seqs, y, G = random_problem(rng, 12)
    beta = rng.uniform(0.2, 3.0, 12)
    beta[rng.choice(12, 3, replace=False)] = 0.0
    model = train_weighted_svm(G, y, beta, SvmTrainConfig(C=10.0))
    assert (model.alphas[beta == 0] == 0.0).all()
    assert (model.alphas <= beta * 10.0 + 1e-12).all()


@pytest.mark.parametrize("seed", range(10))
def test_matches_lattice_and_qp_oracles(seed):
    rng = np.random.default_rng(200 + seed)
    n = int(rng.integers(3, 7))
    seqs, y, G = random_problem(rng, n, k=2, m=int(rng.integers(0, 2)), lo=5, hi=10)
    C = float(rng.choice([0.1, 1.0, 10.0]))
    caps = np.full(n, C)
    model = train_weighted_svm(G, y, None, SvmTrainConfig(C=C, tol=1e-8))
    ours = dual_objective(model.alphas, y, G)
    lattice, _ = svm_lattice_best(G.values, y, caps)
    qp, qa = svm_generic_qp(G.values, y, caps)
    assert ours >= lattice - 1e-3
    assert ours == pytest.approx(qp, abs=1e-3)
    # predictions on the training points agree in sign with the reference solution
    ref = G.values @ (qa * y) + svm_bias(qa, y, G.values, caps, tol=1e-5)
    f = decision_scores_from_kernel(model, G.values)
    confident = np.abs(ref) > 1e-4
    assert (np.sign(f[confident]) == np.sign(ref[confident])).all()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 20), st.sampled_from([0.1, 1.0, 10.0, 100.0]))
def test_kkt_and_equality_hold(seed, n, C):
    rng = np.random.default_rng(seed)
    seqs, y, G = random_problem(rng, n)
    beta = rng.uniform(0.0, 2.0, n)
    model = train_weighted_svm(G, y, beta, SvmTrainConfig(C=C))
    assert model.converged
    assert model.kkt_violation <= 1e-3
    assert abs(model.alphas @ y) <= 1e-3
    assert (model.alphas >= 0).all() and (model.alphas <= beta * C + 1e-12).all()
    assert kkt_violations(model.alphas, y, model.caps, G, model.b).max() <= 1e-3


@pytest.mark.parametrize("seed", range(6))
def test_exclusion_equals_removal(seed):
    rng = np.random.default_rng(300 + seed)
    seqs, y, G = random_problem(rng, 14)
    drop = int(rng.integers(14))
    keep = np.flatnonzero(np.arange(14) != drop)
    if len(set(y[keep])) < 2:
        return
    cfg = SvmTrainConfig(C=1.0, tol=1e-10)
    beta = np.ones(14)
    beta[drop] = 0.0
    excluded = train_weighted_svm(G, y, beta, cfg)
    removed = train_weighted_svm(G.values[np.ix_(keep, keep)], y[keep], None, cfg)
    f1 = decision_scores_from_kernel(excluded, G.values)
    f2 = decision_scores_from_kernel(removed, G.values[keep])
    assert np.abs(f1 - f2).max() <= 1e-6


def test_unit_weights_reduce_to_plain_svm():
    rng = np.random.default_rng(7)
    seqs, y, G = random_problem(rng, 16)
    cfg = SvmTrainConfig(C=1.0)
    a = train_weighted_svm(G, y, np.ones(16), cfg)
    b = train_weighted_svm(G, y, None, cfg)
    assert np.array_equal(a.alphas, b.alphas) and a.b == b.b


def test_nonconvergence_is_flagged():
    rng = np.random.default_rng(8)
    seqs, y, G = random_problem(rng, 20)
    model = train_weighted_svm(G, y, None, SvmTrainConfig(C=100.0, tol=1e-12, max_passes=1))
    assert not model.converged
    assert model.iterations == 20
    assert model.kkt_violation > 0


@pytest.fixture
def trained():
    rng = np.random.default_rng(9)
    seqs, y, G = random_problem(rng, 12)
    return train_weighted_svm(G, y, None, SvmTrainConfig(C=1.0), sequences=seqs), seqs


def test_zero_alphas_score_bias():
    params = KernelParams(3, 1, True)
    seqs = [Sequence.from_string("a", "ACGTAC"), Sequence.from_string("b", "GGGTTT")]
    model = SvmModel(np.zeros(2), 0.25, np.array([1.0, -1.0]), np.ones(2), params, seqs)
    out = predict_batch(model, [Sequence.from_string("q", "ACGTTT")])
    assert out == [("q", 0.25)]


def test_predict_batch_properties(trained):
    model, seqs = trained
    assert predict_batch(model, []) == []
    batch = predict_batch(model, seqs + [seqs[0]])
    assert [i for i, _ in batch] == [s.id for s in seqs] + [seqs[0].id]
    assert batch[0][1] == batch[-1][1]
    single = [decision_score(model, s) for s in seqs]
    assert np.allclose([f for _, f in batch[:-1]], single, rtol=0, atol=1e-12)
    K = cross_kernel(seqs, seqs, model.params)
    assert np.allclose(decision_scores_from_kernel(model, K), single, atol=1e-12)
    assert predict_batch(model, seqs, jobs=3) == batch[:-1]


def test_scores_invariant_to_support_order(trained):
    model, seqs = trained
    perm = np.random.default_rng(0).permutation(len(seqs))
    shuffled = SvmModel(model.alphas[perm], model.b, model.labels[perm], model.caps[perm],
                        model.params, [seqs[i] for i in perm])
    a = [f for _, f in predict_batch(model, seqs)]
    b = [f for _, f in predict_batch(shuffled, seqs)]
    assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_short_query_rejected(trained):
    model, _ = trained
    with pytest.raises(SvmError, match="'tiny'"):
        predict_batch(model, [Sequence.from_string("tiny", "AC")])


def test_model_round_trip(tmp_path, trained):
    model, seqs = trained
    save_model(tmp_path / "m.txt", model)
    back = load_model(tmp_path / "m.txt")
    assert back.b == model.b and back.params == model.params
    assert np.array_equal(back.alphas, model.alphas[model.support])
    assert predict_batch(back, seqs) == predict_batch(model, seqs)
    header = (tmp_path / "m.txt").read_text().splitlines()[0]
    for key in ("k=3", "m=1", "normalize=1", "C=1", "b=", "n_support="):
        assert key in header


def test_load_model_revalidates(tmp_path, trained):
    model, _ = trained
    save_model(tmp_path / "m.txt", model)
    lines = (tmp_path / "m.txt").read_text().splitlines()
    row = lines[1].split("\t")
    row[1] = "-0.5"
    (tmp_path / "bad.txt").write_text("\n".join([lines[0], "\t".join(row)] + lines[2:]) + "\n")
    with pytest.raises(SvmError, match="positive alpha"):
        load_model(tmp_path / "bad.txt")
    (tmp_path / "short.txt").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(SvmError):
        load_model(tmp_path / "short.txt")
