import math

import numpy as np
import pytest

from nhfa import evaluation
from nhfa.data import (DataFormatError, SynthSpec, load_sources, merge_dictionaries, read_csv, synth_generate,
                       write_csv, write_matrix_market)
from nhfa.rng import RngStream


def test_synth_shapes_and_block_structure():
    spec = SynthSpec()
    ds, gt = synth_generate(spec, RngStream(0))
    assert ds.J == 2 and ds.M == 100 and spec.K == 12
    assert [X.shape for X in ds.matrices] == [(100, 100), (100, 100)]
    # source 1 never uses source 2's exclusive block and vice versa
    assert not gt.Z[0][:, 4:8].any() and not gt.Z[1][:, 0:4].any()
    assert set(np.unique(gt.Phi)) <= {0.0, 1.0}
    assert all(X.dtype.kind == "i" and X.min() >= 0 for X in ds.matrices)


def test_synth_is_seeded():
    a = synth_generate(SynthSpec(M=10, N=(5, 5)), RngStream(3))[0].matrices
    b = synth_generate(SynthSpec(M=10, N=(5, 5)), RngStream(3))[0].matrices
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_noiseless_gaussian_synth_is_exactly_low_rank():
    spec = SynthSpec(M=20, J=1, exclusive=0, shared=3, N=(15,), model="ggm")
    ds, gt = synth_generate(spec, RngStream(1))
    assert np.linalg.matrix_rank(ds.matrices[0]) <= 3
    assert np.allclose(ds.matrices[0], gt.Phi @ (gt.Z[0] * gt.W[0]).T)


@pytest.mark.parametrize("kw", [dict(M=0), dict(N=(1,)), dict(z_density=1.5), dict(model="x"), dict(w_rate=0)])
def test_synth_spec_validation(kw):
    with pytest.raises(ValueError):
        SynthSpec(**kw).validate()


def test_csv_roundtrip(tmp_path):
    X = np.array([[0, 3], [1, 2]])
    write_csv(tmp_path / "a.csv", X, ["x", "y"], ["d0", "d1"])
    Y, lab, cols = read_csv(tmp_path / "a.csv")
    assert np.array_equal(X, Y) and lab == ["x", "y"] and cols == ["d0", "d1"]


def test_matrix_market_roundtrip_and_union(tmp_path):
    write_matrix_market(tmp_path / "a.mtx", np.array([[1, 0], [0, 2]]), ["b", "c"])
    write_matrix_market(tmp_path / "b.mtx", np.array([[5]]), ["a"])
    ds = load_sources([tmp_path / "a.mtx", tmp_path / "b.mtx"], fmt="mm")
    assert ds.row_labels == ["a", "b", "c"]
    assert np.array_equal(ds.matrices[0], [[0, 0], [1, 0], [0, 2]])
    assert np.array_equal(ds.matrices[1], [[5], [0], [0]])


def test_load_rejects_non_counts(tmp_path):
    write_csv(tmp_path / "a.csv", np.array([[0.5]]), ["x"], ["d"])
    with pytest.raises(DataFormatError):
        load_sources([tmp_path / "a.csv"])
    assert load_sources([tmp_path / "a.csv"], mode="reals").matrices[0][0, 0] == 0.5


def test_ragged_csv(tmp_path):
    (tmp_path / "r.csv").write_text(",d0,d1\nx,1\n")
    with pytest.raises(DataFormatError):
        read_csv(tmp_path / "r.csv")


def test_duplicate_labels_rejected():
    with pytest.raises(DataFormatError):
        merge_dictionaries([(np.ones((2, 1)), ["a", "a"])])


# --- metrics ------------------------------------------------------------------------

def test_perplexity_helpers():
    assert evaluation.log_perplexity_per_doc(-20.0, 4) == 5.0
    assert evaluation.perplexity_per_doc(-20.0, 4) == pytest.approx(math.exp(5.0))
    assert evaluation.perplexity_per_doc(-1e6, 1) == math.inf
    with pytest.raises(ValueError):
        evaluation.log_perplexity_per_doc(0.0, 0)


def test_coefficients_recover_exact_mixture():
    r = RngStream(2)
    Phi = r.gamma(1.0, 1.0, size=(30, 4))
    H = r.gamma(1.0, 1.0, size=(4, 6))
    assert np.allclose(evaluation.infer_test_coefficients(Phi @ H, Phi), H, atol=1e-6)


def test_cosine_and_zero_rows():
    S = evaluation.cosine_matrix([[1, 0], [0, 0]], [[2, 0], [1, 1]])
    assert np.allclose(S, [[1, 1 / math.sqrt(2)], [0, 0]])


def test_average_precision_hand_example():
    # relevant at ranks 1 and 3: (1/1 + 2/3) / 2
    assert evaluation.average_precision([1, 0, 1, 0]) == pytest.approx(5 / 6)
    assert evaluation.average_precision([0, 0]) == 0.0


def test_retrieval_perfect_separation():
    Hq = np.array([[1.0, 0.0], [0.0, 1.0]])
    Ht = np.array([[1.0, 0.1], [0.9, 0.0], [0.0, 1.0], [0.1, 1.0]])
    res = evaluation.retrieval_eval(Hq, Ht, ["a", "b"], ["a", "a", "b", "b"], n_list=(1, 2, 4))
    assert res["precision_at"] == {1: 1.0, 2: 1.0, 4: 0.5}
    assert res["map"] == 1.0


def test_rank_ties_are_stable():
    assert list(evaluation.rank_items([0.5, 0.9, 0.5])) == [1, 0, 2]


def test_synth_weight_mean_is_two():
    _, gt = synth_generate(SynthSpec(N=(400, 400)), RngStream(4))
    W = np.concatenate([w.ravel() for w in gt.W])
    assert abs(W.mean() - 2.0) < 3 * W.std() / math.sqrt(W.size)


def test_synth_no_noise_no_features_is_empty():
    ds, _ = synth_generate(SynthSpec(noise_rate=0.0, z_density=0.0), RngStream(5))
    assert all(not X.any() for X in ds.matrices)
