import numpy as np
import pytest

from alcrf import crf, features
from alcrf.corpus import parse_conll
from alcrf.crf import (
    CrfError,
    CrfModel,
    Lattice,
    TrainConfig,
    bio_transition_mask,
    build_lattice,
    decode,
    decode_lattice,
    forward_backward,
    load_emission_matrix,
    log_likelihood_and_gradient,
    save_emissions,
    train,
    viterbi,
)
from alcrf.features import FeaturizedSentence

import oracles


def random_featurized(rng, n_features, max_n=5, sid=0):
    n = int(rng.integers(1, max_n + 1))
    rows = []
    for _ in range(n):
        k = int(rng.integers(1, 4))
        rows.append(tuple(sorted(set(int(x) for x in rng.integers(0, n_features, k)))))
    return FeaturizedSentence(sid, tuple(rows))


def random_model(rng, n_features, n_labels, sigma=5.0):
    labels = tuple(f"L{i}" for i in range(n_labels))
    return CrfModel(
        rng.normal(size=(n_features, n_labels)),
        rng.normal(size=(n_labels, n_labels)),
        labels,
        sigma,
    )


class TestBuildLattice:
    def test_zero_weights(self):
        m = CrfModel.zeros(4, ("a", "b"))
        fs = FeaturizedSentence(0, ((0, 1), (2,)))
        lat = build_lattice(m, fs)
        assert np.all(lat.emissions == 0)

    def test_single_feature_weight(self):
        m = CrfModel.zeros(3, ("a", "b"))
        w = m.weights.copy()
        w[1, 1] = 2.0
        m = CrfModel(w, m.trans, m.labels)
        lat = build_lattice(m, FeaturizedSentence(0, ((1,),)))
        assert lat.emissions[0, 1] == 2.0
        assert lat.emissions[0, 0] == 0.0

    def test_matches_brute_force_sum(self):
        rng = np.random.default_rng(0)
        m = random_model(rng, 8, 3)
        fs = random_featurized(rng, 8)
        lat = build_lattice(m, fs)
        for i, ids in enumerate(fs.feature_ids):
            for j in range(3):
                assert lat.emissions[i, j] == pytest.approx(
                    sum(m.weights[f, j] for f in ids)
                )

    def test_out_of_range_feature(self):
        m = CrfModel.zeros(2, ("a", "b"))
        with pytest.raises(CrfError):
            build_lattice(m, FeaturizedSentence(0, ((5,),)))


class TestDecode:
    def test_uniform_two_by_two(self):
        lat = Lattice(np.zeros((2, 2)), np.zeros((2, 2)))
        dr = decode_lattice(lat)
        assert dr.sequence_posterior == pytest.approx(0.25)
        assert list(dr.path) == [0, 0]

    def test_path_probability_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(15):
            emis, trans = oracles.random_lattice(rng)
            dr = decode_lattice(Lattice(emis, trans))
            bpath, bscore = oracles.brute_viterbi(emis, trans)
            prob = np.exp(bscore - oracles.brute_log_z(emis, trans))
            assert dr.sequence_posterior == pytest.approx(prob, rel=1e-8)

    def test_viterbi_marginal_dominates_path_probability(self):
        rng = np.random.default_rng(2)
        for _ in range(15):
            emis, trans = oracles.random_lattice(rng)
            dr = decode_lattice(Lattice(emis, trans))
            for i, j in enumerate(dr.path):
                assert dr.marginals[i, j] >= dr.sequence_posterior - 1e-12

    def test_emission_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        emis, trans = oracles.random_lattice(rng, max_n=10)
        dr = decode_lattice(Lattice(emis, trans))
        assert np.allclose(dr.emission_softmax.sum(axis=1), 1.0, atol=1e-9)
        assert np.allclose(dr.marginals.sum(axis=1), 1.0, atol=1e-9)

    def test_path_logscore_below_log_z(self):
        rng = np.random.default_rng(4)
        emis, trans = oracles.random_lattice(rng, max_n=10)
        dr = decode_lattice(Lattice(emis, trans))
        assert dr.path_logscore <= dr.log_z + 1e-12

    def test_constant_emission_shift_invariance(self):
        rng = np.random.default_rng(5)
        emis, trans = oracles.random_lattice(rng, min_n=3, max_n=6)
        dr1 = decode_lattice(Lattice(emis, trans))
        shifted = emis.copy()
        shifted[1] += 3.7
        dr2 = decode_lattice(Lattice(shifted, trans))
        assert list(dr1.path) == list(dr2.path)
        assert np.allclose(dr1.marginals, dr2.marginals, atol=1e-9)
        assert dr2.log_z == pytest.approx(dr1.log_z + 3.7)
        assert dr2.path_logscore == pytest.approx(dr1.path_logscore + 3.7)
        assert dr2.sequence_posterior == pytest.approx(dr1.sequence_posterior)

    def test_decode_batch_matches_single(self):
        rng = np.random.default_rng(6)
        m = random_model(rng, 10, 3)
        fss = [random_featurized(rng, 10, sid=i) for i in range(5)]
        batched = crf.decode_batch(m, fss)
        for fs, dr_b in zip(fss, batched):
            dr = decode(m, fs)
            assert list(dr.path) == list(dr_b.path)
            assert dr.log_z == pytest.approx(dr_b.log_z)
            assert np.allclose(dr.marginals, dr_b.marginals)
            assert np.allclose(dr.emission_softmax, dr_b.emission_softmax)


class TestGradient:
    def test_zero_model_single_token_two_labels(self):
        m = CrfModel.zeros(2, ("a", "b"), l2_sigma=1e9)
        batch = [(FeaturizedSentence(0, ((0,),)), [0])]
        value, _ = log_likelihood_and_gradient(m, batch)
        assert value == pytest.approx(np.log(0.5))

    def test_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(8):
            n_f, n_l = 6, 3
            m = random_model(rng, n_f, n_l, sigma=3.0)
            batch = [
                (random_featurized(rng, n_f, sid=s), None) for s in range(3)
            ]
            batch = [
                (fs, [int(x) for x in rng.integers(0, n_l, len(fs))]) for fs, _ in batch
            ]
            _, (gw, ga) = log_likelihood_and_gradient(m, batch)
            eps = 1e-5

            def value_at(w, a):
                v, _ = log_likelihood_and_gradient(
                    CrfModel(w, a, m.labels, m.l2_sigma), batch
                )
                return v

            for _ in range(5):
                i, j = int(rng.integers(n_f)), int(rng.integers(n_l))
                wp, wm = m.weights.copy(), m.weights.copy()
                wp[i, j] += eps
                wm[i, j] -= eps
                fd = (value_at(wp, m.trans) - value_at(wm, m.trans)) / (2 * eps)
                assert gw[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-7)
            for _ in range(5):
                i, j = int(rng.integers(n_l)), int(rng.integers(n_l))
                ap, am = m.trans.copy(), m.trans.copy()
                ap[i, j] += eps
                am[i, j] -= eps
                fd = (value_at(m.weights, ap) - value_at(m.weights, am)) / (2 * eps)
                assert ga[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_gradient_near_zero_at_optimum(self):
        from conftest import make_separable_dataset

        d = make_separable_dataset(20)
        idx = features.build_feature_index(d)
        labels = d.labels()
        label_of = {t: i for i, t in enumerate(labels)}
        batch = [
            (features.featurize_sentence(s.tokens, s.id, idx),
             [label_of[t] for t in s.tags])
            for s in d.sentences
        ]
        init = CrfModel.zeros(len(idx), labels, l2_sigma=10.0)
        model = train(init, batch, TrainConfig(max_iter=400, gtol=1e-7))
        _, (gw, ga) = log_likelihood_and_gradient(model, batch)
        gnorm = np.sqrt((gw**2).sum() + (ga**2).sum())
        assert gnorm < 1e-3

    def test_dimension_mismatch(self):
        m = CrfModel.zeros(2, ("a", "b"))
        with pytest.raises(CrfError):
            log_likelihood_and_gradient(m, [(FeaturizedSentence(0, ((0,),)), [0, 1])])


class TestTrain:
    def test_separable_reaches_perfect_accuracy(self):
        from conftest import make_separable_dataset

        d = make_separable_dataset(25)
        idx = features.build_feature_index(d)
        labels = d.labels()
        label_of = {t: i for i, t in enumerate(labels)}
        batch = [
            (features.featurize_sentence(s.tokens, s.id, idx),
             [label_of[t] for t in s.tags])
            for s in d.sentences
        ]
        model = train(CrfModel.zeros(len(idx), labels), batch, TrainConfig(max_iter=200))
        correct = total = 0
        for fs, gold in batch:
            dr = decode(model, fs)
            correct += sum(int(p == g) for p, g in zip(dr.path, gold))
            total += len(gold)
        assert correct == total

    def test_zero_iterations_returns_init(self):
        rng = np.random.default_rng(8)
        m = random_model(rng, 5, 2)
        batch = [(random_featurized(rng, 5), [0])]
        batch = [(fs, [0] * len(fs)) for fs, _ in batch]
        out = train(m, batch, TrainConfig(max_iter=0))
        assert out is m

    def test_larger_sigma_larger_weights(self):
        from conftest import make_separable_dataset

        d = make_separable_dataset(20)
        idx = features.build_feature_index(d)
        labels = d.labels()
        label_of = {t: i for i, t in enumerate(labels)}
        batch = [
            (features.featurize_sentence(s.tokens, s.id, idx),
             [label_of[t] for t in s.tags])
            for s in d.sentences
        ]
        m1 = train(CrfModel.zeros(len(idx), labels, l2_sigma=1.0), batch)
        m2 = train(CrfModel.zeros(len(idx), labels, l2_sigma=2.0), batch)
        n1 = np.linalg.norm(m1.weights) + np.linalg.norm(m1.trans)
        n2 = np.linalg.norm(m2.weights) + np.linalg.norm(m2.trans)
        assert n2 > n1

    def test_deterministic(self):
        from conftest import make_separable_dataset

        d = make_separable_dataset(15)
        idx = features.build_feature_index(d)
        labels = d.labels()
        label_of = {t: i for i, t in enumerate(labels)}
        batch = [
            (features.featurize_sentence(s.tokens, s.id, idx),
             [label_of[t] for t in s.tags])
            for s in d.sentences
        ]
        a = train(CrfModel.zeros(len(idx), labels), batch)
        b = train(CrfModel.zeros(len(idx), labels), batch)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.trans, b.trans)


class TestModelSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        m = random_model(rng, 6, 3)
        path = tmp_path / "model.npz"
        m.save(path)
        loaded = CrfModel.load(path)
        assert loaded.labels == m.labels
        assert loaded.l2_sigma == m.l2_sigma
        assert np.array_equal(loaded.weights, m.weights)
        assert np.array_equal(loaded.trans, m.trans)


class TestEmissionMatrixFile:
    def test_gold_identity_emissions_recover_gold(self, tmp_path):
        d = parse_conll("a\tB-PER\nb\tI-PER\nc\tO\n")
        labels = d.labels()
        gold_idx = [labels.index(t) for t in d.sentences[0].tags]
        emis = np.zeros((3, len(labels)))
        for i, j in enumerate(gold_idx):
            emis[i, j] = 10.0
        path = tmp_path / "emissions.txt"
        save_emissions(path, {0: emis})
        blocks = load_emission_matrix(path, len(labels))
        lat = Lattice(blocks[0], np.zeros((len(labels), len(labels))))
        vpath, _ = viterbi(lat)
        assert list(vpath) == gold_idx

    def test_wrong_label_count_errors_with_sentence_id(self, tmp_path):
        path = tmp_path / "emissions.txt"
        save_emissions(path, {5: np.zeros((2, 3))})
        with pytest.raises(CrfError, match="sentence 5"):
            load_emission_matrix(path, 4)

    def test_round_trip_identical_decode(self, tmp_path):
        rng = np.random.default_rng(10)
        emis, trans = oracles.random_lattice(rng, min_n=3, max_n=6)
        path = tmp_path / "emissions.txt"
        save_emissions(path, {0: emis})
        reloaded = load_emission_matrix(path, emis.shape[1])[0]
        dr1 = decode_lattice(Lattice(emis, trans))
        dr2 = decode_lattice(Lattice(reloaded, trans))
        assert list(dr1.path) == list(dr2.path)
        assert dr1.log_z == dr2.log_z
        assert np.array_equal(dr1.marginals, dr2.marginals)


class TestBioMask:
    def test_mask_blocks_invalid_transitions(self):
        labels = ("O", "B-PER", "I-PER", "B-LOC", "I-LOC")
        mask = bio_transition_mask(labels)
        li = {t: i for i, t in enumerate(labels)}
        assert mask[li["O"], li["I-PER"]] < 0
        assert mask[li["B-LOC"], li["I-PER"]] < 0
        assert mask[li["B-PER"], li["I-PER"]] == 0
        assert mask[li["I-PER"], li["I-PER"]] == 0
        assert mask[li["I-PER"], li["O"]] == 0

    def test_masked_decode_is_valid_bio(self):
        rng = np.random.default_rng(11)
        labels = ("O", "B-PER", "I-PER", "B-LOC", "I-LOC")
        mask = bio_transition_mask(labels)
        from alcrf.corpus import validate_bio

        for _ in range(10):
            emis = rng.normal(scale=3.0, size=(6, len(labels)))
            path, _ = viterbi(Lattice(emis, mask))
            # a masked lattice can still start with I-X; only transitions masked
            tags = [labels[j] for j in path]
            for a, b in zip(tags, tags[1:]):
                if b.startswith("I-"):
                    assert a.endswith(b[2:]) and a != "O"
