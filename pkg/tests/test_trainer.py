"""Training loop, evaluation, and metrics persistence tests."""

import numpy as np
import pytest

from advlab.attacks import AttackSpec, make_attack
from advlab.data import gen_blobs
from advlab.models import build_affine, build_mlp
from advlab.seeds import derive_seed
from advlab.trainer import (
    BATCH_CSV_HEADER,
    EPOCH_CSV_HEADER,
    EpochRecord,
    MetricsTrace,
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    lr_at,
    resolve_eval_spec,
    train,
)

EPS = 8.0 / 255.0
RS_SPEC = "rs_fgsm(eps=8/255,alpha=8/255)"


def mean_threshold_classifier(dim):
    """Ideal blobs classifier: class 1 iff the coordinate mean exceeds 0.5."""
    w = np.vstack([-np.ones(dim) / dim, np.ones(dim) / dim])
    b = np.array([0.5, -0.5])
    return build_affine(w, b)


def easy_blobs(seed, sigma=0.0, per_class=50, dim=10, sep=8 * EPS):
    return gen_blobs(2, dim, per_class, sep, sigma, seed=seed)


class TestTrainConfig:
    def test_rejects_zero_epochs(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_rejects_bad_momentum(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, momentum=1.0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, momentum=-0.1)

    def test_rejects_bad_lr(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, base_lr=0.0)

    def test_rejects_negative_weight_decay(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, weight_decay=-1e-4)

    def test_rejects_malformed_attack_spec(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, attack_spec="cw(eps=0.1)")
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, eval_attack_spec="fgsm(bogus=1)")

    def test_rejects_negative_seed(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=1, seed=-1)


class TestLrSchedule:
    CFG = TrainConfig(epochs=200, base_lr=0.1, lr_decay_epochs=(100, 150),
                      lr_decay_factor=10.0)

    def test_before_first_decay(self):
        assert lr_at(self.CFG, 0) == 0.1
        assert lr_at(self.CFG, 99) == 0.1

    def test_at_and_after_decays(self):
        assert lr_at(self.CFG, 100) == 0.1 / 10.0
        assert lr_at(self.CFG, 149) == 0.1 / 10.0
        assert lr_at(self.CFG, 150) == 0.1 / 10.0**2
        assert lr_at(self.CFG, 199) == 0.1 / 10.0**2

    def test_no_decay_epochs(self):
        cfg = TrainConfig(epochs=10, base_lr=0.3)
        assert lr_at(cfg, 9) == 0.3

    def test_rejects_negative_epoch(self):
        with pytest.raises(ValueError):
            lr_at(self.CFG, -1)


class TestResolveEvalSpec:
    def test_explicit_spec_wins(self):
        cfg = TrainConfig(epochs=1, attack_spec=RS_SPEC,
                          eval_attack_spec="fgsm(eps=1/255)")
        spec = resolve_eval_spec(cfg)
        assert spec.name == "fgsm"
        assert spec.params["eps"] == 1.0 / 255.0

    def test_derived_from_training_epsilon(self):
        cfg = TrainConfig(epochs=1, attack_spec=RS_SPEC)
        spec = resolve_eval_spec(cfg)
        assert spec.name == "pgd"
        assert spec.params == {
            "eps": EPS, "alpha": EPS / 4.0, "steps": 10, "restarts": 1,
        }

    def test_standard_when_no_epsilon(self):
        cfg = TrainConfig(epochs=1, attack_spec="none")
        assert resolve_eval_spec(cfg).is_none


class TestEvaluate:
    def test_perfect_classifier_standard_accuracy_one(self):
        ds = easy_blobs(0)
        clf = mean_threshold_classifier(ds.input_dim)
        assert evaluate(clf, ds, "standard") == 1.0

    def test_constant_classifier_matches_prevalence(self):
        ds = easy_blobs(1)
        clf = build_affine(np.zeros((2, ds.input_dim)), np.array([0.0, 1.0]))
        assert evaluate(clf, ds, "standard") == float(np.mean(ds.labels == 1))

    def test_margin_beyond_epsilon_is_fully_robust(self):
        # separation 8 eps puts every example 4 eps from the threshold; no
        # eps-bounded attack can cross
        ds = easy_blobs(2)
        clf = mean_threshold_classifier(ds.input_dim)
        acc = evaluate(clf, ds, "pgd(eps=8/255,steps=50,restarts=10)", seed=3)
        assert acc == 1.0

    def test_huge_epsilon_breaks_linear_model(self):
        ds = easy_blobs(3)
        clf = mean_threshold_classifier(ds.input_dim)
        assert evaluate(clf, ds, "fgsm(eps=0.45)") == 0.0

    def test_deterministic_given_seed(self):
        ds = easy_blobs(4, sigma=0.1)
        clf = build_mlp([(10, 8, "relu"), (8, 2, "none")], seed=0)
        a = evaluate(clf, ds, RS_SPEC, seed=9)
        b = evaluate(clf, ds, RS_SPEC, seed=9)
        assert a == b

    def test_multi_restart_requires_surviving_every_restart(self):
        ds = easy_blobs(5, sigma=0.08, per_class=30, sep=2.2 * EPS)
        clf = build_mlp([(10, 8, "relu"), (8, 2, "none")], seed=1)
        spec = "pgd(eps=8/255,alpha=2/255,steps=3,restarts=4)"
        got = evaluate(clf, ds, spec, seed=7)
        single = AttackSpec(
            "pgd",
            {"eps": EPS, "alpha": 2.0 / 255.0, "steps": 3, "restarts": 1},
            spec,
        )
        fn = make_attack(single)
        correct = np.ones(len(ds), dtype=bool)
        for r in range(4):
            pert = fn(clf, ds.inputs, ds.labels, derive_seed(7, r))
            correct &= clf.predict(ds.inputs + pert.delta) == ds.labels
        assert got == float(np.mean(correct))

    def test_restarts_never_increase_accuracy(self):
        ds = easy_blobs(6, sigma=0.08, per_class=30, sep=2.2 * EPS)
        clf = build_mlp([(10, 8, "relu"), (8, 2, "none")], seed=2)
        one = evaluate(clf, ds, "pgd(eps=8/255,alpha=2/255,steps=5,restarts=1)", seed=3)
        ten = evaluate(clf, ds, "pgd(eps=8/255,alpha=2/255,steps=5,restarts=10)", seed=3)
        assert ten <= one + 1e-12

    def test_accepts_parsed_spec(self):
        ds = easy_blobs(7)
        clf = mean_threshold_classifier(ds.input_dim)
        assert evaluate(clf, ds, AttackSpec("standard", {}, "standard")) == 1.0


class TestTrainLoop:
    def test_standard_training_fits_separable_blobs(self):
        tr = gen_blobs(2, 10, 50, 0.3, 0.02, seed=0)
        te = gen_blobs(2, 10, 50, 0.3, 0.02, seed=1)
        clf = build_mlp([(10, 8, "relu"), (8, 2, "none")], seed=2)
        cfg = TrainConfig(epochs=5, batch_size=16, base_lr=0.1, attack_spec="none", seed=3)
        _, trace, _ = train(cfg, clf, tr, te)
        assert trace.epochs[-1].std_acc == 1.0
        assert len(trace.epochs) == 5

    def test_rerun_bit_identical(self):
        def run():
            tr = gen_blobs(2, 10, 40, 0.3, 0.03, seed=5)
            te = gen_blobs(2, 10, 40, 0.3, 0.03, seed=6)
            clf = build_mlp([(10, 8, "relu"), (8, 2, "none")], seed=7)
            cfg = TrainConfig(epochs=3, batch_size=16, base_lr=0.05,
                              attack_spec=RS_SPEC, seed=8)
            return train(cfg, clf, tr, te)

        clf_a, trace_a, snap_a = run()
        clf_b, trace_b, snap_b = run()
        for p, q in zip(clf_a.params(), clf_b.params()):
            assert np.array_equal(p, q)
        assert trace_a.epochs == trace_b.epochs
        assert snap_a.epoch == snap_b.epoch
        for p, q in zip(snap_a.params, snap_b.params):
            assert np.array_equal(p, q)

    def test_divergence_aborts_with_location(self):
        tr = gen_blobs(2, 10, 50, 0.3, 0.02, seed=0)
        clf = build_mlp([(10, 8, "relu"), (8, 2, "none")], seed=0)
        cfg = TrainConfig(epochs=3, batch_size=32, base_lr=1e200,
                          weight_decay=0.5, attack_spec="none", seed=0)
        with np.errstate(all="ignore"):
            with pytest.raises(TrainingDivergedError, match=r"epoch \d+ batch \d+"):
                train(cfg, clf, tr, tr)

    def test_none_attack_strong_column_equals_std(self):
        tr = gen_blobs(2, 10, 30, 0.3, 0.02, seed=1)
        clf = build_mlp([(10, 8, "relu"), (8, 2, "none")], seed=1)
        cfg = TrainConfig(epochs=2, batch_size=16, attack_spec="none", seed=2)
        _, trace, _ = train(cfg, clf, tr, tr)
        for rec in trace.epochs:
            assert rec.strong_test_acc == rec.std_acc
            assert rec.delta_l2_mean == 0.0
            assert abs(rec.loss_gap) < 1e-9

    def test_best_snapshot_is_earliest_argmax(self):
        tr = gen_blobs(2, 20, 100, 8 * EPS, 0.05, seed=1)
        te = gen_blobs(2, 20, 100, 8 * EPS, 0.05, seed=2)
        clf = build_mlp([(20, 16, "relu"), (16, 2, "none")], seed=3)
        cfg = TrainConfig(epochs=12, batch_size=32, base_lr=0.02,
                          attack_spec=RS_SPEC, seed=4)
        captured = {}

        def keep(classifier, epoch):
            captured[epoch] = classifier.copy_params()

        _, trace, snap = train(cfg, clf, tr, te, on_epoch=keep)
        strong = [r.strong_test_acc for r in trace.epochs]
        want_epoch = int(np.argmax(strong))
        assert snap.epoch == want_epoch
        assert strong.index(max(strong)) == want_epoch
        assert snap.tag == "best-by-test-pgd"
        for p, q in zip(snap.params, captured[want_epoch]):
            assert np.array_equal(p, q)

    def test_on_epoch_called_in_order(self):
        tr = gen_blobs(2, 5, 20, 0.3, 0.0, seed=0)
        clf = build_mlp([(5, 4, "relu"), (4, 2, "none")], seed=0)
        cfg = TrainConfig(epochs=4, batch_size=10, attack_spec="none", seed=0)
        seen = []
        train(cfg, clf, tr, tr, on_epoch=lambda c, e: seen.append(e))
        assert seen == [0, 1, 2, 3]

    def test_classifier_updated_in_place(self):
        tr = gen_blobs(2, 5, 20, 0.3, 0.02, seed=0)
        clf = build_mlp([(5, 4, "relu"), (4, 2, "none")], seed=0)
        before = clf.copy_params()
        cfg = TrainConfig(epochs=1, batch_size=10, attack_spec="none", seed=0)
        out, _, _ = train(cfg, clf, tr, tr)
        assert out is clf
        assert any(not np.array_equal(p, q) for p, q in zip(clf.params(), before))

    def test_record_batches_row_count(self):
        tr = gen_blobs(2, 5, 25, 0.3, 0.02, seed=0)
        clf = build_mlp([(5, 4, "relu"), (4, 2, "none")], seed=0)
        cfg = TrainConfig(epochs=2, batch_size=10, attack_spec="none", seed=0,
                          record_batches=True, probe_sample_size=8)
        _, trace, _ = train(cfg, clf, tr, tr)
        assert len(trace.batches) == 2 * 5  # ceil(50 / 10) per epoch
        assert [b.batch for b in trace.batches[:5]] == [0, 1, 2, 3, 4]

    def test_lr_column_follows_schedule(self):
        tr = gen_blobs(2, 5, 20, 0.3, 0.0, seed=0)
        clf = build_mlp([(5, 4, "relu"), (4, 2, "none")], seed=0)
        cfg = TrainConfig(epochs=4, batch_size=10, base_lr=0.2,
                          lr_decay_epochs=(2,), lr_decay_factor=2.0,
                          attack_spec="none", seed=0)
        _, trace, _ = train(cfg, clf, tr, tr)
        assert [r.lr for r in trace.epochs] == [0.2, 0.2, 0.1, 0.1]


class TestMetricsCsv:
    def sample_trace(self):
        trace = MetricsTrace()
        trace.append_epoch(EpochRecord(
            epoch=0, lr=0.123456789012, std_acc=0.5, weak_train_acc=0.25,
            weak_test_acc=0.125, strong_test_acc=1.0 / 3.0,
            delta_l2_mean=0.0123456789, input_grad_l2_mean=123456.789,
            df2_iters_mean=2.5, df2_norm_mean=1e-12, loss_gap=-0.5,
        ))
        return trace

    def test_header_exact(self, tmp_path):
        path = tmp_path / "epochs.csv"
        self.sample_trace().write_csv(path)
        first = path.read_text().splitlines()[0]
        assert first == EPOCH_CSV_HEADER

    def test_nine_significant_digits(self, tmp_path):
        path = tmp_path / "epochs.csv"
        self.sample_trace().write_csv(path)
        row = path.read_text().splitlines()[1].split(",")
        assert row[0] == "0"
        assert row[1] == "0.123456789"
        assert row[5] == "0.333333333"
        assert row[9] == "1e-12"

    def test_write_is_byte_stable(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        trace = self.sample_trace()
        trace.write_csv(a)
        trace.write_csv(b)
        assert a.read_bytes() == b.read_bytes()

    def test_roundtrip_to_nine_digits(self, tmp_path):
        path = tmp_path / "epochs.csv"
        trace = self.sample_trace()
        trace.write_csv(path)
        loaded = MetricsTrace.read_csv(path)
        assert len(loaded.epochs) == 1
        for name in ("lr", "strong_test_acc", "loss_gap", "df2_norm_mean"):
            a = getattr(trace.epochs[0], name)
            b = getattr(loaded.epochs[0], name)
            assert abs(a - b) <= 1e-8 * max(1.0, abs(a))

    def test_read_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("epoch,lr\n0,0.1\n")
        with pytest.raises(ValueError, match="header"):
            MetricsTrace.read_csv(path)

    def test_batches_csv_header(self, tmp_path):
        tr = gen_blobs(2, 5, 20, 0.3, 0.02, seed=0)
        clf = build_mlp([(5, 4, "relu"), (4, 2, "none")], seed=0)
        cfg = TrainConfig(epochs=1, batch_size=10, attack_spec="none", seed=0,
                          record_batches=True, probe_sample_size=8)
        _, trace, _ = train(cfg, clf, tr, tr)
        path = tmp_path / "batches.csv"
        trace.write_batches_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == BATCH_CSV_HEADER
        assert len(lines) == 1 + len(trace.batches)


class TestAttackStrengthOrdering:
    def test_monotone_chain_on_trained_model(self):
        # stronger attacks can only lower accuracy (1-point slack)
        tr = gen_blobs(2, 20, 100, 8 * EPS, 0.05, seed=1)
        te = gen_blobs(2, 20, 100, 8 * EPS, 0.05, seed=2)
        clf = build_mlp([(20, 16, "relu"), (16, 2, "none")], seed=3)
        cfg = TrainConfig(epochs=12, batch_size=32, base_lr=0.02,
                          attack_spec=RS_SPEC, seed=4)
        clf, _, _ = train(cfg, clf, tr, te)
        e = 2 * EPS
        std = evaluate(clf, te, "standard")
        weak = evaluate(clf, te, f"fgsm(eps={e})", seed=1)
        mid = evaluate(clf, te, f"pgd(eps={e},alpha={e / 4},steps=10,restarts=1)", seed=1)
        strong = evaluate(clf, te, f"pgd(eps={e},steps=50,restarts=10)", seed=1)
        slack = 0.01 + 1e-12
        assert strong <= mid + slack
        assert mid <= weak + slack
        assert weak <= std + slack
        assert std == 1.0
