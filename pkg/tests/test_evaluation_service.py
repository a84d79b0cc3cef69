"""
评估服务测试
"""
import math

import numpy as np
import pytest

from app.core.exceptions import InvalidArgumentError, SchemaError
from app.schemas.age import NUM_GROUPS, GroupingScheme
from app.schemas.dataset import AnnotatedFace, Dataset, Split
from app.schemas.evaluation import AgePrediction, ConfusionMatrix
from app.schemas.model import TrainConfig
from app.services.agecore_service import AgeCoreService
from app.services.dataset_service import DatasetService
from app.services.evaluation_service import EvaluationService
from app.services.toymodel_service import ToyModelService


def labels_for(pairs) -> Dataset:
    return Dataset(
        split=Split.TEST,
        records=tuple(AnnotatedFace(id=i, mu=mu, sigma=sigma) for i, mu, sigma in pairs),
    )


@pytest.fixture
def trained(tmp_path):
    """在合成数据上训练集成并写出特征与标签文件"""
    data = ToyModelService.make_synthetic(300, 3, seed=21)
    models = ToyModelService.train_ensemble(data.features, data.mu, TrainConfig(learning_rate=0.5, epochs=10))
    models_dir = tmp_path / "models"
    ToyModelService.save_ensemble(models, models_dir)
    features = ToyModelService.write_features(data.ids, data.features, tmp_path / "features.csv")
    dataset = Dataset(
        split=Split.TEST,
        records=tuple(AnnotatedFace(id=i, mu=m, sigma=s) for i, m, s in zip(data.ids, data.mu, data.sigma)),
    )
    labels = DatasetService.emit(dataset, tmp_path / "labels.csv")
    return models_dir, features, labels


class TestPredict:
    def test_k1_and_k34_follow_decoder(self, trained):
        models_dir, features, _ = trained
        models = ToyModelService.load_ensemble(models_dir)
        ids, X = ToyModelService.load_features(features)
        schemes = AgeCoreService.ensemble_schemes()
        for k in (1, 34):
            predictions = EvaluationService.predict(models_dir, features, k)
            assert [p.id for p in predictions] == ids
            for p, x in zip(predictions[:20], X[:20]):
                scores = [
                    AgeCoreService.decode_topk(ToyModelService.forward(m, x), s, k) for m, s in zip(models, schemes)
                ]
                assert p.age == pytest.approx(AgeCoreService.fuse(scores).years, abs=1e-12)
        k1 = EvaluationService.predict(models_dir, features, 1)
        k34 = EvaluationService.predict(models_dir, features, 34)
        assert all(a.age <= b.age + 1e-12 for a, b in zip(k1, k34))
        assert any(a.age != b.age for a, b in zip(k1, k34))

    def test_dimension_mismatch(self, trained, tmp_path):
        models_dir, _, _ = trained
        other = ToyModelService.write_features(["a"], np.ones((1, 5)), tmp_path / "other.csv")
        with pytest.raises(SchemaError):
            EvaluationService.predict(models_dir, other, 5)

    def test_prediction_file_round_trip(self, trained, tmp_path):
        models_dir, features, _ = trained
        predictions = EvaluationService.predict(models_dir, features, 5)
        path = EvaluationService.write_predictions(predictions, tmp_path / "pred.csv")
        assert path.read_text().splitlines()[0] == "id,age,m0,m1,m2"
        again = EvaluationService.read_predictions(path)
        assert [p.id for p in again] == [p.id for p in predictions]
        np.testing.assert_allclose([p.age for p in again], [p.age for p in predictions], rtol=1e-11)

    def test_file_round_trip_preserves_mean_epsilon(self, trained, tmp_path):
        models_dir, features, labels_path = trained
        predictions = EvaluationService.predict(models_dir, features, 5)
        labels = EvaluationService.load_labels(labels_path)
        by_id = labels.by_id()
        in_process = AgeCoreService.mean_epsilon(
            [(p.age, by_id[p.id].mu, by_id[p.id].sigma) for p in predictions]
        )
        path = EvaluationService.write_predictions(predictions, tmp_path / "pred.csv")
        report = EvaluationService.evaluate(EvaluationService.read_predictions(path), labels)
        assert abs(report.mean_epsilon - in_process) <= 1e-9


class TestEvaluate:
    def test_perfect_predictions(self):
        labels = labels_for([("a", 20, 3), ("b", 40, 5), ("c", 60, 0)])
        predictions = [AgePrediction(id=r.id, age=r.mu) for r in labels.records]
        report = EvaluationService.evaluate(predictions, labels)
        assert report.mean_epsilon == 0.0
        assert report.count == 3

    def test_report_values(self, tmp_path):
        labels = labels_for([("a", 30, 4), ("b", 30.2, 4), ("c", 50, 2)])
        predictions = [AgePrediction(id="a", age=34), AgePrediction(id="b", age=30.2), AgePrediction(id="c", age=54)]
        report = EvaluationService.evaluate(predictions, labels)
        e1, e2 = 1 - math.exp(-0.5), 1 - math.exp(-2.0)
        assert [r.epsilon for r in report.records] == pytest.approx([e1, 0.0, e2], abs=1e-12)
        assert report.mean_epsilon == pytest.approx((e1 + e2) / 3, abs=1e-12)
        assert report.per_age == pytest.approx({30: e1 / 2, 50: e2})
        assert report.per_age_count == {30: 2, 50: 1}

        main, by_age = EvaluationService.write_report(report, tmp_path / "report.csv")
        assert main.read_text().splitlines()[0] == "id,prediction,mean,stddev,epsilon"
        assert by_age.name == "report_by_age.csv"
        assert by_age.read_text().splitlines() == [
            "age,count,mean_epsilon",
            f"30,2,{e1 / 2:.12g}",
            f"50,1,{e2:.12g}",
        ]

    def test_unknown_id(self):
        labels = labels_for([("a", 20, 3)])
        with pytest.raises(SchemaError, match="no label"):
            EvaluationService.evaluate([AgePrediction(id="zzz", age=20)], labels)

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            EvaluationService.evaluate([], labels_for([("a", 20, 3)]))

    def test_read_predictions_errors(self, tmp_path):
        dup = tmp_path / "dup.csv"
        dup.write_text("id,age\na,20\na,21\n")
        with pytest.raises(SchemaError, match="row 3"):
            EvaluationService.read_predictions(dup)
        out_of_range = tmp_path / "range.csv"
        out_of_range.write_text("id,age\na,120\n")
        with pytest.raises(SchemaError):
            EvaluationService.read_predictions(out_of_range)


class TestConfusion:
    def test_perfect_predictions_are_diagonal(self):
        labels = labels_for([(f"r{i}", a, 3) for i, a in enumerate([0, 5, 5, 17, 44, 44, 44, 99, 100])])
        predictions = [AgePrediction(id=r.id, age=r.mu) for r in labels.records]
        for shift in (0, 1, 2):
            matrix = EvaluationService.confusion(predictions, labels, shift)
            assert matrix.counts.shape == (NUM_GROUPS, NUM_GROUPS)
            assert matrix.trace == matrix.total == 9
            assert np.count_nonzero(matrix.counts - np.diag(np.diag(matrix.counts))) == 0

    def test_row_sums_match_group_counts(self):
        rng = np.random.default_rng(5)
        ages = rng.uniform(0, 100, 200)
        labels = labels_for([(f"r{i}", float(a), 2.0) for i, a in enumerate(ages)])
        predictions = [AgePrediction(id=r.id, age=float(np.clip(r.mu + rng.normal(0, 5), 0, 102))) for r in labels.records]
        scheme = GroupingScheme(shift=1)
        matrix = EvaluationService.confusion(predictions, labels, 1)
        groups = AgeCoreService.encode_ages(ages, scheme)
        np.testing.assert_array_equal(matrix.row_sums(), np.bincount(groups, minlength=NUM_GROUPS))
        assert matrix.total == 200

    def test_write_confusion(self, tmp_path):
        labels = labels_for([("a", 10, 1), ("b", 10, 1)])
        matrix = EvaluationService.confusion(
            [AgePrediction(id="a", age=10), AgePrediction(id="b", age=13)], labels, 0
        )
        lines = EvaluationService.write_confusion(matrix, tmp_path / "cm.csv").read_text().splitlines()
        assert lines[0].split(",")[:3] == ["true_group", "g0", "g1"]
        assert len(lines) == NUM_GROUPS + 1
        row3 = lines[4].split(",")
        assert row3[0] == "3" and row3[4] == "1" and row3[5] == "1"

    def test_matrix_rejects_negative_counts(self):
        counts = np.zeros((NUM_GROUPS, NUM_GROUPS), dtype=int)
        counts[0, 0] = -1
        with pytest.raises(ValueError):
            ConfusionMatrix(shift=0, counts=counts)
