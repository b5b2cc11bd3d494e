"""
Tests for evaluation metrics, reports and the swap experiment
"""

import json
import os
import tempfile
import unittest

import numpy as np
import pandas as pd
import pytest

from src.bundle import TrainedBundle
from src.data_processor import UtteranceRecord
from src.errors import ConfigurationError, EvaluationError, InsufficientOverlapError, ShapeError
from src.evaluation import (
    evaluate, export_trajectories_csv, pitch_correlation, read_trajectories_csv,
    swap_experiment, voicing_metrics, write_report_json,
)
from src.network import LayerParams, MLPModel, ModelConfig
from src.pitch import F0Trajectory, NormStats


def _trajectory(values):
    return F0Trajectory(np.array(values, dtype=float))


def _utterance(utt_id, f0, group='', speaker_id='s'):
    n = len(f0)
    return UtteranceRecord(utt_id, speaker_id, np.zeros((n, 2)), np.zeros(1), _trajectory(f0), group)


def _xvec_bundle(voicing_bias=5.0):
    """Linear model: normalized F0 equals the x-vector, constant voicing logit"""
    layer = LayerParams(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]), np.array([0.0, voicing_bias]))
    return TrainedBundle(MLPModel(ModelConfig(3, ()), [layer]), NormStats(np.log(150.0), 0.3))


class TestPitchCorrelation:

    def test_worked_example(self):
        """Test correlation on a small worked example"""
        r = pitch_correlation(_trajectory([100, 110, 120, 130]), _trajectory([100, 120, 110, 140]))
        assert r == pytest.approx(0.831522, abs=1e-6)

    def test_symmetric(self):
        """Test correlation symmetry"""
        a, b = _trajectory([100, 0, 130, 125, 180]), _trajectory([90, 140, 0, 150, 170])
        assert pitch_correlation(a, b) == pytest.approx(pitch_correlation(b, a), rel=1e-15)

    def test_scale_and_shift_invariant(self):
        """Test invariance to positive scaling and offsets"""
        a = _trajectory([100, 110, 125, 118])
        assert pitch_correlation(a, _trajectory(2.0 * a.values + 30.0)) == pytest.approx(1.0, abs=1e-12)

    def test_unvoiced_frames_ignored(self):
        """Test that frames unvoiced on either side are ignored"""
        a = _trajectory([100, 0, 120, 130, 0])
        b = _trajectory([100, 500, 120, 130, 0])
        assert pitch_correlation(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_constant_side_gives_zero(self):
        """Test correlation when one side is constant"""
        assert pitch_correlation(_trajectory([150, 150, 150]), _trajectory([100, 120, 140])) == 0.0

    def test_insufficient_overlap(self):
        """Test fewer than two jointly voiced frames"""
        with pytest.raises(InsufficientOverlapError):
            pitch_correlation(_trajectory([100, 0, 0]), _trajectory([100, 110, 0]))

    def test_length_mismatch(self):
        """Test trajectories of different lengths"""
        with pytest.raises(ShapeError):
            pitch_correlation(_trajectory([100, 110]), _trajectory([100, 110, 120]))


class TestVoicingMetrics(unittest.TestCase):
    """Test voicing classification scores"""

    def test_worked_example(self):
        """Test voicing accuracy, precision, recall and F1 on known counts"""
        metrics = voicing_metrics(_trajectory([100, 100, 0, 0]), _trajectory([100, 0, 0, 100]))
        for value in (metrics.accuracy, metrics.precision, metrics.recall, metrics.f1):
            self.assertAlmostEqual(value, 0.5)
        self.assertEqual((metrics.true_positives, metrics.false_positives,
                          metrics.false_negatives, metrics.true_negatives), (1, 1, 1, 1))

    def test_no_positive_predictions(self):
        """Test precision when nothing is predicted voiced"""
        metrics = voicing_metrics(_trajectory([0, 0, 0]), _trajectory([100, 0, 120]))
        self.assertEqual(metrics.precision, 0.0)
        self.assertEqual(metrics.recall, 0.0)
        self.assertEqual(metrics.f1, 0.0)
        self.assertAlmostEqual(metrics.accuracy, 1 / 3)

    def test_perfect(self):
        """Test perfect voicing decisions"""
        truth = _trajectory([100, 0, 120])
        metrics = voicing_metrics(truth, truth)
        self.assertEqual((metrics.accuracy, metrics.f1), (1.0, 1.0))


class TestEvaluate(unittest.TestCase):
    """Test corpus-level evaluation"""

    def setUp(self):
        self.corpus = [
            _utterance('b', [100, 110, 0, 125, 140], group='low'),
            _utterance('a', [200, 0, 230, 210, 250], group='high'),
            _utterance('c', [105, 0, 0, 115, 130], group='low'),
        ]

    def test_oracle_is_perfect(self):
        """Test evaluation with an oracle predictor"""
        report = evaluate(None, self.corpus, predict_fn=lambda utt: utt.f0)
        self.assertAlmostEqual(report.rho_f0, 1.0, places=12)
        self.assertEqual(report.voicing.f1, 1.0)
        self.assertEqual(report.rmse_hz, 0.0)
        self.assertEqual(report.rmse_log, 0.0)
        self.assertEqual(report.n_utterances, 3)
        self.assertEqual(report.n_skipped, 0)

    def test_group_weighting(self):
        """Test per-group averaging of utterance scores"""
        def perturbed(utt):
            values = utt.f0.values.astype(float).copy()
            values[-1] *= 0.8
            return F0Trajectory(values)

        report = evaluate(None, self.corpus, predict_fn=perturbed)
        groups = report.per_group
        self.assertEqual(sorted(groups), ['high', 'low'])
        self.assertEqual(groups['low'].n_utterances, 2)
        weighted = (2 * groups['low'].rho_f0 + groups['high'].rho_f0) / 3
        self.assertAlmostEqual(report.rho_f0, weighted, places=12)
        self.assertGreater(report.rmse_hz, 0.0)

    def test_single_utterance(self):
        """Test evaluating one utterance"""
        report = evaluate(None, self.corpus[:1], predict_fn=lambda utt: utt.f0)
        self.assertEqual(report.n_utterances, 1)
        self.assertEqual(list(report.per_group), ['low'])

    def test_skips_insufficient_overlap(self):
        """Test that low-overlap utterances are skipped and counted"""
        corpus = self.corpus + [_utterance('d', [0, 0, 0, 0, 0], group='low')]
        report = evaluate(None, corpus, predict_fn=lambda utt: utt.f0)
        self.assertEqual(report.n_utterances, 3)
        self.assertEqual(report.n_skipped, 1)

    def test_all_skipped(self):
        """Test evaluation where every utterance is skipped"""
        with self.assertRaises(EvaluationError):
            evaluate(None, [_utterance('d', [0, 0, 0])], predict_fn=lambda utt: utt.f0)

    def test_empty_corpus(self):
        """Test evaluating an empty corpus"""
        with self.assertRaises(ConfigurationError):
            evaluate(_xvec_bundle(), [])

    def test_needs_bundle_or_predict_fn(self):
        """Test that a model source is required"""
        with self.assertRaises(ConfigurationError):
            evaluate(None, self.corpus)

    def test_with_bundle(self):
        """Test evaluation through a trained bundle"""
        report = evaluate(_xvec_bundle(), self.corpus)
        # constant 150 Hz predictions: zero correlation, every frame voiced
        self.assertEqual(report.rho_f0, 0.0)
        self.assertEqual(report.voicing.recall, 1.0)

    def test_report_json(self):
        """Test report serialization"""
        report = evaluate(None, self.corpus, predict_fn=lambda utt: utt.f0)
        path = os.path.join(tempfile.mkdtemp(), 'report.json')
        write_report_json(report, path)
        with open(path) as handle:
            data = json.load(handle)
        self.assertEqual(set(data['voicing']), {'accuracy', 'precision', 'recall', 'f1'})
        self.assertEqual(data['n_utterances'], 3)
        self.assertIn('low', data['per_group'])


class TestSwapExperiment:

    def test_shift_follows_donor(self):
        """Test that the swap shift follows the donor speaker"""
        source = _utterance('src', [100, 110, 0, 120])
        result = swap_experiment(_xvec_bundle(), source, np.zeros(1), 'donor')
        assert result.voiced_mean_shift_hz == pytest.approx(40.0, rel=1e-9)
        assert result.voicing_agreement == pytest.approx(0.75)
        assert result.rho_f0 == 0.0
        assert result.donor_speaker_id == 'donor'

    def test_higher_donor_raises_pitch(self):
        """Test swapping in a higher-pitched donor"""
        source = _utterance('src', [100, 110, 0, 120])
        low = swap_experiment(_xvec_bundle(), source, np.array([-1.0]), 'low')
        high = swap_experiment(_xvec_bundle(), source, np.array([1.0]), 'high')
        assert high.voiced_mean_shift_hz > low.voiced_mean_shift_hz

    def test_partial_result_on_insufficient_overlap(self):
        """Test the partial swap result carried by the error"""
        bundle = _xvec_bundle(voicing_bias=-5.0)
        source = _utterance('src', [100, 0, 0, 120])
        with pytest.raises(InsufficientOverlapError) as info:
            swap_experiment(bundle, source, np.zeros(1), 'donor')
        partial = info.value.partial
        assert partial.voicing_agreement == pytest.approx(0.5)
        assert np.isnan(partial.voiced_mean_shift_hz)
        assert np.isnan(partial.rho_f0)


class TestTrajectoryExport:

    def test_overlay_csv(self):
        """Test the trajectory overlay CSV"""
        items = [
            ('ground_truth', _trajectory([100.0, 0.0])),
            ('matched', _trajectory([101.5, 0.0])),
            ('swapped', _trajectory([140.25, 150.0])),
        ]
        path = os.path.join(tempfile.mkdtemp(), 'overlay.csv')
        export_trajectories_csv(items, path)

        with open(path) as handle:
            lines = handle.read().splitlines()
        assert lines[0] == 'label,frame_index,time_s,f0_hz'
        assert len(lines) == 7

        data = pd.read_csv(path)
        assert list(data['label'].unique()) == ['ground_truth', 'matched', 'swapped']

        parsed = read_trajectories_csv(path)
        assert [label for label, _ in parsed] == ['ground_truth', 'matched', 'swapped']
        for (_, original), (_, restored) in zip(items, parsed):
            np.testing.assert_array_equal(restored.values, original.values)
            assert restored.hop == pytest.approx(0.010)
