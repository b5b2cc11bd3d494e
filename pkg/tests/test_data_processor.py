"""
Unit tests for data_processor module
"""

import unittest
import numpy as np

from src.data_processor import (
    FrameMatrix, UtteranceRecord, assemble_frames, holdout_utterances,
    prepare_training_frames, regroup_targets, speaker_xvectors, split_frames, split_indices,
)
from src.errors import ConfigurationError, ShapeError
from src.pitch import F0Trajectory, NormStats, normalize


def _utterance(utt_id, speaker_id, f0, bn_dim=3, xvec_dim=2, offset=0.0):
    n = len(f0)
    bn = np.arange(n * bn_dim, dtype=float).reshape(n, bn_dim) + offset
    return UtteranceRecord(utt_id, speaker_id, bn, np.full(xvec_dim, offset + 0.5), F0Trajectory(np.array(f0)))


class TestUtteranceRecord(unittest.TestCase):
    """Test cases for UtteranceRecord"""

    def test_frame_count_must_match(self):
        """BN rows and F0 frames must agree"""
        with self.assertRaises(ShapeError):
            UtteranceRecord('u', 's', np.zeros((4, 3)), np.zeros(2), F0Trajectory(np.zeros(5)))

    def test_xvec_must_be_vector(self):
        """Test that a 2-D x-vector is rejected"""
        with self.assertRaises(ShapeError):
            UtteranceRecord('u', 's', np.zeros((4, 3)), np.zeros((2, 2)), F0Trajectory(np.zeros(4)))

    def test_stored_in_float32(self):
        """Test float32 storage of features"""
        utt = _utterance('u', 's', [100.0, 0.0])
        self.assertEqual(utt.bn.dtype, np.float32)
        self.assertEqual(utt.xvec.dtype, np.float32)
        self.assertEqual(utt.f0.values.dtype, np.float32)
        self.assertEqual((utt.n_frames, utt.bn_dim, utt.xvec_dim), (2, 3, 2))


class TestAssembleFrames(unittest.TestCase):
    """Test cases for the tall frame matrix"""

    def setUp(self):
        self.stats = NormStats(np.log(150.0), 0.3)
        self.utterances = [
            _utterance('a', 's1', [100.0, 0.0, 120.0]),
            _utterance('b', 's2', [0.0, 200.0], offset=10.0),
        ]

    def test_rows_and_columns(self):
        """Test frame matrix layout"""
        frames = assemble_frames(self.utterances, self.stats)
        self.assertEqual(len(frames), 5)
        self.assertEqual(frames.input_dim, 5)
        np.testing.assert_array_equal(frames.inputs[3, :3], self.utterances[1].bn[0])
        np.testing.assert_array_equal(frames.inputs[:3, 3:], np.full((3, 2), 0.5))
        np.testing.assert_array_equal(frames.inputs[3:, 3:], np.full((2, 2), 10.5))

    def test_targets_and_voicing(self):
        """Test normalized targets and voicing labels"""
        frames = assemble_frames(self.utterances, self.stats)
        np.testing.assert_array_equal(frames.voiced, [True, False, True, False, True])
        np.testing.assert_array_equal(frames.targets_f0[~frames.voiced], 0.0)
        expected = normalize(np.array([100.0, 120.0, 200.0], dtype=np.float32).astype(np.float64), self.stats)
        np.testing.assert_allclose(frames.targets_f0[frames.voiced], expected, rtol=1e-12)

    def test_provenance(self):
        """Test per-row utterance provenance"""
        frames = assemble_frames(self.utterances, self.stats)
        self.assertEqual(list(frames.utt_ids), ['a', 'a', 'a', 'b', 'b'])
        self.assertEqual(list(frames.frame_index), [0, 1, 2, 0, 1])

    def test_all_unvoiced_utterance(self):
        """Test an utterance without voiced frames"""
        frames = assemble_frames([_utterance('z', 's', [0.0, 0.0, 0.0])], self.stats)
        self.assertFalse(frames.voiced.any())
        self.assertTrue(np.all(frames.targets_f0 == 0.0))

    def test_read_only(self):
        """Test that assembled arrays are read-only"""
        frames = assemble_frames(self.utterances, self.stats)
        with self.assertRaises(ValueError):
            frames.inputs[0, 0] = 1.0

    def test_inconsistent_dims(self):
        """Test mixed feature dimensions"""
        mixed = [_utterance('a', 's', [100.0]), _utterance('b', 's', [100.0], bn_dim=4)]
        with self.assertRaises(ShapeError):
            assemble_frames(mixed, self.stats)

    def test_empty_corpus(self):
        """Test assembling an empty corpus"""
        with self.assertRaises(ShapeError):
            assemble_frames([], self.stats)

    def test_frame_matrix_row_mismatch(self):
        """Test FrameMatrix row count validation"""
        with self.assertRaises(ShapeError):
            FrameMatrix(np.zeros((3, 2)), np.zeros(2), np.zeros(3, dtype=bool),
                        np.array(['a'] * 3, dtype=object), np.arange(3))


class TestSplit(unittest.TestCase):
    """Test cases for the row-level validation split"""

    def test_sizes_disjoint_exhaustive(self):
        """Test that the split partitions all rows"""
        train, val = split_indices(1000, 0.10, seed=4)
        self.assertEqual(val.size, 100)
        self.assertEqual(train.size, 900)
        self.assertEqual(np.intersect1d(train, val).size, 0)
        np.testing.assert_array_equal(np.sort(np.concatenate([train, val])), np.arange(1000))

    def test_rounding(self):
        """Test validation size rounding"""
        _, val = split_indices(15, 0.10)
        self.assertEqual(val.size, 2)

    def test_deterministic(self):
        """Test split determinism for a fixed seed"""
        a, b = split_indices(200, 0.25, seed=9), split_indices(200, 0.25, seed=9)
        np.testing.assert_array_equal(a[1], b[1])
        self.assertFalse(np.array_equal(a[1], split_indices(200, 0.25, seed=10)[1]))

    def test_too_few_rows(self):
        """Test splitting fewer than two rows"""
        with self.assertRaises(ShapeError):
            split_indices(9)

    def test_bad_fraction(self):
        """Test out-of-range validation fractions"""
        for fraction in (0.0, 1.0, -0.1):
            with self.assertRaises(ConfigurationError):
                split_indices(100, fraction)

    def test_split_frames_preserves_rows(self):
        """Test that the frame split keeps every row once"""
        utterances = [_utterance(f'u{i}', 's', [100.0 + i] * 6) for i in range(4)]
        frames = assemble_frames(utterances, NormStats(np.log(100.0), 0.1))
        train, val = split_frames(frames, 0.25, seed=1)
        self.assertEqual(len(train) + len(val), 24)
        self.assertEqual(len(val), 6)


class TestPrepareTrainingFrames(unittest.TestCase):
    """Normalization statistics come from training rows only"""

    def test_stats_exclude_validation_rows(self):
        """Test that normalization statistics use training rows only"""
        rng = np.random.default_rng(0)
        utterances = [_utterance(f'u{i}', 's', rng.uniform(80.0, 300.0, size=20)) for i in range(5)]
        train, val, stats = prepare_training_frames(utterances, 0.2, seed=3)

        self.assertEqual(len(train), 80)
        self.assertEqual(len(val), 20)
        # training targets are standardized by construction
        self.assertAlmostEqual(float(train.targets_f0[train.voiced].mean()), 0.0, places=9)
        self.assertAlmostEqual(float(train.targets_f0[train.voiced].std()), 1.0, places=9)
        self.assertNotAlmostEqual(float(val.targets_f0.mean()), 0.0, places=6)


class TestRegroupAndHoldout(unittest.TestCase):
    """Test cases for per-utterance helpers"""

    def setUp(self):
        self.utterances = [
            _utterance('s1_a', 's1', [100.0, 110.0]),
            _utterance('s2_a', 's2', [200.0, 0.0], offset=3.0),
            _utterance('s1_b', 's1', [105.0, 0.0, 115.0]),
            _utterance('s2_b', 's2', [210.0], offset=3.0),
        ]

    def test_regroup_after_shuffle(self):
        """Test regrouping shuffled rows by utterance"""
        frames = assemble_frames(self.utterances, NormStats(np.log(150.0), 0.4))
        shuffled = frames.take(np.random.default_rng(2).permutation(len(frames)))
        regrouped = regroup_targets(shuffled)
        original = regroup_targets(frames)
        self.assertEqual(set(regrouped), {'s1_a', 's2_a', 's1_b', 's2_b'})
        for utt_id, targets in original.items():
            np.testing.assert_array_equal(regrouped[utt_id], targets)

    def test_holdout_last_per_speaker(self):
        """Test holding out the last utterances of each speaker"""
        kept, held = holdout_utterances(self.utterances, per_speaker=1)
        self.assertEqual([u.utt_id for u in kept], ['s1_a', 's2_a'])
        self.assertEqual([u.utt_id for u in held], ['s1_b', 's2_b'])

    def test_holdout_zero(self):
        """Test holdout of zero utterances"""
        kept, held = holdout_utterances(self.utterances, per_speaker=0)
        self.assertEqual(len(kept), 4)
        self.assertEqual(held, [])

    def test_holdout_cannot_empty_speaker(self):
        """Test that holdout may not remove a whole speaker"""
        with self.assertRaises(ConfigurationError):
            holdout_utterances(self.utterances, per_speaker=2)

    def test_speaker_xvectors(self):
        """Test speaker x-vector lookup"""
        xvecs = speaker_xvectors(self.utterances)
        self.assertEqual(list(xvecs), ['s1', 's2'])
        np.testing.assert_array_equal(xvecs['s2'], np.full(2, 3.5, dtype=np.float32))


if __name__ == '__main__':
    unittest.main()
