"""
Command-line entry point

Every subcommand writes its artifacts atomically and prints a JSON summary on
stdout. Exit codes: 0 success, 1 validation/config error, 2 I/O error,
3 numerical failure.
"""

import argparse
import json
import sys
from dataclasses import replace
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence
import logging

import numpy as np

from src.bundle import bundle_summary, load_bundle, save_bundle
from src.config import Config
from src.data_processor import holdout_utterances, prepare_training_frames, speaker_xvectors
from src.errors import ConfigurationError, EvaluationError, InsufficientOverlapError, NumericalError, StudyError
from src.evaluation import evaluate, export_trajectories_csv, swap_experiment, write_report_json
from src.file_processor import corpus_summary, read_corpus, save_corpus
from src.file_utils import commit_together, get_file_info
from src.network import Activation, ModelConfig, grad_check, init_model
from src.performance_monitor import performance_monitor
from src.pitch import TrackerConfig, extract_f0, read_wav, synth_tone, write_wav
from src.synthetic import SyntheticSpec, gen_synthetic
from src.training import TrainConfig, predict_utterance, train, write_history_csv
from src.tuner import make_training_objective, run_study, write_best_json, write_study_log

logger = logging.getLogger(__name__)


class ExitStatus(IntEnum):
    OK = 0
    INVALID = 1
    IO_ERROR = 2
    NUMERICAL = 3


def exit_status_for(error: BaseException) -> ExitStatus:
    """Map an exception to exactly one exit status"""
    if isinstance(error, (NumericalError, StudyError, EvaluationError)):
        return ExitStatus.NUMERICAL
    if isinstance(error, OSError):
        return ExitStatus.IO_ERROR
    if isinstance(error, ValueError):
        return ExitStatus.INVALID
    logger.warning(f"Unclassified error {type(error).__name__}; reporting it as invalid input")
    return ExitStatus.INVALID


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors become ConfigurationError so they exit with status 1"""

    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


def _emit(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=float))


def _read_json(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    with open(path, 'r', encoding='utf-8') as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    return data


def _load_train_config(path: Optional[str], seed: int) -> TrainConfig:
    return replace(TrainConfig.from_dict(_read_json(path)), seed=seed)


@performance_monitor.timing_decorator('io')
def cmd_gen_synth(args: argparse.Namespace) -> ExitStatus:
    spec = replace(SyntheticSpec.from_dict(_read_json(args.spec)), seed=args.seed)
    corpus = gen_synthetic(spec)
    save_corpus(corpus, args.out)
    _emit({'out': args.out, 'bytes': get_file_info(args.out).get('size_bytes'), **corpus_summary(corpus)})
    return ExitStatus.OK


@performance_monitor.timing_decorator('dsp')
def cmd_gen_tone(args: argparse.Namespace) -> ExitStatus:
    audio = synth_tone(args.freq, args.duration, args.sample_rate, args.amplitude)
    write_wav(audio, args.out)
    _emit({'out': args.out, 'freq_hz': args.freq, 'samples': int(audio.samples.size),
           'sample_rate': audio.sample_rate})
    return ExitStatus.OK


@performance_monitor.timing_decorator('training')
def cmd_train(args: argparse.Namespace) -> ExitStatus:
    cfg = _load_train_config(args.config, args.seed)
    corpus = read_corpus(args.corpus)
    if args.holdout:
        corpus, held_out = holdout_utterances(corpus, args.holdout)
        logger.info(f"Held out {len(held_out)} utterances for evaluation")

    train_frames, val_frames, stats = prepare_training_frames(corpus, cfg.val_fraction, cfg.seed)
    bundle, history = train(train_frames, val_frames, cfg, stats)
    with commit_together(args.out, args.history) as (bundle_tmp, history_tmp):
        save_bundle(bundle, bundle_tmp)
        write_history_csv(history, history_tmp)

    best = min(history, key=lambda r: r.val_loss)
    _emit(bundle_summary(bundle, {
        'out': args.out,
        'history': args.history,
        'epochs': len(history),
        'best_epoch': best.epoch,
        'best_val_loss': best.val_loss,
    }))
    return ExitStatus.OK


@performance_monitor.timing_decorator('tuning')
def cmd_tune(args: argparse.Namespace) -> ExitStatus:
    cfg = _load_train_config(args.config, args.seed)
    corpus = read_corpus(args.corpus)
    if args.holdout:
        corpus, _ = holdout_utterances(corpus, args.holdout)

    train_frames, val_frames, stats = prepare_training_frames(corpus, cfg.val_fraction, cfg.seed)
    objective = make_training_objective(train_frames, val_frames, stats, cfg, max_epochs=args.max_epochs)
    best, trials = run_study(objective, n_trials=args.trials, seed=args.seed,
                             sampler=args.sampler, n_workers=args.workers)

    best_path = args.best or str(Path(args.out).with_suffix('.best.json'))
    with commit_together(args.out, best_path) as (log_tmp, best_tmp):
        write_study_log(trials, log_tmp)
        write_best_json(best, best_tmp)
    _emit({
        'out': args.out,
        'best_json': best_path,
        'trials': len(trials),
        'failed': sum(1 for t in trials if not t.is_complete),
        'best_trial': best.trial_id,
        'best_objective': best.objective,
        **best.params,
    })
    return ExitStatus.OK


@performance_monitor.timing_decorator('evaluation')
def cmd_eval(args: argparse.Namespace) -> ExitStatus:
    bundle = load_bundle(args.bundle)
    corpus = read_corpus(args.corpus)
    if args.holdout:
        _, corpus = holdout_utterances(corpus, args.holdout)

    report = evaluate(bundle, corpus)
    if args.report:
        write_report_json(report, args.report)
    _emit(report.to_dict())
    return ExitStatus.OK


@performance_monitor.timing_decorator('evaluation')
def cmd_swap(args: argparse.Namespace) -> ExitStatus:
    bundle = load_bundle(args.bundle)
    corpus = read_corpus(args.corpus)

    by_id = {u.utt_id: u for u in corpus}
    if args.source not in by_id:
        raise ConfigurationError(
            f"unknown source utterance '{args.source}'; valid ids: {', '.join(sorted(by_id))}"
        )
    xvectors = speaker_xvectors(corpus)
    if args.donor not in xvectors:
        raise ConfigurationError(
            f"unknown donor speaker '{args.donor}'; valid speakers: {', '.join(sorted(xvectors))}"
        )

    source = by_id[args.source]
    try:
        result = swap_experiment(bundle, source, xvectors[args.donor], args.donor)
    except InsufficientOverlapError as e:
        if e.partial is not None:
            _emit({'source': source.utt_id, 'donor': args.donor,
                   'voicing_agreement': e.partial.voicing_agreement, 'error': str(e)})
        raise

    matched = predict_utterance(bundle, source.bn, source.xvec, hop=source.f0.hop, window=source.f0.window)
    export_trajectories_csv(
        [('ground_truth', source.f0), ('matched', matched), ('swapped', result.predicted)], args.out
    )
    _emit({
        'out': args.out,
        'source': result.source_utt_id,
        'source_speaker': source.speaker_id,
        'donor': result.donor_speaker_id,
        'voiced_mean_shift_hz': result.voiced_mean_shift_hz,
        'voicing_agreement': result.voicing_agreement,
        'rho_f0': result.rho_f0,
    })
    return ExitStatus.OK


@performance_monitor.timing_decorator('dsp')
def cmd_extract_f0(args: argparse.Namespace) -> ExitStatus:
    audio = read_wav(args.wav)
    cfg = TrackerConfig(f_min=args.f_min, f_max=args.f_max, threshold=args.threshold)
    trajectory = extract_f0(audio, cfg)
    trajectory.to_csv(args.out)

    voiced = trajectory.values[trajectory.voiced]
    _emit({
        'out': args.out,
        'frames': len(trajectory),
        'voiced_fraction': float(trajectory.voiced.mean()) if len(trajectory) else 0.0,
        'median_voiced_hz': float(np.median(voiced)) if voiced.size else 0.0,
    })
    return ExitStatus.OK


@performance_monitor.timing_decorator('training')
def cmd_gradcheck(args: argparse.Namespace) -> ExitStatus:
    if not args.dims:
        raise ConfigurationError("--dims needs at least the input dimension")
    config = ModelConfig(args.dims[0], tuple(args.dims[1:]), Activation(args.activation))
    model = init_model(config, seed=args.seed)

    rng = np.random.default_rng(args.seed)
    batch = rng.standard_normal((args.batch, config.input_dim))
    targets = rng.standard_normal(args.batch)
    voiced = rng.random(args.batch) < 0.5

    max_err = grad_check(model, batch, targets, voiced, args.alpha, epsilon=args.epsilon)
    passed = bool(max_err < Config.GRADCHECK_TOLERANCE)
    _emit({'layers': [list(d) for d in config.layer_dims], 'max_relative_error': max_err,
           'tolerance': Config.GRADCHECK_TOLERANCE, 'passed': passed})
    return ExitStatus.OK if passed else ExitStatus.NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='f0r', description="F0 regression from BN features and x-vectors")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-synth', help="generate a synthetic corpus container")
    p.add_argument('--spec', help="SyntheticSpec JSON (defaults when omitted)")
    p.add_argument('--out', required=True)
    p.add_argument('--seed', type=int, required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser('gen-tone', help="write a pure sinusoid WAV")
    p.add_argument('--freq', type=float, required=True)
    p.add_argument('--duration', type=float, default=1.0)
    p.add_argument('--sample-rate', type=int, default=Config.DEFAULT_SAMPLE_RATE)
    p.add_argument('--amplitude', type=float, default=0.5)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_gen_tone)

    p = sub.add_parser('train', help="train a bundle")
    p.add_argument('--corpus', required=True)
    p.add_argument('--config', help="TrainConfig JSON (defaults when omitted)")
    p.add_argument('--out', required=True)
    p.add_argument('--history', required=True)
    p.add_argument('--holdout', type=int, default=0, help="utterances per speaker excluded from training")
    p.add_argument('--seed', type=int, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('tune', help="hyperparameter study over lr, alpha and dropout")
    p.add_argument('--corpus', required=True)
    p.add_argument('--config', help="base TrainConfig JSON")
    p.add_argument('--trials', type=int, default=50)
    p.add_argument('--out', required=True, help="study log CSV")
    p.add_argument('--best', help="best-trial JSON (default: next to --out)")
    p.add_argument('--sampler', choices=['random', 'tpe'], default='random')
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('--max-epochs', type=int, default=Config.TUNE_MAX_EPOCHS)
    p.add_argument('--holdout', type=int, default=0)
    p.add_argument('--seed', type=int, required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser('eval', help="evaluate a bundle on a corpus")
    p.add_argument('--bundle', required=True)
    p.add_argument('--corpus', required=True)
    p.add_argument('--report', help="EvalReport JSON path")
    p.add_argument('--holdout', type=int, default=0, help="evaluate only the last N utterances per speaker")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('swap', help="predict with another speaker's x-vector")
    p.add_argument('--bundle', required=True)
    p.add_argument('--corpus', required=True)
    p.add_argument('--source', required=True, help="source utterance id")
    p.add_argument('--donor', required=True, help="donor speaker id")
    p.add_argument('--out', required=True, help="overlay CSV")
    p.set_defaults(func=cmd_swap)

    p = sub.add_parser('extract-f0', help="track F0 in a WAV file")
    p.add_argument('--wav', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--f-min', type=float, default=TrackerConfig.f_min)
    p.add_argument('--f-max', type=float, default=TrackerConfig.f_max)
    p.add_argument('--threshold', type=float, default=TrackerConfig.threshold)
    p.set_defaults(func=cmd_extract_f0)

    p = sub.add_parser('gradcheck', help="finite-difference check of backprop")
    p.add_argument('--dims', type=int, nargs='+', default=[8, 16, 16],
                   help="input dimension followed by hidden sizes")
    p.add_argument('--batch', type=int, default=8)
    p.add_argument('--alpha', type=float, default=TrainConfig.alpha)
    p.add_argument('--epsilon', type=float, default=1e-5)
    p.add_argument('--activation', choices=[a.value for a in Activation], default=Activation.RELU.value)
    p.add_argument('--seed', type=int, required=True)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=Config.LOG_LEVEL)

    config_errors = Config.validate_config()
    if config_errors:
        for error in config_errors:
            print(f"configuration error: {error}", file=sys.stderr)
        return int(ExitStatus.INVALID)

    try:
        args = build_parser().parse_args(argv)
        performance_monitor.memory_checkpoint(f"{args.command} start")
        status = args.func(args)
        performance_monitor.memory_checkpoint(f"{args.command} end")
    except Exception as e:
        status = exit_status_for(e)
        print(f"error: {e}", file=sys.stderr)
        if Config.DEBUG:
            logger.exception("command failed")
    logger.debug(f"Performance summary: {performance_monitor.get_performance_summary()}")
    return int(status)
