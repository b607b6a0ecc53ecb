"""
honeyscope command line.

Usage:
    honeyscope gen-data --n-images 250 --holdout 50
    honeyscope train-detector --epochs 30
    honeyscope detect --split test
    honeyscope evaluate --split test --pr-table
    honeyscope gen-samples --profiles eucalyptus manuka --per-profile 5 --frames 10
    honeyscope train-auth --genuine manuka
    honeyscope authenticate --features sample.json
    honeyscope grad-check --trials 20

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import sys
import argparse
import logging
from pathlib import Path

from honeyscope import __version__
from honeyscope.errors import ConfigError, HoneyscopeError
from honeyscope.config import load_config
from honeyscope.utils import (
    load_json, resolve_threads, set_deterministic_seeds, setup_logging, thread_limit, child_seeds, write_json,
)
from honeyscope.tensor.gradcheck import OP_CASES, run_suite
from honeyscope.detector.boxes import load_detections, save_detections
from honeyscope.detector.loss import LOSS_CASES
from honeyscope.detector.weights import load_optimizer_state, load_weights
from honeyscope.detector.train import Trainer, load_training_set
from honeyscope.detector.inference import detect_dataset
from honeyscope.synth.dataset import SPLITS, Dataset, DatasetItem, gen_dataset
from honeyscope.evaluation import evaluate, pr_table, format_table, format_pr_table, write_report
from honeyscope.auth import (
    AuthFeatures, ProfileManager, authenticate, blend_check, closest_profile, dilution_check,
    features_from_records, load_auth_model, save_auth_model, train_auth,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

SAMPLES_VERSION = 1
GRADCHECK_TOLERANCE = 1e-4
LOSS_MAX_ENTRIES = 50

# (argument attribute, config section, config key) for flags that overlay the config file
OVERRIDES = [
    ('seed', 'run', 'seed'),
    ('threads', 'run', 'threads'),
    ('n_images', 'synth', 'n_images'),
    ('holdout', 'synth', 'holdout'),
    ('image_format', 'synth', 'image_format'),
    ('epochs', 'train', 'epochs'),
    ('batch_size', 'train', 'batch_size'),
    ('learning_rate', 'train', 'learning_rate'),
    ('optimizer', 'train', 'optimizer'),
    ('width_scale', 'detector', 'width_scale'),
    ('input_extent', 'detector', 'input_extent'),
    ('conf', 'detector', 'conf_threshold'),
    ('nms_iou', 'detector', 'nms_iou'),
    ('iou', 'run', 'match_iou'),
    ('genuine', 'auth', 'genuine_label'),
    ('per_profile', 'auth', 'per_profile'),
    ('frames_per_sample', 'auth', 'frames'),
]


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def cmd_gen_data(run, args, threads):
    out = Path(args.out or run.paths.data_dir)
    manifest = gen_dataset(run.synth, run.n_images, run.seed, out, holdout=run.holdout, threads=threads,
                           image_format=run.image_format)
    print(f"Generated {manifest['n_images']} slides with {manifest['labeled_total']} labeled grains in {out}")
    return EXIT_OK


def cmd_train_detector(run, args, threads):
    dataset = Dataset(args.data or run.paths.data_dir)
    items = dataset.items(args.split)
    model = load_weights(args.resume) if args.resume else None
    optimizer_state = load_optimizer_state(args.resume) if args.resume else None
    extent = model.config.input_extent if model is not None else run.detector.input_extent
    images, ground_truth = load_training_set(items, extent)
    out_dir = Path(args.out or run.paths.train_dir)
    trainer = Trainer(run.detector, run.train, out_dir, model=model, optimizer_state=optimizer_state)
    history = trainer.fit(images, ground_truth)
    if history:
        print(f"Trained {len(history)} epochs on {len(items)} slides; final loss {history[-1]['total']:.4f}")
    else:
        print(f"Wrote initialized weights to {out_dir}")
    return EXIT_OK


def cmd_detect(run, args, threads):
    model = load_weights(args.weights or run.paths.weights)
    if args.images:
        items = [DatasetItem(Path(path).stem, Path(path), None) for path in args.images]
    else:
        items = Dataset(args.data or run.paths.data_dir).items(args.split)
    detections = detect_dataset(model, items, run.conf_threshold, run.nms_iou)
    out = args.out or run.paths.detections
    save_detections(out, detections, model.class_names)
    print(f"{sum(len(d) for d in detections.values())} detections in {len(items)} images written to {out}")
    return EXIT_OK


def cmd_evaluate(run, args, threads):
    detections = load_detections(args.detections or run.paths.detections)
    dataset = Dataset(args.data or run.paths.data_dir)
    annotations = [dataset.annotations[image_id] for image_id in dataset.image_ids(args.split)]
    grid_extent = run.detector.grid_extent
    report = evaluate(detections, annotations, run.match_iou, grid_extent, threads=threads)
    rows = pr_table(detections, annotations, iou_threshold=run.match_iou, grid_extent=grid_extent,
                    threads=threads) if args.pr_table else None
    print(format_table(report))
    if rows:
        print()
        print(format_pr_table(rows))
    settings = {'split': args.split, 'images': len(annotations), 'match_iou': run.match_iou,
                'grid_extent': grid_extent}
    write_report(args.out or run.paths.report, report, rows, settings)
    return EXIT_OK


def _profile_manager(run):
    return ProfileManager(run.paths.profiles_dir or None)


def cmd_gen_samples(run, args, threads):
    manager = _profile_manager(run)
    profiles = [manager.get(label) for label in (args.profiles or run.profiles)]
    if args.dilute is not None:
        profiles = [profile.diluted(args.dilute) for profile in profiles]
    seeds = iter(child_seeds(run.seed, len(profiles) * run.per_profile))
    samples = []
    for profile in profiles:
        for index in range(run.per_profile):
            features = profile.sample_features(run.frames, next(seeds), run.synth)
            samples.append({'id': f'{profile.label}_{index:02d}', 'label': profile.label,
                            'features': features.to_dict()})
    out = args.out or run.paths.samples
    write_json(out, {'version': SAMPLES_VERSION, 'seed': run.seed, 'frames': run.frames, 'samples': samples})
    print(f"Wrote {len(samples)} samples from {', '.join(p.label for p in profiles)} to {out}")
    return EXIT_OK


def _load_samples(path):
    data = load_json(path)
    try:
        return [(entry.get('id', f'sample_{n:02d}'), AuthFeatures.from_dict(entry['features']), entry.get('label'))
                for n, entry in enumerate(data['samples'])]
    except (KeyError, TypeError) as e:
        raise ValueError(f"{path}: malformed sample set ({e})")


def cmd_train_auth(run, args, threads):
    samples = _load_samples(args.samples or run.paths.samples)
    model = train_auth([(features, label) for _, features, label in samples], run.auth)
    out = args.out or run.paths.auth_model
    save_auth_model(model, out)
    correct = sum(authenticate(model, features)[0] == label for _, features, label in samples)
    print(f"Trained on {len(samples)} samples in {model.epochs_run} epochs (loss {model.final_loss:.4g}): "
          f"{correct}/{len(samples)} classified correctly")
    if model.training_flags:
        print(f"Training flags: {', '.join(model.training_flags)}")
    print(f"Model written to {out}")
    return EXIT_OK


def _verdict(model, run, sample_id, features, label, manager, declared):
    decision, score = authenticate(model, features)
    verdict = {'id': sample_id, 'decision': decision, 'score': score,
               'genuine': decision == model.genuine_label, 'features': features.to_dict()}
    if label is not None:
        verdict['label'] = label
    if features.total == 0:
        logger.warning(f"{sample_id}: no grains detected; distribution checks skipped")
    else:
        origin, distance = closest_profile(features.counts, manager.profiles.values())
        verdict['closest_profile'] = {'label': origin.label, 'divergence': distance}
    if declared is not None:
        verdict['declared_profile'] = declared.label
        verdict['dilution'] = dilution_check(features.density, declared.reference_density,
                                             run.auth.dilution_tolerance).to_dict()
        if features.total:
            verdict['blend'] = blend_check(features.counts, declared.mixture, run.auth.blend_tolerance).to_dict()
    return verdict


def _print_verdict(verdict):
    line = f"{verdict['id']}: {verdict['decision']} (score {verdict['score']:.3f})"
    if 'closest_profile' in verdict:
        line += f", closest profile {verdict['closest_profile']['label']}"
    if verdict.get('dilution', {}).get('diluted'):
        line += f", DILUTED (density ratio {verdict['dilution']['ratio']:.2f})"
    if verdict.get('blend', {}).get('blended'):
        line += f", BLENDED (divergence {verdict['blend']['divergence']:.2f})"
    print(line)


def cmd_authenticate(run, args, threads):
    model_path = Path(args.model or run.paths.auth_model)
    if not model_path.exists():
        raise FileNotFoundError(f"No trained authentication model at {model_path}; run train-auth first")
    model = load_auth_model(model_path)

    if args.features:
        data = load_json(args.features)
        if 'samples' in data:
            entries = _load_samples(args.features)
        else:
            entries = [(Path(args.features).stem, AuthFeatures.from_dict(data), None)]
    elif args.detections:
        features = features_from_records(load_detections(args.detections), frames=args.frames)
        entries = [(Path(args.detections).stem, features, None)]
    else:
        raise ConfigError("authenticate needs --features or --detections")

    manager = _profile_manager(run)
    declared_label = args.profile or model.genuine_label
    declared = manager.profiles.get(declared_label)
    if declared is None:
        logger.warning(f"No profile '{declared_label}'; dilution and blend checks skipped")

    verdicts = [_verdict(model, run, sample_id, features, label, manager, declared)
                for sample_id, features, label in entries]
    for verdict in verdicts:
        _print_verdict(verdict)
    labeled = [v for v in verdicts if 'label' in v]
    if labeled:
        correct = sum(v['decision'] == v['label'] for v in labeled)
        print(f"{correct}/{len(labeled)} labeled samples classified correctly")
    if args.out:
        write_json(args.out, verdicts[0] if len(verdicts) == 1 else {'verdicts': verdicts})
    return EXIT_OK


def cmd_grad_check(run, args, threads):
    cases = {**OP_CASES, **LOSS_CASES}
    names = args.ops or list(cases)
    unknown = [name for name in names if name not in cases]
    if unknown:
        raise ConfigError(f"Unknown grad-check cases {unknown}. Available: {list(cases)}")
    results = {}
    for name in names:
        max_entries = LOSS_MAX_ENTRIES if name in LOSS_CASES else None
        results.update(run_suite(trials=args.trials, seed=run.seed, names=[name], cases=cases,
                                 max_entries=max_entries))
    width = max(len(name) for name in results)
    for name, error in results.items():
        status = 'ok' if error <= args.tolerance else 'FAIL'
        print(f"{name:<{width}}  {error:.3e}  {status}")
    failed = [name for name, error in results.items() if error > args.tolerance]
    if failed:
        logger.error(f"Gradient check failed for {', '.join(failed)}")
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {
    'gen-data': cmd_gen_data,
    'train-detector': cmd_train_detector,
    'detect': cmd_detect,
    'evaluate': cmd_evaluate,
    'gen-samples': cmd_gen_samples,
    'train-auth': cmd_train_auth,
    'authenticate': cmd_authenticate,
    'grad-check': cmd_grad_check,
}


def parse_args(argv=None):
    parser = ArgumentParser(
        prog='honeyscope',
        description='Pollen detection and honey authentication from microscope slides',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  honeyscope gen-data --n-images 250 --holdout 50
  honeyscope train-detector --epochs 30 --threads 1
  honeyscope --print-config
""")
    parser.add_argument('--config', type=str, help='INI file overlaying config/default.ini')
    parser.add_argument('--seed', type=int, help='Master seed')
    parser.add_argument('--threads', type=int, help='Worker threads (default: POLLEN_THREADS, else 1)')
    parser.add_argument('--print-config', action='store_true', help='Print the resolved configuration')
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    parser.add_argument('--log-file', type=str, help='Also write the log to this file')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', metavar='command')

    p = subparsers.add_parser('gen-data', help='Generate a synthetic slide dataset')
    p.add_argument('--out', type=str, help='Dataset directory')
    p.add_argument('--n-images', type=int)
    p.add_argument('--holdout', type=int, help='Slides held out as the test split')
    p.add_argument('--format', dest='image_format', choices=['png', 'ppm'])

    p = subparsers.add_parser('train-detector', help='Train the detector on a dataset split')
    p.add_argument('--data', type=str, help='Dataset directory')
    p.add_argument('--split', choices=SPLITS, default='train')
    p.add_argument('--out', type=str, help='Training output directory')
    p.add_argument('--epochs', type=int)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--lr', dest='learning_rate', type=float)
    p.add_argument('--optimizer', type=str)
    p.add_argument('--width-scale', type=float)
    p.add_argument('--input-extent', type=int)
    p.add_argument('--resume', type=str, help='Continue from these weights')

    p = subparsers.add_parser('detect', help='Run the detector and write a detection record')
    p.add_argument('--weights', type=str)
    p.add_argument('--data', type=str, help='Dataset directory')
    p.add_argument('--split', choices=SPLITS, default='test')
    p.add_argument('--images', nargs='+', help='Image files instead of a dataset split')
    p.add_argument('--out', type=str, help='Detection record file')
    p.add_argument('--conf', type=float, help='Confidence threshold')
    p.add_argument('--nms-iou', type=float)

    p = subparsers.add_parser('evaluate', help='Score a detection record against annotations')
    p.add_argument('--detections', type=str)
    p.add_argument('--data', type=str, help='Dataset directory')
    p.add_argument('--split', choices=SPLITS, default='test')
    p.add_argument('--iou', type=float, help='Matching IoU threshold')
    p.add_argument('--pr-table', action='store_true', help='Also report fixed confidence thresholds')
    p.add_argument('--out', type=str, help='JSON report path')

    p = subparsers.add_parser('gen-samples', help='Draw authentication samples from honey profiles')
    p.add_argument('--profiles', nargs='+')
    p.add_argument('--per-profile', type=int)
    p.add_argument('--frames', dest='frames_per_sample', type=int, help='Frames per sample')
    p.add_argument('--dilute', type=float, help='Scale profile densities by this factor')
    p.add_argument('--out', type=str)

    p = subparsers.add_parser('train-auth', help='Train the authentication classifier')
    p.add_argument('--samples', type=str)
    p.add_argument('--genuine', type=str, help='Label treated as genuine')
    p.add_argument('--out', type=str)

    p = subparsers.add_parser('authenticate', help='Authenticate samples')
    p.add_argument('--model', type=str)
    source = p.add_mutually_exclusive_group()
    source.add_argument('--features', type=str, help='Features JSON or a sample set from gen-samples')
    source.add_argument('--detections', type=str, help='Detection record of one sample')
    p.add_argument('--frames', type=int, help='Frame count when some frames have no detections')
    p.add_argument('--profile', type=str, help='Declared honey profile (default: the genuine label)')
    p.add_argument('--out', type=str, help='Verdict JSON path')

    p = subparsers.add_parser('grad-check', help='Finite-difference gradient checks')
    p.add_argument('--trials', type=int, default=20)
    p.add_argument('--ops', nargs='+', help='Cases to run (default: all)')
    p.add_argument('--tolerance', type=float, default=GRADCHECK_TOLERANCE)

    args = parser.parse_args(argv)
    if args.command is None and not args.print_config:
        parser.error('a command is required')
    return args


def _overrides(args):
    overrides = {}
    for attribute, section, key in OVERRIDES:
        value = getattr(args, attribute, None)
        if value is not None:
            overrides.setdefault(section, {})[key] = value
    if getattr(args, 'profiles', None):
        overrides.setdefault('auth', {})['profiles'] = ' '.join(args.profiles)
    return overrides


def main(argv=None):
    args = parse_args(argv)
    setup_logging(args.log_file, logging.DEBUG if args.verbose else logging.INFO)
    try:
        run = load_config(args.config, _overrides(args))
        threads = resolve_threads(run.threads)
    except (ConfigError, ValueError) as e:
        logger.error(str(e))
        print(f"honeyscope: configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if args.print_config:
        print(run.to_ini(), end='')
        if args.command is None:
            return EXIT_OK

    set_deterministic_seeds(run.seed)
    try:
        with thread_limit(threads):
            return COMMANDS[args.command](run, args, threads)
    except ConfigError as e:
        logger.error(str(e))
        print(f"honeyscope: configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (HoneyscopeError, OSError, ValueError, FloatingPointError, RuntimeError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"honeyscope: {args.command} failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
