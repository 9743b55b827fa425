"""reidlab command line

Usage:
    python -m reidlab.cli --config smoke run
    python -m reidlab.cli --config default --seed 11 evaluate --mode nontargeted
    python -m reidlab.cli ablate --axis poison_rate --values 0.1,0.25,0.4,0.6
    python -m reidlab.cli stego embed --image in.png --code <hex> --output out.png
    python -m reidlab.cli report --runs badnets/<hash> default/<hash>

Exit status is 0 only when every invoked stage succeeded and its invariants held.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from common.errors import ReidLabError
from common.logging_config import setup_logging
from common.storage import ArtifactStore
from configs import load_experiment_config
from configs.types import ExperimentConfig
from reidlab.core.defenses import evaluate_detector, train_freq_detector
from reidlab.core.evalharness import EVAL_MODES
from reidlab.core.idhash import hash_identity
from reidlab.core.rasters import load_png, save_png
from reidlab.core.reidcore import rank
from reidlab.core.reporting import load_run, report
from reidlab.core.service import ExperimentRunner, ablate, run_experiment
from reidlab.core.stegocodec import DCTSpreadSpectrumCodec, QualityGate, StegoParams
from reidlab.core.types import HashCode

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1


def parse_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reidlab", description="All-to-unknown backdoor lab for person ReID")
    parser.add_argument("--config", help="Experiment name in configs/experiments.yaml or a YAML file")
    parser.add_argument("--seed", type=int, help="Override the master seed")
    parser.add_argument("--out", help="Artifact root directory (default: REIDLAB_ARTIFACT_ROOT)")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", help="Generate the synthetic benchmark")
    sub.add_parser("train-hash", help="Train the identity hashing network")

    p = sub.add_parser("hash", help="Hash code of a reference image")
    p.add_argument("--image", required=True)

    p = sub.add_parser("stego", help="Embed or extract a hash code")
    stego_sub = p.add_subparsers(dest="stego_command", required=True)
    e = stego_sub.add_parser("embed")
    e.add_argument("--image", required=True)
    e.add_argument("--code", required=True, help="Hex-encoded hash code")
    e.add_argument("--output", required=True)
    x = stego_sub.add_parser("extract")
    x.add_argument("--image", required=True)
    c = stego_sub.add_parser("capacity")
    c.add_argument("--height", type=int, required=True)
    c.add_argument("--width", type=int, required=True)

    sub.add_parser("poison", help="Poison the training set")
    sub.add_parser("train-reid", help="Train the clean and backdoored ReID models")

    p = sub.add_parser("rank", help="Rank the gallery for one query image")
    p.add_argument("--image", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--model", choices=("backdoor", "clean"), default="backdoor")

    p = sub.add_parser("evaluate", help="Evaluate both models on poisoned test queries")
    p.add_argument("--mode", choices=EVAL_MODES, default=None,
                   help="targeted|nontargeted: backdoored model on poisoned queries; clean: clean model on clean queries")

    p = sub.add_parser("defend", help="Resistance experiments")
    defend_sub = p.add_subparsers(dest="defense", required=True)
    f = defend_sub.add_parser("freq")
    f.add_argument("--score", nargs="+", metavar="IMAGE", help="Score these images instead of the 1:1 evaluation")
    pr = defend_sub.add_parser("prune")
    pr.add_argument("--schedule", type=parse_floats, default=None)

    p = sub.add_parser("ablate", help="One full run per axis value")
    p.add_argument("--axis", choices=("poison_rate", "code_length"), required=True)
    p.add_argument("--values", type=parse_floats, required=True)

    p = sub.add_parser("report", help="Comparison tables over finished runs")
    p.add_argument("--runs", nargs="+", required=True, metavar="NAME/HASH")

    sub.add_parser("run", help="Run every stage")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Named or file config with the command-line overrides applied and re-validated"""
    config = load_experiment_config(args.config)
    data = config.model_dump()
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "mode", None) in ("targeted", "nontargeted"):
        data["eval"]["targeted"] = args.mode == "targeted"
    if getattr(args, "defense", None) == "prune" and args.schedule:
        data["defense"]["prune_fractions"] = args.schedule
    return ExperimentConfig.model_validate(data)


def _models(runner: ExperimentRunner):
    manifest = runner.generate()
    trigger = runner.build_trigger(runner.train_hash(manifest))
    poisoned, _ = runner.poison(manifest, trigger)
    f, f_prime = runner.train_reid(manifest, poisoned)
    return manifest, trigger, poisoned, f, f_prime


def cmd_stego(args: argparse.Namespace, config: ExperimentConfig) -> int:
    codec = DCTSpreadSpectrumCodec(StegoParams.from_config(config.stego, config.hashnet.code_length),
                                   QualityGate.from_config(config.stego))
    if args.stego_command == "capacity":
        print(codec.capacity(args.height, args.width))
        return EXIT_OK
    pixels = load_png(args.image)
    if args.stego_command == "embed":
        code = HashCode.from_hex(args.code)
        if code.length != codec.code_length:
            raise ValueError(f"code has {code.length} bits, experiment uses {codec.code_length}")
        save_png(codec.embed(pixels, code), args.output)
        print(args.output)
    else:
        print(codec.extract(pixels).to_hex())
    return EXIT_OK


def cmd_defend(args: argparse.Namespace, runner: ExperimentRunner) -> int:
    manifest, trigger, _, _, f_prime = _models(runner)
    if args.defense == "freq":
        clean = [img.pixels for img in manifest.train if not img.poisoned]
        detector = train_freq_detector(clean, runner.seed("defend"), fpr=runner.config.defense.detector_fpr)
        if args.score:
            for path, score in zip(args.score, detector.score([load_png(p) for p in args.score])):
                print(f"{path}\t{score:.6f}\t{'poisoned' if score > detector.threshold else 'clean'}")
            return EXIT_OK
        queries = runner.poison_queries(manifest, trigger)
        result = evaluate_detector(detector, [img.pixels for img in manifest.query],
                                   {runner.trigger_kind.value: [q.image.pixels for q in queries]})
        print(result.to_text(), end="")
        return EXIT_OK
    queries = runner.poison_queries(manifest, trigger)
    _, curve = runner.defend(manifest, queries, f_prime)
    if curve is None:
        raise ValueError(f"defenses are disabled for experiment {runner.config.name}")
    print(curve.to_text(), end="")
    return EXIT_OK


def dispatch(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    store = ArtifactStore(args.out) if args.out else None
    runner = ExperimentRunner(config, store)

    if args.command == "gen":
        runner.generate()
        print(runner.store.path(runner.object_name("dataset")))
    elif args.command == "train-hash":
        params = runner.train_hash(runner.generate())
        if params is None:
            print(f"trigger {runner.trigger_kind.value} uses no hash network")
        else:
            print(runner.store.path(runner.object_name("hashnet.pt")))
    elif args.command == "hash":
        params = runner.train_hash(runner.generate())
        if params is None:
            raise ValueError("hash needs an experiment with the dynamic trigger")
        print(hash_identity(load_png(args.image), params).to_hex())
    elif args.command == "stego":
        return cmd_stego(args, config)
    elif args.command == "poison":
        manifest = runner.generate()
        _, records = runner.poison(manifest, runner.build_trigger(runner.train_hash(manifest)))
        print(f"{len(records)} poisoned images -> {runner.store.path(runner.object_name('poisoned'))}")
    elif args.command == "train-reid":
        _models(runner)
        print(runner.run_dir)
    elif args.command == "rank":
        manifest, _, _, f, f_prime = _models(runner)
        model = f_prime if args.model == "backdoor" else f
        ranking = rank(model, load_png(args.image), manifest.gallery, args.k or config.eval.k,
                       query_key=Path(args.image).stem)
        for position, (key, distance) in enumerate(zip(ranking.gallery_keys, ranking.distances), start=1):
            print(f"{position}\t{key}\t{distance:.6f}")
    elif args.command == "evaluate":
        manifest, trigger, poisoned, f, f_prime = _models(runner)
        backdoor, clean, _, _ = runner.evaluate(manifest, poisoned, trigger, f, f_prime)
        mode = args.mode or ("targeted" if config.eval.targeted else "nontargeted")
        chosen = clean if mode == "clean" else backdoor
        print(chosen.to_mode_text(mode), end="")
        failures = runner.check_invariants(backdoor, clean)
        for failure in failures:
            print(f"invariant failed: {failure}", file=sys.stderr)
        return EXIT_FAILED if failures else EXIT_OK
    elif args.command == "defend":
        return cmd_defend(args, runner)
    elif args.command == "ablate":
        table = ablate(config, args.axis, args.values, store)
        print(table.to_text(), end="")
        if args.axis == "code_length":
            print(f"# best code_length={table.best().value:g}")
    elif args.command == "report":
        print(report([load_run(runner.store, ref) for ref in args.runs]), end="")
    elif args.command == "run":
        artifacts = run_experiment(config, store)
        print(artifacts.backdoor_report.to_text(), end="")
        for failure in artifacts.invariant_failures:
            print(f"invariant failed: {failure}", file=sys.stderr)
        return EXIT_OK if artifacts.ok else EXIT_FAILED
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(level=args.log_level)
    try:
        return dispatch(args)
    except (ReidLabError, ValueError, FileNotFoundError) as e:
        logger.error(f"Command {args.command} failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
