"""Command-line entry point: ``dica <command> [flags]``.

Every command writes a ``manifest.json`` next to its outputs recording the
resolved flags, so a run can be repeated exactly.
"""
import argparse
import itertools
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import load_mnist, load_model, save_model, take_subset, write_pgm
from .errors import CapacityError, ContradictoryEvidence, DimensionError, FormatError, MissingLabelBlock
from .graph import (Evidence, build, complete, correct, drop_impossible, generate, mean_image, propagate,
                    prototype)
from .learning import TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_CONTRADICTION = 4
EXIT_CAPACITY = 5

log = logging.getLogger("dica")


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _write_manifest(path, args, started):
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "dica_version": __version__,
        "command": args.command,
        "argv": sys.argv[1:],
        "flags": flags,
        "seed": flags.get("seed"),
        "elapsed_seconds": round(time.time() - started, 3),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _outdir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _side(n):
    side = int(round(np.sqrt(n)))
    if side * side != n:
        raise UsageError(f"cannot render {n} visible variables as a square image")
    return side


def _code_row(posteriors):
    return ",".join(f"{p[1]:.6f}" if len(p) == 2 else f"{int(np.argmax(p))}" for p in posteriors)


def _relax_counts():
    return {"relaxed_images": 0, "dropped_observations": 0, "unexplained_images": 0}


def _run(mode, model, evidence, args, counts):
    """Apply an inference mode to one input.

    Unless ``--strict`` is given, observations no product state can emit are
    dropped first, and inputs that still contradict the model are counted and
    skipped (``None`` is returned).
    """
    if args.strict:
        return mode(model, evidence)
    evidence, dropped = drop_impossible(model, evidence)
    if dropped.any():
        counts["relaxed_images"] += 1
        counts["dropped_observations"] += int(dropped.sum())
    try:
        return mode(model, evidence)
    except ContradictoryEvidence:
        counts["unexplained_images"] += 1
        return None


def _forwards(model, evidence):
    if evidence.is_complete:
        return correct(model, evidence)
    return propagate(model, evidence).visible_forward


def _load_images(args, with_labels=False):
    labels = getattr(args, "labels", None)
    if with_labels and labels is None:
        raise UsageError("--labels is required")
    ds = load_mnist(args.images, labels, args.threshold)
    if args.count is not None and args.count < len(ds):
        ds = take_subset(ds, args.count, args.subset_seed)
    return ds


def cmd_train(args):
    if args.supervised and args.labels is None:
        raise UsageError("--supervised requires --labels")
    ds = _load_images(args, with_labels=args.supervised)
    config = TrainConfig(epochs=args.epochs, inner_cycles=args.inner_cycles, seed=args.seed,
                         supervised=args.supervised, init_perturbation=args.init_perturbation,
                         cpt_spread=args.cpt_spread)
    N = ds.height * ds.width
    model = build(args.num_sources, [args.source_arity] * args.num_sources, N, [2] * N,
                  with_label=args.supervised, seed=config.seed,
                  prior_perturbation=config.init_perturbation, cpt_spread=config.cpt_spread)
    model, report = train(model, ds.evidence(with_labels=args.supervised), config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    out.with_suffix(".report.csv").write_text(report.to_csv())
    return out.with_suffix(".manifest.json")


def cmd_generate(args):
    model = load_model(args.model)
    out = _outdir(args.out)
    side = _side(model.N)
    if args.soft is not None:
        if len(args.soft) != model.M:
            raise UsageError(f"--soft needs {model.M} values")
        if any(not 0 <= p <= 1 for p in args.soft) or any(n != 2 for n in model.source_sizes):
            raise UsageError("--soft takes probabilities of symbol 1 for binary sources")
        configs = [[np.array([1 - p, p]) for p in args.soft]]
    elif args.config is not None:
        if len(args.config) != model.M:
            raise UsageError(f"--config needs {model.M} values, got {len(args.config)}")
        configs = [args.config]
    else:
        configs = [list(c) for c in itertools.product(*(range(n) for n in model.source_sizes))]
    for k, config in enumerate(configs):
        write_pgm(mean_image(generate(model, config)), side, side, out / f"generate_{k:04d}.pgm")
    return out / "manifest.json"


def cmd_encode(args):
    model = load_model(args.model)
    ds = _load_images(args)
    out = _outdir(args.out)
    side = _side(model.N)
    counts = _relax_counts()
    with open(out / "codes.csv", "w") as fh:
        for k, x in enumerate(ds.pixels()):
            state = _run(propagate, model, Evidence.hard(x), args, counts)
            if state is None:
                continue
            fh.write(f"{k},{_code_row(state.source_posteriors())}\n")
            write_pgm(mean_image(state.visible_forward), side, side, out / f"forward_{k:04d}.pgm")
    (out / "summary.json").write_text(json.dumps({"images": len(ds), **counts}, indent=2) + "\n")
    return out / "manifest.json"


def cmd_complete(args):
    model = load_model(args.model)
    ds = _load_images(args)
    out = _outdir(args.out)
    side = _side(model.N)
    rng = np.random.default_rng(args.seed)
    n_erase = int(round(args.erasure * model.N))
    agree = total = 0
    counts = _relax_counts()
    with open(out / "codes.csv", "w") as fh:
        for k, x in enumerate(ds.pixels()):
            erased = np.zeros(model.N, dtype=bool)
            erased[rng.choice(model.N, size=n_erase, replace=False)] = True
            result = _run(complete, model, Evidence.partial(x, ~erased), args, counts)
            if result is None:
                continue
            fwd = mean_image(result.forward)
            agree += int(np.sum((fwd[erased] >= 0.5) == x[erased]))
            total += n_erase
            fh.write(f"{k},{_code_row(result.sources)}\n")
            write_pgm(np.where(erased, 0.5, x), side, side, out / f"input_{k:04d}.pgm")
            write_pgm(fwd, side, side, out / f"forward_{k:04d}.pgm")
            write_pgm(mean_image(result.posterior), side, side, out / f"posterior_{k:04d}.pgm")
    summary = {"images": len(ds), "erased_pixel_agreement": agree / total if total else None, **counts}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return out / "manifest.json"


def cmd_correct(args):
    model = load_model(args.model)
    ds = _load_images(args)
    out = _outdir(args.out)
    side = _side(model.N)
    rng = np.random.default_rng(args.seed)
    counts = _relax_counts()
    agree = total = 0
    for k, x in enumerate(ds.pixels()):
        flips = rng.random(model.N) < args.noise
        noisy = np.where(flips, 1 - x, x)
        forwards = _run(_forwards, model, Evidence.hard(noisy), args, counts)
        if forwards is None:
            continue
        fwd = mean_image(forwards)
        total += model.N
        agree += int(np.sum((fwd >= 0.5) == x))
        write_pgm(noisy, side, side, out / f"input_{k:04d}.pgm")
        write_pgm(fwd, side, side, out / f"forward_{k:04d}.pgm")
    summary = {"images": len(ds), "pixel_agreement": agree / total if total else None, **counts}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return out / "manifest.json"


def cmd_classify(args):
    model = load_model(args.model)
    if not model.has_label:
        raise MissingLabelBlock("model has no label block")
    ds = _load_images(args, with_labels=False)
    out = _outdir(args.out)
    correct_count = scored = 0
    counts = _relax_counts()
    with open(out / "classes.csv", "w") as fh, open(out / "codes.csv", "w") as codes:
        fh.write("index,label,predicted," + ",".join(f"p{c}" for c in range(model.label_size)) + "\n")
        for k, x in enumerate(ds.pixels()):
            state = _run(propagate, model, Evidence.hard(x), args, counts)
            if state is None:
                continue
            scored += 1
            post = state.label_posterior()
            pred = int(np.argmax(post))
            label = "" if ds.labels is None else int(ds.labels[k])
            correct_count += label == pred
            fh.write(f"{k},{label},{pred}," + ",".join(f"{p:.6f}" for p in post) + "\n")
            codes.write(f"{k},{_code_row(state.source_posteriors())}\n")
    summary = {"images": len(ds), **counts}
    if ds.labels is not None:
        summary["accuracy"] = correct_count / scored if scored else None
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return out / "manifest.json"


def cmd_prototypes(args):
    model = load_model(args.model)
    if not model.has_label:
        raise MissingLabelBlock("model has no label block")
    out = _outdir(args.out)
    side = _side(model.N)
    with open(out / "codes.csv", "w") as fh:
        for c in range(model.label_size):
            try:
                fwd, sources = prototype(model, c)
            except ContradictoryEvidence:
                print(f"dica: class {c} has no support in the label table, skipped", file=sys.stderr)
                continue
            write_pgm(mean_image(fwd), side, side, out / f"prototype_{c}.pgm")
            fh.write(f"{c},{_code_row(sources)}\n")
    return out / "manifest.json"


def _image_flags(p):
    p.add_argument("--images", required=True, help="IDX3 image file (optionally .gz)")
    p.add_argument("--count", type=int, default=None, help="use a seeded random subset of this size")
    p.add_argument("--subset-seed", type=int, default=0)
    p.add_argument("--threshold", type=int, default=128, help="binarization threshold")


def make_parser():
    parser = argparse.ArgumentParser(prog="dica", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="learn a model from IDX images")
    _image_flags(p)
    p.set_defaults(count=500)
    p.add_argument("--labels", help="IDX1 label file")
    p.add_argument("--num-sources", type=int, default=8)
    p.add_argument("--source-arity", type=int, default=2)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--inner-cycles", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-perturbation", type=float, default=0.01)
    p.add_argument("--cpt-spread", type=float, default=0.2)
    p.add_argument("--supervised", action="store_true")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode source configurations into images")
    p.add_argument("--model", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--all-configs", action="store_true")
    g.add_argument("--config", type=_ints)
    g.add_argument("--soft", type=_floats, help="probability of symbol 1 at each source")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    for name, func, doc in [("encode", cmd_encode, "factorial codes of images"),
                            ("complete", cmd_complete, "fill in erased pixels"),
                            ("correct", cmd_correct, "denoise images with flipped pixels"),
                            ("classify", cmd_classify, "class posteriors of images")]:
        p = sub.add_parser(name, help=doc)
        p.add_argument("--model", required=True)
        _image_flags(p)
        p.add_argument("--out", required=True)
        p.add_argument("--strict", action="store_true",
                       help="fail on inputs the model cannot explain instead of dropping "
                            "the impossible observations")
        p.set_defaults(func=func)
        if name == "complete":
            p.add_argument("--erasure", type=float, default=0.5)
            p.add_argument("--seed", type=int, default=0)
        if name == "correct":
            p.add_argument("--noise", type=float, default=0.05, help="pixel flip probability")
            p.add_argument("--seed", type=int, default=0)
        if name == "classify":
            p.add_argument("--labels", help="IDX1 label file, enables the accuracy summary")

    p = sub.add_parser("prototypes", help="images induced by each class label")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prototypes)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        manifest = args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except (FormatError, FileNotFoundError) as e:
        print(f"dica: error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except ContradictoryEvidence as e:
        print(f"dica: contradictory evidence: {e}", file=sys.stderr)
        return EXIT_CONTRADICTION
    except CapacityError as e:
        print(f"dica: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except (DimensionError, MissingLabelBlock) as e:
        print(f"dica: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    _write_manifest(manifest, args, started)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
