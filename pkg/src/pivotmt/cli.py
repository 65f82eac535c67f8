"""Command-line surface tying preparation, training, translation,
retrieval, baselines and evaluation into reproducible pipelines.

Exit codes: 0 success, 2 usage/config error, 3 artifact-compatibility
error, 1 internal error. Config files are flat ``key=value`` lines with
typed parsing; unknown keys are rejected. All randomness flows from the
single seed (config `seed` key, overridden by --seed).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from . import autodiff as ad
from .corpus import (
    load_corpus_dir,
    load_features,
    load_lines,
    load_token_lines,
    prepare_splits,
    save_lines,
    tokenize,
    write_corpus_dir,
)
from .errors import (
    CompatibilityError,
    ConfigError,
    FormatError,
    PivotMtError,
    UnsupportedModeError,
)
from .gradcheck import TOLERANCE, run_suite
from .metrics import corpus_bleu
from .retrieval import (
    TfidfIndex,
    build_target_index,
    nearest_description_index,
    nearest_image_index,
    random_index,
    tfidf_feature_index,
)
from .synth import WorldConfig, generate
from .trainer import (
    TrainConfig,
    load_model,
    save_model,
    subsample_pairs,
    train,
    train_supervised,
    write_losslog,
)

USAGE_EXIT = 2
COMPAT_EXIT = 3


def _parse_kv_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return values


_BOOLS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _apply_config(instance, raw: dict[str, str], aliases: dict[str, str], path):
    known = {f.name: f for f in dataclasses.fields(instance)}
    for key, text in raw.items():
        name = aliases.get(key, key)
        if name not in known:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        current = getattr(instance, name)
        try:
            if isinstance(current, bool):
                value = _BOOLS[text.lower()]
            elif isinstance(current, int):
                value = int(text)
            elif isinstance(current, float):
                value = float(text)
            else:
                value = text
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{path}: bad value for {key!r}: {text!r}") from exc
        setattr(instance, name, value)
    return instance


def load_train_config(path=None, seed=None) -> TrainConfig:
    cfg = TrainConfig()
    if path is not None:
        _apply_config(cfg, _parse_kv_file(path), {"lambda": "lam"}, path)
    if seed is not None:
        cfg.seed = seed
    cfg.validate()
    return cfg


def load_world_config(path=None) -> WorldConfig:
    cfg = WorldConfig()
    if path is not None:
        _apply_config(cfg, _parse_kv_file(path), {"test_parallel": "test"}, path)
    cfg.validate()
    return cfg


@dataclasses.dataclass
class PrepareConfig:
    min_count: int = 5
    train_src: int = 0
    train_tgt: int = 0
    val_src: int = 0
    val_tgt: int = 0
    test: int = 0

    def split_sizes(self):
        return {
            "train_src": self.train_src,
            "train_tgt": self.train_tgt,
            "val_src": self.val_src,
            "val_tgt": self.val_tgt,
            "test_parallel": self.test,
        }

    def validate(self):
        if any(v <= 0 for v in (self.train_src, self.train_tgt)):
            raise ConfigError("prepare config must set positive train_src and train_tgt sizes")
        if any(v < 0 for v in self.split_sizes().values()):
            raise ConfigError("split sizes must be non-negative")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir, command, seed, config, inputs, artifacts, path=None):
    """One manifest per run, referencing every artifact the run produced."""
    payload = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "precision": ad.precision_bits(),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "artifacts": sorted(str(a) for a in artifacts),
    }
    if path is None:
        path = Path(out_dir) / "run_manifest.json"
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _config_dict(cfg) -> dict:
    return {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}


def cmd_prepare(args) -> int:
    if args.out is None:
        raise ConfigError("prepare requires --out")
    if args.config is None:
        raise ConfigError("prepare requires --config with split sizes")
    cfg = PrepareConfig()
    _apply_config(cfg, _parse_kv_file(args.config), {"test_parallel": "test"}, args.config)
    cfg.validate()
    seed = args.seed if args.seed is not None else 0
    src_sentences = load_lines(args.src_text)
    tgt_sentences = load_lines(args.tgt_text)
    features = load_features(args.features)
    splits, vocab_src, vocab_tgt = prepare_splits(
        src_sentences, tgt_sentences, features, cfg.split_sizes(), cfg.min_count, seed
    )
    artifacts = write_corpus_dir(
        args.out, splits, vocab_src, vocab_tgt, features.shape[1],
        {"min_count": cfg.min_count, "tool_version": __version__, "kind": "prepared"},
    )
    manifest = _write_manifest(
        args.out, "prepare", seed, _config_dict(cfg),
        [args.src_text, args.tgt_text, args.features], artifacts,
    )
    print(f"prepared corpus written to {args.out} ({manifest.name})")
    return 0


def cmd_synth(args) -> int:
    if args.out is None:
        raise ConfigError("synth requires --out")
    cfg = load_world_config(args.config)
    seed = args.seed if args.seed is not None else 0
    data = generate(cfg, seed)
    artifacts = write_corpus_dir(
        args.out, data.splits, data.vocab_src, data.vocab_tgt, cfg.feature_dim,
        {"min_count": cfg.min_count, "tool_version": __version__, "kind": "synthetic"},
        oracle=data.oracle,
    )
    out = Path(args.out)
    for split, lines in data.raw_sentences.items():
        stem = "test_src" if split == "test_parallel" else split
        save_lines(out / f"{stem}.txt", lines)
        artifacts.append(str(out / f"{stem}.txt"))
    manifest = _write_manifest(args.out, "synth", seed, _config_dict(cfg), [], artifacts)
    print(f"synthetic corpus written to {args.out} ({manifest.name})")
    return 0


def cmd_train(args) -> int:
    if args.out is None:
        raise ConfigError("train requires --out")
    cfg = load_train_config(args.config, args.seed)
    prepared = load_corpus_dir(args.corpus)
    result = train(cfg, prepared)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prefix = out / "checkpoint"
    save_model(prefix, result, prepared)
    write_losslog(out / "losslog.csv", result.log_rows)
    from .plotting import render_loss_curves

    render_loss_curves(result.log_rows, out / "loss_curves.png")
    artifacts = [prefix.with_suffix(".manifest"), prefix.with_suffix(".blob"),
                 out / "losslog.csv", out / "loss_curves.png"]
    _write_manifest(
        args.out, "train", cfg.seed, _config_dict(cfg),
        _corpus_input_files(args.corpus), artifacts,
    )
    print(f"best validation loss {result.best_val:.6f} after {len(result.log_rows)} epochs")
    print(f"checkpoint and losslog written to {args.out}")
    return 0


def _corpus_input_files(corpus_dir) -> list[Path]:
    root = Path(corpus_dir)
    return sorted(p for p in root.iterdir() if p.is_file() and p.name != "run_manifest.json")


def _load_checkpoint_model(args, prepared):
    model, meta = load_model(args.checkpoint, prepared)
    if ad.precision_bits() != 32:
        for p in model.parameters():
            p.data = p.data.astype(ad.active_dtype())
    return model, meta


def cmd_translate(args) -> int:
    prepared = load_corpus_dir(args.corpus)
    model, meta = _load_checkpoint_model(args, prepared)
    max_len = 2 * int(meta.get("max_target_len", 16))
    lines = load_lines(args.input)
    hypotheses = []
    for line in lines:
        if not line.strip():
            warnings.warn("blank source line; emitting a blank hypothesis")
            hypotheses.append("")
            continue
        ids = prepared.vocab_src.encode_all(tokenize(line))
        context = model.enc_src.encode(ids)
        if args.beam > 1:
            out_ids = model.decoder.beam(context, args.beam, max_len)
        else:
            out_ids = model.decoder.greedy(context, max_len)
        hypotheses.append(" ".join(prepared.vocab_tgt.decode_all(out_ids)))
    save_lines(args.output, hypotheses)
    _write_manifest(
        None, "translate", args.seed if args.seed is not None else 0,
        {"beam": args.beam, "checkpoint": str(args.checkpoint)},
        [args.input], [args.output],
        path=Path(str(args.output) + ".manifest.json"),
    )
    print(f"wrote {len(hypotheses)} hypotheses to {args.output}")
    return 0


def cmd_retrieve(args) -> int:
    prepared = load_corpus_dir(args.corpus)
    tgt_lines = load_token_lines(Path(args.corpus) / "train_tgt.tok")
    queries = [tokenize(line) if line.strip() else [] for line in load_lines(args.input)]
    seed = args.seed if args.seed is not None else 0
    indices: list[int] = []
    if args.method in ("image", "description"):
        if args.checkpoint is None:
            raise ConfigError(f"method {args.method!r} requires --checkpoint")
        model, _meta = _load_checkpoint_model(args, prepared)
        index = build_target_index(model, prepared.corpora["train_tgt"])
        for tokens in queries:
            ids = prepared.vocab_src.encode_all(tokens)
            if args.method == "image":
                indices.append(nearest_image_index(ids, index, model))
            else:
                indices.append(nearest_description_index(ids, index, model))
    elif args.method == "tfidf":
        src_corpus = prepared.corpora["train_src"]
        tgt_corpus = prepared.corpora["train_tgt"]
        tfidf = TfidfIndex([list(d.tokens) for d in src_corpus.documents])
        for tokens in queries:
            ids = prepared.vocab_src.encode_all(tokens)
            indices.append(tfidf_feature_index(ids, src_corpus, tgt_corpus, tfidf))
    elif args.method == "random":
        tgt_corpus = prepared.corpora["train_tgt"]
        indices = [random_index(tgt_corpus, seed, k) for k in range(len(queries))]
    else:
        raise ConfigError(f"unknown retrieval method {args.method!r}")
    save_lines(args.output, [" ".join(tgt_lines[i]) for i in indices])
    _write_manifest(
        None, "retrieve", seed,
        {"method": args.method, "checkpoint": str(args.checkpoint)},
        [args.input], [args.output],
        path=Path(str(args.output) + ".manifest.json"),
    )
    print(f"wrote {len(indices)} retrieved descriptions to {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    hyps = load_token_lines(args.hypotheses)
    refs = load_token_lines(args.references)
    if len(hyps) != len(refs):
        raise ConfigError(
            f"line count mismatch: {len(hyps)} hypotheses vs {len(refs)} references"
        )
    report = corpus_bleu(hyps, refs)
    print(report.to_json_line())
    print(report.human_summary())
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json_line() + "\n", encoding="utf-8")
        from .plotting import render_precisions

        render_precisions(report, out / "precisions.png")
        _write_manifest(
            args.out, "evaluate", args.seed if args.seed is not None else 0, {},
            [args.hypotheses, args.references],
            [out / "report.json", out / "precisions.png"],
        )
    return 0


def cmd_baseline_supervised(args) -> int:
    if args.out is None:
        raise ConfigError("baseline-supervised requires --out")
    cfg = load_train_config(args.config, args.seed)
    prepared = load_corpus_dir(args.corpus)
    pairs = []
    for lineno, line in enumerate(load_lines(args.parallel), 1):
        src, sep, tgt = line.partition("\t")
        if not sep:
            raise FormatError(f"{args.parallel}:{lineno}: expected source<TAB>target")
        pairs.append((
            prepared.vocab_src.encode_all(src.split()),
            prepared.vocab_tgt.encode_all(tgt.split()),
        ))
    if args.subsample:
        pairs = subsample_pairs(pairs, args.subsample, cfg.seed)
    result = train_supervised(cfg, prepared, pairs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prefix = out / "checkpoint"
    save_model(prefix, result, prepared)
    write_losslog(out / "losslog.csv", result.log_rows)
    from .plotting import render_loss_curves

    render_loss_curves(result.log_rows, out / "loss_curves.png")
    _write_manifest(
        args.out, "baseline-supervised", cfg.seed, _config_dict(cfg),
        _corpus_input_files(args.corpus) + [Path(args.parallel)],
        [prefix.with_suffix(".manifest"), prefix.with_suffix(".blob"),
         out / "losslog.csv", out / "loss_curves.png"],
    )
    print(f"supervised baseline trained on {len(pairs)} pairs; "
          f"best validation loss {result.best_val:.6f}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(args.configs, args.seed if args.seed is not None else 0)
    failed = False
    for res in sorted(results, key=lambda r: r.name):
        status = "ok" if res.passed else "FAIL"
        print(f"{status:4s} {res.name:28s} max relative error {res.max_error:.3e}"
              f" (tolerance {TOLERANCE:.0e})")
        failed = failed or not res.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="key=value config file")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--out", type=str, default=None, help="output directory")
    common.add_argument("--precision", type=int, choices=(32, 64), default=32)

    parser = argparse.ArgumentParser(prog="pivotmt", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common],
                       help="tokenize and split real description/feature files")
    p.add_argument("--src-text", required=True)
    p.add_argument("--tgt-text", required=True)
    p.add_argument("--features", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth", parents=[common],
                       help="generate the synthetic grounded-language corpus")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a pivot translation model")
    p.add_argument("--corpus", required=True, help="prepared corpus directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", parents=[common],
                       help="translate a source file with a trained checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint path prefix")
    p.add_argument("--corpus", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--beam", type=int, default=1)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("retrieve", parents=[common],
                       help="nearest-neighbor translation and retrieval baselines")
    p.add_argument("--method", required=True,
                   choices=("image", "description", "tfidf", "random"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("evaluate", parents=[common],
                       help="corpus BLEU and mean BLEU+1 of a hypothesis file")
    p.add_argument("--hypotheses", required=True)
    p.add_argument("--references", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline-supervised", parents=[common],
                       help="sequence-to-sequence baseline on parallel data")
    p.add_argument("--corpus", required=True)
    p.add_argument("--parallel", required=True, help="TSV of source<TAB>target token lines")
    p.add_argument("--subsample", type=int, default=0)
    p.set_defaults(func=cmd_baseline_supervised)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="finite-difference check of all ops and losses")
    p.add_argument("--configs", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    ad.set_precision(args.precision)
    try:
        return args.func(args)
    except (ConfigError, FormatError, UnsupportedModeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except CompatibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return COMPAT_EXIT
    except (PivotMtError, OSError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
