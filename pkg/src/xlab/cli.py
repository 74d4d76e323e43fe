"""Configuration-driven command line for corpus transforms, training, probes,
sweeps, and reports.

Every run takes a JSON config (see README for the schema), writes its
artifacts into a fresh directory under the runs root (--out or $XLAB_RUNS),
and appends one record to the ledger.  The config hash is a digest of the
canonicalized JSON, so formatting never changes identity but any semantic
edit does.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import subprocess
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from . import numcore as nc
from .corpuslab import (CharBijection, Corpus, PermutationSpec, WhitespaceHandle,
                        collect_unigram_table, load_corpus, make_fake_language,
                        permute_corpus, save_corpus, synthesize_frequency_corpus)
from .encoder import EncoderConfig, build
from .pretrain import ExampleStream, PretrainConfig, load_checkpoint, model_from_checkpoint, train
from .probes import (EntailmentExample, FinetuneConfig, TaggerConfig, eval_entailment,
                     finetune_entailment, intrinsic_retrieval, load_classifier,
                     load_conll, load_entailment_tsv, predict_entailment, save_classifier,
                     save_conll, save_entailment_tsv, train_tagger, TaggedSentence,
                     ENTAILMENT_LABELS)
from .reports import TABLE_NAMES, load_ledger, report as build_report, write_record
from .synthdata import SynthLanguage, make_corpus, make_entailment, make_tagged_sentences
from .tokenizers import load_vocab, save_vocab, train_tokenizer

RUN_SUBCOMMANDS = ("fakeify", "permute", "freqgen", "tok-train", "pretrain",
                   "finetune", "probe-ner", "probe-retrieval", "eval-xnli", "gen-corpus")
TOKENIZER_MODES = ("char", "wordpiece", "word")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})")
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _get(config: dict, dotted: str, default=None):
    node = config
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _require(config: dict, dotted: str):
    sentinel = object()
    value = _get(config, dotted, sentinel)
    if value is sentinel or value is None:
        raise ConfigError(f"config is missing required field {dotted!r}")
    return value


def _require_file(config: dict, dotted: str) -> Path:
    path = Path(_require(config, dotted))
    if not path.exists():
        raise ConfigError(f"config field {dotted!r} references missing file {path}")
    return path


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def version_stamp() -> str:
    stamp = f"xlab {__version__}"
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5)
        if rev.returncode == 0:
            stamp += f" git {rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return stamp


def _bijection(config: dict) -> CharBijection:
    ab = config.get("ablation") or {}
    return CharBijection(
        shift=int(ab.get("shift", 0xE000)),
        source_lo=int(ab.get("source_lo", 0x0020)),
        source_hi=int(ab.get("source_hi", 0x1FFD)),
        placeholder=int(ab.get("placeholder", 0x0001)),
    )


def _tokenizer(config: dict):
    mode = _require(config, "tokenizer.mode")
    if mode not in TOKENIZER_MODES:
        raise ConfigError(f"tokenizer.mode must be one of {TOKENIZER_MODES}, got {mode!r}")
    path = _require_file(config, "tokenizer.vocab_path")
    return load_vocab(path, mode)


def _corpora(config: dict) -> Dict[str, Corpus]:
    languages = _require(config, "corpus.languages")
    if not isinstance(languages, dict) or not languages:
        raise ConfigError("corpus.languages must be a non-empty object of name -> path")
    out = {}
    for lang in sorted(languages):
        path = Path(languages[lang])
        if not path.exists():
            raise ConfigError(f"corpus.languages[{lang!r}] references missing file {path}")
        out[lang] = load_corpus(path)
    return out


def _master_seed(config: dict) -> int:
    return int(config.get("seed", 0))


# ---------------------------------------------------------------------------
# subcommand implementations: each returns (metrics, artifacts, hashes)
# ---------------------------------------------------------------------------

def cmd_fakeify(config: dict, run_dir: Path):
    src = _require_file(config, "corpus.input")
    corpus = load_corpus(src)
    fake = make_fake_language(corpus, _bijection(config))
    out = run_dir / "fake.txt"
    save_corpus(fake, out)
    return ({"n_sentences": corpus.n_sentences},
            {"output": "fake.txt"},
            {"input": _sha256_file(src), "output": _sha256_file(out)})


def cmd_permute(config: dict, run_dir: Path):
    src = _require_file(config, "corpus.input")
    p = _require(config, "ablation.permute_p")
    corpus = load_corpus(src)
    if _get(config, "tokenizer.vocab_path"):
        handle = _tokenizer(config)
    else:
        handle = WhitespaceHandle()
    spec = PermutationSpec(float(p), nc.derive_seed(_master_seed(config), "permute"))
    permuted = permute_corpus(corpus, handle, spec)
    out = run_dir / "permuted.txt"
    save_corpus(permuted, out)
    return ({"n_sentences": corpus.n_sentences, "permute_p": float(p)},
            {"output": "permuted.txt"},
            {"input": _sha256_file(src), "output": _sha256_file(out)})


def cmd_freqgen(config: dict, run_dir: Path):
    src = _require_file(config, "corpus.input")
    corpus = load_corpus(src)
    table = collect_unigram_table(corpus)
    n = int(_get(config, "ablation.freq_sentences") or corpus.n_sentences)
    synth = synthesize_frequency_corpus(table, n, nc.derive_seed(_master_seed(config), "freqgen"))
    out = run_dir / "frequency.txt"
    save_corpus(synth, out)
    return ({"n_sentences": n, "source_total_words": table.total},
            {"output": "frequency.txt"},
            {"input": _sha256_file(src), "output": _sha256_file(out)})


def cmd_tok_train(config: dict, run_dir: Path):
    mode = _require(config, "tokenizer.mode")
    if mode not in TOKENIZER_MODES:
        raise ConfigError(f"tokenizer.mode must be one of {TOKENIZER_MODES}, got {mode!r}")
    corpora = _corpora(config)
    languages = sorted(corpora)
    union = Corpus([doc for lang in languages for doc in corpora[lang].documents])
    size = int(_get(config, "tokenizer.size", 0))
    if mode in ("wordpiece", "word") and size < 1:
        raise ConfigError(f"tokenizer.size must be a positive count for mode {mode!r}")
    tokenizer = train_tokenizer(mode, union, size, languages=languages)
    out = run_dir / "vocab.tsv"
    save_vocab(tokenizer, out)
    return ({"vocab_size": len(tokenizer.vocab)},
            {"vocab": "vocab.tsv"},
            {"vocab": _sha256_file(out)})


def _encoder_config(config: dict, vocab_size: int) -> EncoderConfig:
    enc = dict(config.get("encoder") or {})
    enc.setdefault("depth", 2)
    enc.setdefault("heads", 4)
    enc.setdefault("hidden", 96)
    enc.setdefault("max_positions", 128)
    enc["vocab_size"] = vocab_size
    enc["language_id_mode"] = bool(_get(config, "pretrain.lang_id", False))
    try:
        return EncoderConfig(**enc)
    except TypeError as e:
        raise ConfigError(f"encoder section has unknown fields: {e}")


def _pretrain_config(config: dict) -> PretrainConfig:
    pt = dict(config.get("pretrain") or {})
    pt.setdefault("steps", 100)
    known = {f for f in PretrainConfig.__dataclass_fields__}
    unknown = set(pt) - known
    if unknown:
        raise ConfigError(f"pretrain section has unknown fields: {sorted(unknown)}")
    if "mask_split" in pt:
        pt["mask_split"] = tuple(pt["mask_split"])
    pt["seed"] = nc.derive_seed(_master_seed(config), "pretrain")
    return PretrainConfig(**pt)


def cmd_pretrain(config: dict, run_dir: Path):
    tokenizer = _tokenizer(config)
    corpora = _corpora(config)
    pt = _pretrain_config(config)
    enc = _encoder_config(config, len(tokenizer.vocab))
    if pt.window > enc.max_positions:
        raise ConfigError(f"pretrain.window {pt.window} exceeds encoder.max_positions {enc.max_positions}")
    if pt.lang_id:
        for lang in corpora:
            tokenizer.vocab.sep_id_for(lang)   # raises when the vocab lacks the separator
    model = build(enc, seed=nc.derive_seed(_master_seed(config), "build"))
    stream = ExampleStream(corpora, tokenizer, pt)
    result = train(model, stream, pt, out_dir=run_dir,
                   log_every=int(_get(config, "pretrain.steps", 100)) // 5 or 1)
    metrics = {"mlm_loss_final": result.final_mlm_loss,
               "mlm_loss_initial": result.curve[0]["mlm_loss"] if result.curve else None}
    if pt.nsp and result.curve:
        metrics["nsp_loss_final"] = result.curve[-1].get("nsp_loss")
    # resolved encoder config rides along for the architecture report
    config.setdefault("encoder", {}).update(
        {"depth": enc.depth, "heads": enc.heads, "hidden": enc.hidden,
         "vocab_size": enc.vocab_size, "max_positions": enc.max_positions,
         "intermediate": enc.intermediate})
    return (metrics,
            {"checkpoint": "final.ckpt", "curve": "curve.jsonl"},
            {"checkpoint": _sha256_file(run_dir / "final.ckpt")})


def cmd_finetune(config: dict, run_dir: Path):
    ckpt_path = _require_file(config, "checkpoint")
    tokenizer = _tokenizer(config)
    train_path = _require_file(config, "probes.xnli.train")
    language = _require(config, "probes.xnli.language")
    xnli = config.get("probes", {}).get("xnli", {})
    ft = FinetuneConfig(
        epochs=int(xnli.get("epochs", 3)),
        batch_size=int(xnli.get("batch_size", 16)),
        lr=float(xnli.get("lr", 3e-4)),
        seed=nc.derive_seed(_master_seed(config), "finetune"),
        window=int(xnli.get("window", 64)),
    )
    ckpt = load_checkpoint(ckpt_path)
    model, _ = model_from_checkpoint(ckpt)
    lang_id = bool(ckpt.meta.get("lang_id", False)) or model.config.language_id_mode
    examples = load_entailment_tsv(train_path, language)
    clf = finetune_entailment(model, tokenizer, examples, ft, lang_id=lang_id)
    out = run_dir / "classifier.ckpt"
    save_classifier(out, clf)
    pred = predict_entailment(clf, tokenizer, [(e.premise, e.hypothesis) for e in examples],
                              language, language)
    gold = np.array([ENTAILMENT_LABELS.index(e.label) for e in examples])
    return ({"train_accuracy": float(np.mean(pred == gold)), "n_train": len(examples)},
            {"classifier": "classifier.ckpt"},
            {"classifier": _sha256_file(out)})


def cmd_eval_xnli(config: dict, run_dir: Path):
    clf_path = _require_file(config, "classifier")
    tokenizer = _tokenizer(config)
    test_spec = _require(config, "probes.xnli.test")
    if not isinstance(test_spec, dict) or not test_spec:
        raise ConfigError("probes.xnli.test must map language -> tsv path")
    test_sets = {}
    for lang in sorted(test_spec):
        path = Path(test_spec[lang])
        if not path.exists():
            raise ConfigError(f"probes.xnli.test[{lang!r}] references missing file {path}")
        test_sets[lang] = load_entailment_tsv(path, lang)
    clf = load_classifier(clf_path)
    combos = _get(config, "probes.xnli.combos")
    if combos is None:
        combos = [[lang, lang] for lang in sorted(test_sets)]
    metrics: Dict[str, float] = {}
    artifacts: Dict[str, str] = {}
    for premise_lang, hyp_lang in combos:
        dump = run_dir / f"predictions-{premise_lang}-{hyp_lang}.tsv"
        acc = eval_entailment(clf, tokenizer, test_sets, premise_lang, hyp_lang, dump_path=dump)
        metrics[f"xnli_acc_{premise_lang}_{hyp_lang}"] = acc
        artifacts[f"dump_{premise_lang}_{hyp_lang}"] = dump.name
    source = _get(config, "probes.xnli.source")
    target = _get(config, "probes.xnli.target")
    if source and target:
        src_acc = metrics.get(f"xnli_acc_{source}_{source}")
        tgt_acc = metrics.get(f"xnli_acc_{target}_{target}")
        if src_acc is None or tgt_acc is None:
            raise ConfigError("source/target gap requires same-language combos for both languages")
        metrics["xnli_acc_source"] = src_acc
        metrics["xnli_acc_target"] = tgt_acc
        metrics["xnli_acc"] = tgt_acc
        metrics["delta"] = src_acc - tgt_acc
    elif len(combos) == 1:
        metrics["xnli_acc"] = metrics[f"xnli_acc_{combos[0][0]}_{combos[0][1]}"]
    return metrics, artifacts, {}


def cmd_probe_ner(config: dict, run_dir: Path):
    ckpt_path = _require_file(config, "checkpoint")
    tokenizer = _tokenizer(config)
    train_path = _require_file(config, "probes.ner.train")
    test_path = _require_file(config, "probes.ner.test")
    ner = config.get("probes", {}).get("ner", {})
    cfg = TaggerConfig(
        epochs=int(ner.get("epochs", 30)),
        batch_size=int(ner.get("batch_size", 8)),
        lr=float(ner.get("lr", 1e-3)),
        n_seeds=int(ner.get("n_seeds", 5)),
        window=int(ner.get("window", 64)),
        seed=nc.derive_seed(_master_seed(config), "ner"),
    )
    model, _ = model_from_checkpoint(load_checkpoint(ckpt_path))
    result = train_tagger(model, tokenizer, load_conll(train_path), load_conll(test_path), cfg)
    return ({"ner_f1_mean": result.f1_mean, "ner_f1_std": result.f1_std,
             "ner_f1_per_seed": result.f1_per_seed},
            {}, {})


def cmd_probe_retrieval(config: dict, run_dir: Path):
    ckpt_path = _require_file(config, "checkpoint")
    tokenizer = _tokenizer(config)
    path_a = _require_file(config, "probes.retrieval.a")
    path_b = _require_file(config, "probes.retrieval.b")
    spec = config.get("probes", {}).get("retrieval", {})
    sents_a = list(load_corpus(path_a).sentences())
    sents_b = list(load_corpus(path_b).sentences())
    if len(sents_a) != len(sents_b):
        raise ConfigError(f"retrieval corpora are not aligned: {len(sents_a)} vs {len(sents_b)} sentences")
    limit = int(spec.get("limit", 0))
    if limit:
        sents_a, sents_b = sents_a[:limit], sents_b[:limit]
    ckpt = load_checkpoint(ckpt_path)
    model, _ = model_from_checkpoint(ckpt)
    lang_id = bool(ckpt.meta.get("lang_id", False))
    report = intrinsic_retrieval(
        model, tokenizer, list(zip(sents_a, sents_b)),
        window=int(spec.get("window", ckpt.meta.get("window", 64))),
        k=int(spec.get("k", 3)),
        language_a=spec.get("language_a") if lang_id else None,
        language_b=spec.get("language_b") if lang_id else None)
    return ({"top1": report.top1, "top3": report.top3, "n_pairs": report.n_pairs}, {}, {})


def cmd_gen_corpus(config: dict, run_dir: Path):
    gen = config.get("gen") or {}
    seed = _master_seed(config)
    language = SynthLanguage.generate(nc.derive_seed(seed, "language"))
    bij = _bijection(config)
    n_docs = int(gen.get("documents", 400))
    corpus = make_corpus(language, n_docs, seed=nc.derive_seed(seed, "corpus"))
    fake = make_fake_language(corpus, bij)
    heldout = make_corpus(language, int(gen.get("heldout_documents", 60)),
                          seed=nc.derive_seed(seed, "heldout"))
    heldout_fake = make_fake_language(heldout, bij)
    save_corpus(corpus, run_dir / "en.txt")
    save_corpus(fake, run_dir / "enfake.txt")
    save_corpus(heldout, run_dir / "heldout-en.txt")
    save_corpus(heldout_fake, run_dir / "heldout-enfake.txt")

    def entailment_files(n, stage, stem):
        triples = make_entailment(language, n, seed=nc.derive_seed(seed, stage))
        en = [EntailmentExample(t.premise, t.hypothesis, t.label, "en", "en") for t in triples]
        fake_ex = [EntailmentExample(bij.map_text(t.premise), bij.map_text(t.hypothesis),
                                     t.label, "enfake", "enfake") for t in triples]
        save_entailment_tsv(run_dir / f"{stem}-en.tsv", en)
        save_entailment_tsv(run_dir / f"{stem}-enfake.tsv", fake_ex)

    entailment_files(int(gen.get("entailment_train", 900)), "xnli-train", "xnli-train")
    entailment_files(int(gen.get("entailment_test", 300)), "xnli-test", "xnli-test")

    def ner_files(n, stage, stem):
        data = make_tagged_sentences(language, n, seed=nc.derive_seed(seed, stage))
        sents = [TaggedSentence(list(t), list(g)) for t, g in data]
        save_conll(run_dir / f"{stem}-en.conll", sents)
        fake_sents = [TaggedSentence([bij.map_text(w) for w in s.tokens], list(s.tags))
                      for s in sents]
        save_conll(run_dir / f"{stem}-enfake.conll", fake_sents)

    ner_files(int(gen.get("ner_train", 120)), "ner-train", "ner-train")
    ner_files(int(gen.get("ner_test", 60)), "ner-test", "ner-test")
    files = sorted(p.name for p in run_dir.iterdir() if p.suffix in (".txt", ".tsv", ".conll"))
    return ({"n_documents": n_docs, "n_sentences": corpus.n_sentences},
            {name: name for name in files}, {})


COMMANDS = {
    "fakeify": cmd_fakeify,
    "permute": cmd_permute,
    "freqgen": cmd_freqgen,
    "tok-train": cmd_tok_train,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "probe-ner": cmd_probe_ner,
    "probe-retrieval": cmd_probe_retrieval,
    "eval-xnli": cmd_eval_xnli,
    "gen-corpus": cmd_gen_corpus,
}


# ---------------------------------------------------------------------------
# run orchestration
# ---------------------------------------------------------------------------

def _new_run_id(runs_root: Path, subcommand: str, digest: str) -> str:
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    base = f"{stamp}-{subcommand}-{digest[:8]}"
    run_id = base
    n = 1
    while (runs_root / "runs" / run_id).exists():
        n += 1
        run_id = f"{base}-{n}"
    return run_id


def execute(subcommand: str, config: dict, runs_root, seed_override: Optional[int] = None) -> dict:
    """Run one subcommand; always append a record unless config validation fails."""
    if subcommand not in COMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    config = copy.deepcopy(config)
    if seed_override is not None:
        config["seed"] = seed_override
    digest = config_hash(config)
    runs_root = Path(runs_root)
    run_id = _new_run_id(runs_root, subcommand, digest)
    run_dir = runs_root / "runs" / run_id
    run_dir.mkdir(parents=True)
    record = {
        "run_id": run_id,
        "subcommand": subcommand,
        "config_hash": digest,
        "seed": _master_seed(config),
        "version": version_stamp(),
        "config": config,
        "status": "ok",
        "metrics": {},
        "artifacts": {},
        "hashes": {},
        "wall_time_s": 0.0,
    }
    t0 = time.time()
    try:
        metrics, artifacts, hashes = COMMANDS[subcommand](config, run_dir)
        record["metrics"] = metrics
        record["artifacts"] = artifacts
        record["hashes"] = hashes
    except Exception as e:  # noqa: BLE001 - the record carries the failure
        record["status"] = "failed"
        record["error"] = f"{type(e).__name__}: {e}"
        (run_dir / "FAILED").write_text(record["error"] + "\n", encoding="utf-8")
    record["wall_time_s"] = round(time.time() - t0, 3)
    write_record(runs_root, run_id, record)
    return record


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _set_dotted(config: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def _grid_cells(grid: dict) -> List[dict]:
    base = grid.get("base")
    if base is None and grid.get("base_path"):
        base = load_config(grid["base_path"])
    if not isinstance(base, dict):
        raise ConfigError("grid needs a 'base' config object or 'base_path'")
    axes = grid.get("axes") or {}
    cells = [copy.deepcopy(base)]
    for key in sorted(axes):
        values = axes[key]
        if not isinstance(values, list):
            raise ConfigError(f"grid axis {key!r} must be a list")
        cells = [
            _with_value(cell, key, value)
            for cell in cells
            for value in values
        ]
    return cells


def _with_value(config: dict, dotted: str, value) -> dict:
    out = copy.deepcopy(config)
    _set_dotted(out, dotted, value)
    return out


def sweep(grid: dict, runs_root, seed_override: Optional[int] = None) -> List[dict]:
    """Cross product of the grid axes; completed cells are skipped by hash."""
    subcommand = grid.get("subcommand")
    if subcommand not in COMMANDS:
        raise ConfigError(f"grid.subcommand must be one of {sorted(COMMANDS)}")
    cells = _grid_cells(grid)
    done = {r["config_hash"] for r in load_ledger(runs_root) if r.get("status") == "ok"}
    records: List[dict] = []
    for i, cell in enumerate(cells):
        if seed_override is not None:
            cell["seed"] = seed_override
        digest = config_hash(cell)
        if digest in done:
            print(f"cell {i + 1}/{len(cells)}: skipped (hash {digest[:8]} complete)", flush=True)
            continue
        print(f"cell {i + 1}/{len(cells)}: running {subcommand} (hash {digest[:8]})", flush=True)
        record = execute(subcommand, cell, runs_root)
        records.append(record)
        if record["status"] == "ok":
            done.add(digest)
        else:
            print(f"cell {i + 1}/{len(cells)} FAILED: {record.get('error')}", file=sys.stderr, flush=True)
    return records


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _runs_root(args) -> Path:
    import os

    root = args.out or os.environ.get("XLAB_RUNS") or "xlab-runs"
    return Path(root)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="xlab",
                                     description="bilingual masked-LM pretraining lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUN_SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="runs root (default $XLAB_RUNS or ./xlab-runs)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p = sub.add_parser("sweep", help="run a grid of configs")
    p.add_argument("--grid", required=True, help="JSON grid spec")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p = sub.add_parser("report", help="emit a table (TSV + figure) from the ledger")
    p.add_argument("--table", required=True, choices=TABLE_NAMES)
    p.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    runs_root = _runs_root(args)

    try:
        if args.command == "report":
            tsv, png, warnings = build_report(runs_root, args.table)
            for w in warnings:
                print(f"warning: {w}", file=sys.stderr)
            print(tsv)
            if png is not None:
                print(png)
            return 0
        if args.command == "sweep":
            grid = load_config(args.grid)
            records = sweep(grid, runs_root, seed_override=args.seed)
            failed = [r for r in records if r["status"] != "ok"]
            print(f"sweep finished: {len(records)} ran, {len(failed)} failed")
            return 1 if failed else 0
        config = load_config(args.config)
        record = execute(args.command, config, runs_root, seed_override=args.seed)
        out = {k: record[k] for k in ("run_id", "status", "config_hash", "metrics")}
        print(json.dumps(out, indent=1, sort_keys=True))
        if record["status"] != "ok":
            print(f"error: {record.get('error')}", file=sys.stderr)
            return 1
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
