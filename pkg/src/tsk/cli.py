"""Batch command line for transfer string kernel experiments.

Subcommands: run-tsk, run-sk, grid, synth, conserve, inspect.

Experiments are described by an INI-style config file; command-line flags
override the ``[run]`` section. Output layout::

    OUT/kernels/   gram.txt, kappa.txt
    OUT/weights/   beta.txt
    OUT/models/    model.txt
    OUT/reports/   target_scores.tsv, eval.tsv, eval.json, grid.tsv, grid.json
    OUT/manifest.json
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import evaluation, kmm, pipeline, seqdata, stringkernel, synthetic, wsvm

log = logging.getLogger("tsk")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception, code: int = EXIT_DATA):
        super().__init__(f"{stage}: {cause}")
        self.stage, self.cause, self.code = stage, cause, code


@dataclass
class ExperimentConfig:
    alphabet: str = "dna"
    source: tuple[str, str] | None = None
    target: str | None = None
    validation: tuple[str, str] | None = None
    test: tuple[str, str] | None = None
    k: tuple[int, ...] = (8,)
    m: tuple[int, ...] = (1,)
    normalize: bool = True
    C: tuple[float, ...] = (1.0,)
    svm_tol: float = 1e-3
    max_passes: int = 10_000
    use_kmm: bool = True
    B: float = 1000.0
    epsilon: float | None = None
    kmm_max_iter: int = 10_000
    kmm_tol: float = 1e-9
    out: str | None = None
    seed: int = 0
    jobs: int = 1
    synthetic: dict = field(default_factory=dict)

    @property
    def grid(self) -> pipeline.Grid:
        return pipeline.Grid(self.k, self.m, self.C)

    @property
    def kmm_config(self) -> kmm.KmmConfig | None:
        if not self.use_kmm:
            return None
        return kmm.KmmConfig(self.B, self.epsilon, self.kmm_max_iter, None, self.kmm_tol)

    def svm_config(self, C: float) -> wsvm.SvmTrainConfig:
        return wsvm.SvmTrainConfig(C, self.svm_tol, self.max_passes)

    def check_paths(self):
        paths = [p for pair in (self.source, self.validation, self.test) if pair for p in pair]
        if self.target:
            paths.append(self.target)
        missing = [p for p in paths if not os.path.exists(p)]
        if missing:
            raise FileNotFoundError(f"missing input file(s): {', '.join(missing)}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def load_config(path: str | None) -> ExperimentConfig:
    """Read an experiment config; relative paths resolve against its directory."""
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path!r}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(base, p))

    def pair(section, stem):
        fa, lab = section.get(f"{stem}_fasta"), section.get(f"{stem}_labels")
        if fa is None and lab is None:
            return None
        if fa is None or lab is None:
            raise ConfigError(f"[data] needs both {stem}_fasta and {stem}_labels")
        return resolve(fa), resolve(lab)

    try:
        if parser.has_section("data"):
            d = parser["data"]
            cfg.alphabet = d.get("alphabet", cfg.alphabet)
            cfg.source = pair(d, "source")
            cfg.validation = pair(d, "validation")
            cfg.test = pair(d, "test")
            if d.get("target_fasta"):
                cfg.target = resolve(d["target_fasta"])
        if parser.has_section("kernel"):
            s = parser["kernel"]
            cfg.k = _ints(s.get("k", "8"))
            cfg.m = _ints(s.get("m", "1"))
            cfg.normalize = s.getboolean("normalize", True)
        if parser.has_section("svm"):
            s = parser["svm"]
            cfg.C = _floats(s.get("C", "1"))
            cfg.svm_tol = s.getfloat("tol", cfg.svm_tol)
            cfg.max_passes = s.getint("max_passes", cfg.max_passes)
        if parser.has_section("kmm"):
            s = parser["kmm"]
            cfg.use_kmm = s.getboolean("enabled", True)
            cfg.B = s.getfloat("B", cfg.B)
            eps = s.get("epsilon", "").strip()
            cfg.epsilon = float(eps) if eps else None
            cfg.kmm_max_iter = s.getint("max_iter", cfg.kmm_max_iter)
            cfg.kmm_tol = s.getfloat("tol", cfg.kmm_tol)
        if parser.has_section("run"):
            s = parser["run"]
            if s.get("out"):
                cfg.out = resolve(s["out"])
            cfg.seed = s.getint("seed", cfg.seed)
            cfg.jobs = s.getint("jobs", cfg.jobs)
        if parser.has_section("synthetic"):
            cfg.synthetic = dict(parser["synthetic"])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not cfg.k or not cfg.m or not cfg.C:
        raise ConfigError("kernel and C grids must be non-empty")
    return cfg


def synthetic_profile(cfg: ExperimentConfig) -> synthetic.ShiftProfile:
    raw = dict(cfg.synthetic)
    kwargs = {}
    for f in synthetic.ShiftProfile.__dataclass_fields__.values():
        if f.name not in raw:
            continue
        val = raw.pop(f.name)
        if f.name in ("source_mix", "target_mix"):
            kwargs[f.name] = _floats(val)
        elif f.name in ("length", "n_train", "n_target_pos", "motif_mismatches"):
            kwargs[f.name] = int(val)
        elif f.name in ("gc_rich", "at_rich"):
            kwargs[f.name] = float(val)
        else:
            kwargs[f.name] = val.strip()
    if raw:
        raise ConfigError(f"unknown [synthetic] keys: {', '.join(sorted(raw))}")
    return synthetic.ShiftProfile(**kwargs)


RUN_DIRS = ("kernels", "weights", "models", "reports")


def prepare_out(out: str | None, force: bool, subdirs=RUN_DIRS) -> str:
    if not out:
        raise ConfigError("no output directory: pass --out or set [run] out")
    if os.path.isdir(out) and os.listdir(out) and not force:
        raise ConfigError(f"output directory {out!r} is not empty (use --force to overwrite)")
    os.makedirs(out, exist_ok=True)
    for sub in subdirs:
        os.makedirs(os.path.join(out, sub), exist_ok=True)
    return out


def _write(path: str, text: str):
    with open(path, "w") as fh:
        fh.write(text)


def _stage(name, fn, *args, code=EXIT_DATA, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (StageError, ConfigError):
        raise
    except Exception as exc:
        if isinstance(exc, kmm.KmmSolverError):
            code = EXIT_SOLVER
        raise StageError(name, exc, code) from exc


def _load_inputs(cfg: ExperimentConfig, need_validation: bool):
    alphabet = seqdata.get_alphabet(cfg.alphabet)
    if cfg.source is None:
        raise ConfigError("[data] source_fasta/source_labels are required")
    cfg.check_paths()
    source = seqdata.load_labeled_dataset(*cfg.source, alphabet, "source")
    validation = test = None
    if cfg.validation:
        validation = seqdata.load_labeled_dataset(*cfg.validation, alphabet, "target")
    elif need_validation:
        raise ConfigError("a validation set is required")
    if cfg.test:
        test = seqdata.load_labeled_dataset(*cfg.test, alphabet, "target")
    target = seqdata.read_fasta(cfg.target, alphabet) if cfg.target else None
    lengths = {len(s) for s in source.sequences}
    if len(lengths) > 1:
        log.warning("source sequences have heterogeneous lengths (%d..%d)",
                    min(lengths), max(lengths))
    return source, target, validation, test


def run_pipeline(cfg: ExperimentConfig, out: str, use_kmm: bool) -> int:
    """Algorithm steps: kernel, KMM weights, weighted SVM, target scoring."""
    cfg = replace(cfg, use_kmm=use_kmm)
    source, target, validation, test = _stage("ingest", _load_inputs, cfg, False)
    if target is not None:
        kmm_target, kmm_mode = target, "unlabeled-file"
    elif test is not None:
        kmm_target, kmm_mode = list(test.sequences), "test-file"
    elif validation is not None:
        kmm_target, kmm_mode = list(validation.sequences), "validation-file"
    else:
        raise ConfigError("need target_fasta, test or validation sequences to predict on")
    if not use_kmm:
        kmm_mode = "disabled"

    manifest = {
        # the method, not the subcommand: run-tsk with KMM disabled is run-sk
        "method": "TSK" if use_kmm else "SK",
        "alphabet": cfg.alphabet,
        "kmm_target": kmm_mode,
        "seed": cfg.seed,
        "inputs": {"source": cfg.source, "target": cfg.target,
                   "validation": cfg.validation, "test": cfg.test},
    }

    grid = cfg.grid
    n_cells = len(grid.k) * len(grid.m) * len(grid.C)
    if n_cells > 1:
        if validation is None:
            raise ConfigError("a grid with several cells needs a validation set")
        record = _stage("grid", pipeline.grid_search, source, validation, kmm_target, grid,
                        use_kmm, cfg.kmm_config or kmm.KmmConfig(),
                        cfg.svm_config(1.0), cfg.normalize, cfg.jobs)
        _write(os.path.join(out, "reports", "grid.tsv"), record.to_tsv())
        _write(os.path.join(out, "reports", "grid.json"),
               json.dumps(record.summary(), indent=2, sort_keys=True) + "\n")
        k, m, C = record.selected.k, record.selected.m, record.selected.C
    else:
        k, m, C = grid.k[0], grid.m[0], grid.C[0]
    params = _stage("kernel", stringkernel.KernelParams, k, m, cfg.normalize)
    manifest["selected"] = {"k": k, "m": m, "C": C}

    predict_on = test.sequences if test is not None else kmm_target
    cache = pipeline.KernelCache(source.sequences, kmm_target, predict_on,
                                 cfg.normalize, cfg.jobs)
    gram = _stage("kernel", cache.gram, k, m)
    stringkernel.save_gram(os.path.join(out, "kernels", "gram.txt"), gram)
    if use_kmm:
        kappa = _stage("kernel", cache.kappa, k, m)
        stringkernel.save_kappa(os.path.join(out, "kernels", "kappa.txt"), kappa, params)
        beta = _stage("kmm", kmm.solve_beta, gram, kappa, cfg.kmm_config)
    else:
        beta = kmm.BetaWeights.ones(len(source))
    kmm.save_beta(os.path.join(out, "weights", "beta.txt"), beta)
    manifest["kmm"] = {"converged": beta.converged, "iterations": beta.iterations,
                       "stop": beta.stop_reason}

    model = _stage("svm", wsvm.train_weighted_svm, gram, source.labels, beta,
                   cfg.svm_config(C), source.sequences)
    wsvm.save_model(os.path.join(out, "models", "model.txt"), model)
    manifest["svm"] = {"converged": model.converged, "iterations": model.iterations,
                       "kkt_violation": round(model.kkt_violation, 12),
                       "n_support": int(model.support.size)}

    K_pred = _stage("predict", cache.cross, "evaluate", k, m)
    scores = wsvm.decision_scores_from_kernel(model, K_pred)
    ids = [s.id for s in predict_on]
    if test is not None:
        report = _stage("evaluate", evaluation.EvalReport.from_scores, ids, scores, test.labels)
        _write(os.path.join(out, "reports", "target_scores.tsv"), report.to_tsv())
        _write(os.path.join(out, "reports", "eval.tsv"), report.to_tsv())
        _write(os.path.join(out, "reports", "eval.json"), report.to_json())
        manifest["test_auc"] = round(report.auc, 6)
        print(f"test AUC = {report.auc:.6f} (k={k}, m={m}, C={C:g}, "
              f"{'TSK' if use_kmm else 'SK'})")
    else:
        lines = ["id\tscore"] + [f"{i}\t{s:.6f}" for i, s in zip(ids, scores)]
        _write(os.path.join(out, "reports", "target_scores.tsv"), "\n".join(lines) + "\n")
        print(f"scored {len(ids)} target sequences (no test labels)")
    _write(os.path.join(out, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    if use_kmm and not beta.converged:
        raise StageError("kmm", RuntimeError(
            f"no convergence after {beta.iterations} iterations"), EXIT_SOLVER)
    if not model.converged:
        raise StageError("svm", RuntimeError(
            f"no convergence; worst KKT violation {model.kkt_violation:.3g}"), EXIT_SOLVER)
    return EXIT_OK


def cmd_run(args, use_kmm: bool) -> int:
    cfg = _config(args)
    out = prepare_out(cfg.out, args.force)
    return run_pipeline(cfg, out, use_kmm and cfg.use_kmm)


def cmd_grid(args) -> int:
    cfg = _config(args)
    out = prepare_out(cfg.out, args.force)
    source, target, validation, test = _stage("ingest", _load_inputs, cfg, True)
    kmm_target = target if target is not None else list(validation.sequences)
    record = _stage("grid", pipeline.grid_search, source, validation, kmm_target, cfg.grid,
                    cfg.use_kmm, cfg.kmm_config or kmm.KmmConfig(), cfg.svm_config(1.0),
                    cfg.normalize, cfg.jobs)
    _write(os.path.join(out, "reports", "grid.tsv"), record.to_tsv())
    _write(os.path.join(out, "reports", "grid.json"),
           json.dumps(record.summary(), indent=2, sort_keys=True) + "\n")
    s = record.selected
    print(f"selected k={s.k} m={s.m} C={s.C:g} (validation AUC {s.auc:.6f})")
    if args.evaluate:
        if test is None:
            raise ConfigError("--evaluate needs a test set")
        final = replace(cfg, k=(s.k,), m=(s.m,), C=(s.C,))
        return run_pipeline(final, out, cfg.use_kmm)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    profile = _stage("synth", synthetic_profile, cfg)
    if args.ratio:
        profile = _stage("synth", replace, profile, ratio=args.ratio)
    if args.zero_shift:
        profile = profile.unshifted()
    out = prepare_out(cfg.out, args.force, subdirs=())
    paths = synthetic.write_corpus(out, profile, cfg.seed)
    for name, (fa, lab) in paths.items():
        print(f"{name}: {fa} {lab}")
    return EXIT_OK


def cmd_conserve(args) -> int:
    with open(args.scores) as fh:
        data = _stage("ingest", evaluation.parse_conservation, fh.read())
    cs = _stage("conservation", evaluation.conservation_score, data)
    print(f"CS = {cs:.6f}")
    if args.out:
        os.makedirs(os.path.join(args.out, "reports"), exist_ok=True)
        vals = data.scored
        record = {"cs": cs, "C_t": data.total, "C_n": data.non_conserved,
                  "n_positive": int((vals > 0).sum()), "n_negative": int((vals < 0).sum())}
        _write(os.path.join(args.out, "reports", "conservation.json"),
               json.dumps(record, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def describe(path: str) -> str:
    """Human-readable summary of any artifact this tool writes."""
    name = os.path.basename(path)
    with open(path) as fh:
        head = fh.readline()
    if name.endswith(".json"):
        with open(path) as fh:
            return json.dumps(json.load(fh), indent=2, sort_keys=True)
    if head.startswith("id\tscore\tlabel"):
        with open(path) as fh:
            ids, scores, labels = evaluation.read_report_tsv(fh.read())
        auc = evaluation.roc_auc(scores, labels)
        return (f"evaluation report: {len(ids)} sequences "
                f"({(labels > 0).sum()} positive, {(labels < 0).sum()} negative), AUC {auc:.6f}")
    if head.startswith("k\tm\tC\tauc"):
        with open(path) as fh:
            rows = [ln.rstrip("\n").split("\t") for ln in fh][1:]
        out = [f"grid record: {len(rows)} cells", f"{'k':>4} {'m':>3} {'C':>10} {'auc':>9}"]
        out += [f"{r[0]:>4} {r[1]:>3} {float(r[2]):>10g} {r[3]:>9} {r[4] if len(r) > 4 else ''}"
                for r in rows]
        return "\n".join(out)
    if head.startswith("id\tscore"):
        with open(path) as fh:
            n = sum(1 for _ in fh) - 1
        return f"target scores: {n} sequences"
    if head.startswith("# k="):
        model = wsvm.load_model(path)
        p = model.params
        return (f"SVM model: k={p.k} m={p.m} normalize={p.normalize} C={model.C:g} "
                f"b={model.b:.6g} support vectors={model.alphas.size} "
                f"(+{int((model.labels > 0).sum())} / -{int((model.labels < 0).sum())})")
    if head.startswith("# B="):
        beta = kmm.load_beta(path)
        v = beta.values
        return (f"KMM weights: n={v.size} B={beta.B:g} epsilon={beta.epsilon:.6g} "
                f"iterations={beta.iterations} objective={beta.objective:.6g}\n"
                f"  sum={v.sum():.6g} min={v.min():.6g} median={np.median(v):.6g} "
                f"max={v.max():.6g} zeros={(v == 0).sum()}")
    fields_ = head.split()
    if len(fields_) == 4:
        gram = stringkernel.load_gram(path)
        p = gram.params
        ev = np.linalg.eigvalsh(gram.values) if gram.n else np.zeros(1)
        return (f"Gram matrix: n={gram.n} k={p.k} m={p.m} normalized={p.normalize}\n"
                f"  eigenvalues in [{ev.min():.6g}, {ev.max():.6g}]")
    if len(fields_) == 5:
        kappa, p = stringkernel.load_kappa(path)
        v = kappa.values
        return (f"kappa vector: n_sd={kappa.n_sd} n_td={kappa.n_td} k={p.k} m={p.m}\n"
                f"  min={v.min():.6g} mean={v.mean():.6g} max={v.max():.6g}")
    raise ValueError(f"unrecognised artifact {path!r}")


def cmd_inspect(args) -> int:
    for path in args.paths:
        text = _stage("inspect", describe, path)
        print(f"== {path}\n{text}")
    return EXIT_OK


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.jobs is not None:
        cfg.jobs = args.jobs
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config file")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    common.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    common.add_argument("--jobs", type=int, help="worker threads for kernel computation")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tsk", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run-tsk", parents=[common], help="KMM-weighted string-kernel SVM")
    sub.add_parser("run-sk", parents=[common], help="unweighted string-kernel SVM baseline")
    g = sub.add_parser("grid", parents=[common], help="(k, m, C) selection on the validation set")
    g.add_argument("--evaluate", action="store_true", help="retrain at the selected cell and score the test set")
    s = sub.add_parser("synth", parents=[common], help="generate a synthetic covariate-shift corpus")
    s.add_argument("--ratio", help="target positive:negative ratio, e.g. 1:3")
    s.add_argument("--zero-shift", action="store_true", help="draw the target like the source")
    c = sub.add_parser("conserve", parents=[common], help="conservation score of a per-position score file")
    c.add_argument("scores", help="file of per-position scores; NA or '.' marks unscored positions")
    i = sub.add_parser("inspect", parents=[common], help="pretty-print artifacts")
    i.add_argument("paths", nargs="+")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "run-tsk": lambda a: cmd_run(a, True),
        "run-sk": lambda a: cmd_run(a, False),
        "grid": cmd_grid,
        "synth": cmd_synth,
        "conserve": cmd_conserve,
        "inspect": cmd_inspect,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"tsk: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"tsk: stage '{exc.stage}' failed: {exc.cause}", file=sys.stderr)
        return exc.code
    except (FileNotFoundError, seqdata.SequenceFormatError) as exc:
        print(f"tsk: stage 'ingest' failed: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
