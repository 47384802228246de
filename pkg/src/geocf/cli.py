"""Command-line pipeline: ``geocf prepare|train|evaluate|diagnose``.

Every command reads one JSON config, writes the fully resolved config to
``<out>/config.json`` and its artifacts next to it::

    config.json      resolved configuration (re-runnable as --config)
    splits.json      user split manifest
    matrix.bin       filtered interaction matrix
    embeddings.csv   item embeddings (synthetic datasets only)
    checkpoint.bin   trained model parameters
    trace.tsv        per-step loss trace
    selection.tsv    validation scores of the bandwidth / neighborhood sweep
    report.tsv       ranking metrics with bootstrap intervals
    diagnostics.tsv  covering numbers and dimension estimates

Exit status: 0 on success, 1 for usage or configuration errors, 2 for
failures while running a command.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .baselines import KNN_GRID, fit_itemknn, score_itemknn, score_popularity
from .data import InteractionMatrix, SplitSpec, filter_users, fold_in_users, load_ratings, split_users
from .evaluation import DEFAULT_CUTOFFS, evaluate
from .geometry import (DEFAULT_TAU, ItemGeometry, build_cost_from_cooccurrence, build_cost_from_embeddings,
                       dimension_profile, read_embeddings_csv)
from .kernels import BANDWIDTH_CANDIDATES, KernelConfig
from .loss import LossConfig, TrainConfig, train
from .model import load_checkpoint, recommend_scores, save_checkpoint
from .numerics import make_rng
from .synthetic import clustered_dataset, shuffled_embeddings

log = logging.getLogger("geocf")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
GEOMETRY_SOURCES = ("cooccurrence", "embeddings")
SCORERS = ("geocf", "popularity", "itemknn", "oracle")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclasses.dataclass
class ExperimentConfig:
    # data: a ratings file or a synthetic clustered dataset
    ratings_path: str | None = None
    headerless_tsv: bool = False
    synthetic: dict | None = None
    rating_threshold: float = 4.0
    min_user_interactions: int = 5
    # splits
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    split_seed: int = 0
    fold_in_fraction: float = 0.8
    # geometry
    geometry: str = "cooccurrence"
    embeddings_path: str | None = None
    shuffle_embeddings_seed: int | None = None
    # loss
    epsilon: float = 1.0
    lambda0: float = 10.0
    lambda_decay: float = 0.97
    n_unroll: int = 50
    prior_samples_per_batch: int | None = None
    bandwidths: list = dataclasses.field(default_factory=lambda: list(BANDWIDTH_CANDIDATES))
    # model and optimizer
    epochs: int = 100
    batch_size: int = 500
    lr: float = 1e-3
    hidden: int = 600
    latent: int = 200
    model_seed: int = 0
    # evaluation
    scorer: str = "geocf"
    cutoffs: list = dataclasses.field(default_factory=lambda: list(DEFAULT_CUTOFFS))
    knn_grid: list = dataclasses.field(default_factory=lambda: list(KNN_GRID))
    bootstrap_fraction: float = 0.2
    bootstrap_repeats: int = 1000
    bootstrap_seed: int = 0
    # diagnostics
    diagnose_users: int = 300
    diagnose_seed: int = 0
    tau: float = DEFAULT_TAU
    diagnose_exact: bool = True
    diagnose_epsilon: float = 0.01

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**raw)
        for key in ("ratings_path", "embeddings_path"):
            value = getattr(cfg, key)
            if value is not None:
                setattr(cfg, key, str((base_dir / value).resolve()))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def check(ok, msg):
            if not ok:
                raise ConfigError(msg)

        check((self.ratings_path is None) != (self.synthetic is None),
              "set exactly one of ratings_path and synthetic")
        check(self.synthetic is None or isinstance(self.synthetic, dict), "synthetic must be an object")
        check(self.geometry in GEOMETRY_SOURCES, f"geometry must be one of {GEOMETRY_SOURCES}")
        check(self.geometry != "embeddings" or self.embeddings_path or self.synthetic is not None,
              "geometry 'embeddings' needs embeddings_path (or a synthetic dataset)")
        check(self.scorer in SCORERS, f"scorer must be one of {SCORERS}")
        check(isinstance(self.bandwidths, list) and len(self.bandwidths) > 0
              and all(isinstance(b, (int, float)) and b > 0 for b in self.bandwidths),
              "bandwidths must be a nonempty list of positive numbers")
        check(isinstance(self.cutoffs, list) and self.cutoffs and all(isinstance(k, int) and k >= 1
                                                                      for k in self.cutoffs),
              "cutoffs must be a nonempty list of positive integers")
        check(isinstance(self.knn_grid, list) and self.knn_grid and all(isinstance(k, int) and k >= 1
                                                                        for k in self.knn_grid),
              "knn_grid must be a nonempty list of positive integers")
        for key in ("epochs", "batch_size", "hidden", "latent", "n_unroll", "min_user_interactions",
                    "bootstrap_repeats", "diagnose_users"):
            value = getattr(self, key)
            check(isinstance(value, int) and not isinstance(value, bool) and value >= 1,
                  f"{key} must be a positive integer")
        for key in ("epsilon", "lr", "rating_threshold", "diagnose_epsilon"):
            check(isinstance(getattr(self, key), (int, float)), f"{key} must be a number")
        check(0 < self.bootstrap_fraction <= 1, "bootstrap_fraction must lie in (0, 1]")
        try:
            self.loss_config(self.bandwidths[0])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def loss_config(self, bandwidth: float) -> LossConfig:
        return LossConfig(self.epsilon, self.lambda0, self.lambda_decay, self.n_unroll,
                          KernelConfig(float(bandwidth)), self.prior_samples_per_batch)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.lr, self.hidden, self.latent)

    def bootstrap(self) -> dict:
        return {"fraction": self.bootstrap_fraction, "repeats": self.bootstrap_repeats,
                "seed": self.bootstrap_seed}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(raw, path.parent)


def write_config(cfg: ExperimentConfig, out: Path) -> None:
    text = json.dumps(dataclasses.asdict(cfg), indent=1, sort_keys=True) + "\n"
    (out / "config.json").write_text(text)


# pipeline stages

def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {path.name} in {path.parent}; run the earlier command first")
    return path


def _prepared(out: Path):
    matrix = InteractionMatrix.load(_require(out / "matrix.bin"))
    spec = SplitSpec.load(_require(out / "splits.json"))
    return matrix, spec


def _write_embeddings(path: Path, item_ids, emb: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id"] + [f"v{j + 1}" for j in range(emb.shape[1])])
        for iid, row in zip(item_ids, emb):
            w.writerow([int(iid)] + [repr(float(v)) for v in row])


def cmd_prepare(cfg: ExperimentConfig, out: Path) -> None:
    if cfg.synthetic is not None:
        data = clustered_dataset(**cfg.synthetic)
        matrix = data.matrix
        _write_embeddings(out / "embeddings.csv", matrix.item_ids, data.embeddings)
    else:
        pairs = load_ratings(cfg.ratings_path, cfg.rating_threshold, cfg.headerless_tsv)
        matrix = filter_users(pairs, cfg.min_user_interactions)
    spec = split_users(matrix, cfg.val_fraction, cfg.test_fraction, cfg.split_seed, cfg.fold_in_fraction)
    matrix.save(out / "matrix.bin")
    spec.save(out / "splits.json")
    log.info("prepared %d users x %d items (train %d, validation %d, test %d)", matrix.num_users,
             matrix.num_items, len(spec.train), len(spec.validation), len(spec.test))


def build_geometry(cfg: ExperimentConfig, out: Path, matrix: InteractionMatrix) -> ItemGeometry:
    if cfg.geometry == "cooccurrence":
        return build_cost_from_cooccurrence(matrix)
    path = cfg.embeddings_path or str(_require(out / "embeddings.csv"))
    _, emb = read_embeddings_csv(path, matrix.item_ids)
    if cfg.shuffle_embeddings_seed is not None:
        emb = shuffled_embeddings(emb, cfg.shuffle_embeddings_seed)
    return build_cost_from_embeddings(emb, matrix.item_ids)


def _validation_ndcg(scorer, users, num_items) -> float:
    return evaluate(scorer, users, num_items, cutoffs=(100,), bootstrap={"repeats": 1}).ndcg[100]


def cmd_train(cfg: ExperimentConfig, out: Path) -> None:
    matrix, spec = _prepared(out)
    geometry = build_geometry(cfg, out, matrix)
    train_rows = matrix.subset(spec.train)
    validation = fold_in_users(matrix, spec, "validation")
    best = None
    sweep = []
    for bw in cfg.bandwidths:
        res = train(train_rows, geometry, cfg.loss_config(bw), cfg.train_config(), seed=cfg.model_seed)
        score = _validation_ndcg(lambda r, p=res.params: recommend_scores(p, r), validation, matrix.num_items)
        sweep.append((float(bw), score))
        log.info("bandwidth %g: validation nDCG@100 %.4f", bw, score)
        if best is None or score > best[1]:
            best = (float(bw), score, res)
    bw, score, res = best
    save_checkpoint(out / "checkpoint.bin", res.params,
                    {"bandwidth": bw, "epochs": cfg.epochs, "seed": cfg.model_seed,
                     "validation_ndcg100": score})
    res.write_trace(out / "trace.tsv")
    _write_selection(out / "selection.tsv", "bandwidth", sweep)


def _write_selection(path: Path, name: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow((name, "validation_ndcg100"))
        for value, score in rows:
            w.writerow((value, f"{score:.6f}"))


def make_scorer(cfg: ExperimentConfig, out: Path, matrix: InteractionMatrix, spec: SplitSpec):
    train_rows = matrix.subset(spec.train)
    if cfg.scorer == "geocf":
        params, _ = load_checkpoint(_require(out / "checkpoint.bin"))
        return lambda rows: recommend_scores(params, rows)
    if cfg.scorer == "popularity":
        return lambda rows: score_popularity(train_rows, rows)
    if cfg.scorer == "itemknn":
        validation = fold_in_users(matrix, spec, "validation")
        grid = sorted({min(k, matrix.num_items - 1) for k in cfg.knn_grid})
        sweep, best = [], None
        for k in grid:
            model = fit_itemknn(train_rows, k)
            score = _validation_ndcg(lambda r, m=model: score_itemknn(m, r), validation, matrix.num_items)
            sweep.append((k, score))
            if best is None or score > best[1]:
                best = (model, score)
        _write_selection(out / "selection.tsv", "k", sweep)
        model = best[0]
        return lambda rows: score_itemknn(model, rows)
    return None  # oracle: built per user set


def cmd_evaluate(cfg: ExperimentConfig, out: Path) -> None:
    matrix, spec = _prepared(out)
    users = fold_in_users(matrix, spec, "test")
    scorer = make_scorer(cfg, out, matrix, spec)
    batch = 1000
    if scorer is None:
        # smoke mode: the held-out items themselves, all users in one batch
        held = np.zeros((len(users), matrix.num_items))
        for r, u in enumerate(users):
            held[r, u.held_out] = 1.0
        scorer, batch = (lambda rows: held), len(users)
    report = evaluate(scorer, users, matrix.num_items, tuple(cfg.cutoffs), cfg.bootstrap(), batch)
    report.write_tsv(out / "report.tsv")
    for name, k, value, lo, hi in report.rows():
        log.info("%s@%d %.4f [%.4f, %.4f]", name, k, value, lo, hi)


def cmd_diagnose(cfg: ExperimentConfig, out: Path) -> None:
    matrix, spec = _prepared(out)
    geometry = build_geometry(cfg, out, matrix)
    rng = make_rng(cfg.diagnose_seed)
    n = min(cfg.diagnose_users, matrix.num_users)
    chosen = np.sort(rng.choice(matrix.num_users, size=n, replace=False))
    clouds = [matrix.row(u) for u in chosen]
    diag = dimension_profile(clouds, geometry, tau=cfg.tau, exact=cfg.diagnose_exact,
                             epsilon=cfg.diagnose_epsilon)
    diag.write_tsv(out / "diagnostics.tsv")
    log.info("d_star_estimate %.4f", diag.d_star_estimate)


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "evaluate": cmd_evaluate, "diagnose": cmd_diagnose}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="geocf", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS threads; 1 gives bitwise reproducible runs")
    parser.add_argument("--out", default=None, help="experiment directory (default: next to the config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("geocf: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"geocf: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out) if args.out else Path(args.config).resolve().parent
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_config(cfg, out)
        with threadpool_limits(limits=args.threads):
            COMMANDS[args.command](cfg, out)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"geocf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
