"""End-to-end orchestration: ingest, featurize, select, train, score, evaluate.

Every stage reads and writes files under ``out_dir`` so stages can be rerun
independently from the command line. ``run_pipeline`` chains them. Per-user
work (model training and scoring) can be spread over a process pool; results
are always collected and written in user order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, IGTError, NoScores, StageError, TooFewInstances
from .eval import (
    fit_iforest,
    instance_report,
    metrics,
    confusion,
    score_ae,
    score_iforest,
    tune_autoencoder,
    user_report,
    write_report,
    write_trend,
    auroc,
    relative_scores,
)
from .features import (
    FeatureVector,
    build_catalog,
    build_profile,
    extract_features,
    fit_normalizer,
    normalize,
    read_catalog,
    read_feature_csv,
    split_index,
    write_catalog,
    write_feature_csv,
    Normalizer,
)
from .imaging import TransformSpec, images_from_vectors, self_label, transform_policy
from .ingest import SOURCES, Granularity, aggregate, load_corpus, read_jsonl, write_jsonl
from .model import TrainConfig, build_classifier, load_checkpoint, save_checkpoint, train
from .scoring import (
    DirichletParams,
    InstanceScore,
    classify_user,
    collect_softmax_stats,
    fit_dirichlet_params,
    fit_threshold,
    read_scores,
    score_from_softmax,
    transformed_softmax,
)
from .selection import select_transforms, write_selection_report

logger = logging.getLogger(__name__)

STAGES = ("ingest", "featurize", "select", "train", "score", "evaluate")
KAPPA_GRID = tuple(round(5.0 + 1.5 * i, 1) for i in range(11))  # percent
TAU_GRID = tuple(float(t) for t in range(80, 100))


@dataclass
class RunConfig:
    data_dir: str = ""
    out_dir: str = ""
    granularity: str = "day"
    train_fraction: float = 0.7
    min_instances: int = 10
    tau: float = 95.0
    kappa: float = 0.14
    decision_window: int | None = None  # trailing test windows used for the user decision; None = all
    transform_policy: str = "geometric"
    transform_indices: list | None = None  # explicit subset of the policy's candidates
    prune: bool = True
    band: tuple = (0.45, 0.55)
    selection_images: int = 400
    arch: str = "tiny"
    depth: int = 10
    widen: int = 4
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    l2: float = 0.0
    seed: int = 0
    column_maps: dict | None = None
    catalog_path: str | None = None
    labels_path: str | None = None
    baselines: bool = True
    ae_trials: int = 4
    ae_epochs: int = 200
    iforest_trees: int = 100
    workers: int = 1

    PATH_FIELDS = ("data_dir", "out_dir", "catalog_path", "labels_path")

    def __post_init__(self):
        self.band = tuple(self.band)
        self.validate()

    def validate(self) -> None:
        try:
            Granularity(self.granularity)
        except ValueError:
            raise ConfigError(f"unknown granularity {self.granularity!r}") from None
        checks = [
            (0 < self.train_fraction < 1, "train_fraction must lie in (0, 1)"),
            (0 < self.tau < 100, "tau must lie in (0, 100)"),
            (0 < self.kappa < 1, "kappa must lie in (0, 1)"),
            (self.transform_policy in ("geometric", "full", "simplified"), "unknown transform policy"),
            (self.arch in ("tiny", "wrn"), "arch must be tiny or wrn"),
            (self.epochs >= 1 and self.batch_size >= 1, "epochs and batch_size must be positive"),
            (self.workers >= 1, "workers must be positive"),
            (len(self.band) == 2 and self.band[0] <= self.band[1], "band must be [lo, hi]"),
            (self.decision_window is None or self.decision_window >= 1, "decision_window must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict:
        d = asdict(self)
        d["band"] = list(self.band)
        return d

    def portable(self) -> dict:
        """The config without filesystem paths (they vary between machines)."""
        d = self.to_json()
        for k in self.PATH_FIELDS:
            d.pop(k)
        d.pop("workers")  # parallelism does not change results
        return d

    def config_hash(self) -> str:
        return _sha256(json.dumps(self.portable(), sort_keys=True).encode())

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, epochs=self.epochs, lr=self.lr, l2=self.l2, seed=seed)


def paper_scale(cfg: RunConfig) -> RunConfig:
    """Wide residual network, 200 epochs."""
    d = cfg.to_json()
    d.update(arch="wrn", depth=10, widen=4, epochs=200)
    return RunConfig.from_json(d)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def user_seed(seed: int, user: str) -> int:
    return int(_sha256(f"{seed}:{user}".encode())[:8], 16)


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load(path: Path):
    return json.loads(Path(path).read_text())


def _stage(name, fn, *args, user=None):
    try:
        return fn(*args)
    except StageError:
        raise
    except IGTError as exc:
        raise StageError(name, exc, user) from exc


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# --------------------------------------------------------------------------
# labels


def load_malicious_ids(cfg: RunConfig) -> set | None:
    """Malicious event ids from ``labels_path`` or a ``manifest.json`` in the data directory.

    ``labels_path`` may be a manifest or a plain/CSV file whose first column
    holds event ids.
    """
    path = Path(cfg.labels_path) if cfg.labels_path else Path(cfg.data_dir) / "manifest.json"
    if not path.exists():
        if cfg.labels_path:
            raise ConfigError(f"labels file {path} does not exist")
        return None
    if path.suffix == ".json":
        return set(_load(path)["malicious_event_ids"])
    ids = set()
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row and row[0].strip() and row[0].strip().lower() != "id":
                ids.add(row[0].strip())
    return ids


def input_hashes(data_dir) -> dict:
    out = {}
    for source in SOURCES:
        p = Path(data_dir) / f"{source}.csv"
        if p.exists():
            out[source] = _sha256(p.read_bytes())
    return out


# --------------------------------------------------------------------------
# stages


def stage_ingest(cfg: RunConfig) -> list:
    events, stats = load_corpus(cfg.data_dir, cfg.column_maps)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_jsonl(cfg.out / "events.jsonl", events)
    _dump(cfg.out / "ingest_stats.json", {"sources": stats, "n_events": len(events)})
    return events


@dataclass
class UserData:
    user: str
    windows: list
    X: np.ndarray  # normalized vectors, chronological
    labels: np.ndarray | None
    n_train: int
    normalizer: Normalizer
    pcs: list = field(default_factory=list)

    @property
    def X_train(self):
        return self.X[:self.n_train]

    @property
    def X_test(self):
        return self.X[self.n_train:]


def stage_featurize(cfg: RunConfig, events=None) -> tuple[dict, dict]:
    """Per-user normalized vectors split chronologically; returns ``(users, skipped)``."""
    if events is None:
        events = read_jsonl(cfg.out / "events.jsonl")
    g = Granularity(cfg.granularity)
    catalog = read_catalog(cfg.catalog_path) if cfg.catalog_path else build_catalog(g)
    if catalog.granularity is not g:
        raise ConfigError(f"catalog is for {catalog.granularity.value}, run is {g.value}")
    malicious = load_malicious_ids(cfg)
    buckets = aggregate(events, g)
    per_user: dict = {}
    for key in sorted(buckets, key=lambda k: (k[0], k[1:])):
        per_user.setdefault(key[0], []).append(buckets[key])
    by_user_events: dict = {}
    for ev in events:
        by_user_events.setdefault(ev.user, []).append(ev)

    users, skipped = {}, {}
    for user in sorted(per_user):
        bks = sorted(per_user[user], key=lambda b: (b.window_start, b.pc or ""))
        n = len(bks)
        k = split_index(n, cfg.train_fraction)
        if k < cfg.min_instances or n - k < cfg.min_instances:
            skipped[user] = f"TooFewInstances: {n} windows"
            continue
        profile = build_profile(by_user_events[user], until=bks[k].window_start)
        vecs = [extract_features(b, profile, catalog) for b in bks]
        norm = fit_normalizer(vecs[:k])
        X = np.vstack([normalize(v.values, norm) for v in vecs])
        labels = None
        if malicious is not None:
            labels = np.array([any(e.event_id in malicious for e in b.events) for b in bks])
        users[user] = UserData(user, [b.window_start for b in bks], X, labels, k, norm, [b.pc for b in bks])

    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    write_catalog(out / "catalog.json", catalog)
    rows, phases = [], []
    for ud in users.values():
        for i, ws in enumerate(ud.windows):
            lab = None if ud.labels is None else bool(ud.labels[i])
            rows.append(FeatureVector(ud.user, g, ws, ud.X[i], lab, ud.pcs[i]))
            phases.append("train" if i < ud.n_train else "test")
    write_feature_csv(out / "features.csv", rows, catalog, phases)
    _dump(out / "normalizers.json", {u: ud.normalizer.to_json() for u, ud in users.items()})
    _dump(out / "skipped_users.json", skipped)
    if not users:
        raise TooFewInstances("no user has enough windows for a train/test split")
    return users, skipped


def load_features(cfg: RunConfig) -> dict:
    vectors, phases = read_feature_csv(cfg.out / "features.csv")
    norms = _load(cfg.out / "normalizers.json")
    grouped: dict = {}
    for v, ph in zip(vectors, phases):
        grouped.setdefault(v.user, []).append((v, ph))
    users = {}
    for user in sorted(grouped):
        items = grouped[user]
        labels = None if items[0][0].label is None else np.array([bool(v.label) for v, _ in items])
        users[user] = UserData(user, [v.window_start for v, _ in items], np.vstack([v.values for v, _ in items]),
                               labels, sum(ph == "train" for _, ph in items), Normalizer.from_json(norms[user]),
                               [v.pc for v, _ in items])
    return users


def _side(users: dict) -> int:
    return next(iter(users.values())).X.shape[1]


def stage_select(cfg: RunConfig, users: dict) -> list[TransformSpec]:
    candidates = transform_policy(cfg.transform_policy)
    if cfg.transform_indices is not None:
        wanted = set(cfg.transform_indices)
        candidates = [c for c in candidates if c.index in wanted]
    pooled = np.vstack([ud.X_train for ud in users.values()])
    images = images_from_vectors(pooled)
    if cfg.prune:
        kept, pairs = select_transforms(images, candidates, cfg.band, cfg.seed, cfg.selection_images)
        write_selection_report(cfg.out / "selection_report.csv", candidates, pairs, kept, cfg.band)
    else:
        kept = list(candidates)
    _dump(cfg.out / "transforms.json", {"policy": cfg.transform_policy, "candidates": len(candidates),
                                        "kept": [t.to_json() for t in kept]})
    return kept


def load_transforms(cfg: RunConfig) -> list[TransformSpec]:
    return [TransformSpec.from_json(t) for t in _load(cfg.out / "transforms.json")["kept"]]


def _train_job(job):
    user, X_train, transforms, cfg_json = job
    cfg = RunConfig.from_json(cfg_json)
    seed = user_seed(cfg.seed, user)
    images = images_from_vectors(X_train)
    ds = self_label(images, transforms)
    model = build_classifier(images.shape[-1], len(transforms), cfg.arch, cfg.depth, cfg.widen, seed=seed)
    hist = train(model, ds.images.astype(np.float32), ds.labels, cfg.train_config(seed))
    stats = collect_softmax_stats(model, images, transforms)
    dirichlet = fit_dirichlet_params(stats)
    return user, model, dirichlet, hist


def _model_dir(cfg: RunConfig, user: str) -> Path:
    return cfg.out / "models" / cfg.granularity / user


def stage_train(cfg: RunConfig, users: dict, transforms) -> dict:
    """Train one classifier per user and fit its Dirichlet parameters."""
    if (cfg.out / "models").exists():
        shutil.rmtree(cfg.out / "models")
    jobs = [(u, ud.X_train, transforms, cfg.to_json()) for u, ud in users.items()]
    out = {}

    def run(job):
        try:
            return _train_job(job)
        except IGTError as exc:
            raise StageError("train", exc, job[0]) from exc

    results = _map(_train_job, jobs, cfg.workers) if cfg.workers > 1 else [run(j) for j in jobs]
    for user, model, dirichlet, hist in results:
        extra = {"dirichlet": dirichlet.to_json(), "history": hist.to_json(), "user": user,
                 "transforms": [t.to_json() for t in transforms]}
        save_checkpoint(_model_dir(cfg, user), model, cfg.portable(), extra)
        out[user] = (model, dirichlet)
        logger.info("trained %s: final loss %.4f", user, hist.loss[-1])
    return out


def load_models(cfg: RunConfig, users) -> dict:
    out = {}
    for user in users:
        model, manifest = load_checkpoint(_model_dir(cfg, user))
        out[user] = (model, DirichletParams.from_json(manifest["dirichlet"]))
    return out


@dataclass
class UserScores:
    user: str
    lam: float
    train: list
    test: list
    flagged: bool
    flag_fraction: float


def _score_user(ud: UserData, model, dirichlet, transforms, cfg: RunConfig) -> UserScores:
    g = cfg.granularity
    y = transformed_softmax(model, images_from_vectors(ud.X), transforms)
    r = score_from_softmax(y, dirichlet.alphas)
    lam = fit_threshold(r[:ud.n_train], cfg.tau)
    rows = []
    for i, ws in enumerate(ud.windows):
        lab = None if ud.labels is None else bool(ud.labels[i])
        rows.append(InstanceScore(ud.user, g, ws.isoformat(), float(r[i]), bool(r[i] >= lam), lab))
    test = rows[ud.n_train:]
    window = test if cfg.decision_window is None else test[-cfg.decision_window:]
    flags = [s.flagged for s in window]
    return UserScores(ud.user, lam, rows[:ud.n_train], test, classify_user(flags, cfg.kappa),
                      float(np.mean(flags)))


def stage_score(cfg: RunConfig, users: dict, models: dict, transforms) -> dict:
    out = {}
    for user, ud in users.items():
        model, dirichlet = models[user]
        out[user] = _stage("score", _score_user, ud, model, dirichlet, transforms, cfg, user=user)
    _write_scores(cfg, out)
    return out


def _write_scores(cfg: RunConfig, scores: dict) -> None:
    out = cfg.out
    test_rows = [r for s in scores.values() for r in s.test]
    train_rows = [r for s in scores.values() for r in s.train]
    lam_of = {u: s.lam for u, s in scores.items()}
    _write_score_rows(out / "scores.csv", test_rows, lam_of)
    _write_score_rows(out / "train_scores.csv", train_rows, lam_of)
    _write_score_rows(out / "flagged_instances.csv", [r for r in test_rows if r.flagged], lam_of)
    with open(out / "flagged_users.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "flag_fraction", "kappa", "flagged"])
        for u, s in scores.items():
            w.writerow([u, f"{s.flag_fraction:.6f}", cfg.kappa, int(s.flagged)])
    _dump(out / "thresholds.json", {u: {"tau": cfg.tau, "lambda": s.lam, "kappa": cfg.kappa}
                                    for u, s in scores.items()})


def _write_score_rows(path, rows, lam_of) -> None:
    # one lambda per user: write user by user through the shared CSV writer
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "granularity", "window_start", "score", "lambda", "flagged", "label"])
        for r in rows:
            w.writerow([r.user, r.granularity, r.window_start, repr(float(r.score)), repr(float(lam_of[r.user])),
                        int(r.flagged), "" if r.label is None else int(r.label)])


def load_scores(cfg: RunConfig) -> dict:
    path = cfg.out / "scores.csv"
    if not path.exists() or not (cfg.out / "train_scores.csv").exists():
        raise NoScores(f"no scores under {cfg.out}; run the score stage first")
    test, lams = read_scores(path)
    train_rows, _ = read_scores(cfg.out / "train_scores.csv")
    if not test:
        raise NoScores("scores file is empty")
    flagged = {}
    with open(cfg.out / "flagged_users.csv", newline="") as fh:
        for rec in csv.DictReader(fh):
            flagged[rec["user"]] = (rec["flagged"] == "1", float(rec["flag_fraction"]))
    out = {}
    lam_of = {r.user: lam for r, lam in zip(test, lams)}
    for user in sorted(flagged):
        out[user] = UserScores(user, lam_of[user], [r for r in train_rows if r.user == user],
                               [r for r in test if r.user == user], *flagged[user])
    return out


def _baseline_job(job):
    user, X_train, X_test, cfg_json = job
    cfg = RunConfig.from_json(cfg_json)
    seed = user_seed(cfg.seed, user)
    forest = fit_iforest(X_train, n_trees=cfg.iforest_trees, seed=seed)
    ae = tune_autoencoder(X_train, n_trials=cfg.ae_trials, seed=seed, epochs=cfg.ae_epochs)
    return (user, (score_iforest(forest, X_train), score_iforest(forest, X_test)),
            (score_ae(ae, X_train), score_ae(ae, X_test)))


def stage_evaluate(cfg: RunConfig, users: dict, scores: dict, transforms=None, skipped=None) -> dict:
    out = cfg.out
    if any(ud.labels is None for ud in users.values()):
        summary = _summary(cfg, users, scores, transforms, skipped, None)
        _dump(out / "run_summary.json", summary)
        return summary
    test_rows = [r for s in scores.values() for r in s.test]
    pooled = np.concatenate([relative_scores([r.score for r in s.test], [r.score for r in s.train], s.lam)
                             for s in scores.values()])
    inst = instance_report(pooled, [r.flagged for r in test_rows], [r.label for r in test_rows], cfg.granularity)
    truth = {u: bool(ud.labels[ud.n_train:].any()) for u, ud in users.items()}
    uflags = {u: s.flagged for u, s in scores.items()}
    ufrac = {u: s.flag_fraction for u, s in scores.items()}
    urep = user_report(uflags, truth, ufrac, cfg.granularity)
    write_report(out / "instance_report.csv", [inst])
    write_report(out / "user_report.csv", [urep])
    for u, s in scores.items():
        write_trend(out / "trends" / f"{u}.csv", s.train, s.test, s.lam)

    reports = {"instance": inst.as_dict(), "user": urep.as_dict()}
    if cfg.baselines:
        jobs = [(u, ud.X_train, ud.X_test, cfg.to_json()) for u, ud in users.items()]
        res = {u: (sif, sae) for u, sif, sae in _map(_baseline_job, jobs, cfg.workers)}
        labels = np.concatenate([users[u].labels[users[u].n_train:] for u in users])
        base = {}
        for name, k in (("isolation_forest", 0), ("autoencoder", 1)):
            sc = np.concatenate([relative_scores(res[u][k][1], res[u][k][0], fit_threshold(res[u][k][0], cfg.tau))
                                 for u in users])
            try:
                base[name] = round(auroc(sc, labels), 2)
            except IGTError:
                base[name] = None
        reports["baselines_instance_auroc"] = base
        with open(out / "baselines.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "instance_AUROC"])
            w.writerow(["igt", "" if inst.auroc is None else f"{inst.auroc:.2f}"])
            for name, v in base.items():
                w.writerow([name, "" if v is None else f"{v:.2f}"])
    summary = _summary(cfg, users, scores, transforms, skipped, reports)
    _dump(out / "run_summary.json", summary)
    return summary


def _summary(cfg, users, scores, transforms, skipped, reports) -> dict:
    if transforms is None and (cfg.out / "transforms.json").exists():
        transforms = load_transforms(cfg)
    if skipped is None and (cfg.out / "skipped_users.json").exists():
        skipped = _load(cfg.out / "skipped_users.json")
    return {
        "version": __version__,
        "config": cfg.portable(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "input_hashes": input_hashes(cfg.data_dir) if cfg.data_dir else {},
        "n_users": len(users),
        "skipped_users": skipped or {},
        "transforms": [t.name for t in transforms] if transforms else [],
        "thresholds": {u: {"tau": cfg.tau, "lambda": s.lam, "kappa": cfg.kappa} for u, s in scores.items()},
        "flagged_users": sorted(u for u, s in scores.items() if s.flagged),
        "n_flagged_instances": sum(r.flagged for s in scores.values() for r in s.test),
        "reports": reports,
    }


def summary_hash(out_dir) -> str:
    return _sha256((Path(out_dir) / "run_summary.json").read_bytes())


def write_lineage(cfg: RunConfig) -> None:
    """Record config hash, seed and input hashes for every output file."""
    files = sorted(str(p.relative_to(cfg.out)) for p in cfg.out.rglob("*") if p.is_file() and p.name != "lineage.json")
    _dump(cfg.out / "lineage.json", {"config_hash": cfg.config_hash(), "seed": cfg.seed,
                                     "inputs": input_hashes(cfg.data_dir), "outputs": files})


# --------------------------------------------------------------------------


def run_pipeline(cfg: RunConfig) -> dict:
    """Run every stage; returns the run summary."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    events = _stage("ingest", stage_ingest, cfg)
    users, skipped = _stage("featurize", stage_featurize, cfg, events)
    transforms = _stage("select", stage_select, cfg, users)
    models = _stage("train", stage_train, cfg, users, transforms)
    scores = _stage("score", stage_score, cfg, users, models, transforms)
    summary = _stage("evaluate", stage_evaluate, cfg, users, scores, transforms, skipped)
    write_lineage(cfg)
    return summary


# --------------------------------------------------------------------------
# threshold sweeps


def sweep(cfg: RunConfig, parameter: str, grid=None) -> list[dict]:
    """Recompute decisions and F1 over a grid of tau or kappa without retraining.

    Grid values are percentages. Writes ``sweep_<parameter>.csv``.
    """
    if parameter not in ("tau", "kappa"):
        raise ConfigError("sweep parameter must be tau or kappa")
    scores = load_scores(cfg)
    grid = list(grid) if grid is not None else list(TAU_GRID if parameter == "tau" else KAPPA_GRID)
    rows = []
    for value in grid:
        tau = value if parameter == "tau" else cfg.tau
        kappa = value / 100.0 if parameter == "kappa" else cfg.kappa
        labels, flags, uflags, utruth = [], [], {}, {}
        for u, s in scores.items():
            lam = fit_threshold([r.score for r in s.train], tau)
            f = [r.score >= lam for r in s.test]
            window = f if cfg.decision_window is None else f[-cfg.decision_window:]
            uflags[u] = classify_user(window, kappa)
            flags += f
            labels += [bool(r.label) for r in s.test]
            utruth[u] = any(bool(r.label) for r in s.test)
        im = metrics(confusion(labels, flags))
        um = metrics(confusion([utruth[u] for u in sorted(uflags)], [uflags[u] for u in sorted(uflags)]))
        rows.append({parameter: value, "instance_F1": im.F1, "instance_DR": im.DR, "instance_FPR": im.FPR,
                     "user_F1": um.F1, "user_DR": um.DR, "user_FPR": um.FPR})
    with open(cfg.out / f"sweep_{parameter}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return rows
