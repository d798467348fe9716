"""Repetition studies: subsample k1 classes, extrapolate to k2, score by RMSE.

Ground truth is the exact observed accuracy curve of the full K-class data.
Repetition ``i`` subsamples with ``SeedSequence(seed, spawn_key=(i,))`` and
initializes stochastic methods with ``spawn_key=(i, 1)``, so results do not
depend on how repetitions are scheduled across workers.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cleanex
from .baselines import KdeConfig, RegressionModel, default_n_bases, kde_extrapolate, regression_extrapolate, regression_fit
from .curves import AccuracyCurve, compute_rank_stats, observed_accuracy_curve
from .score_model import ScoreMatrix, ScoreOrientation, load_scores, subsample_classes
from .simulation import SimulationConfig, generate

log = logging.getLogger(__name__)

METHODS = ("cleanex", "kde", "regression")
PRECISIONS = {"float32": np.float32, "float64": np.float64}


def rmse(predicted: AccuracyCurve, truth: AccuracyCurve, k2: int) -> float:
    """Root mean squared deviation over k = 2..k2."""
    if k2 < 2 or predicted.k_max < k2 or truth.k_max < k2:
        raise ValueError(
            f"both curves must cover 2..{k2} (predicted to {predicted.k_max}, truth to {truth.k_max})"
        )
    diff = predicted.values[: k2 - 1] - truth.values[: k2 - 1]
    return float(np.sqrt(np.mean(diff**2)))


@dataclass(frozen=True)
class ExperimentConfig:
    k1: int
    k2: int
    simulation: SimulationConfig | None = None
    scores_path: str | None = None
    orientation: str = "higher"
    repetitions: int = 50
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    output_dir: str | None = None
    workers: int = 1
    cleanex_iters: int = cleanex.ITERS
    cleanex_lr: float = cleanex.LEARNING_RATE
    cleanex_k_stride: int = 1
    cleanex_precision: str = "float32"
    kde_grid: int = 32
    regression_bases: int | None = None
    regression_ridge: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if (self.simulation is None) == (self.scores_path is None):
            raise ValueError("exactly one of simulation or scores_path must be given")
        if not 2 <= self.k1 <= self.k2:
            raise ValueError(f"need 2 <= k1 <= k2, got k1={self.k1}, k2={self.k2}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.cleanex_precision not in PRECISIONS:
            raise ValueError(f"cleanex_precision must be one of {sorted(PRECISIONS)}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def load_source(self) -> ScoreMatrix:
        if self.simulation is not None:
            return generate(self.simulation)
        return load_scores(self.scores_path, ScoreOrientation(self.orientation))

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.simulation is not None:
            sim = asdict(self.simulation)
            sim["class_dist"] = self.simulation.class_dist.value
            sim["point_dist"] = self.simulation.point_dist.value
            d["simulation"] = sim
        d["methods"] = list(self.methods)
        return d


# -- config file -----------------------------------------------------------------

_SIM_KEYS = {
    "sim.d": ("d", int),
    "sim.classes": ("n_classes", int),
    "sim.r": ("r", int),
    "sim.sigma2": ("sigma2", float),
    "sim.class_dist": ("class_dist", str),
    "sim.point_dist": ("point_dist", str),
    "sim.seed": ("seed", int),
}

_KEYS = {
    "k1": ("k1", int),
    "k2": ("k2", int),
    "scores": ("scores_path", str),
    "orientation": ("orientation", str),
    "repetitions": ("repetitions", int),
    "methods": ("methods", lambda v: tuple(m.strip() for m in v.split(",") if m.strip())),
    "seed": ("seed", int),
    "output_dir": ("output_dir", str),
    "workers": ("workers", int),
    "cleanex.iters": ("cleanex_iters", int),
    "cleanex.lr": ("cleanex_lr", float),
    "cleanex.k_stride": ("cleanex_k_stride", int),
    "cleanex.precision": ("cleanex_precision", str),
    "kde.grid": ("kde_grid", int),
    "regression.bases": ("regression_bases", int),
    "regression.ridge": ("regression_ridge", float),
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat ``key = value`` config format (``#`` starts a comment).

    ``source`` is either ``simulation`` (configured by ``sim.*`` keys) or
    ``file`` (read from ``scores``).
    """
    kwargs, sim, source = {}, {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key == "source":
                source = value
            elif key in _SIM_KEYS:
                name, conv = _SIM_KEYS[key]
                sim[name] = conv(value)
            elif key in _KEYS:
                name, conv = _KEYS[key]
                kwargs[name] = conv(value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: {exc}") from None

    if source == "simulation":
        sim.setdefault("seed", kwargs.get("seed", 0))
        kwargs["simulation"] = SimulationConfig(**sim)
    elif source == "file":
        if sim:
            raise ValueError("sim.* keys given but source = file")
    else:
        raise ValueError("config needs source = simulation or source = file")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    cfg = parse_config(Path(path).read_text(encoding="utf-8"))
    if cfg.scores_path is not None and not Path(cfg.scores_path).is_absolute():
        # score paths are relative to the config file
        cfg = replace(cfg, scores_path=str(Path(path).parent / cfg.scores_path))
    return cfg


# -- running ----------------------------------------------------------------------


def fit_method(method: str, sub: ScoreMatrix, k2: int, cfg: ExperimentConfig, seed) -> AccuracyCurve:
    if method == "cleanex":
        _, _, chat = cleanex.fit(
            sub,
            iters=cfg.cleanex_iters,
            lr=cfg.cleanex_lr,
            seed=seed,
            k_stride=cfg.cleanex_k_stride,
            dtype=PRECISIONS[cfg.cleanex_precision],
        )
        return cleanex.extrapolate(chat, k2)
    if method == "kde":
        return kde_extrapolate(sub, KdeConfig(grid_size=cfg.kde_grid), k2)
    if method == "regression":
        observed = observed_accuracy_curve(compute_rank_stats(sub), sub.n_classes, sub.r, sub.n_classes)
        n_bases = cfg.regression_bases or default_n_bases(sub.n_classes)
        model = regression_fit(observed, RegressionModel(n_bases, cfg.regression_ridge))
        return regression_extrapolate(model, k2)
    raise ValueError(f"unknown method {method!r}")


def run_repetition(m: ScoreMatrix, truth: AccuracyCurve, cfg: ExperimentConfig, index: int) -> dict:
    sub = subsample_classes(m, cfg.k1, np.random.SeedSequence(cfg.seed, spawn_key=(index,)))
    record = {"index": index, "classes": list(sub.class_ids), "tie_count": sub.tie_count, "methods": {}}
    for method in cfg.methods:
        start = time.perf_counter()
        try:
            curve = fit_method(method, sub, cfg.k2, cfg, np.random.SeedSequence(cfg.seed, spawn_key=(index, 1)))
            entry = {
                "status": "ok",
                "rmse": rmse(curve, truth, cfg.k2),
                "clamp_count": curve.clamp_count,
                "curve": curve.values.tolist(),
            }
        except Exception as exc:  # isolate failures per repetition
            log.warning("repetition %d, %s failed: %s", index, method, exc)
            entry = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        entry["seconds"] = time.perf_counter() - start
        record["methods"][method] = entry
    return record


def quartile_summary(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    q1, median, q3 = np.percentile(v, [25, 50, 75])
    return {
        "min": float(v.min()),
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "max": float(v.max()),
        "mean": float(v.mean()),
    }


@dataclass
class ExperimentReport:
    config: dict
    ground_truth: list[float]
    tie_count: int
    repetitions: list[dict]
    summary: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    @property
    def all_succeeded(self) -> bool:
        return all(e["status"] == "ok" for rep in self.repetitions for e in rep["methods"].values())

    def rmses(self, method: str) -> list[float]:
        return [rep["methods"][method]["rmse"] for rep in self.repetitions if rep["methods"][method]["status"] == "ok"]

    def curve(self, index: int, method: str) -> AccuracyCurve:
        entry = self.repetitions[index]["methods"][method]
        return AccuracyCurve(entry["curve"], method, entry["clamp_count"])

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "ground_truth": self.ground_truth,
            "tie_count": self.tie_count,
            "summary": self.summary,
            "repetitions": self.repetitions,
            "timing": self.timing,
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ExperimentReport:
        doc = json.loads(text)
        return cls(doc["config"], doc["ground_truth"], doc["tie_count"], doc["repetitions"], doc["summary"], doc["timing"])


def summarize(repetitions: list[dict], methods) -> dict:
    summary = {}
    for method in methods:
        entries = [rep["methods"][method] for rep in repetitions]
        ok = [e["rmse"] for e in entries if e["status"] == "ok"]
        s = {"n_ok": len(ok), "n_failed": len(entries) - len(ok), "all_failed": not ok}
        if ok:
            s.update(quartile_summary(ok))
            s["clamped_repetitions"] = sum(1 for e in entries if e["status"] == "ok" and e["clamp_count"])
        summary[method] = s
    return summary


def write_curve_csv(curve: AccuracyCurve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("k,accuracy\n")
        for k, v in zip(curve.ks.tolist(), curve.values.tolist()):
            fh.write(f"{k},{v!r}\n")


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    start = time.perf_counter()
    m = cfg.load_source()
    if cfg.k2 > m.n_classes:
        raise ValueError(f"k2={cfg.k2} exceeds the {m.n_classes} classes in the source")
    truth = observed_accuracy_curve(compute_rank_stats(m), m.n_classes, m.r, cfg.k2)
    setup = time.perf_counter() - start

    indices = range(cfg.repetitions)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            futures = [pool.submit(run_repetition, m, truth, cfg, i) for i in indices]
            records = [f.result() for f in futures]
    else:
        records = [run_repetition(m, truth, cfg, i) for i in indices]
    records.sort(key=lambda rec: rec["index"])

    report = ExperimentReport(
        config=cfg.to_dict(),
        ground_truth=truth.values.tolist(),
        tie_count=m.tie_count,
        repetitions=records,
        summary=summarize(records, cfg.methods),
        timing={"setup_seconds": setup, "total_seconds": time.perf_counter() - start},
    )
    if cfg.output_dir is not None:
        write_report(report, truth, cfg.output_dir)
    return report


def write_report(report: ExperimentReport, truth: AccuracyCurve, output_dir) -> None:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    write_curve_csv(truth, out / "truth.csv")
    for rep in report.repetitions:
        for method, entry in rep["methods"].items():
            if entry["status"] == "ok":
                write_curve_csv(report.curve(rep["index"], method), out / f"rep{rep['index']}_{method}.csv")
