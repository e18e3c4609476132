"""Reproducible late-fusion robustness experiments.

One trial: generate data, train one network per modality, then score every
fusion method for every gamma on clean inputs and under each perturbation of
the chosen modality. Trials differ only through seeds derived from the master
seed, and results are aggregated as mean and sample standard deviation.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import datagen, fusion, jacreg, nn, perturb

METHODS = ("stat", "stat+jacreg", "mean", "mean+conf")
MAGNITUDE_PARAM = {
    "gaussian": "omega0",
    "missing": "omega1",
    "bias": "omega3",
    "fgsm": "omega4",
    "pgd": "omega4",
}
TIMESTAMP_KEY = "created"


class ConfigError(ValueError):
    pass


@dataclass
class DataSpec:
    kind: str = "two_moons"
    n: int = 2000
    jitter: float = 0.1
    k: int = 3
    dim_a: int = 2
    dim_b: int = 2
    separation: float = 2.0
    train_fraction: float = 0.8


@dataclass
class ExperimentConfig:
    data: DataSpec = field(default_factory=DataSpec)
    hidden: tuple = (16, 16)
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    methods: tuple = METHODS
    gammas: tuple = (1.0, 0.5, 0.1)
    perturbations: tuple = ()
    perturbed_modality: str = "b"
    trials: int = 1
    seed: int = 0
    t_max: int = 1

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown fusion methods {sorted(unknown)}")
        if "stat+jacreg" in self.methods and not self.gammas:
            raise ConfigError("stat+jacreg needs at least one gamma")
        for g in self.gammas:
            if not 0.0 < g <= 1.0:
                raise ConfigError(f"gamma {g} outside (0, 1]")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.perturbed_modality not in ("a", "b"):
            raise ConfigError("perturbed_modality must be 'a' or 'b'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["methods"] = list(self.methods)
        d["gammas"] = list(self.gammas)
        d["perturbations"] = [p.to_dict() for p in self.perturbations]
        return d


# -- config parsing ---------------------------------------------------------------


def _locate(text: str, section: str, key: str) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"\s*\[([^\]]+)\]", line)
        if head:
            current = head.group(1).strip()
        elif current == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return lineno
    return None


def _floats(value: str) -> tuple:
    return tuple(float(v) for v in value.replace(",", " ").split())


def _ints(value: str) -> tuple:
    return tuple(int(v) for v in value.replace(",", " ").split())


_SCHEMA = {
    "experiment": {
        "seed": int,
        "trials": int,
        "t_max": int,
        "methods": lambda v: tuple(m.strip() for m in v.split(",") if m.strip()),
        "gammas": _floats,
        "perturbed_modality": str.strip,
    },
    "data": {
        "kind": str.strip,
        "n": int,
        "jitter": float,
        "k": int,
        "dim_a": int,
        "dim_b": int,
        "separation": float,
        "train_fraction": float,
    },
    "model": {"hidden": _ints},
    "train": {
        "learning_rate": float,
        "epochs": int,
        "batch_size": int,
        "weight_init_scale": float,
    },
}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse the INI-style experiment config; errors name the offending line."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    values: dict[str, dict] = {name: {} for name in _SCHEMA}
    perturbations = []
    for section in parser.sections():
        if section == "perturb":
            for key, raw in parser.items(section):
                try:
                    perturbations.append(perturb.PerturbSpec.parse(raw))
                except (ValueError, KeyError) as exc:
                    line = _locate(text, section, key)
                    raise ConfigError(f"{source}:{line}: [{section}] {key}: {exc}") from exc
            continue
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            line = _locate(text, section, key)
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}:{line}: unknown key {key!r} in [{section}]")
            try:
                values[section][key] = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{source}:{line}: [{section}] {key} = {raw!r}: {exc}") from exc

    exp = values["experiment"]
    train_kw = dict(values["train"])
    train_kw["seed"] = exp.get("seed", 0)
    try:
        return ExperimentConfig(
            data=DataSpec(**values["data"]),
            hidden=values["model"].get("hidden", (16, 16)),
            train=nn.TrainConfig(**train_kw),
            methods=exp.get("methods", METHODS),
            gammas=exp.get("gammas", (1.0, 0.5, 0.1)),
            perturbations=tuple(perturbations),
            perturbed_modality=exp.get("perturbed_modality", "b"),
            trials=exp.get("trials", 1),
            seed=exp.get("seed", 0),
            t_max=exp.get("t_max", 1),
        )
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


# -- seeds ---------------------------------------------------------------------------


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def make_dataset(spec: DataSpec, seed: int) -> datagen.MultimodalDataset:
    if spec.kind == "two_moons":
        return datagen.two_moons(spec.n, spec.jitter, seed)
    if spec.kind == "gaussian_blobs":
        return datagen.gaussian_blobs(spec.n, spec.k, spec.dim_a, spec.dim_b, spec.separation, seed)
    raise ConfigError(f"unknown dataset kind {spec.kind!r}")


# -- a single trial ----------------------------------------------------------------


@dataclass
class TrainedPair:
    model_a: nn.MlpModel
    model_b: nn.MlpModel
    freq: np.ndarray


def train_pair(train_set: datagen.MultimodalDataset, hidden, cfg: nn.TrainConfig, seed: int) -> TrainedPair:
    models = []
    for idx, x in enumerate((train_set.xa, train_set.xb)):
        tcfg = nn.TrainConfig(
            cfg.learning_rate, cfg.epochs, cfg.batch_size, derive_seed(seed, idx), cfg.weight_init_scale
        )
        models.append(nn.fit([x.shape[1], *hidden, train_set.k], x, train_set.y, tcfg))
    return TrainedPair(models[0], models[1], fusion.estimate_freq(train_set.y, train_set.k))


def fuse_batch(method: str, za, zb, pair: TrainedPair, gamma: float, modality: str, t_max: int = 1):
    """Fused predictions for a batch; also returns ``||J W W_M||_F^2`` per sample for jacreg."""
    if method == "stat":
        return fusion.statistical_fuse(fusion.softmax(za), fusion.softmax(zb), pair.freq), None
    if method == "mean":
        return fusion.mean_fuse(fusion.softmax(za), fusion.softmax(zb)), None
    if method == "mean+conf":
        return fusion.confidence_weighted_fuse(fusion.softmax(za), fusion.softmax(zb)), None
    head_a, head_b = nn.as_head(pair.model_a, "a"), nn.as_head(pair.model_b, "b")
    cfg = jacreg.FusionConfig(gamma, t_max, modality == "a", modality == "b")
    out = np.empty_like(za)
    jac = np.empty(za.shape[0])
    for i in range(za.shape[0]):
        res = jacreg.recalibrate(za[i], zb[i], head_a, head_b, pair.freq, cfg)
        out[i] = res.p_prime
        jac[i] = res.jac_norm_sq
    return out, jac


def _accuracy(p: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.argmax(p, axis=1) == y))


def run_trial(cfg: ExperimentConfig, trial: int, pair: TrainedPair | None = None, test=None):
    """Scores of one trial keyed by ``(method, gamma, perturbation label)``."""
    seed = derive_seed(cfg.seed, trial)
    if pair is None or test is None:
        ds = make_dataset(cfg.data, derive_seed(seed, 0))
        train_set, test = ds.split(cfg.data.train_fraction, derive_seed(seed, 1))
        pair = train_pair(train_set, cfg.hidden, cfg.train, derive_seed(seed, 2))
    za_clean = nn.logits(pair.model_a, test.xa)
    zb_clean = nn.logits(pair.model_b, test.xb)
    attacked = pair.model_a if cfg.perturbed_modality == "a" else pair.model_b
    x_attacked = test.xa if cfg.perturbed_modality == "a" else test.xb

    inputs = {"none": (za_clean, zb_clean)}
    specs = {"none": perturb.PerturbSpec()}
    for idx, spec in enumerate(cfg.perturbations):
        spec = spec.with_seed(derive_seed(seed, 3, idx))
        x_noisy = perturb.apply(spec, x_attacked, attacked, test.y)
        z_noisy = nn.logits(attacked, x_noisy)
        label = spec.label()
        specs[label] = spec
        inputs[label] = (z_noisy, zb_clean) if cfg.perturbed_modality == "a" else (za_clean, z_noisy)

    scores = {}
    diagnostics = {}
    for method in cfg.methods:
        for gamma in cfg.gammas:
            for label, (za, zb) in inputs.items():
                if method != "stat+jacreg" and gamma != cfg.gammas[0]:
                    # gamma only affects jacreg
                    scores[(method, gamma, label)] = scores[(method, cfg.gammas[0], label)]
                    continue
                p, jac = fuse_batch(method, za, zb, pair, gamma, cfg.perturbed_modality, cfg.t_max)
                scores[(method, gamma, label)] = _accuracy(p, test.y)
                if jac is not None:
                    diagnostics[(gamma, label)] = (float(jac.mean()), float(jac.max()))
    return scores, diagnostics, specs


# -- aggregation and output --------------------------------------------------------


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def run_experiment(cfg: ExperimentConfig) -> dict:
    per_trial = []
    diag_trials = []
    specs = {}
    for trial in range(cfg.trials):
        scores, diagnostics, trial_specs = run_trial(cfg, trial)
        per_trial.append(scores)
        diag_trials.append(diagnostics)
        for label, spec in trial_specs.items():
            specs.setdefault(label, []).append(spec.to_dict())
    return assemble(cfg, per_trial, diag_trials, specs)


def assemble(cfg: ExperimentConfig, per_trial, diag_trials, specs) -> dict:
    labels = sorted({key[2] for key in per_trial[0]} - {"none"})
    rows = []
    for method in sorted(cfg.methods):
        for gamma in sorted(cfg.gammas, reverse=True):
            clean = [t[(method, gamma, "none")] for t in per_trial]
            for label in labels or ["none"]:
                noisy = [t[(method, gamma, label)] for t in per_trial]
                cm, cs = _mean_std(clean)
                pm, ps = _mean_std(noisy)
                rows.append(
                    {
                        "method": method,
                        "gamma": gamma,
                        "perturbation": label,
                        "perturbation_spec": specs[label][0] | {"seed_per_trial": [s["seed"] for s in specs[label]]},
                        "clean_mean": cm,
                        "clean_std": cs,
                        "perturbed_mean": pm,
                        "perturbed_std": ps,
                        "clean_per_trial": clean,
                        "perturbed_per_trial": noisy,
                    }
                )
    diagnostics = []
    for gamma in sorted(cfg.gammas, reverse=True):
        k = cfg.data.k if cfg.data.kind != "two_moons" else 2
        for label in ["none", *labels]:
            vals = [d[(gamma, label)] for d in diag_trials if (gamma, label) in d]
            if not vals:
                continue
            bound = jacreg.jacobian_bound(gamma, k)
            diagnostics.append(
                {
                    "gamma": gamma,
                    "perturbation": label,
                    "mean_jac_norm_sq": float(np.mean([v[0] for v in vals])),
                    "max_jac_norm_sq": float(np.max([v[1] for v in vals])),
                    "bound": None if math.isinf(bound) else bound,
                }
            )
    return {
        TIMESTAMP_KEY: datetime.now(timezone.utc).isoformat(),
        "config": cfg.to_dict(),
        "rows": rows,
        "bound_diagnostics": diagnostics,
    }


def without_timestamp(result: dict) -> dict:
    return {k: v for k, v in result.items() if k != TIMESTAMP_KEY}


def write_results(result: dict, out_dir, stem: str = "results") -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / f"{stem}.json"
    json_path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    csv_path = out / f"{stem}.csv"
    cols = ["method", "gamma", "perturbation", "clean_mean", "clean_std", "perturbed_mean", "perturbed_std"]
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(result["rows"])
    return json_path, csv_path


# -- gamma sweep -----------------------------------------------------------------------


def sweep_specs(template: perturb.PerturbSpec, magnitudes) -> list[perturb.PerturbSpec]:
    key = MAGNITUDE_PARAM[template.kind]
    return [
        perturb.PerturbSpec(template.kind, {**template.params, key: m}, template.seed) for m in magnitudes
    ]


def sweep_rows(result: dict, kind: str) -> list[dict]:
    """Flatten an experiment over magnitudes into accuracy-vs-magnitude rows."""
    key = MAGNITUDE_PARAM[kind]
    rows = []
    for row in result["rows"]:
        spec = row["perturbation_spec"]
        rows.append(
            {
                "method": row["method"],
                "gamma": row["gamma"],
                "kind": kind,
                "magnitude": spec["params"][key],
                "accuracy_mean": row["perturbed_mean"],
                "accuracy_std": row["perturbed_std"],
            }
        )
    rows.sort(key=lambda r: (r["method"], -r["gamma"], r["magnitude"]))
    return rows


def write_sweep_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["method", "gamma", "kind", "magnitude", "accuracy_mean", "accuracy_std"]
        )
        writer.writeheader()
        writer.writerows(rows)
    return path
