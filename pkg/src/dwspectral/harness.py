"""End-to-end experiments: train on one slice, classify the volume, sweep
Gaussian noise levels, and emit kappa-vs-noise curves."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adc import AdcConfig, adc_map
from .classifiers import (
    MlpConfig,
    SomConfig,
    classify,
    label_som,
    train_ko_adc,
    train_mlp,
    train_polynomial,
    train_som,
)
from .core_image import (
    LabelMap,
    SpectralStack,
    extract_band_samples,
    extract_samples,
    save_labelmap,
)
from .errors import ConfigurationError, FormatError, ValidationError
from .metrics import (
    MetricsReport,
    VolumeReport,
    merge_confusions,
    confusion,
    report_from_confusion,
    volumes,
)
from .physics import (
    AcquisitionParams,
    PhantomSpec,
    add_noise_to_stack,
    default_phantom_spec,
    load_phantom_spec,
    render_phantom,
)

CLASSIFIER_NAMES = ("PO", "MLP", "KO", "KO-ADC")
DEFAULT_NOISE_LEVELS = tuple(i / 100.0 for i in range(1, 21))
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
SWEEP_CSV_HEADER = "classifier,xi_max,seed,kappa,phi,v1,v2,v3,rate"


@dataclass(frozen=True)
class ExperimentConfig:
    phantom: PhantomSpec = field(default_factory=default_phantom_spec)
    acquisition: AcquisitionParams = field(default_factory=AcquisitionParams)
    adc: AdcConfig = field(default_factory=AdcConfig)
    training_slice: int = 13
    noise_levels: tuple = DEFAULT_NOISE_LEVELS
    seeds: tuple = DEFAULT_SEEDS
    classifiers: tuple = CLASSIFIER_NAMES

    def __post_init__(self):
        if not 0 <= self.training_slice < self.phantom.slices:
            raise ConfigurationError(
                f"training slice {self.training_slice} outside volume "
                f"of {self.phantom.slices} slices"
            )
        levels = tuple(float(v) for v in self.noise_levels)
        if any(not 0.0 <= v <= 0.20 for v in levels):
            raise ConfigurationError(f"noise levels must lie in [0, 0.20]: {levels}")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        names = tuple(self.classifiers)
        unknown = [c for c in names if c not in CLASSIFIER_NAMES]
        if unknown:
            raise ConfigurationError(f"unknown classifiers {unknown}")
        if not names:
            raise ConfigurationError("at least one classifier must be selected")
        object.__setattr__(self, "noise_levels", levels)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "classifiers", names)


def load_experiment_config(path) -> ExperimentConfig:
    """Read an ExperimentConfig from JSON; omitted keys take defaults and a
    phantom spec path is resolved relative to the config file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    phantom = default_phantom_spec()
    if doc.get("phantom_spec"):
        spec_path = Path(doc["phantom_spec"])
        if not spec_path.is_absolute():
            spec_path = path.parent / spec_path
        phantom = load_phantom_spec(spec_path)
    acq = AcquisitionParams(**doc["acquisition"]) if doc.get("acquisition") else AcquisitionParams()
    adc_cfg = AdcConfig(**doc["adc"]) if doc.get("adc") else AdcConfig()
    kwargs = {}
    for key in ("training_slice", "noise_levels", "seeds", "classifiers"):
        if key in doc and doc[key] is not None:
            kwargs[key] = doc[key]
    return ExperimentConfig(phantom=phantom, acquisition=acq, adc=adc_cfg, **kwargs)


@dataclass(frozen=True)
class CellResult:
    classifier: str
    xi_max: float
    seed: int
    report: MetricsReport
    volume: VolumeReport

    def sort_key(self):
        return (self.classifier, self.xi_max, self.seed)


@dataclass
class BaselineResult:
    cells: list
    models: dict  # classifier -> {seed: model}
    stacks: list
    truth: list
    ground_truth_maps: list  # PO classification of the noiseless volume


@dataclass
class SweepResult:
    cells: list

    def median_kappa(self, classifier: str) -> dict:
        """xi_max -> median kappa over seeds."""
        by_level = {}
        for cell in self.cells:
            if cell.classifier == classifier:
                by_level.setdefault(cell.xi_max, []).append(cell.report.kappa)
        return {lvl: float(np.median(ks)) for lvl, ks in sorted(by_level.items())}


def _max_workers() -> int:
    env = os.environ.get("DWSPECTRAL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"DWSPECTRAL_THREADS is not an integer: {env!r}")
    return os.cpu_count() or 1


def train_models(cfg: ExperimentConfig, stacks, truth) -> dict:
    """Train every selected classifier once per seed on the training slice.

    The polynomial net is deterministic; it is shared across seeds.
    """
    stack_t = stacks[cfg.training_slice]
    truth_t = truth[cfg.training_slice]
    samples = extract_samples(stack_t, truth_t, normalize=True)
    models = {name: {} for name in cfg.classifiers}
    po_model = None
    if "PO" in models:
        po_model = train_polynomial(samples)
        for seed in cfg.seeds:
            models["PO"][seed] = po_model
    if "MLP" in models:
        for seed in cfg.seeds:
            models["MLP"][seed] = train_mlp(samples, MlpConfig(seed=seed))
    if "KO" in models:
        for seed in cfg.seeds:
            som = train_som(samples, SomConfig(seed=seed))
            models["KO"][seed] = label_som(som, samples)
    if "KO-ADC" in models:
        adc_t = adc_map(stack_t, cfg.adc)
        adc_samples = extract_band_samples(adc_t, truth_t)
        for seed in cfg.seeds:
            models["KO-ADC"][seed] = train_ko_adc(
                adc_t, adc_samples, SomConfig(seed=seed)
            )
    return models


def _classify_volume(name: str, model, stacks, adc_cfg: AdcConfig):
    preds = []
    for stack in stacks:
        image = adc_map(stack, adc_cfg) if name == "KO-ADC" else stack
        preds.append(classify(model, image))
    return preds


def _evaluate(preds, truth) -> tuple[MetricsReport, VolumeReport]:
    cm = merge_confusions(confusion(p, t) for p, t in zip(preds, truth))
    return report_from_confusion(cm), volumes(preds)


def run_baseline(cfg: ExperimentConfig, out_dir=None) -> BaselineResult:
    """Noiseless end-to-end run: render, train, classify all slices, score
    against phantom truth; optionally writes baseline.json/csv and the
    polynomial-net ground-truth maps."""
    stacks, truth = render_phantom(cfg.phantom, cfg.acquisition)
    models = train_models(cfg, stacks, truth)
    cells = []
    pred_cache = {}
    for name in cfg.classifiers:
        for seed in cfg.seeds:
            key = (name, id(models[name][seed]))
            if key not in pred_cache:
                pred_cache[key] = _classify_volume(
                    name, models[name][seed], stacks, cfg.adc
                )
            report, volume = _evaluate(pred_cache[key], truth)
            cells.append(CellResult(name, 0.0, seed, report, volume))
    cells.sort(key=CellResult.sort_key)

    ground_truth_maps = []
    if "PO" in cfg.classifiers:
        ground_truth_maps = pred_cache[("PO", id(models["PO"][cfg.seeds[0]]))]

    result = BaselineResult(cells, models, stacks, truth, ground_truth_maps)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_cells_csv(cells, out_dir / "baseline.csv")
        (out_dir / "baseline.json").write_text(_baseline_json(cfg, cells))
        for i, lm in enumerate(ground_truth_maps):
            save_labelmap(lm, out_dir / f"po_ground_truth_{i:02d}.pgm")
    return result


def run_sweep(
    cfg: ExperimentConfig, out_dir=None, baseline: BaselineResult | None = None
) -> SweepResult:
    """Noise sweep with models trained once on the noiseless training slice.

    Each (level, seed) cell perturbs every band of every slice, recomputes
    the ADC map from the noisy bands, classifies with each trained model and
    scores against the noiseless phantom truth.
    """
    if not cfg.noise_levels:
        raise ConfigurationError("sweep needs at least one noise level")
    if baseline is None:
        stacks, truth = render_phantom(cfg.phantom, cfg.acquisition)
        models = train_models(cfg, stacks, truth)
    else:
        stacks, truth, models = baseline.stacks, baseline.truth, baseline.models

    def run_cell(level: float, seed: int):
        noisy = [add_noise_to_stack(st, level, seed) for st in stacks]
        out = []
        for name in cfg.classifiers:
            preds = _classify_volume(name, models[name][seed], noisy, cfg.adc)
            report, volume = _evaluate(preds, truth)
            out.append(CellResult(name, level, seed, report, volume))
        return out

    grid = [(lvl, seed) for lvl in cfg.noise_levels for seed in cfg.seeds]
    cells = []
    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        for chunk in pool.map(lambda args: run_cell(*args), grid):
            cells.extend(chunk)
    cells.sort(key=CellResult.sort_key)

    result = SweepResult(cells)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_cells_csv(cells, out_dir / "sweep.csv")
        (out_dir / "sweep_confusions.json").write_text(_confusions_json(cells))
        (out_dir / "kappa_vs_noise.svg").write_text(kappa_curve_svg(result, cfg))
    return result


# ---------------------------------------------------------------------------
# Output files

def _fmt(x: float) -> str:
    return format(x, ".12g")


def _write_cells_csv(cells, path) -> None:
    lines = [SWEEP_CSV_HEADER]
    for c in cells:
        rate = "" if c.volume.fluid_matter_rate is None else _fmt(c.volume.fluid_matter_rate)
        lines.append(
            ",".join(
                [
                    c.classifier,
                    _fmt(c.xi_max),
                    str(c.seed),
                    _fmt(c.report.kappa),
                    _fmt(c.report.phi),
                    _fmt(c.volume.v1),
                    _fmt(c.volume.v2),
                    _fmt(c.volume.v3),
                    rate,
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def _baseline_json(cfg: ExperimentConfig, cells) -> str:
    per_clf = {}
    for c in cells:
        entry = per_clf.setdefault(c.classifier, {"seeds": {}})
        entry["seeds"][str(c.seed)] = {
            "metrics": c.report.to_json(),
            "volumes": c.volume.to_json(),
        }
    for name, entry in per_clf.items():
        kappas = [s["metrics"]["kappa"] for s in entry["seeds"].values()]
        phis = [s["metrics"]["overall_accuracy"] for s in entry["seeds"].values()]
        entry["median_kappa"] = float(np.median(kappas))
        entry["median_phi"] = float(np.median(phis))
    doc = {
        "training_slice": cfg.training_slice,
        "seeds": list(cfg.seeds),
        "classifiers": per_clf,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _confusions_json(cells) -> str:
    rows = [
        {
            "classifier": c.classifier,
            "xi_max": c.xi_max,
            "seed": c.seed,
            "confusion_matrix": c.report.matrix.counts.tolist(),
        }
        for c in cells
    ]
    return json.dumps(rows, indent=2) + "\n"


_SVG_COLORS = {"PO": "#1f77b4", "MLP": "#d62728", "KO": "#2ca02c", "KO-ADC": "#9467bd"}


def kappa_curve_svg(result: SweepResult, cfg: ExperimentConfig) -> str:
    """Line chart of median kappa per classifier versus noise level, written
    directly as SVG so the harness needs no plotting dependency."""
    width, height = 640, 420
    ml, mr, mt, mb = 60, 160, 30, 50
    pw, ph = width - ml - mr, height - mt - mb
    levels = sorted({c.xi_max for c in result.cells})
    x_min, x_max = min(levels), max(levels)
    x_span = (x_max - x_min) or 1.0

    def sx(x):
        return ml + pw * (x - x_min) / x_span

    def sy(k):  # kappa axis fixed to [0, 1]
        return mt + ph * (1.0 - min(max(k, 0.0), 1.0))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = mt + ph * (1.0 - frac)
        parts.append(
            f'<text x="{ml - 8}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-size="12">{frac:.2f}</text>'
        )
    for lvl in levels:
        x = sx(lvl)
        parts.append(
            f'<text x="{x:.1f}" y="{mt + ph + 16}" text-anchor="middle" '
            f'font-size="10">{_fmt(lvl)}</text>'
        )
    parts.append(
        f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle" '
        f'font-size="13">maximum Gaussian noise fraction</text>'
    )
    parts.append(
        f'<text x="18" y="{mt + ph / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {mt + ph / 2})">median kappa</text>'
    )
    legend_y = mt + 10
    for name in cfg.classifiers:
        series = result.median_kappa(name)
        if not series:
            continue
        color = _SVG_COLORS.get(name, "black")
        points = " ".join(
            f"{sx(lvl):.2f},{sy(k):.2f}" for lvl, k in sorted(series.items())
        )
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<line x1="{ml + pw + 10}" y1="{legend_y}" x2="{ml + pw + 34}" '
            f'y2="{legend_y}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{ml + pw + 40}" y="{legend_y + 4}" font-size="12">{name}</text>'
        )
        legend_y += 18
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
