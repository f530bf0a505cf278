"""The four classification methods behind one train/classify contract:
degree-2 polynomial network, multilayer perceptron, multispectral Kohonen
SOM, and the monospectral SOM applied to the ADC map."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core_image import (
    FULL_SCALE,
    Band,
    ClassLabel,
    LabelMap,
    SampleSet,
    SpectralStack,
)
from .errors import (
    ContractError,
    DegenerateInputError,
    FormatError,
    LabelingError,
    NumericalError,
    TrainingError,
    ValidationError,
)

N_CLASSES = 3
MLP_HIDDEN = 60
SOM_NEURONS = 3

# Fraction of SOM iterations during which the chain neighborhood has radius
# 1 (neighbors updated at half strength); afterwards pure winner-take-all.
SOM_NEIGHBOR_PHASE = 0.25
SOM_NEIGHBOR_WEIGHT = 0.5


def expand_quadratic(x: np.ndarray) -> np.ndarray:
    """Degree-2 monomials of a 3-vector (or rows of an (n, 3) matrix), in
    the fixed order [1, x1, x2, x3, x1^2, x2^2, x3^2, x1x2, x1x3, x2x3]."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != 3:
        raise ContractError(f"quadratic expansion expects 3 features, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("quadratic expansion requires finite input")
    x1, x2, x3 = arr[:, 0], arr[:, 1], arr[:, 2]
    out = np.stack(
        [
            np.ones_like(x1),
            x1,
            x2,
            x3,
            x1 * x1,
            x2 * x2,
            x3 * x3,
            x1 * x2,
            x1 * x3,
            x2 * x3,
        ],
        axis=1,
    )
    return out[0] if single else out


def _one_hot(labels: np.ndarray, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    t = np.full((labels.shape[0], N_CLASSES), low)
    t[np.arange(labels.shape[0]), labels - 1] = high
    return t


# ---------------------------------------------------------------------------
# Degree-2 polynomial network (hyperquadric discriminants)

@dataclass(frozen=True)
class PolyModel:
    """3x10 weight matrix mapping quadratic features to class scores."""

    weights: np.ndarray
    normalize: bool = True
    feature_dim: int = 3

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (N_CLASSES, 10):
            raise ValidationError(f"polynomial weights must be 3x10, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("polynomial weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def scores(self, features: np.ndarray) -> np.ndarray:
        return expand_quadratic(features) @ self.weights.T


def train_polynomial(samples: SampleSet, normalize: bool = True) -> PolyModel:
    """Ridge-regularized least-squares fit of one-hot targets against the
    quadratic feature expansion; fully deterministic."""
    if len(samples) < 10:
        raise ValidationError(f"need at least 10 samples, got {len(samples)}")
    if np.unique(samples.labels).size < 2:
        raise DegenerateInputError("training set must span at least 2 classes")
    if samples.feature_dim != 3:
        raise ContractError(
            f"polynomial net expects 3 features, got {samples.feature_dim}"
        )
    phi = expand_quadratic(samples.features)
    targets = _one_hot(samples.labels)
    gram = phi.T @ phi
    lam = 1e-8 * np.trace(gram) / gram.shape[0]
    try:
        weights = np.linalg.solve(
            gram + lam * np.eye(gram.shape[0]), phi.T @ targets
        ).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"normal equations unsolvable: {exc}") from exc
    if not np.all(np.isfinite(weights)):
        raise NumericalError("polynomial fit produced non-finite weights")
    return PolyModel(weights, normalize=normalize)


# ---------------------------------------------------------------------------
# Multilayer perceptron, 3-60-3, logistic sigmoid, online backpropagation

@dataclass(frozen=True)
class MlpConfig:
    eta0: float = 0.2
    target_error: float = 0.05
    max_epochs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValidationError(f"eta0 must be > 0, got {self.eta0}")
        if not 0 < self.target_error < 1:
            raise ValidationError(
                f"target error must lie in (0, 1), got {self.target_error}"
            )
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be >= 1, got {self.max_epochs}")


@dataclass(frozen=True)
class MlpModel:
    """hidden_weights (60, 4) and output_weights (3, 61); the last column of
    each layer is its bias."""

    hidden_weights: np.ndarray
    output_weights: np.ndarray
    config: MlpConfig = field(default_factory=MlpConfig)
    normalize: bool = True
    feature_dim: int = 3
    epochs_run: int = 0

    def __post_init__(self):
        wh = np.asarray(self.hidden_weights, dtype=np.float64)
        wo = np.asarray(self.output_weights, dtype=np.float64)
        if wh.shape != (MLP_HIDDEN, 4):
            raise ValidationError(f"hidden weights must be 60x4, got {wh.shape}")
        if wo.shape != (N_CLASSES, MLP_HIDDEN + 1):
            raise ValidationError(f"output weights must be 3x61, got {wo.shape}")
        if not (np.all(np.isfinite(wh)) and np.all(np.isfinite(wo))):
            raise ValidationError("MLP weights must be finite")
        wh.setflags(write=False)
        wo.setflags(write=False)
        object.__setattr__(self, "hidden_weights", wh)
        object.__setattr__(self, "output_weights", wo)

    def scores(self, features: np.ndarray) -> np.ndarray:
        return mlp_forward(self.hidden_weights, self.output_weights, features)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def mlp_forward(wh: np.ndarray, wo: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Batch forward pass; returns (n, 3) sigmoid outputs."""
    x = np.asarray(features, dtype=np.float64)
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    h = _sigmoid(xb @ wh.T)
    hb = np.hstack([h, np.ones((h.shape[0], 1))])
    return _sigmoid(hb @ wo.T)


def mlp_loss_and_gradients(
    wh: np.ndarray, wo: np.ndarray, features: np.ndarray, targets: np.ndarray
):
    """Summed squared-error loss 0.5*sum((y-t)^2) and its exact gradients.

    Shared by training (per-sample calls) and the finite-difference check.
    """
    x = np.asarray(features, dtype=np.float64)
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    h = _sigmoid(xb @ wh.T)
    hb = np.hstack([h, np.ones((h.shape[0], 1))])
    y = _sigmoid(hb @ wo.T)
    err = y - targets
    loss = 0.5 * float(np.sum(err * err))
    d_out = err * y * (1.0 - y)
    d_hid = (d_out @ wo[:, :MLP_HIDDEN]) * h * (1.0 - h)
    grad_wo = d_out.T @ hb
    grad_wh = d_hid.T @ xb
    return loss, grad_wh, grad_wo


def train_mlp(samples: SampleSet, cfg: MlpConfig, normalize: bool = True) -> MlpModel:
    """Online backpropagation with per-epoch shuffling and linearly decaying
    learning rate; stops when the epoch mean-squared error reaches the
    configured target."""
    x = samples.features
    if samples.feature_dim != 3:
        raise ContractError(f"MLP expects 3 features, got {samples.feature_dim}")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValidationError("MLP features must be normalized into [0, 1]")
    if np.unique(samples.labels).size < 2:
        raise DegenerateInputError("training set must span at least 2 classes")
    targets = _one_hot(samples.labels, low=0.1, high=0.9)

    rng = np.random.default_rng(cfg.seed)
    wh = rng.uniform(-0.5, 0.5, size=(MLP_HIDDEN, 4))
    wo = rng.uniform(-0.5, 0.5, size=(N_CLASSES, MLP_HIDDEN + 1))

    n = x.shape[0]
    xb = np.hstack([x, np.ones((n, 1))])
    epochs_run = cfg.max_epochs
    for epoch in range(cfg.max_epochs):
        eta = cfg.eta0 * (1.0 - epoch / cfg.max_epochs)
        order = rng.permutation(n)
        sq_err = 0.0
        for idx in order:
            xi = xb[idx]
            ti = targets[idx]
            h = _sigmoid(wh @ xi)
            hb = np.append(h, 1.0)
            y = _sigmoid(wo @ hb)
            err = y - ti
            sq_err += float(err @ err)
            d_out = err * y * (1.0 - y)
            d_hid = (wo[:, :MLP_HIDDEN].T @ d_out) * h * (1.0 - h)
            wo -= eta * np.outer(d_out, hb)
            wh -= eta * np.outer(d_hid, xi)
        mse = sq_err / (n * N_CLASSES)
        if not np.isfinite(mse):
            raise TrainingError(f"MLP diverged at epoch {epoch}")
        if mse <= cfg.target_error:
            epochs_run = epoch + 1
            break
    return MlpModel(wh, wo, config=cfg, normalize=normalize, epochs_run=epochs_run)


# ---------------------------------------------------------------------------
# Kohonen self-organizing map, 1-D chain of 3 neurons

@dataclass(frozen=True)
class SomConfig:
    eta0: float = 0.1
    max_iters: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValidationError(f"eta0 must be > 0, got {self.eta0}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class SomModel:
    """Three weight vectors plus, after labeling, their class assignment."""

    neurons: np.ndarray
    class_of_neuron: tuple | None = None
    config: SomConfig = field(default_factory=SomConfig)
    normalize: bool = True

    def __post_init__(self):
        w = np.asarray(self.neurons, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != SOM_NEURONS:
            raise ValidationError(f"SOM needs exactly 3 neurons, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("SOM neurons must be finite")
        if self.class_of_neuron is not None:
            labels = tuple(ClassLabel(c) for c in self.class_of_neuron)
            if len(labels) != SOM_NEURONS:
                raise ValidationError("class_of_neuron must cover all 3 neurons")
            object.__setattr__(self, "class_of_neuron", labels)
        w.setflags(write=False)
        object.__setattr__(self, "neurons", w)

    @property
    def feature_dim(self) -> int:
        return self.neurons.shape[1]

    def winners(self, features: np.ndarray) -> np.ndarray:
        """Index of the nearest neuron for each feature row."""
        x = np.asarray(features, dtype=np.float64)
        d2 = ((x[:, None, :] - self.neurons[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


def train_som(
    samples: SampleSet, cfg: SomConfig, normalize: bool = True
) -> SomModel:
    """Competitive training on a 3-neuron chain; labels in ``samples`` are
    ignored. Neurons start at 3 distinct seeded training samples; updates
    are winner-take-all with a radius-1 neighborhood during the early
    fraction of iterations and a linearly decaying learning rate."""
    x = samples.features
    n = x.shape[0]
    if n < SOM_NEURONS:
        raise DegenerateInputError(f"need at least 3 samples, got {n}")
    if np.unique(x, axis=0).shape[0] < SOM_NEURONS:
        raise DegenerateInputError("need at least 3 distinct samples")

    rng = np.random.default_rng(cfg.seed)
    neurons = []
    for idx in rng.permutation(n):
        cand = x[idx]
        if all(not np.array_equal(cand, w) for w in neurons):
            neurons.append(cand.copy())
        if len(neurons) == SOM_NEURONS:
            break
    w = np.stack(neurons)

    neighbor_cutoff = int(SOM_NEIGHBOR_PHASE * cfg.max_iters)
    for t in range(cfg.max_iters):
        xi = x[rng.integers(n)]
        eta = cfg.eta0 * (1.0 - t / cfg.max_iters)
        win = int(np.argmin(((w - xi) ** 2).sum(axis=1)))
        w[win] += eta * (xi - w[win])
        if t < neighbor_cutoff:
            for j in (win - 1, win + 1):
                if 0 <= j < SOM_NEURONS:
                    w[j] += eta * SOM_NEIGHBOR_WEIGHT * (xi - w[j])
    return SomModel(w, config=cfg, normalize=normalize)


def label_som(model: SomModel, samples: SampleSet) -> SomModel:
    """Label each neuron by majority vote over the samples it wins; ties go
    to the lower class integer."""
    if samples.feature_dim != model.feature_dim:
        raise ContractError(
            f"samples have {samples.feature_dim} features, "
            f"model expects {model.feature_dim}"
        )
    winners = model.winners(samples.features)
    assignment = []
    for j in range(SOM_NEURONS):
        won = samples.labels[winners == j]
        if won.size == 0:
            raise LabelingError(f"neuron {j} wins no samples; cannot label it")
        counts = np.bincount(won, minlength=len(ClassLabel) + 1)
        assignment.append(ClassLabel(int(np.argmax(counts))))
    return SomModel(
        model.neurons,
        class_of_neuron=tuple(assignment),
        config=model.config,
        normalize=model.normalize,
    )


def train_ko_adc(
    adc: Band, truth_samples: SampleSet, cfg: SomConfig
) -> SomModel:
    """Monospectral SOM over scalar diffusion values: unsupervised training
    followed by majority-vote labeling."""
    if truth_samples.feature_dim != 1:
        raise ContractError(
            f"ADC samples must be scalar, got dim {truth_samples.feature_dim}"
        )
    model = train_som(truth_samples, cfg, normalize=False)
    return label_som(model, truth_samples)


# ---------------------------------------------------------------------------
# Shared classification entry point

Model = PolyModel | MlpModel | SomModel


def _input_features(model: Model, image: SpectralStack | Band) -> np.ndarray:
    if isinstance(image, SpectralStack):
        feats = image.pixel_features()
    else:
        feats = image.data.reshape(-1, 1)
    if feats.shape[1] != model.feature_dim:
        raise ContractError(
            f"model expects {model.feature_dim} features, "
            f"input provides {feats.shape[1]}"
        )
    if model.normalize:
        feats = feats / FULL_SCALE
    return feats


def classify(model: Model, image: SpectralStack | Band) -> LabelMap:
    """Per-pixel class decision: argmax of class scores for the polynomial
    and MLP models, nearest-neuron label for the SOM. Score ties break
    toward the lower class integer."""
    feats = _input_features(model, image)
    if isinstance(model, SomModel):
        if model.class_of_neuron is None:
            raise ContractError("SOM model must be labeled before classification")
        winners = model.winners(feats)
        lut = np.array([int(c) for c in model.class_of_neuron])
        labels = lut[winners]
    else:
        labels = np.argmax(model.scores(feats), axis=1) + 1
    return LabelMap(image.width, image.height, labels.reshape(image.height, image.width))


# ---------------------------------------------------------------------------
# Model serialization (JSON)

def model_to_json(model: Model) -> dict:
    if isinstance(model, PolyModel):
        return {
            "kind": "po",
            "weights": model.weights.tolist(),
            "normalize": model.normalize,
        }
    if isinstance(model, MlpModel):
        return {
            "kind": "mlp",
            "hidden_weights": model.hidden_weights.tolist(),
            "output_weights": model.output_weights.tolist(),
            "normalize": model.normalize,
            "epochs_run": model.epochs_run,
            "config": {
                "eta0": model.config.eta0,
                "target_error": model.config.target_error,
                "max_epochs": model.config.max_epochs,
                "seed": model.config.seed,
            },
        }
    if isinstance(model, SomModel):
        return {
            "kind": "som",
            "neurons": model.neurons.tolist(),
            "class_of_neuron": (
                None
                if model.class_of_neuron is None
                else [int(c) for c in model.class_of_neuron]
            ),
            "normalize": model.normalize,
            "config": {
                "eta0": model.config.eta0,
                "max_iters": model.config.max_iters,
                "seed": model.config.seed,
            },
        }
    raise ContractError(f"unknown model type {type(model).__name__}")


def model_from_json(doc: dict) -> Model:
    kind = doc.get("kind")
    if kind == "po":
        return PolyModel(np.array(doc["weights"]), normalize=doc["normalize"])
    if kind == "mlp":
        return MlpModel(
            np.array(doc["hidden_weights"]),
            np.array(doc["output_weights"]),
            config=MlpConfig(**doc["config"]),
            normalize=doc["normalize"],
            epochs_run=doc.get("epochs_run", 0),
        )
    if kind == "som":
        return SomModel(
            np.array(doc["neurons"]),
            class_of_neuron=doc["class_of_neuron"],
            config=SomConfig(**doc["config"]),
            normalize=doc["normalize"],
        )
    raise FormatError(f"unknown model kind {kind!r}")


def save_model(model: Model, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model), indent=2) + "\n")


def load_model(path) -> Model:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_json(doc)
