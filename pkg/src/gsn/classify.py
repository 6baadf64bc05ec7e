"""Concatenated atom features, softmax classifier and the training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .dictionary import Dictionary, learn_dictionary, sparse_code
from .errors import ConfigError, DomainError, ShapeError
from .gcn import AtomEncoder, GradientBundle, Tape, backward, encode_batch, init_encoder
from .numerics import SeededRng, to_float32_precision

PROB_FLOOR = 1e-12
CODE_MAX_ITERS = 500
CODE_TOL = 1e-8


@dataclass
class SoftmaxClassifier:
    weight: np.ndarray  # (Z, C)
    bias: np.ndarray  # (C,)

    @property
    def num_classes(self) -> int:
        return self.weight.shape[1]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]


def init_classifier(in_dim: int, num_classes: int, rng: SeededRng) -> SoftmaxClassifier:
    bound = math.sqrt(6.0 / (in_dim + num_classes))
    return SoftmaxClassifier(rng.uniform(-bound, bound, (in_dim, num_classes)), np.zeros(num_classes))


@dataclass
class GsnModel:
    config: PipelineConfig
    encoder: AtomEncoder
    dictionary: Dictionary
    classifier: SoftmaxClassifier
    class_names: list = field(default_factory=list)

    def parameters(self) -> dict:
        """Trainable tensors by serialized name (the dictionary is frozen)."""
        out = dict(self.encoder.parameters())
        out["clf.W"] = self.classifier.weight
        out["clf.b"] = self.classifier.bias
        return out


def count_parameters(model) -> int:
    return int(sum(np.asarray(p).size for p in model.parameters().values()))


# -- features, softmax, loss --------------------------------------------------

def concat_features(atoms, codes=None, clusters: int | None = None) -> np.ndarray:
    """Atom blocks in the given order, then code blocks when ``codes`` is given."""
    atoms = [np.asarray(a, dtype=np.float64).ravel() for a in atoms]
    if clusters is not None and len(atoms) != clusters:
        raise ShapeError(f"got {len(atoms)} atoms, config has {clusters} clusters")
    if len({a.size for a in atoms}) > 1:
        raise ShapeError(f"atoms have mixed lengths {sorted({a.size for a in atoms})}")
    parts = list(atoms)
    if codes is not None:
        codes = [np.asarray(c, dtype=np.float64).ravel() for c in codes]
        if len(codes) != len(atoms):
            raise ShapeError(f"{len(codes)} code blocks for {len(atoms)} atoms")
        if len({c.size for c in codes}) > 1:
            raise ShapeError(f"codes have mixed lengths {sorted({c.size for c in codes})}")
        parts += codes
    return np.concatenate(parts) if parts else np.zeros(0)


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - np.max(z))
    return e / e.sum()


def predict(clf: SoftmaxClassifier, f) -> tuple[int, np.ndarray]:
    """Most probable class (lowest id on ties) and the probability vector."""
    f = np.asarray(f, dtype=np.float64).ravel()
    if f.size != clf.in_dim:
        raise ShapeError(f"feature length {f.size} != classifier input {clf.in_dim}")
    probs = softmax(f @ clf.weight + clf.bias)
    return int(np.argmax(probs)), probs


def cross_entropy(probs, label: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.size:
        raise DomainError(f"class id {label} outside [0, {probs.size})")
    return float(-math.log(max(probs[label], PROB_FLOOR)))


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement.

    An epoch improves when its loss beats the best so far by at least
    ``min_delta``. The counter resets after every reduction.
    """

    def __init__(self, lr, patience=5, factor=0.5, min_delta=1e-4, min_lr=1e-6):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.min_delta = min_delta
        self.min_lr = min_lr
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, loss: float) -> bool:
        """Record one epoch; returns True if the rate was reduced."""
        if loss <= self.best - self.min_delta:
            self.best = loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            new = max(self.lr * self.factor, self.min_lr)
            reduced = new < self.lr
            self.lr = new
            return reduced
        return False


# -- differentiable forward passes --------------------------------------------

def _code_block(dictionary: Dictionary, atoms, lam, tape):
    """Sparse codes of every atom; the gradient is taken through the lasso optimality conditions."""
    dm = dictionary.atoms
    codes = np.stack([sparse_code(dm, a, lam, CODE_MAX_ITERS, CODE_TOL).alpha for a in atoms])
    if tape is None:
        return codes, None

    def grad_atoms(g_codes):
        out = np.zeros_like(atoms)
        for k in range(atoms.shape[0]):
            support = np.flatnonzero(codes[k] != 0)
            if support.size:
                ds = dm[:, support]
                out[k] = ds @ np.linalg.lstsq(ds.T @ ds, g_codes[k, support], rcond=None)[0]
        return out

    return codes, grad_atoms


def image_features(model: GsnModel, prep, tape: Tape | None = None) -> np.ndarray:
    atoms = encode_batch(model.encoder, prep.batch, tape)
    if not model.config.use_sparse_codes:
        if tape is not None:
            tape.record(lambda g, grads: g.reshape(atoms.shape))
        return atoms.ravel()
    codes, grad_codes = _code_block(model.dictionary, atoms, model.config.lam, tape)
    if tape is not None:
        def back(g, grads):
            n = atoms.size
            return g[:n].reshape(atoms.shape) + grad_codes(g[n:].reshape(codes.shape))

        tape.record(back)
    return np.concatenate([atoms.ravel(), codes.ravel()])


def classifier_loss(clf: SoftmaxClassifier, f, label: int, tape: Tape | None = None):
    """Cross-entropy of one feature vector; returns (loss, probabilities)."""
    logits = f @ clf.weight + clf.bias
    probs = softmax(logits)
    loss = cross_entropy(probs, label)
    if tape is not None:
        w = clf.weight

        def back_logits(g, grads):
            grads.add("clf.W", np.outer(f, g))
            grads.add("clf.b", g)
            return w @ g

        def back_loss(g, grads):
            if probs[label] < PROB_FLOOR:
                return np.zeros_like(probs)
            onehot = np.zeros_like(probs)
            onehot[label] = 1.0
            return g * (probs - onehot)

        tape.record(back_logits)
        tape.record(back_loss)
    return loss, probs


def sample_loss(model: GsnModel, prep, label: int, tape: Tape | None = None):
    return classifier_loss(model.classifier, image_features(model, prep, tape), label, tape)


def loss_and_grad(model: GsnModel, preps, labels) -> tuple[float, GradientBundle]:
    """Mean cross-entropy over a batch and its exact gradient."""
    total, grads = 0.0, GradientBundle()
    for prep, y in zip(preps, labels):
        tape = Tape()
        loss, _ = sample_loss(model, prep, y, tape)
        total += loss
        grads = grads.merged(backward(tape))
    n = len(preps)
    return total / n, grads.scaled(1.0 / n)


def predict_prepared(model: GsnModel, prep) -> tuple[int, np.ndarray]:
    return predict(model.classifier, image_features(model, prep))


# -- training -----------------------------------------------------------------

@dataclass
class LinearBaseline:
    """Softmax regression on mean-pooled node features."""

    classifier: SoftmaxClassifier

    def parameters(self) -> dict:
        return {"clf.W": self.classifier.weight, "clf.b": self.classifier.bias}


class _GsnTrainable:
    def __init__(self, model, preps, labels):
        self.model, self.preps, self.labels = model, preps, labels

    def parameters(self):
        return self.model.parameters()

    def loss_grad(self, idx):
        return loss_and_grad(self.model, [self.preps[i] for i in idx], [self.labels[i] for i in idx])

    def loss_pred(self, i):
        loss, probs = sample_loss(self.model, self.preps[i], self.labels[i])
        return loss, int(np.argmax(probs))


class _BaselineTrainable:
    def __init__(self, model, feats, labels):
        self.model, self.feats, self.labels = model, feats, labels

    def parameters(self):
        return self.model.parameters()

    def loss_grad(self, idx):
        total, grads = 0.0, GradientBundle()
        for i in idx:
            tape = Tape()
            loss, _ = classifier_loss(self.model.classifier, self.feats[i], self.labels[i], tape)
            total += loss
            grads = grads.merged(backward(tape))
        return total / len(idx), grads.scaled(1.0 / len(idx))

    def loss_pred(self, i):
        loss, probs = classifier_loss(self.model.classifier, self.feats[i], self.labels[i])
        return loss, int(np.argmax(probs))


def split_indices(n: int, val_fraction: float, rng: SeededRng):
    order = rng.permutation(n)
    n_val = int(round(n * val_fraction))
    if val_fraction > 0 and n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    return sorted(int(i) for i in order[n_val:]), sorted(int(i) for i in order[:n_val])


def _mean_loss_acc(trainable, idx):
    if not idx:
        return math.nan, math.nan
    out = [trainable.loss_pred(i) for i in idx]
    loss = sum(o[0] for o in out) / len(out)
    acc = sum(o[1] == trainable.labels[i] for o, i in zip(out, idx)) / len(out)
    return loss, acc


class Adam:
    """Adam update rule (beta1 0.9, beta2 0.999, eps 1e-8) applied in place."""

    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def step(self, params: dict, grads: dict, lr: float):
        for name, g in grads.items():
            params[name] -= lr * g


def make_optimizer(name: str, params: dict):
    if name == "adam":
        return Adam(params)
    if name == "sgd":
        return SGD()
    raise ConfigError(f"unknown optimizer {name!r}")


def fit(trainable, train_idx, val_idx, config: PipelineConfig, rng: SeededRng) -> list[dict]:
    """Mini-batch training with a plateau schedule; restores the best epoch."""
    params = trainable.parameters()
    opt = make_optimizer(config.optimizer, params)
    sched = PlateauScheduler(config.lr, config.patience, config.lr_factor, config.min_delta, config.min_lr)
    best_loss, best = math.inf, {k: v.copy() for k, v in params.items()}
    log = []
    for epoch in range(1, config.max_epochs + 1):
        lr = sched.lr
        order = [train_idx[i] for i in rng.permutation(len(train_idx))]
        for start in range(0, len(order), config.batch_size):
            _, grads = trainable.loss_grad(order[start:start + config.batch_size])
            opt.step(params, grads, lr)
        train_loss, _ = _mean_loss_acc(trainable, train_idx)
        val_loss, val_acc = _mean_loss_acc(trainable, val_idx)
        monitor = val_loss if val_idx else train_loss
        if monitor < best_loss:
            best_loss = monitor
            best = {k: v.copy() for k, v in params.items()}
        sched.step(monitor)
        log.append({"epoch": epoch, "lr": lr, "train_loss": train_loss,
                    "val_loss": val_loss, "val_accuracy": val_acc})
    if log:
        for name, value in best.items():
            params[name][...] = value
    return log


def _check_labels(labels, num_classes):
    if len(labels) == 0:
        raise ConfigError("training needs at least one sample")
    if len(set(labels)) < 2:
        raise ConfigError("training needs at least two classes")
    if min(labels) < 0 or max(labels) >= num_classes:
        raise ConfigError(f"labels must lie in [0, {num_classes})")


def _quantize(params: dict):
    for value in params.values():
        value[...] = to_float32_precision(value)


def init_model(preps, labels, config: PipelineConfig, class_names) -> tuple[GsnModel, list[int], list[int], SeededRng]:
    """Initialized GCN, dictionary learned from the initial atoms, fresh classifier."""
    rng = SeededRng(config.seed)
    train_idx, val_idx = split_indices(len(preps), config.val_fraction, rng.spawn(1))
    in_dim = preps[0].batch.features.shape[1]
    encoder = init_encoder(in_dim, config.gcn_widths, rng.spawn(2), config.mode, config.readout)
    atoms = np.vstack([encode_batch(encoder, preps[i].batch) for i in train_idx]).T
    fit_ = learn_dictionary(atoms, config.atoms, config.lam, config.dict_rounds, seed=config.seed)
    dictionary = Dictionary(to_float32_precision(fit_.dictionary.atoms))
    clf = init_classifier(config.feature_length(), len(class_names), rng.spawn(3))
    model = GsnModel(config, encoder, dictionary, clf, list(class_names))
    return model, train_idx, val_idx, rng.spawn(4)


def train(preps, labels, config: PipelineConfig, class_names) -> tuple[GsnModel, list[dict]]:
    """Staged training: dictionary from initial atoms (frozen), then GCN + classifier on cross-entropy."""
    labels = [int(y) for y in labels]
    _check_labels(labels, len(class_names))
    model, train_idx, val_idx, rng = init_model(preps, labels, config, class_names)
    log = fit(_GsnTrainable(model, preps, labels), train_idx, val_idx, config, rng)
    _quantize(model.parameters())
    return model, log


def train_baseline(preps, labels, config: PipelineConfig, num_classes: int) -> tuple[LinearBaseline, list[dict]]:
    """Linear softmax on mean-pooled node features with the same split and schedule."""
    labels = [int(y) for y in labels]
    _check_labels(labels, num_classes)
    rng = SeededRng(config.seed)
    train_idx, val_idx = split_indices(len(preps), config.val_fraction, rng.spawn(1))
    feats = [p.global_feature for p in preps]
    model = LinearBaseline(init_classifier(feats[0].size, num_classes, rng.spawn(3)))
    log = fit(_BaselineTrainable(model, feats, labels), train_idx, val_idx, config, rng.spawn(4))
    return model, log


# -- evaluation -----------------------------------------------------------------

def metrics_from_predictions(predictions, labels, num_classes: int, class_names=None) -> dict:
    if len(labels) == 0:
        raise ConfigError("cannot evaluate an empty dataset")
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    for p, y in zip(predictions, labels):
        conf[y, p] += 1
    correct = int(np.trace(conf))
    names = class_names or [str(c) for c in range(num_classes)]
    per_class = []
    for c in range(num_classes):
        predicted, support = int(conf[:, c].sum()), int(conf[c, :].sum())
        per_class.append({
            "class": names[c],
            "precision": conf[c, c] / predicted if predicted else 0.0,
            "recall": conf[c, c] / support if support else 0.0,
            "support": support,
        })
    return {"accuracy": correct / len(labels), "correct": correct, "total": len(labels),
            "per_class": per_class, "confusion": conf.tolist()}


def evaluate(model: GsnModel, preps, labels) -> dict:
    preds = [predict_prepared(model, p)[0] for p in preps]
    return metrics_from_predictions(preds, [int(y) for y in labels], len(model.class_names), model.class_names)


def evaluate_baseline(model: LinearBaseline, preps, labels) -> dict:
    preds = [predict(model.classifier, p.global_feature)[0] for p in preps]
    return metrics_from_predictions(preds, [int(y) for y in labels], model.classifier.num_classes)
