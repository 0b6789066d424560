import numpy as np

from Classes.Base import Config
from Classes.Base.CustomExceptionClass import InvalidConfig, NegativeDistance, ShapeMismatch


def labels_to_classes(labels):
    """Binary match labels (1 match) to class indices (0 match, 1 non-match)."""
    labels = np.asarray(labels, dtype=np.int64)
    return np.where(labels == 1, Config.MATCH_CLASS, 1 - Config.MATCH_CLASS)


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, classes):
    """Batch-mean cross entropy of N x K logits against class indices.

    Returns ``(loss, dloss/dlogits)``; the gradient is (q - onehot) / N.
    """
    logits = np.asarray(logits)
    classes = np.asarray(classes, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != classes.shape[0]:
        raise ShapeMismatch(f"Logits {logits.shape} do not match {classes.shape[0]} labels")
    if classes.size and (classes.min() < 0 or classes.max() >= logits.shape[1]):
        raise ShapeMismatch(f"Class index outside [0, {logits.shape[1]})")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, classes]))
    grad = np.exp(shifted - log_norm[:, np.newaxis])
    grad[rows, classes] -= 1.0
    return loss, grad / n


def hinge_embedding_loss(distance, label, margin=Config.HINGE_MARGIN):
    """Per-pair loss and d loss / d distance.

    Matches pay their distance; non-matches pay ``max(0, margin - distance)``.
    The subgradient at ``distance == margin`` is 0.
    """
    if not margin > 0:
        raise InvalidConfig(f"Hinge margin must be > 0, got {margin}")
    distance = np.asarray(distance, dtype=np.float64)
    label = np.asarray(label)
    if np.any(distance < 0):
        raise NegativeDistance("Descriptor distances must be >= 0")
    if label.shape != distance.shape:
        raise ShapeMismatch(f"{label.shape} labels for {distance.shape} distances")
    match = label == 1
    loss = np.where(match, distance, np.maximum(0.0, margin - distance))
    grad = np.where(match, 1.0, np.where(distance < margin, -1.0, 0.0))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def l2_penalty(params, eta=Config.L2_ETA):
    """``(eta / 2) * sum ||w||^2`` over ``*.weight`` tensors, plus its gradient."""
    if eta < 0:
        raise InvalidConfig(f"l2 eta must be >= 0, got {eta}")
    loss, grads = 0.0, {}
    for name, value in params.items():
        if not name.endswith('.weight'):
            continue
        value = np.asarray(value, dtype=np.float64)
        loss += 0.5 * eta * float(np.sum(value * value))
        grads[name] = eta * value
    return loss, grads
