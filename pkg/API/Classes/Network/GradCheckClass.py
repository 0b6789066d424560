import logging

import numpy as np

from Classes.Base.CustomExceptionClass import NonDifferentiablePoint

logger = logging.getLogger(__name__)

STEP = 1e-5
KINK_DISTANCE = 1e-4
MAX_RESAMPLES = 10


def project(forward, backward, seed=0):
    """Turn a layer into a scalar operation for grad_check.

    ``forward(*inputs) -> (out, cache)`` and ``backward(dout, cache) -> grads``
    (one gradient per input, tuple or single array). The scalar is
    ``sum(out * G)`` for a fixed random G drawn on first use.
    """
    upstream = {}

    def operation(*inputs):
        out, cache = forward(*inputs)
        if 'G' not in upstream:
            upstream['G'] = np.random.default_rng(seed).standard_normal(np.shape(out))
        grads = backward(upstream['G'], cache)
        if not isinstance(grads, tuple):
            grads = (grads,)
        return float(np.sum(out * upstream['G'])), grads[:len(inputs)]

    return operation


def grad_check(operation, input_shapes, tolerance=1e-6, seed=0, kink=None, scale=1.0):
    """Compare analytic gradients with central differences at a random point.

    ``operation(*inputs) -> (scalar, grads)`` is evaluated in float64 at
    inputs drawn from a seeded normal. ``kink(*inputs)`` may return the
    distance to the nearest non-differentiable point; points closer than
    1e-4 are redrawn, at most 10 times. Returns the max over all input
    entries of ``|analytic - numeric| / max(1, |numeric|)``.
    """
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RESAMPLES + 1):
        inputs = [scale * rng.standard_normal(shape) for shape in input_shapes]
        if kink is None or kink(*inputs) >= KINK_DISTANCE:
            break
    else:
        raise NonDifferentiablePoint(f"Every sampled point lay within {KINK_DISTANCE} of a kink")

    _, analytic = operation(*[x.copy() for x in inputs])
    worst = 0.0
    for k, x in enumerate(inputs):
        grad = np.asarray(analytic[k], dtype=np.float64)
        for idx in np.ndindex(x.shape):
            original = x[idx]
            x[idx] = original + STEP
            plus, _ = operation(*[y.copy() for y in inputs])
            x[idx] = original - STEP
            minus, _ = operation(*[y.copy() for y in inputs])
            x[idx] = original
            numeric = (plus - minus) / (2.0 * STEP)
            worst = max(worst, abs(grad[idx] - numeric) / max(1.0, abs(numeric)))
    if worst > tolerance:
        logger.warning("Gradient check error %.3e exceeds tolerance %.1e", worst, tolerance)
    return worst
