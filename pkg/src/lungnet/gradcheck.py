"""Finite-difference verification of hand-derived backward passes.

A scalar probe loss (random projection of the layer output) is differentiated
two ways: analytically through ``backward`` and numerically with central
differences.  The reported figure is the maximum over sampled coordinates of

    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)

Callers must keep input values a few epsilon away from activation kinks
(0 and 6 for relu6); the checker documents that precondition rather than
detecting kinks.
"""

import numpy as np

from .errors import ConfigError
from .rng import TAG_CHECK, derive_rng


def _loss(forward, proj):
    out = forward()
    return float(np.sum(out.astype(np.float64) * proj))


def _central_difference(arr, c, forward, proj, epsilon):
    orig = arr.flat[c]
    arr.flat[c] = orig + epsilon
    hp = float(arr.flat[c])
    lp = _loss(forward, proj)
    arr.flat[c] = orig - epsilon
    hm = float(arr.flat[c])
    lm = _loss(forward, proj)
    arr.flat[c] = orig
    return (lp - lm) / (hp - hm)


def _max_rel_error(targets, analytic, forward, proj, epsilon, rng, coords,
                   consistency=2.5e-3):
    """Max relative error over sampled coordinates.

    A coordinate only counts when its epsilon and 2*epsilon central
    differences agree to the precision the check asserts: where they
    disagree, the difference quotient is dominated by float32 rounding
    (small-gradient coordinates) or by a kink inside the probe interval,
    and measures noise rather than the derivative.  The consistency test
    never looks at the analytic side, so a wrong backward pass cannot
    hide behind it.
    """
    worst = 0.0
    n_targets = len(targets)
    kept = 0
    attempts = 0
    while kept < coords and attempts < 4 * coords:
        attempts += 1
        t = int(rng.integers(n_targets))
        arr = targets[t][1]
        c = int(rng.integers(arr.size))
        numeric = _central_difference(arr, c, forward, proj, epsilon)
        coarse = _central_difference(arr, c, forward, proj, 2 * epsilon)
        if abs(numeric - coarse) > consistency * max(abs(numeric), abs(coarse),
                                                     1e-8):
            continue
        kept += 1
        a = float(analytic[t].flat[c])
        worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-8))
    return worst


def gradient_check(layer, x, epsilon=1e-3, rng=None, training=True, coords=40):
    """Max relative error over sampled input and parameter coordinates."""
    if epsilon <= 0:
        raise ConfigError(f"gradient_check epsilon must be positive, got {epsilon}")
    rng = rng if rng is not None else derive_rng(0, TAG_CHECK)

    out = layer.forward(x, training=training)
    proj = rng.standard_normal(out.shape).astype(out.dtype).astype(np.float64)
    grad_in = layer.backward(proj.astype(out.dtype))

    targets = [("input", x)] + [(k, v) for k, v in layer.params.items()]
    analytic = [np.asarray(grad_in, dtype=np.float64)]
    analytic += [layer.grads[k].astype(np.float64) for k, _ in targets[1:]]

    return _max_rel_error(
        targets, analytic, lambda: layer.forward(x, training=training),
        proj, epsilon, rng, coords)


def model_gradient_check(model, x, epsilon=1e-3, rng=None, coords=60,
                         training=True):
    """End-to-end check of a whole model's composed backward pass.

    The model must be free of stochastic layers (build it with dropout 0)
    and should run in float64 (``model.astype``).  The kink-free
    precondition extends to every internal relu6 here: a fresh build has
    dead channels sitting exactly on the kink, where finite differences
    measure one-sided slopes that no subgradient convention matches.
    Position the network away from kinks first, e.g. BN beta near 3 and
    gamma well below 1 so whitened pre-activations stay strictly inside
    (0, 6); ``lungnet.cli.gradcheck_suite`` shows the recipe.
    """
    if epsilon <= 0:
        raise ConfigError(f"gradient_check epsilon must be positive, got {epsilon}")
    rng = rng if rng is not None else derive_rng(0, TAG_CHECK)

    logits = model.forward(x, training=training)
    proj = rng.standard_normal(logits.shape).astype(logits.dtype).astype(np.float64)
    grad_in = model.backward(proj.astype(logits.dtype))

    targets = [("input", x)]
    analytic = [np.asarray(grad_in, dtype=np.float64)]
    for name, layer, pname in model.named_params():
        targets.append((name, layer.params[pname]))
        analytic.append(layer.grads[pname].astype(np.float64))

    return _max_rel_error(
        targets, analytic, lambda: model.forward(x, training=training),
        proj, epsilon, rng, coords)
