"""Loss, optimizer step and finite-difference gradient checking."""

from __future__ import annotations

import numpy as np


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. ``logits``.

    ``logits`` is ``(classes,)`` or ``(batch, classes)``; the gradient of the
    batch mean is ``(p - one_hot) / batch``.
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    if single:
        logits = logits[None]
    labels = np.atleast_1d(np.asarray(labels))
    b, classes = logits.shape
    if labels.shape != (b,) or labels.min() < 0 or labels.max() >= classes:
        raise ValueError("labels must be integers in [0, classes)")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(b), labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[np.arange(b), labels] -= 1
    grad /= b
    return loss, (grad[0] if single else grad)


def adam_step(param, grad, m, v, t, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update in place; ``t`` is the 1-based step number."""
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype)
    return param


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict):
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            adam_step(p, g, self.m[name], self.v[name], self.t, self.lr, self.beta1, self.beta2, self.eps)

    def state(self) -> dict:
        return {"t": self.t, "lr": self.lr, "m": self.m, "v": self.v}


def relative_error(a, b, floor=1e-5) -> float:
    """Norm-wise relative difference; ``floor`` keeps exactly-zero gradients from dividing noise by noise."""
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)


def grad_check(loss_and_grads, params: dict, eps=1e-5, max_entries=25, rng=None):
    """Compare analytic gradients against central differences.

    ``loss_and_grads()`` must return ``(loss, grads)`` for the current values
    of ``params`` (name -> array, perturbed in place). At most ``max_entries``
    randomly chosen entries of each tensor are checked. Returns
    ``{"errors": {name: rel_err}, "max_error": float}``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    _, analytic = loss_and_grads()
    analytic = {k: np.array(v, copy=True) for k, v in analytic.items()}
    errors = {}
    for name, p in params.items():
        flat = p.reshape(-1)
        picks = np.arange(flat.size)
        if flat.size > max_entries:
            picks = rng.choice(flat.size, max_entries, replace=False)
        numeric = np.empty(picks.size)
        for j, idx in enumerate(picks):
            orig = flat[idx]
            flat[idx] = orig + eps
            plus, _ = loss_and_grads()
            flat[idx] = orig - eps
            minus, _ = loss_and_grads()
            flat[idx] = orig
            numeric[j] = (plus - minus) / (2 * eps)
        errors[name] = relative_error(analytic[name].reshape(-1)[picks], numeric)
    return {"errors": errors, "max_error": max(errors.values()) if errors else 0.0}
