"""Numerical self-checks: feature-layer oracles, DFT oracle and gradient checks."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .features import fft_mag_layer, pow3_layer, square_layer
from .model import build_cap
from .nn import BatchNorm, Conv1D, Dense, GlobalAvgPool1D, MaxPool1D, ReLU, grad_check, softmax_xent


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<34} max_err={self.value:.3e}  tol={self.tolerance:.0e}  ({self.seconds:.2f} s)"


def _max_rel(a, b) -> float:
    """Largest ``|a - b| / |b|`` over complex samples (zero references skipped)."""
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    mag = np.abs(b)
    ok = mag > 0
    return float(np.max(np.abs(a - b)[ok] / mag[ok]))


def _to_complex(x):
    return x[..., 0].astype(np.float64) + 1j * x[..., 1].astype(np.float64)


def layer_oracle_errors(n: int = 10**6, dtype=np.float64, seed: int = 0) -> dict[str, float]:
    """Max relative error of the layer compositions against polar-form powers ``|z|^k e^{ik arg z}``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2)).astype(dtype)
    z = _to_complex(x)
    r, th = np.abs(z), np.angle(z)
    oracle = lambda k: r ** k * np.exp(1j * k * th)
    x2 = square_layer(x)
    x4 = square_layer(x2)
    paths = {"x^2": x2, "x^3": pow3_layer(x), "x^4": x4, "x^6": pow3_layer(x2), "x^8": square_layer(x4)}
    return {name: _max_rel(_to_complex(v), oracle(int(name[2:]))) for name, v in paths.items()}


def check_layer_oracle(dtype, tol, n=10**6) -> CheckResult:
    t = time.perf_counter()
    err = max(layer_oracle_errors(n, dtype).values())
    return CheckResult(f"layer oracle ({np.dtype(dtype).name})", err, tol, time.perf_counter() - t)


def naive_dft(z: np.ndarray) -> np.ndarray:
    n = z.shape[-1]
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ z


def dft_oracle_error(n: int = 1024, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    got = fft_mag_layer(x)[:, 0]
    ref = np.abs(np.fft.fftshift(naive_dft(_to_complex(x))))
    return float(np.max(np.abs(got - ref) / np.maximum(ref, 1e-12 * ref.max())))


def tone_peak_index(n: int, bin_offset: int) -> int:
    """Index of the |FFT| peak for a complex tone ``bin_offset`` bins from DC."""
    t = np.arange(n)
    z = np.exp(2j * np.pi * bin_offset * t / n)
    return int(np.argmax(fft_mag_layer(np.stack([z.real, z.imag], axis=-1))[:, 0]))


def check_dft(n=1024, tol=1e-6) -> CheckResult:
    t = time.perf_counter()
    err = dft_oracle_error(n)
    for k in (0, 1, 37, -5, -n // 2):
        if tone_peak_index(n, k) != n // 2 + k:
            err = np.inf
    return CheckResult(f"DFT oracle + tone index (N={n})", err, tol, time.perf_counter() - t)


def _layer_loss(layer, x, proj, training=True):
    def fn():
        y = layer.forward(x, training=training)
        loss = float(np.sum(y * proj))
        dx = layer.backward(proj.copy())
        grads = dict(layer.grads)
        if dx is not None:
            grads["x"] = dx
        return loss, grads
    return fn


def layer_grad_error(layer, x, seed=1) -> float:
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal(layer.forward(x, training=True).shape)
    params = dict(layer.params)
    fn = _layer_loss(layer, x, proj)
    _, grads = fn()
    if "x" in grads:
        params["x"] = x
    return grad_check(fn, params, eps=1e-5, max_entries=20, rng=rng)["max_error"]


def tiny_network(seed=0):
    return build_cap(64, 3, kinds=("TIME2", "FREQ4"), filters=(2, 3, 2, 3, 2, 4), kernel_size=3,
                     seed=seed, dtype=np.float64)


def network_grad_error(seed=0) -> float:
    rng = np.random.default_rng(seed)
    net = tiny_network(seed)
    feats = {k: rng.standard_normal((4, 64, k.channels)) for k in net.kinds}
    labels = np.array([0, 1, 2, 1])

    def fn():
        logits = net.forward(feats, training=True)
        loss, dlogits = softmax_xent(logits, labels)
        net.backward(dlogits)
        return loss, net.grads

    return grad_check(fn, net.params, eps=1e-5, max_entries=8, rng=rng)["max_error"]


def gradient_cases(seed=0):
    rng = np.random.default_rng(seed)
    f64 = np.float64
    x = rng.standard_normal((3, 16, 2))
    return {
        "Conv1D": (Conv1D(2, 3, 5, rng, f64), x),
        "BatchNorm": (BatchNorm(2, dtype=f64), x * 2 + 0.5),
        "ReLU": (ReLU(), x),
        "MaxPool1D": (MaxPool1D(2), x),
        "GlobalAvgPool1D": (GlobalAvgPool1D(), x),
        "Dense": (Dense(5, 4, rng, f64), rng.standard_normal((3, 5))),
    }


def check_gradients(tol=1e-4) -> list[CheckResult]:
    out = []
    for name, (layer, x) in gradient_cases().items():
        t = time.perf_counter()
        err = layer_grad_error(layer, x)
        out.append(CheckResult(f"gradient {name}", err, tol, time.perf_counter() - t))
    t = time.perf_counter()
    out.append(CheckResult("gradient 2-branch network", network_grad_error(), tol, time.perf_counter() - t))
    return out


def run_selftest(print_fn=print) -> list[CheckResult]:
    results = [check_layer_oracle(np.float64, 1e-10), check_layer_oracle(np.float32, 1e-5), check_dft()]
    results += check_gradients()
    for r in results:
        print_fn(r.line())
    return results
