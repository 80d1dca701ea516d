"""SGD, Adam, and layer-wise adaptive rate scaling behind one step interface.

Update rules, per named parameter tensor w with gradient g:

* sgd:   v <- momentum * v + g;  w <- w - lr * v
* adam:  first/second moments with bias correction; the epsilon term is
  scaled by sqrt(1 - beta2^t), so the first step is exactly
  lr * g / (|g| + eps * sqrt(1 - beta2))
* lars:  local = trust * ||w|| / (||g|| + weight_decay * ||w||), falling
  back to local = 1 when either norm is zero;
  w <- w - lr * local * (g + weight_decay * w)

With nonzero weight_decay, sgd and adam fold ``weight_decay * w`` into the
gradient before everything else. A non-finite gradient on any parameter
aborts the whole step before any parameter is touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor

OPTIMIZER_KINDS = ("sgd", "adam", "lars")


class OptimizerError(ValueError):
    """Bad optimizer configuration or unusable gradients."""


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd"
    lr: float = 1e-3
    momentum: float = 0.9
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    trust_coefficient: float = 1e-3
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise OptimizerError(
                f"kind must be one of {OPTIMIZER_KINDS}, got {self.kind!r}")
        if not self.lr > 0:
            raise OptimizerError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise OptimizerError(f"momentum must be in [0,1), got {self.momentum}")
        b1, b2 = self.betas
        if not (0.0 < b1 < 1.0 and 0.0 < b2 < 1.0):
            raise OptimizerError(f"betas must be in (0,1), got {self.betas}")
        if not self.eps > 0:
            raise OptimizerError(f"eps must be > 0, got {self.eps}")
        if not self.trust_coefficient > 0:
            raise OptimizerError(
                f"trust_coefficient must be > 0, got {self.trust_coefficient}")
        if self.weight_decay < 0:
            raise OptimizerError(
                f"weight_decay must be >= 0, got {self.weight_decay}")


def zero_grad(params: dict[str, Tensor]) -> None:
    """Clear all gradients to zero (idempotent)."""
    for t in params.values():
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        else:
            t.grad.fill(0)


class Optimizer:
    """Shared gradient validation and in-place update dispatch."""

    def __init__(self, config: OptimizerConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    def zero_grad(self) -> None:
        zero_grad(self.params)

    def _checked_grads(self) -> dict[str, np.ndarray]:
        grads = {}
        for name, t in self.params.items():
            if t.grad is None:
                raise OptimizerError(f"parameter {name!r} has no gradient; "
                                     f"run backward() first")
            if not np.all(np.isfinite(t.grad)):
                raise OptimizerError(
                    f"non-finite gradient on {name!r}; step aborted")
            grads[name] = t.grad
        return grads

    def step(self) -> None:
        grads = self._checked_grads()
        for name, t in self.params.items():
            self._update(name, t.data, grads[name])

    def _update(self, name: str, w: np.ndarray, g: np.ndarray) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, config, params):
        super().__init__(config, params)
        self._velocity: dict[str, np.ndarray] = {}

    def _update(self, name, w, g):
        cfg = self.config
        if cfg.weight_decay:
            g = g + cfg.weight_decay * w
        if cfg.momentum:
            v = self._velocity.get(name)
            if v is None:
                v = self._velocity[name] = np.zeros_like(w)
            v *= cfg.momentum
            v += g
            g = v
        w -= cfg.lr * g


class Adam(Optimizer):
    def __init__(self, config, params):
        super().__init__(config, params)
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t = 0

    def step(self):
        grads = self._checked_grads()
        self._t += 1
        for name, t in self.params.items():
            self._update(name, t.data, grads[name])

    def _update(self, name, w, g):
        cfg = self.config
        b1, b2 = cfg.betas
        if cfg.weight_decay:
            g = g + cfg.weight_decay * w
        m = self._m.setdefault(name, np.zeros_like(w))
        v = self._v.setdefault(name, np.zeros_like(w))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        bc1 = 1.0 - b1 ** self._t
        bc2 = 1.0 - b2 ** self._t
        denom = np.sqrt(v / bc2) + cfg.eps * np.sqrt(bc2)
        w -= cfg.lr * (m / bc1) / denom


class Lars(Optimizer):
    def _update(self, name, w, g):
        cfg = self.config
        w_norm = float(np.sqrt(np.sum(w.astype(np.float64) ** 2)))
        g_norm = float(np.sqrt(np.sum(g.astype(np.float64) ** 2)))
        if w_norm > 0.0 and g_norm > 0.0:
            local = cfg.trust_coefficient * w_norm / (
                g_norm + cfg.weight_decay * w_norm)
        else:
            local = 1.0
        if cfg.weight_decay:
            g = g + cfg.weight_decay * w
        w -= (cfg.lr * local) * g


_KINDS = {"sgd": SGD, "adam": Adam, "lars": Lars}


def make_optimizer(config: OptimizerConfig,
                   params: dict[str, Tensor]) -> Optimizer:
    return _KINDS[config.kind](config, params)
