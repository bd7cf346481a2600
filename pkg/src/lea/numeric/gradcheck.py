"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import dataclasses
from typing import Callable, Mapping, Sequence

import numpy as np

from lea.numeric.tensor import Tensor, backward, no_grad


@dataclasses.dataclass
class CoordinateCheck:
    param: str
    index: tuple
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        """``|a - n| / max(|a|, |n|, 1e-8)``; 0 when both are exactly 0."""
        a, n = self.analytic, self.numeric
        if a == 0.0 and n == 0.0:
            return 0.0
        return abs(a - n) / max(abs(a), abs(n), 1e-8)


@dataclasses.dataclass
class GradCheckReport:
    checks: list[CoordinateCheck]
    tolerance: float
    step: float

    @property
    def max_rel_error(self) -> float:
        return max((c.rel_error for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    @property
    def params_covered(self) -> set[str]:
        return {c.param for c in self.checks}

    def worst(self, k: int = 5) -> list[CoordinateCheck]:
        return sorted(self.checks, key=lambda c: c.rel_error, reverse=True)[:k]

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"gradcheck {verdict}: {len(self.checks)} coordinates over "
                f"{len(self.params_covered)} tensors, max rel error "
                f"{self.max_rel_error:.3e} (tolerance {self.tolerance:.1e}, step {self.step:.1e})")


def _sample_coordinates(params: Mapping[str, Tensor], n_coords: int, min_per_param: int,
                        rng: np.random.Generator) -> list[tuple[str, tuple]]:
    """Pick coordinates from every tensor.

    Half of each tensor's quota favours coordinates with a nonzero analytic
    gradient so that gathered embedding rows actually get exercised.
    """
    total = sum(p.size for p in params.values())
    picks = []
    for name, p in params.items():
        quota = max(min_per_param, int(round(n_coords * p.size / total)))
        quota = min(quota, p.size)
        flat_grad = np.zeros(p.size) if p.grad is None else np.abs(p.grad).reshape(-1)
        live = np.flatnonzero(flat_grad > 0)
        chosen = set()
        if len(live):
            chosen.update(rng.choice(live, size=min(len(live), (quota + 1) // 2), replace=False).tolist())
        rest = [i for i in rng.permutation(p.size)[: quota * 2].tolist() if i not in chosen]
        chosen.update(rest[: quota - len(chosen)])
        picks.extend((name, np.unravel_index(i, p.shape)) for i in sorted(chosen))
    return picks


def gradient_check(params: Mapping[str, Tensor], loss_fn: Callable[[], Tensor], *,
                   step: float = 1e-5, tolerance: float = 1e-4, n_coords: int = 200,
                   min_per_param: int = 2, seed: int = 0,
                   required: Sequence[tuple[str, tuple]] = (),
                   oracle_dtype=np.longdouble) -> GradCheckReport:
    """Compare backprop gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must be deterministic (dropout off) and rebuild its graph from
    the current parameter values on every call.  Analytic gradients come from
    a float64 backward pass.  The finite differences are evaluated with the
    parameters widened to ``oracle_dtype`` (extended precision by default):
    in float64 the difference quotient carries roundoff of order
    ``eps * |loss| / step``, about 1e-11, which swamps coordinates whose true
    gradient is near zero (softmax is blind to key biases, for instance).
    Widening is exact, so both sides see the same parameter values.
    ``required`` coordinates are checked in addition to the sampled ones.
    """
    for p in params.values():
        if p.dtype != np.float64:
            raise TypeError("gradient checks require float64 parameters")
        p.zero_grad()
    loss = loss_fn()
    backward(loss)
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in params.items()}
    rng = np.random.default_rng(seed)
    coords = _sample_coordinates(params, n_coords, min_per_param, rng)
    sampled = set(coords)
    coords += [(n, tuple(i)) for n, i in required if (n, tuple(i)) not in sampled]
    saved = {name: p.data for name, p in params.items()}
    checks = []
    try:
        for p in params.values():
            p.data = p.data.astype(oracle_dtype)
        h = np.asarray(step, dtype=oracle_dtype)
        with no_grad():
            for name, idx in coords:
                p = params[name]
                orig = p.data[idx]
                p.data[idx] = orig + h
                up = np.asarray(loss_fn().data, dtype=oracle_dtype)
                p.data[idx] = orig - h
                down = np.asarray(loss_fn().data, dtype=oracle_dtype)
                p.data[idx] = orig
                checks.append(CoordinateCheck(name, tuple(int(i) for i in idx),
                                              float(analytic[name][idx]), float((up - down) / (2 * h))))
    finally:
        for name, p in params.items():
            p.data = saved[name]
            p.zero_grad()
    return GradCheckReport(checks, tolerance, step)
