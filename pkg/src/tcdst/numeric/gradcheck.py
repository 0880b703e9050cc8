"""Analytic-vs-central-difference gradient verification."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError


@dataclass
class GradCheckReport:
    per_param: dict = field(default_factory=dict)
    rel_tolerance: float = 1e-4
    checked: int = 0

    @property
    def max_rel_error(self):
        return max(self.per_param.values(), default=0.0)

    @property
    def passed(self):
        return self.max_rel_error <= self.rel_tolerance

    def lines(self):
        for name, err in self.per_param.items():
            yield f"{name:40s} {err:.3e}"


def relative_error(analytic, numeric, floor=1e-6):
    """``|a - n| / max(|a|, |n|, floor)`` elementwise.

    The floor keeps entries whose true gradient is ~0 from dividing
    finite-difference noise by itself.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(loss_fn, params, rel_tolerance=1e-4, step=1e-5, max_checks=None, seed=0, floor=1e-6):
    """Compare ``loss_fn()``'s backward gradients with central differences.

    ``params`` maps names to float64 ``Tensor``s that ``loss_fn`` closes over.
    With ``max_checks`` set, at most that many entries per parameter are
    perturbed (chosen with a seeded generator); otherwise all of them.
    """
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    loss.backward()
    analytic = {name: np.array(p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(rel_tolerance=rel_tolerance)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_checks is not None and flat.size > max_checks:
            idx = np.sort(rng.choice(flat.size, size=max_checks, replace=False))
        numeric = np.empty(idx.size)
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + step
            up = float(loss_fn().data)
            flat[i] = orig - step
            down = float(loss_fn().data)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"non-finite loss while perturbing {name}[{i}]")
            numeric[k] = (up - down) / (2.0 * step)
        err = relative_error(analytic[name].reshape(-1)[idx], numeric, floor)
        report.per_param[name] = float(err.max()) if err.size else 0.0
        report.checked += idx.size
    return report
