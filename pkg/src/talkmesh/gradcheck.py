"""Central finite-difference checks of analytic gradients."""
from dataclasses import dataclass

import numpy as np

from .errors import EpsNonPositive


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_name: str
    worst_index: tuple
    analytic: float
    numeric: float
    n_checked: int

    def __str__(self):
        return (f"max rel err {self.max_rel_error:.3e} at {self.worst_name}{list(self.worst_index)} "
                f"(analytic {self.analytic:.6e}, numeric {self.numeric:.6e}, {self.n_checked} coords)")


def grad_check(fn, params, eps=1e-5, names=None):
    """Compare ``fn``'s analytic gradients against central differences.

    ``fn(params) -> (loss, grads)`` where ``grads`` maps names to arrays shaped
    like ``params[name]``.  Relative error per coordinate is
    ``|a - f| / max(|a|, |f|, 1e-12)``; the worst coordinate is reported.
    Arrays in ``params`` are perturbed in place and restored.
    """
    if not eps > 0:
        raise EpsNonPositive(f"eps must be > 0, got {eps}")
    _, grads = fn(params)
    names = list(grads) if names is None else list(names)
    worst = (-1.0, "", (), 0.0, 0.0)
    count = 0
    for name in names:
        p = params[name]
        a = np.asarray(grads[name], dtype=np.float64).reshape(p.shape)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            fp = fn(params)[0]
            p[idx] = orig - eps
            fm = fn(params)[0]
            p[idx] = orig
            num = (fp - fm) / (2.0 * eps)
            err = abs(a[idx] - num) / max(abs(a[idx]), abs(num), 1e-12)
            count += 1
            if err > worst[0]:
                worst = (float(err), name, idx, float(a[idx]), float(num))
    return GradCheckReport(max(worst[0], 0.0), worst[1], worst[2], worst[3], worst[4], count)
