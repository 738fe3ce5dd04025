"""
Finite-difference checks of every trainable operation
=====================================================

Each check compares the analytic gradient of a scalar probe against
central differences on toy shapes.
"""
import time

from talkmesh.checks import REGISTRY

t0 = time.perf_counter()
for name, check in REGISTRY.items():
    r = check()
    print("%-14s max rel err %.2e  %s" % (name, r.max_rel_error, "ok" if r.max_rel_error < 1e-4 else "FAIL"))
print("%.1fs" % (time.perf_counter() - t0))
