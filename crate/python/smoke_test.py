#!/usr/bin/env python3
"""Smoke test for the Python bindings.

Builds nothing itself: expects `cargo build -p shiftshare-py [--release]` to
have produced libshiftshare.so, which this script copies next to itself as
shiftshare.so before importing.

Run from the repository root:

    cargo build -p shiftshare-py --release
    python3 python/smoke_test.py
"""

import json
import math
import os
import shutil
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)


def stage_module():
    candidates = [
        os.path.join(ROOT, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libshiftshare.so", "libshiftshare.dylib")
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit("build the extension first: cargo build -p shiftshare-py --release")
    staged = os.path.join(HERE, "shiftshare.so")
    if not os.path.exists(staged) or os.path.getmtime(staged) < os.path.getmtime(built):
        shutil.copyfile(built, staged)
    sys.path.insert(0, HERE)


stage_module()
import shiftshare  # noqa: E402


def approx(a, b, tol=1e-10):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


# Exact-fit regression on a concentrated design: y = 3x.
shares = shiftshare.SharesMatrix(
    ["r1", "r2", "r3", "r4"],
    ["s1", "s2"],
    [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]],
)
shifters = shiftshare.Shifters([1.0, -1.0])
x = shiftshare.build_shift_share(shares, shifters)
design = shiftshare.Design([3.0 * v for v in x], intercept=False)
fit = shiftshare.ols(design, shares, shifters)
approx(fit.beta_hat, 3.0)
assert max(abs(r) for r in fit.residuals) < 1e-12

# Inference dicts mirror the CLI schema.
design2 = shiftshare.Design([2.0, 1.0, -1.0, -1.0], intercept=False)
fit2 = shiftshare.ols(design2, shares, shifters)
approx(fit2.beta_hat, 1.25, 1e-12)
robust = fit2.infer("robust")
approx(robust["se"], math.sqrt(0.75) / 4.0, 1e-12)
akm = fit2.infer("akm")
approx(akm["se"], math.sqrt(0.5) / 4.0, 1e-12)
akm0 = fit2.infer("akm0")
assert akm0["ci"]["shape"] in ("interval", "union_of_two_rays", "full_line")

# Diagnostics and validation.
diag = shiftshare.diagnostics(shares)
approx(diag["t_n"], 0.0)
report = shiftshare.validate(shares, design2, shifters)
assert report["akm_feasible"] is True
assert report["violations"] == []

# The placebo engine: deterministic across worker counts.
config = {
    "m": 16,
    "seed": 7,
    "level": 0.95,
    "shares": {
        "synth": {"n": 30, "s": 6, "concentration": 1.0, "scale": [0.6, 1.0], "seed": 3}
    },
    "shifter_dgp": {"iid_normal": {"variance": 5.0}},
    "outcome": {"addon": {"region_cluster_shock": {"variance": 1.0, "clusters": None}}},
    "methods": ["robust", "akm", "akm0"],
    "controls": "intercept",
}
r1 = shiftshare.run_placebo(json.dumps(config), workers=1)
r2 = shiftshare.run_placebo(json.dumps(config), workers=4)
assert r1 == r2, "placebo report depends on worker count"
assert r1["m"] == 16
assert {m["method"] for m in r1["methods"]} == {"robust", "akm", "akm0"}

# Nonlinear estimand: concentrated shares recover beta_check.
beta, mc_se = shiftshare.estimand_nonlinear(0.4, shares, sigma2=2.0, mc_draws=5000, seed=1)
assert abs(beta - 0.4) < 4.0 * max(mc_se, 1e-9)

print("smoke test: OK")
