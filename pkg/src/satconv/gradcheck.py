"""Finite-difference verification of the analytic backward pass.

Every check compares an analytic derivative against a central difference of
the forward pass contracted with a fixed cotangent. The forward output is
piecewise multilinear in each box parameter, with breakpoints where a
sample coordinate crosses the integer lattice, so configurations are nudged
to keep all sample coordinates a safe margin away from integers; inside a
cell the central difference is then exact up to rounding noise. Comparisons
use relative error with a small absolute agreement floor for derivatives
that are legitimately zero (pixels outside a box's coverage), where the
difference quotient returns pure rounding noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .boxes import BoxVariant, init_params
from .layer import BoxConvLayer

CATEGORIES = (
    "theta_xl",
    "theta_xh",
    "theta_yl",
    "theta_yh",
    "split_x",
    "split_y",
    "weight",
    "input",
    "input_adjoint",
)

ABS_AGREEMENT_FLOOR = 1e-7


def rel_err(a: float, b: float) -> float:
    if abs(a - b) < ABS_AGREEMENT_FLOOR:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


@dataclass
class GradCheckReport:
    tolerance: float
    n_configs: int
    max_errors: dict = field(default_factory=dict)
    n_checks: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, category: str, err: float, where: str) -> None:
        self.max_errors[category] = max(self.max_errors.get(category, 0.0), err)
        self.n_checks[category] = self.n_checks.get(category, 0) + 1
        if err >= self.tolerance:
            self.failures.append(f"{category} at {where}: rel err {err:.3e}")


def _nudge_theta(t: float, k: int, shift: float = 0.0) -> float:
    """Push a normalized coordinate so its pixel offset sits off the lattice."""
    r = (k - 1) / 2
    off = t * r + shift
    frac = off - math.floor(off)
    if min(frac, 1.0 - frac) < 2e-3:
        t += (5e-3 / r) * (1.0 if frac < 0.5 else -1.0)
    return min(max(t, -1.0), 1.0)


def _draw_config(rng, ks, sizes, strides, variants):
    k = int(rng.choice(ks))
    h, w = sizes[int(rng.integers(len(sizes)))]
    stride = int(rng.choice(strides))
    variant = variants[int(rng.integers(len(variants)))]
    while True:
        p = init_params(k, variant, rng)
        if p.theta_xh - p.theta_xl < 0.05 or p.theta_yh - p.theta_yl < 0.05:
            continue
        ok = True
        for s, lo, hi in _split_bounds(p):
            if min(s - lo, hi - s) < 5e-3:
                ok = False
        if ok:
            break
    p = replace(
        p,
        theta_xl=_nudge_theta(p.theta_xl, k),
        theta_xh=_nudge_theta(p.theta_xh, k, 1.0),
        theta_yl=_nudge_theta(p.theta_yl, k),
        theta_yh=_nudge_theta(p.theta_yh, k, 1.0),
        split_theta=tuple(_nudge_theta(s, k) for s in p.split_theta),
    )
    return p, (h, w), stride


def _split_bounds(p):
    out = []
    i = 0
    if p.variant in (BoxVariant.SPLIT_V, BoxVariant.SPLIT_4):
        out.append((p.split_theta[i], p.theta_xl, p.theta_xh))
        i += 1
    if p.variant in (BoxVariant.SPLIT_H, BoxVariant.SPLIT_4):
        out.append((p.split_theta[i], p.theta_yl, p.theta_yh))
    return out


def _split_categories(variant):
    if variant == BoxVariant.SPLIT_V:
        return ("split_x",)
    if variant == BoxVariant.SPLIT_H:
        return ("split_y",)
    if variant == BoxVariant.SPLIT_4:
        return ("split_x", "split_y")
    return ()


def run_gradcheck(
    seed: int = 0,
    n_configs: int = 100,
    sizes=((8, 8), (12, 16), (16, 11)),
    ks=(5, 9, 13),
    strides=(1, 2),
    tolerance: float = 1e-5,
    h: float = 1e-5,
    input_pixels: int = 2,
    perturb: str = None,
) -> GradCheckReport:
    """FD-check box parameter and input gradients over random configurations.

    perturb names a category whose analytic gradient is deliberately skewed,
    as a self-test that the harness catches wrong gradients.
    """
    rng = np.random.default_rng(seed)
    variants = list(BoxVariant)
    report = GradCheckReport(tolerance=tolerance, n_configs=n_configs)

    for ci in range(n_configs):
        p, (hh, ww), stride = _draw_config(rng, ks, sizes, strides, variants)
        x = rng.normal(size=(1, hh, ww))
        layer = BoxConvLayer([p], stride=stride)
        g = rng.normal(size=layer.out_shape(x.shape))
        _, saved = layer.forward(x)
        grads = layer.backward(saved, g)
        bg = grads.grad_boxes[0]
        where = f"config {ci} ({p.variant.value} k={p.max_kernel} stride={stride})"

        def loss_for(pp):
            out, _ = BoxConvLayer([pp], stride=stride).forward(x)
            return float(np.sum(out * g))

        def skew(cat, val):
            return val + 1e-2 if perturb == cat else val

        for i, name in enumerate(("theta_xl", "theta_xh", "theta_yl", "theta_yh")):
            fd = (
                loss_for(replace(p, **{name: getattr(p, name) + h}))
                - loss_for(replace(p, **{name: getattr(p, name) - h}))
            ) / (2 * h)
            report.record(name, rel_err(skew(name, bg.theta[i]), fd), where)

        for i, cat in enumerate(_split_categories(p.variant)):
            st = list(p.split_theta)
            st[i] += h
            hi_val = loss_for(replace(p, split_theta=tuple(st)))
            st[i] -= 2 * h
            lo_val = loss_for(replace(p, split_theta=tuple(st)))
            fd = (hi_val - lo_val) / (2 * h)
            report.record(cat, rel_err(skew(cat, bg.split_theta[i]), fd), where)

        if p.variant != BoxVariant.SINGLE:
            for i in range(len(p.split_weights)):
                sw = list(p.split_weights)
                sw[i] += h
                hi_val = loss_for(replace(p, split_weights=tuple(sw)))
                sw[i] -= 2 * h
                lo_val = loss_for(replace(p, split_weights=tuple(sw)))
                fd = (hi_val - lo_val) / (2 * h)
                report.record("weight", rel_err(skew("weight", bg.split_weights[i]), fd), where)

        gin = grads.grad_input
        for _ in range(input_pixels):
            iy = int(rng.integers(hh))
            ix = int(rng.integers(ww))
            xp = x.copy()
            xp[0, iy, ix] += h
            xm = x.copy()
            xm[0, iy, ix] -= h
            op, _ = layer.forward(xp)
            om, _ = layer.forward(xm)
            fd = float(np.sum((op - om) * g)) / (2 * h)
            report.record("input", rel_err(skew("input", gin[0, iy, ix]), fd), where)

    return report


def run_adjoint_check(seed: int = 0, trials: int = 50, h: float = 1e-5,
                      tolerance: float = 1e-5) -> GradCheckReport:
    """Directional check: <backward grad_input, v> vs d/de loss(x + e v)."""
    rng = np.random.default_rng(seed)
    variants = list(BoxVariant)
    report = GradCheckReport(tolerance=tolerance, n_configs=trials)
    for ti in range(trials):
        p, (hh, ww), stride = _draw_config(rng, (5, 9, 13), ((8, 8), (12, 10)), (1, 2), variants)
        x = rng.normal(size=(1, hh, ww))
        layer = BoxConvLayer([p], stride=stride)
        g = rng.normal(size=layer.out_shape(x.shape))
        _, saved = layer.forward(x)
        gin = layer.backward(saved, g).grad_input
        v = rng.normal(size=x.shape)
        op, _ = layer.forward(x + h * v)
        om, _ = layer.forward(x - h * v)
        fd = float(np.sum((op - om) * g)) / (2 * h)
        lhs = float(np.sum(gin * v))
        report.record("input_adjoint", rel_err(lhs, fd), f"trial {ti}")
    return report


def merge_reports(*reports) -> GradCheckReport:
    merged = GradCheckReport(
        tolerance=min(r.tolerance for r in reports),
        n_configs=sum(r.n_configs for r in reports),
    )
    for r in reports:
        for cat, err in r.max_errors.items():
            merged.max_errors[cat] = max(merged.max_errors.get(cat, 0.0), err)
            merged.n_checks[cat] = merged.n_checks.get(cat, 0) + r.n_checks[cat]
        merged.failures.extend(r.failures)
    return merged


def format_report(report: GradCheckReport, seed: int) -> str:
    lines = [
        f"gradcheck seed={seed} configs={report.n_configs} tolerance={report.tolerance:g}"
    ]
    for cat in CATEGORIES:
        if cat in report.max_errors:
            lines.append(
                f"  {cat:<14} checks={report.n_checks[cat]:<5d} max_rel_err={report.max_errors[cat]:.3e}"
            )
    for fail in report.failures:
        lines.append(f"  FAIL {fail}")
    lines.append("RESULT " + ("PASS" if report.passed else "FAIL"))
    return "\n".join(lines) + "\n"
