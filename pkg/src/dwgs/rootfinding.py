"""Zeros of the scaled secular determinant in a rectangle.

Counting uses the argument principle on the determinant's phase (the
scaling factors are positive reals, so the phase is exact).  Isolation is by
recursive subdivision; refinement by Newton with a central-difference
derivative.  The window is cut into horizontal strips of fixed height that
are processed independently, so the result does not depend on the number
of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .coupling import CouplingResonance

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
MAX_PHASE_STEP = math.pi / 4.0
WINDOW_NUDGE_MIN = 1e-4
WINDOW_NUDGE_MAX = 1e-2
NEWTON_MAX_ITER = 100
CERTIFY_RESIDUAL = 1e-6


class RootFindingError(RuntimeError):
    pass


class _NearZero(Exception):
    def __init__(self, where):
        super().__init__(where)
        self.where = where


@dataclass(frozen=True)
class ComplexWindow:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_max > self.re_min and self.im_max > self.im_min):
            raise ValueError("empty complex window")

    @property
    def width(self) -> float:
        return self.re_max - self.re_min

    @property
    def height(self) -> float:
        return self.im_max - self.im_min

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return (self.re_min - margin <= z.real <= self.re_max + margin
                and self.im_min - margin <= z.imag <= self.im_max + margin)

    def corners(self):
        return (complex(self.re_min, self.im_min), complex(self.re_max, self.im_min),
                complex(self.re_max, self.im_max), complex(self.re_min, self.im_max))

    def is_conjugate_symmetric(self, tol: float = 1e-12) -> bool:
        return abs(self.im_min + self.im_max) <= tol * max(1.0, self.height)


@dataclass(frozen=True)
class Root:
    lam: complex
    multiplicity: int
    residual: float
    agreement: float = float("nan")
    rayleigh: float = float("nan")


@dataclass
class EigenvalueSet:
    roots: list
    window: ComplexWindow
    count: int
    backend: str = "flower"
    notes: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(r.multiplicity for r in self.roots)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.lam for r in self.roots], dtype=complex)

    def expanded(self) -> np.ndarray:
        """Eigenvalues repeated according to multiplicity."""
        return np.array([r.lam for r in self.roots for _ in range(r.multiplicity)], dtype=complex)

    def is_complete(self) -> bool:
        return self.total == self.count

    def conjugate_closed(self, tol: float = 1e-6) -> bool:
        vals = self.values
        for z in vals:
            if abs(z.imag) < tol:
                continue
            if vals.size == 0 or np.min(np.abs(vals - np.conj(z))) > tol * max(1.0, abs(z)):
                return False
        return True


# ---------------------------------------------------------------------------
# Phase tracking


class _Evaluator:
    """Batch phase evaluation with a small memo of already-tracked segments."""

    def __init__(self, system):
        self.system = system
        self.segments = {}
        self.n_evals = 0
        L = system.graph.total_length
        self.h0 = min(0.1, (math.pi / 8.0) / max(L, 1.0))

    def phases(self, z):
        mant, _ = self.system.evaluate(z)
        self.n_evals += len(z)
        return mant

    def segment(self, a: complex, b: complex, min_h: float) -> float:
        key = (a, b)
        if key in self.segments:
            return self.segments[key]
        if (b, a) in self.segments:
            return -self.segments[(b, a)]
        total = self._track(a, b, min_h)
        self.segments[key] = total
        return total

    def _track(self, a, b, min_h):
        length = abs(b - a)
        n = max(4, int(math.ceil(length / self.h0)))
        t = np.linspace(0.0, 1.0, n + 1)
        v = self.phases(a + t * (b - a))
        while True:
            bad_val = ~np.isfinite(v) | (np.abs(v) < 0.5)
            if np.any(bad_val):
                k = int(np.flatnonzero(bad_val)[0])
                raise _NearZero(a + t[k] * (b - a))
            d = np.angle(v[1:] / v[:-1])
            bad = np.abs(d) > MAX_PHASE_STEP
            if not np.any(bad):
                return float(np.sum(d))
            idx = np.flatnonzero(bad)
            if np.min(t[idx + 1] - t[idx]) * length < min_h:
                k = idx[np.argmin(t[idx + 1] - t[idx])]
                raise _NearZero(a + t[k] * (b - a))
            tm = 0.5 * (t[idx] + t[idx + 1])
            vm = self.phases(a + tm * (b - a))
            t = np.insert(t, idx + 1, tm)
            v = np.insert(v, idx + 1, vm)


def _winding(ev: _Evaluator, box: ComplexWindow, min_h: float) -> int:
    c = box.corners()
    total = sum(ev.segment(c[i], c[(i + 1) % 4], min_h) for i in range(4))
    w = total / (2.0 * math.pi)
    k = int(round(w))
    if abs(w - k) > 1e-3:
        raise RootFindingError(f"non-integer winding {w:.6f} on {box}")
    return k


def _nudge_offsets():
    """Deterministic golden-ratio offsets ``+d0, -d0 phi, +d0 phi^2, ...`` up to the cap."""
    k = 0
    while True:
        d = WINDOW_NUDGE_MIN * GOLDEN ** k
        if d > WINDOW_NUDGE_MAX:
            return
        yield d if k % 2 == 0 else -d
        k += 1


def count_zeros(system, window: ComplexWindow, return_window: bool = False):
    """Number of zeros (with multiplicity) inside ``window`` by the argument principle."""
    ev = _Evaluator(system)
    settled, n = _settle_window_strict(ev, window)
    return (n, settled) if return_window else n


def _settle_window_strict(ev, window):
    """Try the window, then golden-ratio nudges of every side in turn."""
    try:
        return window, _winding(ev, window, WINDOW_NUDGE_MIN)
    except _NearZero as hit:
        first = hit.where
    tried = []
    z = first
    offsets = list(_nudge_offsets())
    state = {s: 0 for s in ("re_min", "re_max", "im_min", "im_max")}
    current = window
    for _ in range(4 * len(offsets)):
        dist = {"re_min": abs(z.real - window.re_min), "re_max": abs(z.real - window.re_max),
                "im_min": abs(z.imag - window.im_min), "im_max": abs(z.imag - window.im_max)}
        side = min(dist, key=dist.get)
        if state[side] >= len(offsets):
            break
        off = offsets[state[side]]
        state[side] += 1
        current = replace(current, **{side: getattr(window, side) + off})
        tried.append((side, off))
        try:
            return current, _winding(ev, current, WINDOW_NUDGE_MIN)
        except _NearZero as hit:
            z = hit.where
    raise RootFindingError(f"window boundary cannot be kept away from a zero near {z} (tried {tried})")


# ---------------------------------------------------------------------------
# Newton


def newton(system, lam0: complex, multiplicity: int = 1, box: ComplexWindow | None = None,
           max_iter: int = NEWTON_MAX_ITER):
    """Newton (modified by the multiplicity) with a central-difference derivative.

    Returns the limit or ``None`` on failure or when it leaves ``box``.
    """
    lam = complex(lam0)
    _, ref = system.evaluate(np.array([lam]))
    ref = float(ref[0])
    for _ in range(max_iter):
        h = 1e-7 * max(1.0, abs(lam))
        f0, fp, fm = system.value(np.array([lam, lam + h, lam - h]), ref)
        if not np.all(np.isfinite([f0, fp, fm])):
            return None
        if f0 == 0:
            return lam
        d = (fp - fm) / (2.0 * h)
        if d == 0:
            return None
        step = multiplicity * f0 / d
        if box is not None:
            lim = 0.5 * box.diameter
            if abs(step) > lim:
                step *= lim / abs(step)
        lam -= step
        if box is not None and not box.contains(lam, margin=0.25 * box.diameter):
            return None
        if abs(step) <= 1e-13 * max(1.0, abs(lam)):
            return lam
        if not math.isfinite(lam.real) or not math.isfinite(lam.imag):
            return None
        # renormalize when the magnitude drifts far from the reference
        if abs(f0) > 1e100 or abs(f0) < 1e-250:
            _, r2 = system.evaluate(np.array([lam]))
            ref = float(r2[0])
    # small limit cycles at rounding level are acceptable
    return lam if abs(step) <= 1e-9 * max(1.0, abs(lam)) else None


# ---------------------------------------------------------------------------
# Subdivision


def _split_fracs():
    yield 0.5
    k = 1
    while k < 12:
        d = 0.05 * GOLDEN ** (k - 1)
        if d >= 0.4:
            break
        yield 0.5 + (d if k % 2 else -d)
        k += 1


def _children(box: ComplexWindow, vertical: bool, frac: float):
    if vertical:
        x = box.re_min + frac * box.width
        return (replace(box, re_max=x), replace(box, re_min=x))
    y = box.im_min + frac * box.height
    return (replace(box, im_max=y), replace(box, im_min=y))


def _split(ev: _Evaluator, box: ComplexWindow, count: int):
    """Split ``box`` in two along its longer side, moving the cut off nearby zeros."""
    vertical = box.width >= box.height
    # never coarser than the resolution at which the outer window was settled
    min_h = min(WINDOW_NUDGE_MIN, 1e-4 * max(box.width, box.height))
    for frac in _split_fracs():
        kids = _children(box, vertical, frac)
        try:
            counts = [_winding(ev, k, min_h) for k in kids]
        except _NearZero:
            continue
        if sum(counts) != count:
            continue
        return list(zip(kids, counts))
    raise RootFindingError(f"could not split {box} consistently")


def _isolate(system, ev: _Evaluator, box: ComplexWindow, count: int, tol: float, out: list):
    if count == 0:
        return
    scale = max(1.0, abs(box.center))
    if count == 1:
        lam = newton(system, box.center, 1, box)
        if lam is not None and box.contains(lam):
            out.append((lam, 1))
            return
    else:
        if box.diameter < 1e-3 * scale:
            lam = newton(system, box.center, count, box)
            if lam is not None and box.contains(lam):
                r = max(1e-6 * scale, 100.0 * tol * scale)
                tiny = ComplexWindow(lam.real - r, lam.real + r, lam.imag - r, lam.imag + r)
                try:
                    if _winding(_Evaluator(system), tiny, 1e-3 * r) == count:
                        out.append((lam, count))
                        return
                except _NearZero:
                    pass
    if box.diameter < 10.0 * tol * scale:
        lam = box.center
        out.append((newton(system, lam, count) or lam, count))
        return
    for kid, c in _split(ev, box, count):
        _isolate(system, ev, kid, c, tol, out)


def _strip_lines(window: ComplexWindow, height: float):
    n = max(1, int(math.ceil(window.height / height - 1e-9)))
    return [window.im_min + k * window.height / n for k in range(n + 1)]


def _settle_lines(ev: _Evaluator, window: ComplexWindow, lines):
    """Nudge interior strip boundaries off zeros (deterministically)."""
    settled = [lines[0]]
    for y in lines[1:-1]:
        for off in [0.0] + list(_nudge_offsets()):
            yy = y + off
            try:
                ev.segment(complex(window.re_min, yy), complex(window.re_max, yy), WINDOW_NUDGE_MIN)
                settled.append(yy)
                break
            except _NearZero:
                continue
        else:
            raise RootFindingError(f"cannot place strip boundary near Im = {y}")
    settled.append(lines[-1])
    return settled


def _solve_strip(args):
    system, strip, tol = args
    ev = _Evaluator(system)
    count = _winding(ev, strip, WINDOW_NUDGE_MIN)
    found = []
    _isolate(system, ev, strip, count, tol, found)
    return count, found


def _merge_close(found, radius: float):
    """Combine Newton limits closer than ``radius`` (a multiple root split by rounding)."""
    merged = []
    for lam, m in sorted(found, key=lambda t: (t[0].imag, t[0].real)):
        for i, (mu, k) in enumerate(merged):
            if abs(lam - mu) <= radius:
                merged[i] = ((mu * k + lam * m) / (k + m), k + m)
                break
        else:
            merged.append((lam, m))
    return merged


def find_roots(system, window: ComplexWindow, tol: float = 1e-8, workers: int = 1,
               strip_height: float | None = None, certify=None) -> EigenvalueSet:
    """All zeros in ``window`` with multiplicities and residual certificates.

    ``certify`` may be a second :class:`SecularSystem`; its normalized
    determinant at each root is stored as the agreement residual.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    ev = _Evaluator(system)
    window, total = _settle_window_strict(ev, window)
    if strip_height is None:
        strip_height = math.pi
    lines = _settle_lines(ev, window, _strip_lines(window, strip_height))
    strips = [replace(window, im_min=a, im_max=b) for a, b in zip(lines[:-1], lines[1:])]
    jobs = [(system, s, tol) for s in strips]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_strip, jobs))
    else:
        results = [_solve_strip(j) for j in jobs]
    found = _merge_close([item for _, items in results for item in items], 100.0 * tol)
    strip_total = sum(c for c, _ in results)
    roots = []
    for lam, m in found:
        res = system.residual(lam)
        agree = float("nan")
        if certify is not None:
            try:
                agree = float(certify.residual(lam))
            except (CouplingResonance, np.linalg.LinAlgError):
                agree = float("nan")
        roots.append(Root(complex(lam), int(m), float(res), agree))
    roots.sort(key=lambda r: (r.lam.imag, r.lam.real))
    result = EigenvalueSet(roots, window, total, system.backend)
    if strip_total != total:
        result.notes.append(f"strip counts sum to {strip_total}, window count is {total}")
    if result.total != total:
        raise RootFindingError(f"found {result.total} zeros (with multiplicity) but the window holds {total}")
    return result


# ---------------------------------------------------------------------------
# Sequences


@dataclass
class SequenceFit:
    ns: np.ndarray
    lams: np.ndarray
    c0: complex
    c1: complex
    jumps: list

    @property
    def ok(self) -> bool:
        return not self.jumps


def track_sequence(system, c0_guess: complex, n_range, period: float = 2.0 * math.pi) -> SequenceFit:
    """Follow ``lambda_n ~ i period n + c0`` by Newton and fit ``c0 + c1 / n``."""
    ns = np.array(list(n_range), dtype=int)
    lams = []
    jumps = []
    for n in ns:
        start = 1j * period * n + c0_guess
        lam = newton(system, start)
        if lam is None:
            raise RootFindingError(f"Newton failed to converge from {start}")
        lams.append(lam)
    lams = np.array(lams, dtype=complex)
    for i in range(len(lams)):
        for j in range(i):
            if abs(lams[i] - lams[j]) < 1e-8 * max(1.0, abs(lams[i])):
                jumps.append((int(ns[j]), int(ns[i])))
    offsets = lams - 1j * period * ns
    if len(ns) >= 2:
        A = np.stack([np.ones(len(ns)), 1.0 / ns], axis=1)
        coef, *_ = np.linalg.lstsq(A.astype(complex), offsets, rcond=None)
        c0, c1 = complex(coef[0]), complex(coef[1])
    else:
        c0, c1 = complex(offsets[0]), 0j
    return SequenceFit(ns, lams, c0, c1, jumps)
