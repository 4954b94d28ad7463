"""Linear-prediction primitives: analysis, pole extraction, resynthesis.

Coefficient convention: the prediction polynomial is
A(z) = 1 - sum_k a_k z^-k. LpcFrame stores a[1..p] with the leading 1
implicit; polynomial vectors handed to the filters carry the leading 1,
i.e. [1, -a_1, ..., -a_p].
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import StabilityError

STABILITY_RADIUS = 0.999
RUNAWAY_LIMIT = 1e4
CONJUGATE_TOL = 1e-8

_REFLECTION_CLAMP = 0.999


def default_order(sample_rate_hz: int) -> int:
    """Conventional order heuristic: sample_rate/1000 + 4."""
    return int(sample_rate_hz / 1000) + 4


@dataclass
class LpcFrame:
    """Prediction coefficients a[1..p], residual, and order for one frame."""

    coeffs: np.ndarray
    residual: np.ndarray
    order: int
    flagged: bool = False  # a reflection coefficient was clamped

    def polynomial(self) -> np.ndarray:
        """Full inverse-filter vector [1, -a_1, ..., -a_p]."""
        return np.concatenate(([1.0], -np.asarray(self.coeffs, dtype=np.float64)))


@dataclass
class PoleSet:
    """Conjugate-closed multiset of filter poles."""

    poles: np.ndarray
    order: int


def lpc_analyze(frame: np.ndarray, order: int) -> LpcFrame:
    """Fit an all-pole model by Levinson-Durbin on the biased autocorrelation.

    The residual is the frame passed through A(z) with zero initial state.
    An all-zero frame yields zero coefficients and a zero residual; a
    singular recursion step clamps the reflection coefficient to +-0.999
    and flags the frame.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if order < 2:
        raise ValueError("order must be >= 2")
    if len(frame) <= order:
        raise ValueError("frame length must exceed the LPC order")
    r = _autocorrelation(frame, order)
    if r[0] == 0.0:
        return LpcFrame(np.zeros(order), np.zeros(len(frame)), order)
    a, flagged = _levinson(r, order)
    lp = LpcFrame(a, np.empty(0), order, flagged)
    lp.residual = signal.lfilter(lp.polynomial(), [1.0], frame)
    return lp


def _autocorrelation(x: np.ndarray, maxlag: int) -> np.ndarray:
    n = len(x)
    full = np.correlate(x, x, mode="full")
    return full[n - 1 : n + maxlag] / n


def _levinson(r: np.ndarray, order: int) -> tuple[np.ndarray, bool]:
    a = np.zeros(order)
    e = r[0]
    flagged = False
    for i in range(1, order + 1):
        acc = r[i] - np.dot(a[: i - 1], r[i - 1 : 0 : -1])
        if e <= 0.0 or not np.isfinite(e):
            k = 0.0
            flagged = True
        else:
            k = acc / e
            if abs(k) >= 1.0:
                k = _REFLECTION_CLAMP if k > 0 else -_REFLECTION_CLAMP
                flagged = True
        prev = a[: i - 1].copy()
        a[: i - 1] = prev - k * prev[::-1]
        a[i - 1] = k
        e *= 1.0 - k * k
    return a, flagged


def roots_of_lpc(frame: LpcFrame) -> PoleSet:
    """Poles of 1/A(z): eigenvalues of the companion matrix of
    z^p - a_1 z^{p-1} - ... - a_p, with conjugate pairs symmetrized exactly.
    """
    a = np.asarray(frame.coeffs, dtype=np.float64)
    p = frame.order
    comp = np.zeros((p, p))
    comp[0, :] = a
    if p > 1:
        comp[1:, :-1] = np.eye(p - 1)
    try:
        raw = np.linalg.eigvals(comp)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"pole eigendecomposition failed: {exc}") from exc
    reals, pos = split_conjugate(raw, tol=CONJUGATE_TOL)
    out = np.concatenate([reals.astype(np.complex128), pos, np.conj(pos)])
    return PoleSet(np.sort_complex(out), p)


def split_conjugate(
    z: np.ndarray, tol: float = CONJUGATE_TOL
) -> tuple[np.ndarray, np.ndarray]:
    """Partition a conjugate-closed multiset into (real values, upper-half poles).

    Members with |imag| <= tol are treated as real. The remaining members
    must pair up with their conjugates within tol; each returned upper-half
    pole is the midpoint of its pair, so emitting (pole, conj(pole))
    reproduces the multiset with bit-equal conjugates.
    """
    z = np.asarray(z, dtype=np.complex128)
    near_real = np.abs(z.imag) <= tol
    reals = z.real[near_real]
    pos = np.sort_complex(z[~near_real & (z.imag > 0)])
    neg = np.sort_complex(np.conj(z[~near_real & (z.imag < 0)]))
    if len(pos) != len(neg):
        raise ValueError("pole set is not conjugate-closed: unpaired complex poles")
    if len(pos):
        gap = np.max(np.abs(pos - neg))
        scale = max(1.0, float(np.max(np.abs(pos))))
        if gap > tol * scale:
            raise ValueError(
                f"pole set is not conjugate-closed: pair mismatch {gap:.3g}"
            )
    mid = 0.5 * (pos + neg)
    return reals, mid


def lpc_from_poles(poles: PoleSet) -> np.ndarray:
    """Expand prod(z - p_i) into the real coefficient vector [1, c_1, ..., c_p].

    Conjugate pairs are multiplied out as real quadratics, so the result is
    exactly real; non-conjugate-closed input raises ValueError.
    """
    reals, pairs = split_conjugate(np.asarray(poles.poles), tol=1e-9)
    coeffs = np.ones(1)
    for root in reals:
        coeffs = np.convolve(coeffs, [1.0, -root])
    for q in pairs:
        coeffs = np.convolve(coeffs, [1.0, -2.0 * q.real, q.real**2 + q.imag**2])
    return coeffs


def synthesize(
    coeffs: np.ndarray,
    residual: np.ndarray,
    state: np.ndarray | None = None,
    state_tap: int | None = None,
    frame_index: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the all-pole filter 1/A(z) over a residual frame.

    Returns (frame, state_out). state_out is the filter memory after
    state_tap samples -- the non-overlapping hop region when frames
    overlap -- or after the whole frame when state_tap is None. Output
    exceeding RUNAWAY_LIMIT in magnitude raises StabilityError.
    """
    poly = np.asarray(coeffs, dtype=np.float64)
    if poly.ndim != 1 or poly[0] != 1.0:
        raise ValueError("coefficient vector must be monic (leading 1)")
    residual = np.asarray(residual, dtype=np.float64)
    zi = np.zeros(len(poly) - 1) if state is None else np.asarray(state, dtype=np.float64)
    if state_tap is None:
        out, zf = signal.lfilter([1.0], poly, residual, zi=zi)
    else:
        head, zf = signal.lfilter([1.0], poly, residual[:state_tap], zi=zi)
        tail, _ = signal.lfilter([1.0], poly, residual[state_tap:], zi=zf)
        out = np.concatenate([head, tail])
    peak = float(np.max(np.abs(out))) if out.size else 0.0
    if not np.isfinite(peak) or peak > RUNAWAY_LIMIT:
        where = "" if frame_index is None else f" in frame {frame_index}"
        raise StabilityError(f"synthesis output reached |{peak:.3g}|{where}")
    return out, zf
