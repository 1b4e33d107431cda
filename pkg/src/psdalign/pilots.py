"""Pilot sequence construction and spectral alignment planning.

Cyclic-shift pilots modulate a constant-modulus base sequence with a complex
exponential ramp; in the Fourier picture the shift slides the user's Doppler
spectrum around the frequency circle. Users whose shifted spectra occupy
disjoint supports become asymptotically non-interfering, so alignment
planning is interval packing on the circle.
"""

import math
from dataclasses import dataclass

import numpy as np

from .fading import EIGENVALUE_FLOOR_REL, grid_frequencies

_UNIT_MODULUS_TOL = 1e-9


class PlanInfeasibleError(ValueError):
    """Raised when the requested supports cannot be packed on the circle."""

    def __init__(self, message, width_deficit):
        super().__init__(message)
        self.width_deficit = width_deficit


@dataclass(frozen=True)
class PilotSequence:
    """Length-P unit-modulus pilot sequence.

    `shift` is the cyclic shift in slots for exponential-ramp pilots (may be
    fractional: practical staggered shift grids are generally not integers), None
    for other constructions. `base` is the unshifted base sequence.
    """

    values: np.ndarray
    shift: float | None = None
    base: np.ndarray | None = None

    def __post_init__(self):
        dev = np.max(np.abs(np.abs(self.values) - 1.0))
        if dev > _UNIT_MODULUS_TOL:
            raise ValueError(f"pilot entries must have unit modulus (max deviation {dev:.2e})")

    @property
    def P(self):
        return len(self.values)

    def diag(self):
        """The pilot as the diagonal matrix applied to the channel vector."""
        return np.diag(self.values)


def fft_pilot(shift, P, base=None):
    """Cyclic-shift pilot x(n) = exp(2j*pi*shift*n/P) * base(n).

    Parameters
    ----------
    shift : float
        Cyclic shift in slots, 0 <= shift < P.
    P : int
        Sequence length.
    base : array, optional
        Unit-modulus base sequence of length P; defaults to all ones.
    """
    if not 0 <= shift < P:
        raise ValueError(f"shift must satisfy 0 <= shift < P, got {shift}")
    if base is None:
        base = np.ones(P, dtype=complex)
    else:
        base = np.asarray(base, dtype=complex)
        if base.shape != (P,):
            raise ValueError("base sequence length must equal P")
        if np.max(np.abs(np.abs(base) - 1.0)) > _UNIT_MODULUS_TOL:
            raise ValueError("base sequence must have unit modulus")
    n = np.arange(P)
    values = np.exp(2j * np.pi * shift * n / P) * base
    return PilotSequence(values=values, shift=float(shift), base=base)


def hadamard_pilots(K):
    """The K rows of the Sylvester Hadamard matrix as +-1 pilot sequences."""
    if K < 1 or K & (K - 1):
        raise ValueError(f"Hadamard construction needs a power-of-2 length, got {K}")
    H = np.ones((1, 1))
    while H.shape[0] < K:
        H = np.block([[H, H], [H, -H]])
    return [PilotSequence(values=row.astype(complex)) for row in H]


def cross_matrix(a, b):
    """Pilot cross products: the diagonal X_a^H X_b and its Fourier conjugation.

    Returns (Pab, Theta) where Pab = X_a^H X_b and Theta = F Pab F^H with F the
    unitary DFT matrix. For two exponential-ramp pilots over a common base and
    integer relative shift d, Theta is the cyclic permutation whose first
    column is the unit vector at position d.
    """
    if a.P != b.P:
        raise ValueError("pilot lengths differ")
    d = np.conj(a.values) * b.values
    Pab = np.diag(d)
    # F Diag(d) F^H: DFT the columns, inverse-DFT the rows
    Theta = np.fft.ifft(np.fft.fft(Pab, axis=0), axis=1)
    return Pab, Theta


def orthogonality_residual(R_k, R_g, pkg):
    """Size of R_k P R_g P^H on the per-slot RMS scale; 0 means non-interfering.

    The Frobenius norm is normalized by P^(3/2): one factor sqrt(P) converts
    the norm to the RMS-eigenvalue scale, the remaining factor P normalizes
    like the per-element MSE quantities it feeds.

    `pkg` may be the dense cross-product matrix or its diagonal as a 1-D array
    (the cross product of two diagonal pilots is always diagonal).
    """
    R_k = np.asarray(R_k)
    R_g = np.asarray(R_g)
    if R_k.shape != R_g.shape or R_k.shape[0] != R_k.shape[1]:
        raise ValueError("covariance shapes are incompatible")
    P = R_k.shape[0]
    pkg = np.asarray(pkg)
    if pkg.ndim == 1:
        if pkg.shape[0] != P:
            raise ValueError("cross-product diagonal length mismatch")
        # R_k D R_g D^H with D = diag(pkg): scale columns, one dense product
        prod = (R_k * pkg[None, :]) @ R_g * np.conj(pkg)[None, :]
    else:
        if pkg.shape != (P, P):
            raise ValueError("cross-product matrix shape mismatch")
        prod = R_k @ pkg @ R_g @ pkg.conj().T
    return float(np.linalg.norm(prod, "fro")) / P**1.5


def _support_runs(lam, floor_rel):
    """Contiguous above-floor runs of an eigenvalue vector, as bin intervals.

    Runs are found on the centered (fftshift) axis so a support straddling
    frequency zero forms one interval; intervals are (lo, hi) in bin units on
    the circle of circumference P.
    """
    lam = np.asarray(lam, dtype=float)
    P = lam.size
    peak = lam.max(initial=0.0)
    if peak <= 0.0:
        return []
    mask = lam > floor_rel * peak
    # unwrap to a centered axis so a support straddling bin 0 stays contiguous
    centered = mask[(np.arange(P) - P // 2) % P]
    runs = []
    start = None
    for i, m in enumerate(centered):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(centered) - 1))
    # wrap-around merge: run touching both ends is one circular run
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][1] == P - 1:
        first = runs.pop(0)
        last = runs.pop()
        runs.append((last[0], first[1] + P))
    # back to absolute bin coordinates
    return [(lo - P // 2, hi - P // 2) for lo, hi in runs]


def shift_orthogonal(lam_k, lam_g, dtau, floor_rel=EIGENVALUE_FLOOR_REL):
    """True when the supports of lam_k and the dtau-shifted lam_g are disjoint.

    Supports are the closed bin intervals where eigenvalues exceed
    floor_rel * max. For integer dtau this coincides with elementwise
    disjointness of the rolled eigenvalue masks; fractional shifts compare the
    same intervals translated on the circle.
    """
    lam_k = np.asarray(lam_k, dtype=float)
    lam_g = np.asarray(lam_g, dtype=float)
    if lam_k.shape != lam_g.shape:
        raise ValueError("eigenvalue vectors must have equal length")
    P = lam_k.size
    runs_k = _support_runs(lam_k, floor_rel)
    runs_g = _support_runs(lam_g, floor_rel)
    for lo_k, hi_k in runs_k:
        for lo_g, hi_g in runs_g:
            lo, hi = lo_g + dtau, hi_g + dtau
            # circular closed-interval overlap test
            delta = (lo - lo_k) % P
            if delta <= (hi_k - lo_k) or (P - delta) <= (hi - lo):
                return False
    return True


@dataclass(frozen=True)
class AlignmentPlan:
    """Per-user cyclic shifts placing Doppler supports apart on the circle.

    Shifts are in slots (fractional allowed), supports in cycles. `guard` is
    the minimum pairwise gap (cycles) the plan promises between user supports;
    supports must additionally be strictly disjoint from each other and from
    every forbidden band.
    """

    dopplers: tuple
    shifts: tuple
    P: int
    forbidden: tuple = ()
    guard: float = 0.0

    @property
    def K(self):
        return len(self.dopplers)

    def supports(self):
        """Per-user closed supports [shift/P - F, shift/P + F] (cycles, unwrapped)."""
        return [
            (tau / self.P - F, tau / self.P + F)
            for tau, F in zip(self.shifts, self.dopplers)
        ]

    def validate(self):
        """Check all plan invariants; returns a list of violation messages."""
        problems = []
        sup = self.supports()
        for k, (F, tau) in enumerate(zip(self.dopplers, self.shifts)):
            if not 0.0 < F <= 0.5:
                problems.append(f"user {k}: max Doppler {F} outside (0, 1/2]")
            if not 0 <= tau < self.P:
                problems.append(f"user {k}: shift {tau} outside [0, P)")
        for k in range(self.K):
            for g in range(k + 1, self.K):
                gap = _circular_gap(sup[k], sup[g])
                # interior overlap always fails; touching passes only at guard 0
                if gap < max(self.guard, 0.0) - 1e-15 or gap < -1e-15:
                    problems.append(
                        f"users {k},{g}: support gap {gap:.3e} below guard {self.guard:.3e}"
                    )
        for k in range(self.K):
            for band in self.forbidden:
                if _circular_gap(sup[k], band) <= 0.0:
                    problems.append(f"user {k}: support intersects forbidden band {band}")
        return problems

    def is_valid(self):
        return not self.validate()

    def support_masks(self):
        """(K, P) boolean matrix of grid bins carrying each shifted spectrum."""
        xi = grid_frequencies(self.P)
        masks = np.zeros((self.K, self.P), dtype=bool)
        for k, (lo, hi) in enumerate(self.supports()):
            rel = (xi - lo) % 1.0
            masks[k] = rel <= (hi - lo) + 1e-15
        return masks

    def pairwise_orthogonal(self):
        """True when every user pair occupies disjoint grid bins."""
        masks = self.support_masks()
        for k in range(self.K):
            for g in range(k + 1, self.K):
                if np.any(masks[k] & masks[g]):
                    return False
        return True

    def pilots(self, base=None):
        """The plan's cyclic-shift pilot sequences."""
        return [fft_pilot(tau, self.P, base=base) for tau in self.shifts]

    def to_dict(self):
        return {
            "P": self.P,
            "guard": self.guard,
            "dopplers": list(self.dopplers),
            "shifts": list(self.shifts),
            "forbidden": [list(b) for b in self.forbidden],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            dopplers=tuple(d["dopplers"]),
            shifts=tuple(d["shifts"]),
            P=int(d["P"]),
            forbidden=tuple(tuple(b) for b in d.get("forbidden", ())),
            guard=float(d.get("guard", 0.0)),
        )


def _circular_gap(int_a, int_b):
    """Minimal gap (cycles) between two closed arcs on the unit circle.

    Positive: clear separation (symmetric in the arguments). Zero: arcs touch
    at a point. Negative: arcs overlap; only the sign is meaningful then (the
    magnitude is a direction-dependent deficit).
    """
    lo_a, hi_a = int_a
    lo_b, hi_b = int_b
    width_a = hi_a - lo_a
    width_b = hi_b - lo_b
    if width_a + width_b >= 1.0:
        return -1.0
    rel = (lo_b - lo_a) % 1.0
    fwd = rel - width_a            # from a's end forward to b's start
    bwd = (1.0 - rel) - width_b    # from b's end forward to a's start
    return min(fwd, bwd)


def uniform_capacity(max_doppler, guard=0.0):
    """How many equal-Doppler users fit on the circle: floor(1/(2F + guard))."""
    width = 2.0 * max_doppler + guard
    return int(math.floor(1.0 / width)) if width > 0 else 0


def plan_alignment(dopplers, forbidden, P, guard=0.0):
    """Pack user Doppler supports onto the frequency circle.

    Users are placed in increasing-Doppler order by first fit, preferring
    integer shifts; when an integer grid position does not exist the support
    goes to the earliest feasible fractional position. With equal Dopplers and
    no forbidden bands the plan is the evenly spaced shift ladder
    {k * ceil(2*F*P)} (or the tight real-valued spacing P/K when the integer
    ladder no longer fits).

    Raises PlanInfeasibleError with the width deficit when the total demanded
    support width exceeds the available circle.
    """
    if P < 2:
        raise ValueError("P must be >= 2")
    dopplers = [float(F) for F in dopplers]
    for F in dopplers:
        if not 0.0 < F <= 0.5:
            raise ValueError(f"max Doppler {F} outside (0, 1/2]")
    forbidden = tuple(tuple(b) for b in forbidden)
    for lo, hi in forbidden:
        if not hi > lo:
            raise ValueError(f"forbidden band [{lo}, {hi}] is empty")
    K = len(dopplers)
    if K == 0:
        return AlignmentPlan(dopplers=(), shifts=(), P=P, forbidden=forbidden, guard=guard)

    demanded = sum(2 * F for F in dopplers) + K * guard
    available = 1.0 - sum(hi - lo for lo, hi in forbidden)
    if demanded > available + 1e-12:
        raise PlanInfeasibleError(
            f"supports demand width {demanded:.6f} but only {available:.6f} is free",
            width_deficit=demanded - available,
        )

    uniform = len(set(dopplers)) == 1 and not forbidden
    if uniform:
        F = dopplers[0]
        spacing = math.ceil(2 * F * P + guard * P)
        if spacing <= 2 * F * P + guard * P:
            spacing += 1  # strict disjointness when 2FP lands on an integer
        if K * spacing <= P:
            shifts = tuple(float(k * spacing) for k in range(K))
        else:
            shifts = tuple(k * P / K for k in range(K))
        return AlignmentPlan(
            dopplers=tuple(dopplers), shifts=shifts, P=P, forbidden=forbidden, guard=guard
        )

    order = sorted(range(K), key=lambda k: dopplers[k])
    placed = []  # (lo, hi) occupied support intervals in cycles
    shifts = [None] * K
    for k in order:
        F = dopplers[k]
        tau = _first_fit(F, placed, forbidden, P, guard)
        if tau is None:
            raise PlanInfeasibleError(
                f"no feasible shift for user {k} (F={F}); "
                f"free width insufficient at guard {guard}",
                width_deficit=2 * F + guard,
            )
        shifts[k] = tau
        center = tau / P
        placed.append((center - F, center + F))
    return AlignmentPlan(
        dopplers=tuple(dopplers), shifts=tuple(shifts), P=P, forbidden=forbidden, guard=guard
    )


def _first_fit(F, placed, forbidden, P, guard):
    """Earliest shift whose support clears every placed support and band."""

    def feasible(tau):
        center = tau / P
        sup = (center - F, center + F)
        for other in placed:
            if _circular_gap(sup, other) < max(guard, 1e-15):
                return False
        for band in forbidden:
            if _circular_gap(sup, band) <= 0.0:
                return False
        return True

    if not placed and not forbidden:
        return 0.0
    for tau in range(P):  # integer grid first
        if feasible(float(tau)):
            return float(tau)
    # fractional fallback: start just past each blocking interval's end
    candidates = []
    for lo, hi in list(placed) + list(forbidden):
        start = (hi + guard + F) % 1.0
        candidates.append((start * P) % P)
    for tau in sorted(candidates):
        if 0 <= tau < P and feasible(tau):
            return tau
    return None
