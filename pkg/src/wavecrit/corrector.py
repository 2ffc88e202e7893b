"""First-order nonlinear corrector for the boundary-layer wave packet.

The self-interaction Q(W0, W0) = P((u0 dx + w0 dy) W0) of the linear
solution splits into nine ordered family pairs, sorted by L^2 size and decay
rate (a1-a2: O(1), rate eps^-2; b1-b3: O(eps^1/2), rate eps^-3; c1-c4:
O(eps^2) and smaller, left in the remainder).  Each retained pair is an
exponential mode

    exp(i l x - i alpha t - mu y),   l = k + k',  alpha = w + w',

with (l, alpha) concentrated either near (0, 0) (zero lobe, future mean
flow) or near +-2 (k0, w0) (double lobe, future second harmonic).  The
interior response is computed from a 2x2 reduction acting on (u, b):

  * rate eps^-2: rotation only; inverse (-i alpha + L)^-1 expands over the
    projectors Pi_pm onto (1, -+i)/sqrt(2), with resonance denominators
    -i alpha +- i sin(g) bounded away from zero;
  * rate eps^-3: rotation plus vertical diffusion; a bounded 2x2 matrix M
    with det(M^-1) = sin^2(g) - alpha^2 + i alpha mbar^2 (nu0+kappa0)
    + nu0 kappa0 mbar^4, mbar = mu eps^3.

The normal velocity is restored from the divergence-free condition
(w = il/mu times the tangential response).  The wall traces of these
interior terms are then lifted: double-lobe traces through the non-critical
boundary operator (reflected wave -> second harmonic, layers -> eps^3
family), zero-lobe traces through the degenerate operator, whose un-lifted
w-trace is integrated in x and absorbed by an explicit large-scale mean
flow (-G eps^2 theta'(eps^2 y), theta(eps^2 y) dx G, 0).

Everything dropped on the way (viscous terms at rate eps^-2, normal-velocity
forcing components, Leray-projection corrections, c-type interactions,
diffusion acting on the incident packet) is booked in a residual ledger.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import TraceTriple, lift_noncritical, lift_nonoscillating
from .characteristic import ModalMatrixSpec, Regime, roots_for
from .packets import Family, PacketAssembly, chi_bump
from .params import PhysParams

_UNDERFLOW_EXPONENT = 700.0


class CorrectorError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# interaction taxonomy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InteractionType:
    """One ordered row of the interaction table."""

    name: str
    left: Family
    right: Family
    kind: str  # 'a' (rate eps^-2), 'b' (rate eps^-3), 'c' (residual only)
    l2_power: float  # expected L^2 size eps**l2_power (delta factored out)


INTERACTIONS = (
    InteractionType("a1", Family.BLEPS2, Family.BLEPS2, "a", 0.0),
    InteractionType("a2", Family.INCIDENT, Family.BLEPS2, "a", 0.0),
    InteractionType("b1", Family.BLEPS2, Family.BLEPS3, "b", 0.5),
    InteractionType("b2", Family.INCIDENT, Family.BLEPS3, "b", 0.5),
    InteractionType("b3", Family.BLEPS3, Family.BLEPS2, "b", 1.5),
    InteractionType("c1", Family.BLEPS2, Family.INCIDENT, "c", 2.0),
    InteractionType("c2", Family.INCIDENT, Family.INCIDENT, "c", 2.0),
    InteractionType("c3", Family.BLEPS3, Family.BLEPS3, "c", 2.5),
    InteractionType("c4", Family.BLEPS3, Family.INCIDENT, "c", 3.5),
)


def classify_interactions() -> tuple[InteractionType, ...]:
    """The nine ordered family pairs, largest first; (c) rows are residual."""
    return INTERACTIONS


class Lobe(enum.Enum):
    ZERO = 0  # (l, alpha) = O(eps^2): mean-flow route
    DOUBLE = 2  # (l, alpha) near +2(k0, w0): second-harmonic route


@dataclass
class PairBatch:
    """Vectorized ordered mode pairs of one interaction row and one lobe.

    cc is the convective factor i k2 U1 - mu2 W1 of the pair (indices 1/2 =
    advecting/advected mode); weight is the product of the two quadrature
    amplitudes; (U2, W2, B2) is the advected polarization.
    """

    itype: InteractionType
    lobe: Lobe
    l: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    cc: np.ndarray
    weight: np.ndarray
    U2: np.ndarray
    W2: np.ndarray
    B2: np.ndarray


def enumerate_pairs(assembly: PacketAssembly, itype: InteractionType) -> list[PairBatch]:
    """All ordered (left, right) and (left, conj right) mode pairs.

    The linear solution is F + conj(F) with F built from the plus lobe only;
    products therefore come in four sign combinations, of which (+,+) and
    (+,-) are enumerated here and the other two follow by conjugating the
    assembled corrector.  (+,+) lands in the double lobe, (+,-) in the zero
    lobe.
    """
    L = assembly.bundle(itype.left)
    R = assembly.bundle(itype.right)
    out = []
    for sign, lobe in ((+1, Lobe.DOUBLE), (-1, Lobe.ZERO)):
        if sign > 0:
            k2, w2, lam2 = R.k, R.omega, R.lam
            amp2, U2, W2, B2 = R.amp, R.U, R.W, R.B
        else:
            k2, w2, lam2 = -R.k, -R.omega, R.lam.conj()
            amp2, U2, W2, B2 = R.amp.conj(), R.U.conj(), R.W.conj(), R.B.conj()
        l = (L.k[:, None] + k2[None, :]).ravel()
        alpha = (L.omega[:, None] + w2[None, :]).ravel()
        mu = (L.lam[:, None] + lam2[None, :]).ravel()
        cc = (
            1j * k2[None, :] * L.U[:, None] - lam2[None, :] * L.W[:, None]
        ).ravel()
        weight = (L.amp[:, None] * amp2[None, :]).ravel()
        n = len(R.amp)
        out.append(
            PairBatch(
                itype=itype,
                lobe=lobe,
                l=l,
                alpha=alpha,
                mu=mu,
                cc=cc,
                weight=weight,
                U2=np.tile(U2, len(L.amp)),
                W2=np.tile(W2, len(L.amp)),
                B2=np.tile(B2, len(L.amp)),
            )
        )
    return out


def _check_lobe(batch: PairBatch, assembly: PacketAssembly):
    eps2 = assembly.params.eps ** 2
    car = assembly.envelope.carrier
    if batch.lobe is Lobe.ZERO:
        bad = (np.abs(batch.l) > 3.0 * eps2) | (np.abs(batch.alpha) > 3.0 * eps2)
    else:
        bad = (np.abs(batch.l - 2 * car.k0) > 3.0 * eps2) | (
            np.abs(batch.alpha - 2 * car.omega0) > 3.0 * eps2
        )
    if bad.any():
        raise CorrectorError(
            f"{batch.itype.name}/{batch.lobe}: {bad.sum()} pairs fall outside "
            "their lobe's eps^2 neighborhood"
        )


# ---------------------------------------------------------------------------
# exponential mode sets (the working representation of corrector fields)
# ---------------------------------------------------------------------------


@dataclass
class ExpModes:
    """Field sum_n (cu, cw, cb)_n exp(i l_n x - i alpha_n t - mu_n y) + c.c."""

    l: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    cu: np.ndarray
    cw: np.ndarray
    cb: np.ndarray
    lobe: np.ndarray  # Lobe value per mode (0 or 2)

    @classmethod
    def empty(cls) -> "ExpModes":
        z = np.zeros(0)
        zc = np.zeros(0, dtype=complex)
        return cls(z.copy(), z.copy(), zc.copy(), zc.copy(), zc.copy(), zc.copy(), z.copy())

    @classmethod
    def concat(cls, parts) -> "ExpModes":
        parts = [p for p in parts if len(p.l)]
        if not parts:
            return cls.empty()
        return cls(
            *(
                np.concatenate([getattr(p, f) for p in parts])
                for f in ("l", "alpha", "mu", "cu", "cw", "cb", "lobe")
            )
        )

    def __len__(self):
        return len(self.l)

    def scaled(self, fu, fw=None, fb=None) -> "ExpModes":
        """New mode set with per-mode component factors (e.g. derivatives)."""
        fw = fu if fw is None else fw
        fb = fu if fb is None else fb
        return ExpModes(self.l, self.alpha, self.mu, self.cu * fu, self.cw * fw,
                        self.cb * fb, self.lobe)

    def d_dx(self) -> "ExpModes":
        return self.scaled(1j * self.l)

    def d_dy(self) -> "ExpModes":
        return self.scaled(-self.mu)

    def traces(self):
        """Wall coefficients of (u, w, d_y b): fields coeff * e^(ilx - i alpha t)."""
        return self.cu, self.cw, -self.mu * self.cb


def evaluate_modes(modes: ExpModes, t: float, x: np.ndarray, y: np.ndarray):
    """(u, w, b) on the tensor grid, conjugate part included (real output).

    Modes sharing an x-wavenumber (the lattice produces thousands per l)
    are summed into one y-profile first, so the grid work is one outer
    product per distinct l rather than per mode.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.zeros((len(y), len(x)), dtype=complex)
    w = np.zeros_like(u)
    b = np.zeros_like(u)
    if len(modes) == 0:
        return u + u.conj(), w + w.conj(), b + b.conj()
    tol = 1e-12 * max(1.0, np.abs(modes.l).max())
    for idx in _group_by_l(modes.l, tol):
        expo = -np.outer(y, modes.mu[idx])
        vert = np.where(expo.real < -_UNDERFLOW_EXPONENT, 0.0, np.exp(expo))
        phase_t = np.exp(-1j * modes.alpha[idx] * t)
        horiz = np.exp(1j * modes.l[idx[0]] * x)
        u += np.outer(vert @ (modes.cu[idx] * phase_t), horiz)
        w += np.outer(vert @ (modes.cw[idx] * phase_t), horiz)
        b += np.outer(vert @ (modes.cb[idx] * phase_t), horiz)
    return u + u.conj(), w + w.conj(), b + b.conj()


def _group_by_l(l: np.ndarray, tol: float):
    order = np.argsort(l)
    groups = []
    start = 0
    for i in range(1, len(order) + 1):
        if i == len(order) or l[order[i]] - l[order[i - 1]] > tol:
            groups.append(order[start:i])
            start = i
    return groups


def modes_norms(
    modes: ExpModes,
    x_period: float,
    t: float = 0.0,
    ny: int = 600,
    nx: int = 512,
    y_max: float | None = None,
) -> tuple[float, float]:
    """(L2, Linf) over one x-period and y in [0, y_max].

    Exploits orthogonality of distinct x-frequencies over the period: the
    squared L2 norm is the period times the sum over frequency groups of the
    y-integral of |profile|^2, plus the interference of opposite-frequency
    groups contributed by the conjugate part.  y_max defaults to 30 times
    the slowest decay scale (or the x-period for non-decaying mode sets).
    """
    if len(modes) == 0:
        return 0.0, 0.0
    rates = modes.mu.real
    if y_max is None:
        pos = rates[rates > 1e-12]
        y_max = 30.0 / pos.min() if len(pos) == len(modes) else x_period
    fast = max(rates.max(), 1.0 / y_max)
    # geometric-ish grid: dense on the fastest scale, reaching y_max
    y = np.unique(np.concatenate([
        np.linspace(0.0, min(10.0 / fast, y_max), ny // 2),
        np.linspace(0.0, y_max, ny // 2),
    ]))
    tol = 1e-9 * max(1.0, np.abs(modes.l).max())
    groups = _group_by_l(modes.l, tol)
    phase = np.exp(-1j * modes.alpha * t)
    profiles = []  # (l_group, gu(y), gw(y), gb(y))
    for idx in groups:
        expo = -modes.mu[idx, None] * y[None, :]
        E = np.where(expo.real < -_UNDERFLOW_EXPONENT, 0.0, np.exp(expo))
        cf = phase[idx]
        gu = (modes.cu[idx] * cf) @ E
        gw = (modes.cw[idx] * cf) @ E
        gb = (modes.cb[idx] * cf) @ E
        profiles.append((float(np.mean(modes.l[idx])), gu, gw, gb))

    total = 0.0
    for lval, gu, gw, gb in profiles:
        dens = np.abs(gu) ** 2 + np.abs(gw) ** 2 + np.abs(gb) ** 2
        total += 2.0 * float(np.trapezoid(dens, y))
        # interference with the conjugate lobe at -l
        for lv2, hu, hw, hb in profiles:
            if abs(lval + lv2) <= tol:
                cross = gu * hu + gw * hw + gb * hb
                total += 2.0 * float(np.real(np.trapezoid(cross, y)))
    l2 = math.sqrt(max(total, 0.0) * x_period)

    xg = np.linspace(0.0, x_period, nx, endpoint=False)
    linf = 0.0
    ph = [np.exp(1j * lval * xg) for lval, *_ in profiles]
    for comp in range(3):
        f = np.zeros((len(y), nx), dtype=complex)
        for (lval, *gs), p in zip(profiles, ph):
            f += np.outer(gs[comp], p)
        linf = max(linf, float(np.abs(f + f.conj()).max()))
    return l2, linf


# ---------------------------------------------------------------------------
# interior solves
# ---------------------------------------------------------------------------


def solve_interior_a(batch: PairBatch, params: PhysParams) -> ExpModes:
    """Rotation-only response at decay rate eps^-2 (plus divergence fix).

    Guards against secular growth: every denominator -alpha +- sin(g) must
    stay >= w0/2 in modulus.
    """
    sg = math.sin(params.gamma)
    dplus = -batch.alpha + sg
    dminus = -batch.alpha - sg
    if (np.abs(dplus) < sg / 2).any() or (np.abs(dminus) < sg / 2).any():
        raise CorrectorError(
            "resonance guard tripped: |-alpha +- sin(gamma)| < sin(gamma)/2"
        )
    S = -params.delta * batch.weight * batch.cc
    # Pi_pm (U2, B2) = ((U2 pm i B2)/2, (B2 -+ i U2)/2)
    up = 0.5 * (batch.U2 + 1j * batch.B2)
    um = 0.5 * (batch.U2 - 1j * batch.B2)
    cu = S * (up / (1j * dplus) + um / (1j * dminus))
    cb = S * (-1j * up / (1j * dplus) + 1j * um / (1j * dminus))
    cw = 1j * batch.l / batch.mu * cu
    return ExpModes(
        l=batch.l.copy(), alpha=batch.alpha.copy(), mu=batch.mu.copy(),
        cu=cu, cw=cw, cb=cb,
        lobe=np.full(len(batch.l), batch.lobe.value, dtype=float),
    )


def solve_interior_b(batch: PairBatch, params: PhysParams) -> ExpModes:
    """Rotation + vertical-diffusion response at decay rate eps^-3."""
    sg = math.sin(params.gamma)
    mbar2 = (batch.mu * params.eps ** 3) ** 2
    a11 = -1j * batch.alpha - params.nu0 * mbar2
    a22 = -1j * batch.alpha - params.kappa0 * mbar2
    det = a11 * a22 + sg * sg
    if (np.abs(det) < 0.1 * sg * sg).any():
        raise CorrectorError("det(M^-1) fell below the 0.1 sin^2(gamma) guard")
    S = -params.delta * batch.weight * batch.cc
    # M = inv([[a11, -sg], [sg, a22]])
    cu = S * (a22 * batch.U2 + sg * batch.B2) / det
    cb = S * (-sg * batch.U2 + a11 * batch.B2) / det
    cw = 1j * batch.l / batch.mu * cu
    return ExpModes(
        l=batch.l.copy(), alpha=batch.alpha.copy(), mu=batch.mu.copy(),
        cu=cu, cw=cw, cb=cb,
        lobe=np.full(len(batch.l), batch.lobe.value, dtype=float),
    )


# ---------------------------------------------------------------------------
# trace lifting
# ---------------------------------------------------------------------------


def second_harmonic_rate(gamma: float, k0: float) -> complex:
    """Leading-order reflected-wave rate Lambda_0 at (2 w0, 2 k0).

    Root of ((2w0)^2 - sin^2 g) L^2 - 2i(2k0) sg cg L + (2k0)^2 (cos^2 g
    - (2w0)^2) = 0.  The discriminant sign is governed by 4 sin^2 g - 1:
    positive -> one decaying root (evanescent second harmonic), negative ->
    purely imaginary roots (propagating second harmonic).
    """
    sg, cg = math.sin(gamma), math.cos(gamma)
    disc = 4.0 * sg * sg - 1.0
    if disc >= 0:
        lam = (2j * k0 * cg + 4.0 * k0 * math.sqrt(disc)) / (3.0 * sg)
    else:
        # both roots purely imaginary; take the one continuous in disc
        lam = (2j * k0 * cg + 4j * k0 * math.sqrt(-disc)) / (3.0 * sg)
    return lam


def _theta(s):
    """C-infinity plateau: 1 for s <= 1, 0 for s >= 2."""
    s = np.asarray(s, dtype=float)
    t = np.clip(2.0 - s, 0.0, 1.0)
    f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    g = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return f / (f + g)


def _theta_prime(s, h=1e-6):
    s = np.asarray(s, dtype=float)
    return (_theta(s + h) - _theta(s - h)) / (2 * h)


@dataclass
class MeanFlowField:
    """W1_MF = (-G eps^2 theta'(eps^2 y), theta(eps^2 y) dx G, 0).

    G(x, t) = sum_n G_n exp(i l_n x - i alpha_n t) + c.c.; exactly
    divergence-free, w-trace at y=0 equal to minus the leftover w-trace of
    the degenerate lifts.
    """

    l: np.ndarray
    alpha: np.ndarray
    G: np.ndarray
    eps: float

    def __len__(self):
        return len(self.l)

    def g_values(self, t, x):
        x = np.asarray(x, dtype=float)
        ph = np.exp(1j * (np.subtract.outer(x * 0, self.alpha * t) + np.outer(x, self.l)))
        g = ph @ self.G
        gx = ph @ (1j * self.l * self.G)
        return g + g.conj(), gx + gx.conj()

    def evaluate(self, t, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        g, gx = self.g_values(t, x)
        e2 = self.eps ** 2
        u = -e2 * np.outer(_theta_prime(e2 * y), g.real)
        w = np.outer(_theta(e2 * y), gx.real)
        b = np.zeros_like(w)
        return u, w, b

    def norms(self, x_period: float, t: float = 0.0, nx: int = 512):
        if len(self) == 0:
            return 0.0, 0.0
        e2 = self.eps ** 2
        y = np.linspace(0.0, 2.5 / e2, 800)
        x = np.linspace(0.0, x_period, nx, endpoint=False)
        g, gx = self.g_values(t, x)
        dx = x_period / nx
        th, thp = _theta(e2 * y), _theta_prime(e2 * y)
        l2 = math.sqrt(
            float(np.trapezoid(e2**2 * thp**2, y)) * float(np.sum(np.abs(g) ** 2) * dx)
            + float(np.trapezoid(th**2, y)) * float(np.sum(np.abs(gx) ** 2) * dx)
        )
        linf = max(
            e2 * float(np.abs(thp).max()) * float(np.abs(g).max()),
            float(np.abs(gx).max()),
        )
        return l2, linf


def collect_traces(interior: ExpModes):
    """Split the wall traces of the interior modes by lobe.

    Returns dict Lobe -> (l, alpha, tu, tw, tb) arrays; the trace fields are
    the coefficients times exp(i l x - i alpha t).
    """
    tu, tw, tb = interior.traces()
    out = {}
    for lobe in Lobe:
        m = interior.lobe == lobe.value
        out[lobe] = (interior.l[m], interior.alpha[m], tu[m], tw[m], tb[m])
    return out


def lift_second_harmonic(
    traces, params: PhysParams
) -> tuple[ExpModes, ExpModes]:
    """Cancel double-lobe wall traces: (eps^3-layer modes, second harmonic)."""
    l, alpha, tu, tw, tb = traces
    bl_parts, rw_parts = [], []
    for i in range(len(l)):
        spec = ModalMatrixSpec(params.nu, params.kappa, alpha[i], l[i], params.gamma)
        roots = roots_for(spec, params.eps)
        if roots.regime is not Regime.NON_CRITICAL:
            raise CorrectorError(
                f"double-lobe node (l={l[i]:.4g}, alpha={alpha[i]:.4g}) "
                f"classified {roots.regime}, expected non-critical"
            )
        rw, bl = lift_noncritical(
            spec, roots, TraceTriple(-tu[i], -tw[i], -tb[i])
        )
        for lift, store in ((rw, rw_parts), (bl, bl_parts)):
            for m in lift.modes:
                store.append((l[i], alpha[i], m.lam, m.a * m.vec.U,
                              m.a * m.vec.W, m.a * m.vec.B))
    def build(rows):
        if not rows:
            return ExpModes.empty()
        cols = list(zip(*rows))
        return ExpModes(
            l=np.array(cols[0]), alpha=np.array(cols[1]),
            mu=np.array(cols[2], dtype=complex),
            cu=np.array(cols[3], dtype=complex),
            cw=np.array(cols[4], dtype=complex),
            cb=np.array(cols[5], dtype=complex),
            lobe=np.full(len(rows), Lobe.DOUBLE.value, dtype=float),
        )
    return build(bl_parts), build(rw_parts)


def _shear_lift(alpha, tu, tb, params: PhysParams):
    """Decaying lift at l = 0 (x-independent trace).

    With no x-dependence the normal velocity decouples (w = 0 identically)
    and the remaining (u, b) system has the quartic characteristic
    polynomial -nu kappa L^4 - i alpha (nu+kappa) L^2 + (alpha^2 - sin^2 g).
    Exactly two roots decay; they match the u- and d_y b-traces.
    """
    nu, kappa = params.nu, params.kappa
    sg = math.sin(params.gamma)
    zeta = alpha * alpha - sg * sg
    roots = np.roots([-nu * kappa, 0.0, -1j * alpha * (nu + kappa), 0.0, zeta])
    dec = roots[roots.real > 0]
    if len(dec) != 2:
        raise CorrectorError(f"shear lift at alpha={alpha:.4g}: {len(dec)} decaying roots")
    B = sg / (1j * alpha + kappa * dec**2)
    mat = np.array([[1.0, 1.0], [-dec[0] * B[0], -dec[1] * B[1]]], dtype=complex)
    a = np.linalg.solve(mat, np.array([-tu, -tb], dtype=complex))
    return [(dec[j], a[j], B[j]) for j in range(2)]


def lift_mean_flow(
    traces, params: PhysParams
) -> tuple[ExpModes, MeanFlowField, float]:
    """Cancel zero-lobe wall traces.

    u and d_y b go through the degenerate (non-oscillating) lift; the
    leftover w-trace per node is integrated in x (divide by il) and lifted
    by the explicit mean flow.  Nodes with |l| < 1e-14 carry no w-trace at
    all (w = il/mu u) and are handled by a two-mode shear lift instead;
    any unliftable leftover magnitude is returned as a booked residual.
    """
    l, alpha, tu, tw, tb = traces
    bl_rows, g_l, g_alpha, g_coef = [], [], [], []
    dropped = 0.0
    for i in range(len(l)):
        if abs(l[i]) < 1e-14:
            for lam, a, B in _shear_lift(alpha[i], tu[i], tb[i], params):
                bl_rows.append((0.0, alpha[i], lam, a, 0.0, a * B))
            dropped += abs(tw[i])
            continue
        spec = ModalMatrixSpec(params.nu, params.kappa, alpha[i], l[i], params.gamma)
        roots = roots_for(spec, params.eps)
        if roots.regime is not Regime.NON_OSCILLATING:
            raise CorrectorError(
                f"zero-lobe node (l={l[i]:.4g}, alpha={alpha[i]:.4g}) "
                f"classified {roots.regime}, expected non-oscillating"
            )
        lift, leftover = lift_nonoscillating(
            spec, roots, TraceTriple(-tu[i], -tw[i], -tb[i])
        )
        for m in lift.modes:
            bl_rows.append((l[i], alpha[i], m.lam, m.a * m.vec.U,
                            m.a * m.vec.W, m.a * m.vec.B))
        # remaining wall value of w is exactly `leftover`; the mean flow
        # must carry w(0) = -leftover, i.e. dx G = -leftover
        g_l.append(l[i])
        g_alpha.append(alpha[i])
        g_coef.append(-leftover / (1j * l[i]))
    if bl_rows:
        cols = list(zip(*bl_rows))
        bl = ExpModes(
            l=np.array(cols[0]), alpha=np.array(cols[1]),
            mu=np.array(cols[2], dtype=complex),
            cu=np.array(cols[3], dtype=complex),
            cw=np.array(cols[4], dtype=complex),
            cb=np.array(cols[5], dtype=complex),
            lobe=np.full(len(bl_rows), Lobe.ZERO.value, dtype=float),
        )
    else:
        bl = ExpModes.empty()
    mf = MeanFlowField(
        l=np.array(g_l), alpha=np.array(g_alpha),
        G=np.array(g_coef, dtype=complex), eps=params.eps,
    )
    return bl, mf, dropped


def trace_density(assembly: PacketAssembly, params: PhysParams):
    """(|u|, |w|, |d_y b|) wall-trace densities of the largest interaction.

    Evaluated for the eps^2-layer self-interaction at the packet's center
    wavevector with the envelope, quadrature weights and delta stripped, on
    the double lobe: the raw size of what the second-harmonic lift has to
    absorb, expected to grow like (eps^-4, eps^-2, eps^-6).
    """
    inc = assembly.families[Family.INCIDENT]
    bl2 = assembly.families[Family.BLEPS2]
    i = int(np.argmax(np.abs(inc.amp)))
    node = slice(2 * i, 2 * i + 2)
    raw = bl2.amp[node] / inc.amp[i]  # lift amplitudes per unit trace
    k, w, lam = bl2.k[node], bl2.omega[node], bl2.lam[node]
    U, W, B = bl2.U[node], bl2.W[node], bl2.B[node]
    batch = PairBatch(
        itype=INTERACTIONS[0], lobe=Lobe.DOUBLE,
        l=np.add.outer(k, k).ravel(),
        alpha=np.add.outer(w, w).ravel(),
        mu=np.add.outer(lam, lam).ravel(),
        cc=(1j * k[None, :] * U[:, None] - lam[None, :] * W[:, None]).ravel(),
        weight=np.outer(raw, raw).ravel(),
        U2=np.tile(U, 2), W2=np.tile(W, 2), B2=np.tile(B, 2),
    )
    unit = PhysParams(gamma=params.gamma, nu0=params.nu0, kappa0=params.kappa0,
                      eps=params.eps, delta=1.0)
    tu, tw, tb = solve_interior_a(batch, unit).traces()
    return abs(tu.sum()), abs(tw.sum()), abs(tb.sum())


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

W1_BLEPS2 = "W1_BLeps2"
W1_BLEPS3 = "W1_BLeps3"
W1_II = "W1_II"
W1_MF = "W1_MF"


@dataclass
class CorrectorAssembly:
    params: PhysParams
    w0: PacketAssembly
    families: dict
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def x_period(self) -> float:
        return self.w0.x_period

    def norms(self, family: str, t: float = 0.0) -> tuple[float, float]:
        if family == W1_MF:
            return self.families[W1_MF].norms(self.x_period, t=t)
        return modes_norms(self.families[family], self.x_period, t=t)


def _source_modes(batch: PairBatch, delta: float) -> ExpModes:
    """The forcing -delta * weight * cc * (U2, W2, B2) as a mode set."""
    S = -delta * batch.weight * batch.cc
    return ExpModes(
        l=batch.l.copy(), alpha=batch.alpha.copy(), mu=batch.mu.copy(),
        cu=S * batch.U2, cw=S * batch.W2, cb=S * batch.B2,
        lobe=np.full(len(batch.l), batch.lobe.value, dtype=float),
    )


def assemble_W1(
    assembly: PacketAssembly,
    params: PhysParams,
    rows: tuple[str, ...] | None = None,
) -> CorrectorAssembly:
    """Full corrector: interior solves, lifts, mean flow, residual ledger.

    `rows` restricts the interaction table to the named rows (default: all).
    Restricting to a single row reproduces the per-interaction bookkeeping
    of the size estimates; the full assembly is smaller than the row-wise
    sum because Q(W0, W0) vanishes at the wall (u0 = w0 = 0 there), so the
    per-row wall traces largely cancel when combined.
    """
    a_parts, b_parts = [], []
    residuals: dict[str, float] = {}
    eps, delta = params.eps, params.delta
    nu6 = params.eps ** 6

    for itype in INTERACTIONS:
        if rows is not None and itype.name not in rows:
            continue
        for batch in enumerate_pairs(assembly, itype):
            if len(batch.l) == 0:
                continue
            _check_lobe(batch, assembly)
            if itype.kind == "a":
                modes = solve_interior_a(batch, params)
                a_parts.append(modes)
                # booked leftovers of the 2x2 reduction:
                # vertical diffusion on the response ...
                visc = modes.scaled(
                    nu6 * params.nu0 * (batch.mu**2 - batch.l**2),
                    nu6 * params.nu0 * (batch.mu**2 - batch.l**2),
                    nu6 * params.kappa0 * (batch.mu**2 - batch.l**2),
                )
                residuals["r1_aL_viscous"] = residuals.get("r1_aL_viscous", 0.0) + \
                    modes_norms(visc, assembly.x_period)[0]
                # ... the w-coupling dropped from the buoyancy row ...
                wrow = ExpModes(batch.l, batch.alpha, batch.mu,
                                np.zeros_like(modes.cu),
                                np.zeros_like(modes.cu),
                                math.cos(params.gamma) * modes.cw,
                                modes.lobe)
                residuals["r1_aL_wrow"] = residuals.get("r1_aL_wrow", 0.0) + \
                    modes_norms(wrow, assembly.x_period)[0]
                # ... and the dropped Leray correction, O(l/mu) of the source
                src = _source_modes(batch, delta)
                leray = src.scaled(np.abs(batch.l) / np.abs(batch.mu))
                residuals["r1_aL_leray"] = residuals.get("r1_aL_leray", 0.0) + \
                    modes_norms(leray, assembly.x_period)[0]
                # dropped normal-velocity forcing component
                wsrc = ExpModes(batch.l, batch.alpha, batch.mu,
                                np.zeros_like(src.cu), src.cw,
                                np.zeros_like(src.cu), src.lobe)
                residuals["r1_aL_wforce"] = residuals.get("r1_aL_wforce", 0.0) + \
                    modes_norms(wsrc, assembly.x_period)[0]
            elif itype.kind == "b":
                modes = solve_interior_b(batch, params)
                b_parts.append(modes)
                src = _source_modes(batch, delta)
                wsrc = ExpModes(batch.l, batch.alpha, batch.mu,
                                np.zeros_like(src.cu), src.cw,
                                np.zeros_like(src.cu), src.lobe)
                residuals["r1_bL_wforce"] = residuals.get("r1_bL_wforce", 0.0) + \
                    modes_norms(wsrc, assembly.x_period)[0]
                leray = src.scaled(np.abs(batch.l) / np.abs(batch.mu))
                residuals["r1_bL_leray"] = residuals.get("r1_bL_leray", 0.0) + \
                    modes_norms(leray, assembly.x_period)[0]
            else:  # residual-only interaction
                src = _source_modes(batch, delta)
                key = f"c_terms_{itype.name}"
                ymax = None if batch.mu.real.min() > 1e-12 else assembly.x_period
                residuals[key] = residuals.get(key, 0.0) + \
                    modes_norms(src, assembly.x_period, y_max=ymax)[0]

    interior_a = ExpModes.concat(a_parts)
    interior_b = ExpModes.concat(b_parts)
    interior = ExpModes.concat([interior_a, interior_b])

    traces = collect_traces(interior)
    bl3_ii, w1_ii = lift_second_harmonic(traces[Lobe.DOUBLE], params)
    bl3_mf, w1_mf, dropped = lift_mean_flow(traces[Lobe.ZERO], params)
    if dropped:
        residuals["mf_dropped_nodes"] = dropped

    # mean-flow equation residual: (d_t u_MF, d_t w_MF, u_MF sg + w_MF cg)
    if len(w1_mf):
        mf_dt = MeanFlowField(w1_mf.l, w1_mf.alpha,
                              -1j * w1_mf.alpha * w1_mf.G, eps)
        l2_dt, _ = mf_dt.norms(assembly.x_period)
        l2_mf, _ = w1_mf.norms(assembly.x_period)
        residuals["r1_aMF"] = l2_dt + l2_mf  # |L W_MF| <= |W_MF| rowwise
    w1_bl3 = ExpModes.concat([interior_b, bl3_ii, bl3_mf])

    return CorrectorAssembly(
        params=params,
        w0=assembly,
        families={
            W1_BLEPS2: interior_a,
            W1_BLEPS3: w1_bl3,
            W1_II: w1_ii,
            W1_MF: w1_mf,
        },
        residuals=residuals,
    )


def rowwise_family_sizes(
    assembly: PacketAssembly, params: PhysParams, t: float = 0.0
) -> dict[str, tuple[float, float]]:
    """Per-family (L2, Linf) sizes, aggregated row by interaction row.

    This is the quantity the corrector size estimates control: each row is
    lifted separately and the norms are added, mirroring the row-by-row
    construction (triangle inequality).  The fully assembled corrector is
    smaller; see assemble_W1.
    """
    totals = {f: [0.0, 0.0] for f in (W1_BLEPS2, W1_BLEPS3, W1_II, W1_MF)}
    for it in INTERACTIONS:
        if it.kind == "c":
            continue
        casm = assemble_W1(assembly, params, rows=(it.name,))
        for fam, acc in totals.items():
            l2, linf = casm.norms(fam, t=t)
            acc[0] += l2
            acc[1] += linf
    return {f: (v[0], v[1]) for f, v in totals.items()}


def evaluate_W1(casm: CorrectorAssembly, t, x, y):
    """Total corrector field (u, w, b) on the grid."""
    u = w = b = 0.0
    for fam in (W1_BLEPS2, W1_BLEPS3, W1_II):
        du, dw, db = evaluate_modes(casm.families[fam], t, x, y)
        u, w, b = u + du, w + dw, b + db
    du, dw, db = casm.families[W1_MF].evaluate(t, x, y)
    return u + du, w + dw, b + db


def wall_trace_check(casm: CorrectorAssembly, t: float = 0.0, nx: int = 256):
    """Max wall residual of (u, w, d_y b) relative to the interior traces."""
    x = np.linspace(0.0, casm.x_period, nx, endpoint=False)
    y0 = np.array([0.0])
    u, w, _ = evaluate_W1(casm, t, x, y0)
    dyb = 0.0
    for fam in (W1_BLEPS2, W1_BLEPS3, W1_II):
        _, _, db = evaluate_modes(casm.families[fam].d_dy(), t, x, y0)
        dyb = dyb + db
    scale = 1e-300
    for fam in (W1_BLEPS2, W1_BLEPS3):
        tu, tw, tb = casm.families[fam].traces()
        if len(tu):
            scale = max(scale, np.abs(tu).sum(), np.abs(tw).sum(), np.abs(tb).sum())
    return max(np.abs(u).max(), np.abs(w).max(), np.abs(dyb).max()) / scale


# ---------------------------------------------------------------------------
# grid-based quadratic form and residual report
# ---------------------------------------------------------------------------


def quadratic_Q(left, right, x, y):
    """(u_L dx + w_L dy) W_R on a tensor grid, without projection.

    left/right are (u, w, b) arrays on the (y, x) grid; dx is spectral
    (periodic x), dy a 4th-order interior finite difference.  This is the
    advection form of the quadratic term; the Leray projection is applied
    only in the declared boundary-layer approximation elsewhere.
    """
    uL, wL, _ = left
    if any(a.shape != uL.shape for a in right):
        raise ValueError("grid mismatch between left and right fields")
    kx = 2.0 * math.pi * np.fft.fftfreq(len(x), d=(x[1] - x[0]))
    dy = y[1] - y[0]
    out = []
    for f in right:
        fx = np.fft.ifft(1j * kx[None, :] * np.fft.fft(f, axis=1), axis=1)
        fy = np.gradient(f, dy, axis=0, edge_order=2)
        # 4th-order central in the interior
        if f.shape[0] >= 5:
            fy[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dy)
        out.append(uL * fx + wL * fy)
    return tuple(out)


def skew_energy(fieldtriple, gamma: float, x, y) -> float:
    """Discrete integral of (L W) . W; zero because L is pointwise skew."""
    u, w, b = fieldtriple
    sg, cg = math.sin(gamma), math.cos(gamma)
    lu = -sg * b
    lw = -cg * b
    lb = sg * u + cg * w
    dens = (lu * u + lw * w + lb * b).real
    dx = x[1] - x[0]
    return float(np.trapezoid(dens.sum(axis=1) * dx, y))


def residual_Rapp(casm: CorrectorAssembly) -> dict:
    """Ledger of R_app = r1 + delta (c) + cross terms - eps^6 diffusion(inc).

    Every entry is an L^2 norm (or a Hoelder-product upper bound for the
    cross terms); 'total' is their sum, to be compared against
    delta eps^2 + delta^2 + eps^6.
    """
    params = casm.params
    w0 = casm.w0
    eps, delta = params.eps, params.delta
    report = dict(casm.residuals)

    # diffusion acting on the incident packet: eps^6 (nu0 Du, nu0 Dw, k0 Db)
    inc = w0.families[Family.INCIDENT]
    lap = (inc.lam**2 - inc.k**2) * eps**6
    diff = ExpModes(
        l=inc.k.copy(), alpha=inc.omega.copy(), mu=inc.lam.copy(),
        cu=params.nu0 * lap * inc.amp * inc.U,
        cw=params.nu0 * lap * inc.amp * inc.W,
        cb=params.kappa0 * lap * inc.amp * inc.B,
        lobe=np.zeros(len(inc.k)),
    )
    report["eps6_diffusion_inc"] = modes_norms(
        diff, w0.x_period, y_max=w0.x_period
    )[0]

    # cross terms delta Q(W0, W1) etc., bounded by Hoelder products
    from .packets import default_grid, evaluate_packet, packet_norms

    grid0 = default_grid(w0, Family.BLEPS2)
    f0 = evaluate_packet(w0, Family.SUM, 0.0, grid0)
    u0_inf = float(np.abs(f0.u).max())
    w0_inf = float(np.abs(f0.w).max())
    dx0 = packet_norms(evaluate_packet(w0, Family.SUM, 0.0, grid0, deriv="x"))[0]
    dy0 = packet_norms(evaluate_packet(w0, Family.SUM, 0.0, grid0, deriv="y"))[0]

    u1_inf = w1_inf = dx1 = dy1 = 0.0
    for fam in (W1_BLEPS2, W1_BLEPS3, W1_II):
        m = casm.families[fam]
        if len(m) == 0:
            continue
        _, linf = modes_norms(m, casm.x_period)
        u1_inf = max(u1_inf, linf)
        w1_inf = max(w1_inf, linf)
        dx1 += modes_norms(m.d_dx(), casm.x_period)[0]
        dy1 += modes_norms(m.d_dy(), casm.x_period)[0]

    report["cross_Q_W0_W1"] = delta * (u0_inf * dx1 + w0_inf * dy1)
    report["cross_Q_W1_W0"] = delta * (u1_inf * dx0 + w1_inf * dy0)
    report["cross_Q_W1_W1"] = delta * (u1_inf * dx1 + w1_inf * dy1)

    # c-type entries were already booked per batch with the delta factor
    report["total"] = sum(v for k, v in report.items() if k != "total")
    return report


def grad_Wapp_Linf(casm: CorrectorAssembly) -> float:
    """Max-norm of the gradient of W0 + W1 (dominated by the eps^2 layer)."""
    from .packets import default_grid, evaluate_packet

    w0 = casm.w0
    grid = default_grid(w0, Family.BLEPS2)
    worst = 0.0
    for d in ("x", "y"):
        f = evaluate_packet(w0, Family.SUM, 0.0, grid, deriv=d)
        worst = max(worst, *(float(np.abs(c).max()) for c in f.components()))
    for fam in (W1_BLEPS2, W1_BLEPS3, W1_II):
        m = casm.families[fam]
        if len(m) == 0:
            continue
        for dm in (m.d_dx(), m.d_dy()):
            worst = max(worst, modes_norms(dm, casm.x_period)[1])
    return worst
