"""Incident wave packet and its viscous boundary-layer companions.

The linear approximate solution is built from a spectral envelope

    A(k, m) = eps^-2 [ chi((k-k0)/eps^2) chi((m-m0)/eps^2)
                     + chi((k+k0)/eps^2) chi((m+m0)/eps^2) ],

with chi a C-infinity bump supported on [-1, 1] and (k0, m0) a critical
carrier.  Each spectral node (k, m) contributes an incident plane wave with
polarization X = (1, -k/m, i (k cos g - m sin g)/(m w)) and a boundary lift
(labels 2, 3, 5 of the characteristic roots at that (w, k)) chosen so the
total wall traces of u, w and d_y b vanish node by node.  The lambda_2 and
lambda_3 modes decay on the eps^2 scale and the lambda_5 mode on the eps^3
scale, which splits the lift into two boundary-layer families.

The minus lobe of A is the exact complex conjugate of the plus lobe, so
only the plus lobe is assembled; physical fields are F + conj(F).  The
discrete quadrature makes every field periodic in x (and the incident one
in y) with period 2 pi / (eps^2 * dxi), which packet_norms exploits.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import TraceTriple, lift_critical
from .characteristic import ModalMatrixSpec, Regime, roots_for
from .params import CriticalCarrier, PhysParams, dispersion_omega

_UNDERFLOW_EXPONENT = 700.0

_CRITICAL_FAMILY = (
    Regime.CRITICAL_SMALL_DIFF,
    Regime.CRITICAL_DY,
    Regime.CRITICAL_LARGE_DIFF,
)


def chi_bump(s):
    """C-infinity bump exp(-1/(1-s^2)) on |s| < 1, normalized to peak 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si) + 1.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Envelope:
    """Spectral envelope: bump profile, carrier and concentration scale."""

    carrier: CriticalCarrier
    eps: float
    chi: callable = chi_bump

    def amplitude(self, k, m):
        """A(k, m): both lobes, concentration eps^2 around +/-(k0, m0)."""
        e2 = self.eps**2
        c = self.carrier
        return (
            self.chi((np.asarray(k) - c.k0) / e2) * self.chi((np.asarray(m) - c.m0) / e2)
            + self.chi((np.asarray(k) + c.k0) / e2) * self.chi((np.asarray(m) + c.m0) / e2)
        ) / e2


@dataclass(frozen=True)
class QuadratureSpec:
    """Tensor trapezoid rule on the plus lobe [-1, 1]^2 in (xi, eta)."""

    nodes_per_lobe: int = 9

    def __post_init__(self):
        if self.nodes_per_lobe < 4:
            raise ValueError("need at least 4 nodes per lobe")

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.nodes_per_lobe
        s = np.linspace(-1.0, 1.0, n)
        h = s[1] - s[0]
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        return s, w


class Family(enum.Enum):
    INCIDENT = "Incident"
    BLEPS2 = "BLeps2"
    BLEPS3 = "BLeps3"
    SECOND_HARMONIC = "SecondHarmonic"
    MEAN_FLOW = "MeanFlow"
    SUM = "Sum"


@dataclass
class ModeBundle:
    """Vectorized plane-wave/boundary-layer modes of one family.

    Each mode is amp * (U, W, B) * exp(i(k x - omega t)) * vert(y), where
    vert is exp(i m y) for oscillating modes (lam = -i m) and exp(-lam y)
    for decaying ones; both are covered by exp(-lam y).
    """

    k: np.ndarray
    omega: np.ndarray
    lam: np.ndarray  # vertical rate; purely imaginary for the incident family
    amp: np.ndarray
    U: np.ndarray
    W: np.ndarray
    B: np.ndarray

    @classmethod
    def empty(cls) -> "ModeBundle":
        z = np.zeros(0, dtype=complex)
        return cls(k=z.real.copy(), omega=z.real.copy(), lam=z.copy(), amp=z.copy(),
                   U=z.copy(), W=z.copy(), B=z.copy())

    def __len__(self):
        return len(self.amp)


class RegimeError(RuntimeError):
    """A quadrature node fell outside the critical root family."""


@dataclass
class PacketAssembly:
    """All modes of the linear approximate solution, grouped by family."""

    params: PhysParams
    envelope: Envelope
    quad: QuadratureSpec
    families: dict[Family, ModeBundle]
    x_period: float  # period of the discrete k-lattice in x

    def bundle(self, family: Family) -> ModeBundle:
        if family is Family.SUM:
            parts = [self.families[f] for f in (Family.INCIDENT, Family.BLEPS2, Family.BLEPS3)]
            return ModeBundle(
                k=np.concatenate([p.k for p in parts]),
                omega=np.concatenate([p.omega for p in parts]),
                lam=np.concatenate([p.lam for p in parts]),
                amp=np.concatenate([p.amp for p in parts]),
                U=np.concatenate([p.U for p in parts]),
                W=np.concatenate([p.W for p in parts]),
                B=np.concatenate([p.B for p in parts]),
            )
        return self.families[family]


def incident_polarization(k: float, m: float, gamma: float, omega: float):
    """X_{k,m} = (1, -k/m, i (k cos g - m sin g)/(m w)); divergence-free."""
    num = k * math.cos(gamma) - m * math.sin(gamma)
    return 1.0 + 0.0j, -k / m + 0.0j, 1j * num / (m * omega)


def assemble_W0(
    params: PhysParams, envelope: Envelope, quad: QuadratureSpec
) -> PacketAssembly:
    """Quadrature of the plus lobe: incident modes plus per-node wall lifts.

    For every node, the lift cancels the incident wall traces
    (u, w, d_y b) = (1, -k/m, -(k cos g - m sin g)/w) times the node
    amplitude, so the assembled solution satisfies the wall conditions with
    no error at all; the only linear residual is viscosity acting on the
    incident modes.
    """
    eps = params.eps
    car = envelope.carrier
    if abs(car.gamma - params.gamma) > 1e-14:
        raise ValueError("carrier and params disagree on gamma")
    e2 = eps**2
    s, wts = quad.nodes_weights()
    sg, cg = math.sin(params.gamma), math.cos(params.gamma)

    inc: dict[str, list] = {n: [] for n in ("k", "omega", "lam", "amp", "U", "W", "B")}
    bl2 = {n: [] for n in inc}
    bl3 = {n: [] for n in inc}

    for i, xi in enumerate(s):
        for j, eta in enumerate(s):
            chi2 = envelope.chi(xi) * envelope.chi(eta)
            if chi2 == 0.0:
                continue
            k = car.k0 + e2 * xi
            m = car.m0 + e2 * eta
            omega = dispersion_omega(k, m, params.gamma, car.branch)
            # node amplitude: A * dk * dm = eps^2 chi chi w_i w_j
            amp = e2 * chi2 * wts[i] * wts[j]
            U, W, B = incident_polarization(k, m, params.gamma, omega)
            inc["k"].append(k)
            inc["omega"].append(omega)
            inc["lam"].append(-1j * m)  # exp(-lam y) = exp(i m y)
            inc["amp"].append(amp)
            inc["U"].append(U)
            inc["W"].append(W)
            inc["B"].append(B)

            spec = ModalMatrixSpec(params.nu, params.kappa, omega, k, params.gamma)
            roots = roots_for(spec, eps)
            if roots.regime not in _CRITICAL_FAMILY:
                raise RegimeError(
                    f"node (k={k:.4g}, m={m:.4g}) classified {roots.regime}; "
                    "the packet construction assumes the critical root family"
                )
            num = k * cg - m * sg
            traces = TraceTriple(-amp, amp * k / m, amp * num / omega)
            lift = lift_critical(spec, roots, traces)
            for mode in lift.modes:
                tgt = bl3 if mode.label == 5 else bl2
                tgt["k"].append(k)
                tgt["omega"].append(omega)
                tgt["lam"].append(mode.lam)
                tgt["amp"].append(mode.a)
                tgt["U"].append(mode.vec.U)
                tgt["W"].append(mode.vec.W)
                tgt["B"].append(mode.vec.B)

    def pack(d):
        return ModeBundle(
            k=np.array(d["k"], dtype=float),
            omega=np.array(d["omega"], dtype=float),
            lam=np.array(d["lam"], dtype=complex),
            amp=np.array(d["amp"], dtype=complex),
            U=np.array(d["U"], dtype=complex),
            W=np.array(d["W"], dtype=complex),
            B=np.array(d["B"], dtype=complex),
        )

    dxi = s[1] - s[0]
    return PacketAssembly(
        params=params,
        envelope=envelope,
        quad=quad,
        families={
            Family.INCIDENT: pack(inc),
            Family.BLEPS2: pack(bl2),
            Family.BLEPS3: pack(bl3),
        },
        x_period=2.0 * math.pi / (e2 * dxi),
    )


@dataclass
class PacketField:
    """Evaluated field on a tensor grid; components include the c.c. part."""

    x: np.ndarray
    y: np.ndarray
    t: float
    u: np.ndarray  # shape (len(y), len(x))
    w: np.ndarray
    b: np.ndarray
    family: Family
    warnings: list[str] = field(default_factory=list)

    def components(self):
        return self.u, self.w, self.b


def _vertical(lam: complex, y: np.ndarray) -> np.ndarray:
    expo = -lam * y
    return np.where(expo.real < -_UNDERFLOW_EXPONENT, 0.0, np.exp(expo))


def evaluate_packet(
    assembly: PacketAssembly,
    family: Family,
    t: float,
    grid: tuple[np.ndarray, np.ndarray],
    deriv: str | None = None,
) -> PacketField:
    """Sum the family's modes on the grid; the conjugate lobe is added.

    deriv = 'x' or 'y' returns the analytic derivative field instead (each
    mode multiplied by ik, resp. -lam); None returns the field itself.
    """
    x, y = (np.asarray(g, dtype=float) for g in grid)
    bundle = assembly.bundle(family)
    u = np.zeros((len(y), len(x)), dtype=complex)
    w = np.zeros_like(u)
    b = np.zeros_like(u)
    for n in range(len(bundle)):
        horiz = np.exp(1j * (bundle.k[n] * x - bundle.omega[n] * t))
        vert = _vertical(bundle.lam[n], y)
        factor = {None: 1.0, "x": 1j * bundle.k[n], "y": -bundle.lam[n]}[deriv]
        mode = (bundle.amp[n] * factor) * np.outer(vert, horiz)
        u += bundle.U[n] * mode
        w += bundle.W[n] * mode
        b += bundle.B[n] * mode
    return PacketField(
        x=x, y=y, t=float(t), u=u + u.conj(), w=w + w.conj(), b=b + b.conj(),
        family=family,
    )


def default_grid(
    assembly: PacketAssembly, family: Family
) -> tuple[np.ndarray, np.ndarray]:
    """Grid adapted to the family: one x-period, y resolving its decay scale.

    x spans exactly one lattice period (periodic trapezoid is then exact for
    the L^2 integral); y spans the slower of the decay scales present, with
    enough points for >= 8 samples inside the thinnest layer.
    """
    eps = assembly.params.eps
    period = assembly.x_period
    cycles = abs(assembly.envelope.carrier.k0) * period / (2.0 * math.pi)
    nx = max(64, int(8 * cycles))
    x = np.linspace(0.0, period, nx, endpoint=False)

    bundle = assembly.bundle(family)
    rates = bundle.lam.real
    if family is Family.INCIDENT or rates.max(initial=0.0) <= 0.0:
        # oscillating in y: one m-lattice period
        y = np.linspace(0.0, period, max(64, int(8 * cycles)))
    else:
        slow = rates[rates > 0].min()
        fast = rates[rates > 0].max()
        depth = 30.0 / slow
        ny = max(200, int(8 * depth * fast / 30.0), 256)
        y = np.linspace(0.0, depth, min(ny, 4000))
    return x, y


def packet_norms(fld: PacketField) -> tuple[float, float]:
    """(L2, Linf) of the field over its grid.

    L2 is the trapezoid rule in y times a uniform rule in x (the x-axis is
    one exact period of the assembly lattice, where the uniform rule is the
    periodic trapezoid rule).  Warns if the top-of-grid values are not
    negligible (truncated decay).
    """
    dx = fld.x[1] - fld.x[0]
    dens = sum(np.abs(c) ** 2 for c in fld.components())
    l2 = math.sqrt(float(np.trapezoid(dens.sum(axis=1) * dx, fld.y)))
    linf = max(float(np.abs(c).max()) for c in fld.components())
    top = max(float(np.abs(c[-1, :]).max()) for c in fld.components())
    if fld.family not in (Family.INCIDENT, Family.SUM) and linf > 0 and top > 1e-6 * linf:
        fld.warnings.append(
            f"grid truncation: top-row max {top:.3g} vs field max {linf:.3g}"
        )
    return l2, linf


def component_anisotropy(
    assembly: PacketAssembly, family: Family, t: float = 0.0
) -> float:
    """||w|| / ||u|| (L2) for a boundary-layer family.

    The wall-normal velocity of the eps^2 layer is smaller than the
    tangential one by O(eps^2), and by O(eps^3) for the eps^3 layer.
    """
    if family not in (Family.BLEPS2, Family.BLEPS3):
        raise ValueError("anisotropy is defined for the boundary-layer families")
    grid = default_grid(assembly, family)
    fld = evaluate_packet(assembly, family, t, grid)
    dx = fld.x[1] - fld.x[0]
    nu = math.sqrt(float(np.trapezoid((np.abs(fld.u) ** 2).sum(axis=1) * dx, fld.y)))
    nw = math.sqrt(float(np.trapezoid((np.abs(fld.w) ** 2).sum(axis=1) * dx, fld.y)))
    return nw / nu
