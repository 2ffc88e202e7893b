"""Experiment harness: JSON configs, parameter sweeps, CSV/manifest outputs.

Each experiment writes, under ``output_dir``:

* one or more CSV files (UTF-8, header row) with the measured quantities,
* for sweeps, a ``slopes.csv`` with ordinary least-squares log-log fits,
* a ``manifest.json`` recording the full config, its SHA-256 hash and the
  package/library versions, so artifacts are traceable and reruns with the
  same config + seed are bit-identical.

Field dumps (the ``dns`` experiment) are raw float64 little-endian arrays
with a JSON sidecar describing shape, components and grid.
"""

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .boundary import (
    TraceTriple,
    lift_critical,
    lift_noncritical,
    lift_nonoscillating,
)
from .characteristic import ModalMatrixSpec, Regime, roots_for
from .corrector import (
    W1_BLEPS2,
    W1_BLEPS3,
    W1_II,
    W1_MF,
    assemble_W1,
    residual_Rapp,
    rowwise_family_sizes,
)
from .dns import (
    SimConfig,
    Solver,
    SpongeSpec,
    box_matched_eps,
    compare_stability,
    energy_budget,
    init_from_Wapp,
    wapp_evaluator,
)
from .packets import (
    Envelope,
    Family,
    QuadratureSpec,
    assemble_W0,
    component_anisotropy,
    default_grid,
    evaluate_packet,
    packet_norms,
)
from .params import PhysParams, critical_carrier

EXPERIMENTS = (
    "roots",
    "lift",
    "packet-norms",
    "corrector",
    "residual",
    "dns",
    "stability",
)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class FitError(ValueError):
    """Slope fit is impossible on the given series."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    params: PhysParams
    experiment: str
    sweep: list[tuple[float, float]] = field(default_factory=list)
    seed: int = 0
    output_dir: Path = Path("out")
    k0: float = 1.0
    nodes_per_lobe: int = 9
    #: free-form per-experiment knobs (dns grid sizes etc.)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; "
                f"choose one of {', '.join(EXPERIMENTS)}"
            )
        self.output_dir = Path(self.output_dir)
        self.sweep = [(float(e), float(d)) for e, d in self.sweep]
        eps_seq = [e for e, _ in self.sweep]
        if any(b >= a for a, b in zip(eps_seq, eps_seq[1:])):
            raise ConfigError("sweep eps values must be strictly decreasing")
        if self.experiment == "stability":
            for e, d in self.sweep or [(self.params.eps, self.params.delta)]:
                if d > e * e:
                    raise ConfigError(
                        f"stability requires delta <= eps^2, got "
                        f"delta={d:g} at eps={e:g}"
                    )

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["params"] = dataclasses.asdict(self.params)
        out["output_dir"] = str(self.output_dir)
        return out


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    """JSON config file merged with command-line overrides."""
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    pkeys = {"gamma", "eps", "delta", "nu0", "kappa0"}
    pdict = dict(raw.pop("params", {}))
    for k in list(raw):
        if k in pkeys:
            pdict[k] = raw.pop(k)
    if "gamma" not in pdict:
        raise ConfigError("gamma is required (config file or --gamma)")
    try:
        params = PhysParams(**pdict)
        return ExperimentConfig(params=params, **raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# slope fitting and output plumbing
# ---------------------------------------------------------------------------


def fit_slopes(eps: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """OLS slope +/- stderr of log(values) against log(eps).

    Raises FitError for fewer than 3 points or non-positive values.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(eps) < 3:
        raise FitError(f"need >= 3 points for a slope fit, got {len(eps)}")
    if np.any(values <= 0.0) or np.any(eps <= 0.0):
        raise FitError("non-positive values cannot be fit on a log scale")
    x = np.log(eps)
    y = np.log(values)
    n = len(x)
    sxx = float(np.sum((x - x.mean()) ** 2))
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    resid = y - (y.mean() + slope * (x - x.mean()))
    stderr = math.sqrt(float(np.sum(resid**2)) / max(n - 2, 1) / sxx)
    return slope, stderr


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    """Atomic CSV write (UTF-8, header row, repr-precision floats)."""
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(v) if isinstance(v, float) else v for v in row]
            )
    os.replace(tmp, path)


def _dump_field(path: Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """float64 little-endian concatenated dump plus JSON sidecar."""
    order = sorted(arrays)
    tmp = path.with_suffix(".bin.tmp")
    with open(tmp, "wb") as fh:
        for name in order:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())
    os.replace(tmp, path.with_suffix(".bin"))
    sidecar = dict(meta)
    sidecar["dtype"] = "<f8"
    sidecar["components"] = [
        {"name": n, "shape": list(arrays[n].shape)} for n in order
    ]
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)


def _manifest(config: ExperimentConfig, artifacts: list[str]) -> dict:
    blob = json.dumps(config.as_dict(), sort_keys=True).encode()
    return {
        "config": config.as_dict(),
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "versions": {
            "wavecrit": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "artifacts": sorted(artifacts),
    }


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _sweep_points(config: ExperimentConfig) -> list[tuple[float, float]]:
    if config.sweep:
        return config.sweep
    return [(config.params.eps, config.params.delta)]


def _params_at(config: ExperimentConfig, eps: float, delta: float) -> PhysParams:
    return dataclasses.replace(config.params, eps=eps, delta=delta)


def _assembly_at(config: ExperimentConfig, params: PhysParams):
    car = critical_carrier(params.gamma, config.k0)
    env = Envelope(carrier=car, eps=params.eps)
    return assemble_W0(params, env, QuadratureSpec(config.nodes_per_lobe))


def _run_roots(config: ExperimentConfig) -> list[str]:
    rows = []
    for eps, _ in _sweep_points(config):
        p = _params_at(config, eps, 0.0)
        spec = ModalMatrixSpec(
            nu=p.nu, kappa=p.kappa, omega=math.sin(p.gamma),
            k=config.k0, gamma=p.gamma,
        )
        rs = roots_for(spec, eps)
        for i, lam in enumerate(rs.roots):
            rows.append([
                eps, i, rs.labels[i], float(lam.real), float(lam.imag),
                int(lam.real > 0), rs.regime.name,
            ])
    _write_csv(
        config.output_dir / "roots.csv",
        ["eps", "index", "label", "re_lambda", "im_lambda", "pos_real",
         "regime"],
        rows,
    )
    return ["roots.csv"]


def _lift_spec(params: PhysParams, k0: float, regime: Regime,
               eps: float) -> ModalMatrixSpec:
    car = critical_carrier(params.gamma, k0)
    sg = math.sin(params.gamma)
    omega, k = car.omega0, car.k0
    if regime is Regime.NON_CRITICAL:
        omega, k = 2.0 * car.omega0, 2.0 * car.k0
    elif regime is Regime.NON_OSCILLATING:
        omega = k = 0.5 * eps**2
    elif regime is Regime.CRITICAL_DY:
        omega = math.sqrt(sg**2 + eps**2)
    return ModalMatrixSpec(nu=params.nu, kappa=params.kappa, omega=omega,
                           k=k, gamma=params.gamma)


def _run_lift(config: ExperimentConfig) -> list[str]:
    rng = np.random.default_rng(config.seed)
    p = config.params
    rows = []
    n = int(config.options.get("samples", 100))
    for regime in (Regime.CRITICAL_DY, Regime.NON_CRITICAL,
                   Regime.NON_OSCILLATING):
        spec = _lift_spec(p, config.k0, regime, p.eps)
        rs = roots_for(spec, p.eps)
        for i in range(n):
            z = rng.normal(size=6)
            tr = TraceTriple(complex(z[0], z[1]), complex(z[2], z[3]),
                             complex(z[4], z[5]))
            if rs.regime is Regime.NON_CRITICAL:
                rw, bl = lift_noncritical(spec, rs, tr)
                got = (rw.trace() + bl.trace()).as_array()
                want = tr.as_array()
            elif rs.regime is Regime.NON_OSCILLATING:
                lift, leftover = lift_nonoscillating(spec, rs, tr)
                got = lift.trace().as_array()[[0, 2]]
                want = tr.as_array()[[0, 2]]
            else:
                got = lift_critical(spec, rs, tr).trace().as_array()
                want = tr.as_array()
            err = float(np.abs(got - want).max() / max(np.abs(want).max(), 1e-300))
            rows.append([rs.regime.name, i, err])
    _write_csv(config.output_dir / "lift.csv",
               ["regime", "sample", "rel_error"], rows)
    return ["lift.csv"]


def _run_packet_norms(config: ExperimentConfig) -> list[str]:
    rows = []
    for eps, delta in _sweep_points(config):
        p = _params_at(config, eps, delta)
        asm = _assembly_at(config, p)
        for fam in (Family.INCIDENT, Family.BLEPS2, Family.BLEPS3):
            grid = default_grid(asm, fam)
            l2, linf = packet_norms(evaluate_packet(asm, fam, 0.0, grid))
            rows.append([eps, fam.name, l2, linf])
        rows.append([eps, "ANISO_BLEPS2",
                     component_anisotropy(asm, Family.BLEPS2), float("nan")])
        rows.append([eps, "ANISO_BLEPS3",
                     component_anisotropy(asm, Family.BLEPS3), float("nan")])
    _write_csv(config.output_dir / "packet_norms.csv",
               ["eps", "family", "l2", "linf"], rows)
    arts = ["packet_norms.csv"]
    arts += _emit_slopes(config, rows, value_cols=(2, 3),
                         names=("l2", "linf"))
    return arts


def _run_corrector(config: ExperimentConfig) -> list[str]:
    rows = []
    for eps, delta in _sweep_points(config):
        p = _params_at(config, eps, delta)
        asm = _assembly_at(config, p)
        sizes = rowwise_family_sizes(asm, p)
        for fam in (W1_BLEPS2, W1_BLEPS3, W1_II, W1_MF):
            l2, linf = sizes[fam]
            rows.append([eps, fam, l2, linf])
    _write_csv(config.output_dir / "corrector_sizes.csv",
               ["eps", "family", "l2", "linf"], rows)
    arts = ["corrector_sizes.csv"]
    arts += _emit_slopes(config, rows, value_cols=(2, 3),
                         names=("l2", "linf"))
    return arts


def _run_residual(config: ExperimentConfig) -> list[str]:
    rows = []
    for eps, delta in _sweep_points(config):
        p = _params_at(config, eps, delta)
        asm = _assembly_at(config, p)
        casm = assemble_W1(asm, p)
        report = residual_Rapp(casm)
        for term in sorted(report):
            rows.append([eps, delta, term, float(report[term])])
    _write_csv(config.output_dir / "residual.csv",
               ["eps", "delta", "term", "l2"], rows)
    arts = ["residual.csv"]
    totals = [(r[0], r[3]) for r in rows if r[2] == "total"]
    if len(totals) >= 3:
        slope, err = fit_slopes(np.array([t[0] for t in totals]),
                                np.array([t[1] for t in totals]))
        _write_csv(config.output_dir / "slopes.csv",
                   ["family", "norm", "slope", "stderr"],
                   [["total", "l2", slope, err]])
        arts.append("slopes.csv")
    return arts


def _emit_slopes(config: ExperimentConfig, rows, value_cols, names) -> list[str]:
    """Log-log fits per family over the sweep; skipped for single points."""
    eps_vals = sorted({r[0] for r in rows}, reverse=True)
    if len(eps_vals) < 3:
        return []
    out = []
    fams = sorted({r[1] for r in rows})
    for fam in fams:
        sub = [r for r in rows if r[1] == fam]
        for col, name in zip(value_cols, names):
            vals = np.array([r[col] for r in sub], dtype=float)
            if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
                continue
            slope, err = fit_slopes(np.array([r[0] for r in sub]), vals)
            out.append([fam, name, slope, err])
    _write_csv(config.output_dir / "slopes.csv",
               ["family", "norm", "slope", "stderr"], out)
    return ["slopes.csv"]


def _dns_config(config: ExperimentConfig, params: PhysParams,
                x_period: float) -> SimConfig:
    o = config.options
    return SimConfig(
        params=params,
        Lx=float(o.get("Lx", x_period)),
        Ly=float(o.get("Ly", 300.0)),
        nx=int(o.get("nx", 256)),
        ny=int(o.get("ny", 384)),
        dt=float(o.get("dt", 0.01)),
        T=float(o.get("T", 1.0)),
        k0=config.k0,
        dy0=float(o.get("dy0", 1e-3)),
        dy_max=float(o.get("dy_max", 0.5)),
        sponge=SpongeSpec(rate=float(o.get("sponge_rate", 0.0))),
    )


def _dns_series(config: ExperimentConfig, params: PhysParams,
                with_corrector: bool, floor=None):
    asm = _assembly_at(config, params)
    w1 = assemble_W1(asm, params) if (with_corrector and params.delta) else None
    ev = wapp_evaluator(asm, w1)
    sim = _dns_config(config, params, asm.x_period)
    solver = Solver(sim)
    state = init_from_Wapp(asm, w1, sim, solver)
    n_steps = int(round(sim.T / sim.dt))
    save_every = int(config.options.get("save_every", max(n_steps // 10, 1)))
    traj = solver.run(state, n_steps, save_every=save_every)
    report = compare_stability(traj, ev, params, solver, floor=floor)
    return solver, traj, report


def _run_dns(config: ExperimentConfig) -> list[str]:
    params = config.params
    solver, traj, report = _dns_series(config, params, with_corrector=True)
    budget = energy_budget(traj)
    # per-save-time series in the documented column layout
    idx = np.searchsorted(traj.times, report["t"])
    rows = [
        [float(report["t"][i]),
         float(traj.energy[idx[i]]),
         float(traj.dissipation[idx[i]]),
         float(report["diff_L2"][i]),
         float(report["bound_thm"][i]),
         float(report["bound_alt"][i]),
         float(report["floor"][i])]
        for i in range(len(report["t"]))
    ]
    _write_csv(config.output_dir / "dns_series.csv",
               ["t", "energy", "dissipation", "diff_L2", "bound_thm",
                "bound_alt", "floor"], rows)
    _write_csv(config.output_dir / "dns_budget.csv",
               ["t", "energy", "defect"],
               [[float(t), float(e), float(d)] for t, e, d in
                zip(traj.times, traj.energy, budget["defect"])])
    g = solver.grid
    final = traj.final
    _dump_field(
        config.output_dir / "dns_final",
        {"u": final.u, "w": final.w, "b": final.b, "p": final.p},
        {"t": final.t, "x0": 0.0, "Lx": g.Lx, "nx": g.nx,
         "y": list(map(float, g.y))},
    )
    return ["dns_series.csv", "dns_budget.csv", "dns_final.bin",
            "dns_final.json"]


def _run_stability(config: ExperimentConfig) -> list[str]:
    params = config.params
    # delta = 0 control run doubles as the measured error floor
    p0 = dataclasses.replace(params, delta=0.0)
    _, traj0, rep0 = _dns_series(config, p0, with_corrector=False)
    _, traj1, rep1 = _dns_series(config, params, with_corrector=True,
                                 floor=rep0["diff_L2"])
    rows = [
        [float(rep1["t"][i]), float(rep1["diff_L2"][i]),
         float(rep1["floor"][i]), float(rep1["net"][i]),
         float(rep1["bound_thm"][i]), float(rep1["bound_alt"][i]),
         int(rep1["net"][i] <= rep1["bound_thm"][i])]
        for i in range(len(rep1["t"]))
    ]
    _write_csv(config.output_dir / "stability.csv",
               ["t", "diff_L2", "floor", "net", "bound_thm", "bound_alt",
                "within_thm"], rows)
    return ["stability.csv"]


_RUNNERS = {
    "roots": _run_roots,
    "lift": _run_lift,
    "packet-norms": _run_packet_norms,
    "corrector": _run_corrector,
    "residual": _run_residual,
    "dns": _run_dns,
    "stability": _run_stability,
}


def run_experiment(config: ExperimentConfig) -> dict:
    """Run one experiment; returns the manifest (also written to disk)."""
    config.output_dir.mkdir(parents=True, exist_ok=True)
    artifacts = _RUNNERS[config.experiment](config)
    manifest = _manifest(config, artifacts)
    tmp = config.output_dir / "manifest.json.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    os.replace(tmp, config.output_dir / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wavecrit",
        description="Near-critical internal-wave reflection experiments",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--eps", type=float, default=None)
        sp.add_argument("--delta", type=float, default=None)
        sp.add_argument("--gamma", type=float, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--output-dir", dest="output_dir", default=None)
    args = parser.parse_args(argv)
    overrides = {
        "experiment": args.experiment,
        "eps": args.eps,
        "delta": args.delta,
        "gamma": args.gamma,
        "seed": args.seed,
        "output_dir": args.output_dir,
    }
    try:
        config = load_config(args.config, overrides)
        run_experiment(config)
    except (ConfigError, FitError) as exc:
        parser.exit(2, f"error: {exc}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
