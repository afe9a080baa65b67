"""Named experiments wiring the modules together; each returns tables plus a status."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import effective as ef
from . import fock
from . import fluctuations as fl
from . import hamiltonian as hm
from . import scattering as sc
from .config import ExperimentConfig
from .grid import GridField, gaussian_bump
from .modes import TorusModes
from .potentials import from_config

log = logging.getLogger(__name__)

LEAK_BUDGET = 1e-6
UNITARITY_TOL = 1e-8


class InvariantViolation(RuntimeError):
    """A hard numerical invariant failed; the CLI maps this to exit code 3."""


@dataclass
class Table:
    name: str
    columns: list
    rows: list = field(default_factory=list)

    def add(self, **row):
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"row for {self.name} lacks {sorted(missing)}")
        self.rows.append([row[c] for c in self.columns])


@dataclass
class ExperimentResult:
    tables: list
    diagnostics: dict
    violations: list = field(default_factory=list)
    dumps: dict = field(default_factory=dict)  # relative path -> text


def initial_field(cfg: ExperimentConfig) -> GridField:
    init = cfg.initial
    G, L, d = cfg.grid_points, cfg.box_length, cfg.dimension
    kind = init.get("kind", "gaussian")
    if kind == "gaussian":
        return gaussian_bump(G, L, float(init.get("width", 0.8)), dimension=d)
    if kind == "von_mises":
        if d != 1:
            raise ValueError("von_mises initial data is 1D")
        x = np.arange(G) * L / G
        kappa = float(init.get("kappa", 1.0))
        return GridField(np.exp(kappa * np.cos(2 * np.pi * (x - L / 2) / L)), L, 1).normalized()
    modes = TorusModes(d, L, len(init["coefficients"]))
    return GridField(modes.synthesize(mode_coefficients(cfg, modes), modes.grid_points(G)).reshape((G,) * d),
                     L, d).normalized()


def mode_coefficients(cfg: ExperimentConfig, modes: TorusModes) -> np.ndarray:
    init = cfg.initial
    if init.get("kind") == "modes":
        c = np.array([complex(re, im) for re, im in init["coefficients"]])
        if len(c) != modes.M:
            raise ValueError(f"{len(c)} initial coefficients for {modes.M} modes")
    else:
        phi = initial_field(cfg)
        c = modes.project(phi.values, cfg.grid_points)
    return c / np.linalg.norm(c)


# -- experiments ------------------------------------------------------------------

def scattering_study(cfg: ExperimentConfig) -> ExperimentResult:
    V = from_config(cfg.potential)
    tab = Table("scattering", ["N", "beta", "a0", "N_a0", "identity_residual", "decay_sup", "f_min", "f_max",
                               "cell_lambda", "modified_coupling"])
    violations = []
    ell = cfg.ell_value
    for N in cfg.N_sweep:
        Vs = sc.scaled_potential(V, N, cfg.beta, 3)
        sol = sc.solve_zero_energy(Vs, 20 * Vs.support_radius, resolution=4001)
        a0 = sol.scattering_length
        resid = 0.0 if V.is_zero else abs(8 * np.pi * sol.asymptotic_length - sol.potential_integral_f) / abs(
            sol.potential_integral_f)
        fmin, fmax = float(sol.f_values.min()), float(sol.f_values.max())
        if fmin < -1e-12 or fmax > 1 + 1e-12:
            violations.append(f"scattering solution leaves [0, 1] at N={N}")
        if cfg.beta < 1 and ell > Vs.support_radius:
            cell = sc.solve_neumann_cell(V, N, cfg.beta, ell, 3)
            lam, mod = cell.eigenvalue, N * cell.coupling_integral
        else:
            lam, mod = float("nan"), float("nan")
        tab.add(N=N, beta=cfg.beta, a0=a0, N_a0=N * a0, identity_residual=resid,
                decay_sup=sc.decay_bound_sup(sol, N, cfg.beta), f_min=fmin, f_max=fmax, cell_lambda=lam,
                modified_coupling=mod)
    return ExperimentResult([tab], {"potential": V.name}, violations)


def effective_convergence(cfg: ExperimentConfig) -> ExperimentResult:
    """Hartree and modified-NLS solutions against cubic NLS with coupling ``int V`` at ``t_final``."""
    V = from_config(cfg.potential)
    phi0 = initial_field(cfg)
    G, L, d = cfg.grid_points, cfg.box_length, cfg.dimension
    nls = ef.make_spec("cubic_nls", V, G, L, d)
    ref = ef.evolve(nls, phi0, cfg.t_final, cfg.dt).fields[-1]
    tab = Table("effective", ["N", "t", "hartree_nls_gap", "modified_nls_gap", "mass_drift", "energy_drift"])
    violations = []
    for N in cfg.N_sweep:
        row = {"N": N, "t": cfg.t_final}
        drifts, edrifts = [], []
        for name, variant in (("hartree_nls_gap", "hartree"), ("modified_nls_gap", "modified_nls")):
            if variant == "modified_nls" and cfg.beta >= 1:
                row[name] = float("nan")
                continue
            spec = ef.make_spec(variant, V, G, L, d, N=N, beta=cfg.beta, ell=cfg.ell_value)
            traj = ef.evolve(spec, phi0, cfg.t_final, cfg.dt)
            end = traj.fields[-1]
            row[name] = float(np.max(np.abs(end.values - ref.values)))
            drifts.append(abs(end.norm() ** 2 - 1.0) / cfg.t_final)
            edrifts.append(abs(ef.energy(end, spec) - ef.energy(phi0, spec)) / cfg.t_final)
        row["mass_drift"] = max(drifts)
        row["energy_drift"] = max(edrifts)
        if row["mass_drift"] > 1e-10:
            violations.append(f"mass drift {row['mass_drift']:.2e} per unit time at N={N}")
        tab.add(**row)
    return ExperimentResult([tab], {}, violations)


def mean_field_convergence(cfg: ExperimentConfig) -> ExperimentResult:
    V = from_config(cfg.potential)
    modes = TorusModes(1, cfg.box_length, cfg.modes)
    phi0 = mode_coefficients(cfg, modes)
    rows = hm.mean_field_convergence(V, phi0, cfg.N_sweep, cfg.t_grid, M=cfg.modes, box_length=cfg.box_length,
                                     n_max_extra=cfg.n_max_extra, leak_budget=LEAK_BUDGET)
    tab = Table("mean_field", ["N", "t", "trace_distance", "relative_distance", "leak"])
    for r in rows:
        tab.add(**r)
    violations = []
    for t in cfg.t_grid:
        if t == 0:
            continue
        rel = [r["relative_distance"] for r in sorted(rows, key=lambda r: r["N"]) if r["t"] == t]
        if not all(b < a for a, b in zip(rel, rel[1:])):
            violations.append(f"relative distance not strictly decreasing in N at t={t}")
    leak = max(r["leak"] for r in rows)
    if leak > LEAK_BUDGET:
        violations.append(f"leak {leak:.2e} over budget")
    return ExperimentResult([tab], {"max_leak": leak}, violations)


def _kernel_map(cfg: ExperimentConfig, V, N: float, modes: TorusModes):
    if cfg.beta == 0.0:
        return None
    if cfg.kernel_variant == "ell_midpoint":
        cell = sc.solve_neumann_cell(V, N, cfg.beta, cfg.ell_value, 1)
        return sc.ModeKernel(modes, N, "ell_midpoint", cell=cell)
    sol = sc.solve_zero_energy(V, 20 * V.support_radius)
    return sc.ModeKernel(modes, N, "gp_product", omega=sol.omega)


def fluctuation_setup(cfg: ExperimentConfig, N: float, coupling_scale: float = 1.0):
    """Hamiltonian and condensate trajectory for one sweep entry."""
    V = from_config(cfg.potential)
    modes = TorusModes(1, cfg.box_length, cfg.modes)
    phi0 = mode_coefficients(cfg, modes)
    kmap = _kernel_map(cfg, V, N, modes)
    K0 = kmap(phi0) if kmap is not None else np.zeros((modes.M, modes.M))
    basis = fock.FockBasis(modes.M, fl.pipeline_cutoff(N, np.linalg.norm(K0), extra=4 + cfg.n_max_extra - 2))
    H = hm.assemble(basis, V, N, cfg.beta, 1, cfg.box_length)
    traj = fl.CondensateTrajectory(H, phi0, cfg.t_grid[-1], kmap, coupling_scale=coupling_scale)
    return H, traj


def fluctuation_runs(cfg: ExperimentConfig):
    """Yield ``(N, H, run)`` for each sweep entry."""
    for N in cfg.N_sweep:
        H, traj = fluctuation_setup(cfg, N)
        sched = np.linspace(0.0, cfg.t_grid[-1], cfg.schedule_points)
        run = fl.run_fluctuations(H, traj, cfg.t_grid, sched, cfg.quadratic_dt, cfg.fd_step, cfg.ell_value)
        yield N, H, run


def _run_invariants(N, run, violations):
    leak = float(run.diagnostics["leak"].max())
    if leak > LEAK_BUDGET:
        violations.append(f"leak {leak:.2e} over budget at N={N}")
    for psi in run.exact_states + run.quadratic_states:
        if abs(psi.norm() - 1) > UNITARITY_TOL:
            violations.append(f"unitarity defect {abs(psi.norm() - 1):.2e} at N={N}")
            break
    return leak


def _decomposition_dump(run) -> str:
    lines = []
    for d in run.decompositions:
        lines.append(f"# t {d.t!r} eta {d.phase!r}")
        for name, mat in (("A", d.dGamma_block), ("B", d.pair_block)):
            lines.append(f"# {name}")
            for row in mat:
                lines.append(" ".join(f"{z.real!r} {z.imag!r}" for z in row))
    return "\n".join(lines) + "\n"


def fluctuation_norm(cfg: ExperimentConfig) -> ExperimentResult:
    cols = ["N", "t", "norm_error", "eta", "linear_norm", "N_expect", "N2_over_N", "H_expect", "K_expect", "leak"]
    tab = Table("fluctuation_norm", cols)
    violations, leaks, dumps = [], {}, {}
    for N, H, run in fluctuation_runs(cfg):
        err = fl.norm_approximation_error(run)
        d = run.diagnostics
        for i, t in enumerate(run.times):
            tab.add(N=N, t=float(t), norm_error=float(err[i]), eta=float(d["eta"][i]),
                    linear_norm=float(d["linear_norm"][i]), N_expect=float(d["N_expect"][i]),
                    N2_over_N=float(d["N2_over_N"][i]), H_expect=float(d["H_expect"][i]),
                    K_expect=float(d["K_expect"][i]), leak=float(d["leak"][i]))
        leaks[str(N)] = _run_invariants(N, run, violations)
        dumps[f"decompositions_N{N:g}.txt"] = _decomposition_dump(run)
    return ExperimentResult([tab], {"leak": leaks, "alpha": fl.alpha_exponent(cfg.beta)}, violations, dumps)


def gronwall_diagnostics(cfg: ExperimentConfig) -> ExperimentResult:
    tab = Table("gronwall", ["N", "t", "N_expect", "N2_over_N", "H_expect", "K_expect", "dN_dt", "bound_holds",
                             "n2_bound", "n2_holds"])
    fits = Table("gronwall_fit", ["N", "growth_rate", "constant"])
    violations, leaks = [], {}
    for N, H, run in fluctuation_runs(cfg):
        rep = fl.gronwall_diagnostics(run, H)
        for row in rep.rows():
            tab.add(N=N, **row)
        fits.add(N=N, growth_rate=rep.growth_rate, constant=rep.constant)
        leaks[str(N)] = _run_invariants(N, run, violations)
    return ExperimentResult([tab, fits], {"leak": leaks}, violations)


def ground_state(cfg: ExperimentConfig) -> ExperimentResult:
    V = from_config(cfg.potential)
    G, L, d = cfg.grid_points, cfg.box_length, cfg.dimension
    N = cfg.N_sweep[0] if cfg.N_sweep else None
    spec = ef.make_spec(cfg.variant, V, G, L, d, N=N, beta=cfg.beta, ell=cfg.ell_value, coupling=cfg.coupling)
    res = ef.minimize_energy(spec, initial_field(cfg), tol=cfg.tol, convention=cfg.convention)
    tab = Table("ground_state_energy", ["iteration", "energy"])
    for i, E in enumerate(res.energies):
        tab.add(iteration=i, energy=float(E))
    fld = Table("ground_state_field", ["index", "re", "im"])
    for i, z in enumerate(res.field.values.reshape(-1)):
        fld.add(index=i, re=float(z.real), im=float(z.imag))
    violations = []
    if np.any(np.diff(res.energies) > 0):
        violations.append("energy sequence increased")
    diag = {"gradient_norm": res.gradient_norm, "iterations": res.iterations, "energy": float(res.energies[-1])}
    return ExperimentResult([tab, fld], diag, violations)


REGISTRY = {
    "scattering_study": scattering_study,
    "effective_convergence": effective_convergence,
    "mean_field_convergence": mean_field_convergence,
    "fluctuation_norm": fluctuation_norm,
    "gronwall_diagnostics": gronwall_diagnostics,
    "ground_state": ground_state,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    try:
        return REGISTRY[cfg.experiment](cfg)
    except (fock.LeakBudgetError, ef.BlowUpError, fl.FiniteDifferenceError) as exc:
        raise InvariantViolation(str(exc)) from exc
