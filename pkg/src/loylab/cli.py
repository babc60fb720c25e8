"""Command-line front end.

    loylab heff        --config run.toml [--out DIR] [--method M ...]
    loylab evolve      --config run.toml
    loylab fl-estimate --config run.toml
    loylab diagnose    --config run.toml
    loylab sweep       --config run.toml

Exit status: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ALL_METHODS, RunConfig, load_config
from .effective import EffectiveHamiltonian, compute, iterate_v
from .errors import ConfigError, ModelError, NumericalError
from .evolution import (
    ExactPropagator,
    compare_trajectories,
    evolve_effective,
    evolve_exact,
)
from .model import FullModel, diagnose_loy_conditions, find_loy_crossing
from .self_energy import SelfEnergyEvaluator

FORMULAS = {
    "loy0": "H = m0*P - Sigma0(m0); Sigma0(x) = PHQ (QH0Q - x - i*eta)^-1 QHP",
    "loy": "H = m0*P - Sigma(m0); Sigma(x) = PHQ (QHQ - x - i*eta)^-1 QHP",
    "improved": ("H = m0*P + PH1P - 1/2 Sigma(m0+h0+kappa) [P + h.sigma/kappa]"
                 " - 1/2 Sigma(m0+h0-kappa) [P - h.sigma/kappa]"),
    "spectral": "H = PHP - sum_j Sigma(lambda_j) P_j; lambda_j, P_j eigenpairs of PHP",
    "iterate": ("H = PHP + V; V = -sum_j Sigma(lambda_j) P_j with lambda_j, P_j from PHP + V,"
                " iterated from V = 0"),
    "onedim": "h = <psi|H|psi> - Sigma_psi(<psi|H|psi>), P = |psi><psi|",
}

UNITS = "energies in model units (MeV for kaon-scale inputs); times in inverse energy units (hbar = 1)"


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_table(path: Path, header: dict, columns, rows):
    """CSV with '# key: value' header lines, then a column row, then data."""
    with open(path, "w", newline="") as fh:
        for k, v in header.items():
            fh.write(f"# {k}: {_fmt(v)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _header(cfg: RunConfig, command: str, model: FullModel | None, eta, formula: str) -> dict:
    h = {"loylab": f"{command} (version {__version__})", "config": Path(cfg.source).name,
         "units": UNITS}
    if eta is not None:
        h["eta"] = eta
    if model is not None:
        try:
            h["grid_spacing"] = model.grid_spacing
        except ModelError:
            h["grid_spacing"] = "n/a"
        h["grid_points"] = model.dim - model.n
    h["formula"] = formula
    return h


def _eta(cfg: RunConfig):
    if cfg.eta is not None:
        return cfg.eta
    if cfg.model_section == "friedrichs_lee":
        return cfg.fl_params().eta
    return None


def _initial(values, model: FullModel, where: str) -> np.ndarray:
    if values is None:
        a0 = np.zeros(model.n, dtype=complex)
        a0[0] = 1.0
        return a0
    from .config import _complex_vector

    a0 = _complex_vector(values, where)
    if a0.size != model.n:
        raise ConfigError(f"{where}: {a0.size} amplitudes for {model.n} parallel levels")
    if abs(np.linalg.norm(a0) - 1) > 1e-10:
        raise ConfigError(f"{where}: initial amplitudes are not normalized")
    return a0


def _compute(model, method, ev, cfg) -> EffectiveHamiltonian:
    if method == "onedim":
        return compute(model, "onedim", ev, psi=_initial(cfg.psi, model, "[run].psi"))
    if method == "improved" and model.n != 2:
        raise ConfigError("method 'improved' needs a two-level model")
    return compute(model, method, ev)


def _matrix_rows(name, a):
    a = np.atleast_2d(a)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            yield [name, i + 1, j + 1, a[i, j].real, a[i, j].imag]


def _lifetime(model: FullModel, ev) -> float:
    heff = compute(model, "improved" if model.n == 2 else "spectral", ev)
    widths = -2 * np.imag(heff.eigenvalues)
    mean = float(np.mean(widths))
    return 1.0 / mean if mean > 0 else float("inf")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_heff(cfg: RunConfig, out: Path) -> int:
    model = cfg.build_model()
    ev = SelfEnergyEvaluator(model, _eta(cfg))
    report = [f"effective Hamiltonians ({len(cfg.methods)} methods)",
              f"eta = {_fmt(ev.eta)}, grid spacing = {_fmt(ev.metadata['grid_spacing'])}", ""]
    status = 0
    for method in cfg.methods:
        try:
            heff = _compute(model, method, ev, cfg)
        except NumericalError as exc:
            report += [f"[{method}] FAILED: {exc}", ""]
            status = 2
            continue
        rows = []
        rows += _matrix_rows("H", heff.matrix)
        rows += _matrix_rows("M", heff.mass_part)
        rows += _matrix_rows("Gamma", heff.decay_part)
        ev_sorted = np.sort_complex(heff.eigenvalues)
        rows += [["eigenvalue", k + 1, "", e.real, e.imag] for k, e in enumerate(ev_sorted)]
        if heff.n == 2:
            d = heff.diag_difference()
            rows.append(["diag_difference", 1, 2, d.real, d.imag])
        if method == "iterate":
            rows += [["history", k + 1, "", h, 0.0] for k, h in enumerate(heff.metadata["history"])]
            rows.append(["converged", "", "", float(heff.metadata["converged"]), 0.0])
        write_table(out / f"heff_{method}.csv", _header(cfg, "heff", model, ev.eta, FORMULAS[method]),
                    ["quantity", "i", "j", "re", "im"], rows)
        gmin = float(np.min(np.linalg.eigvalsh(heff.decay_part)))
        report.append(f"[{method}] {FORMULAS[method]}")
        report.append("  eigenvalues: " + ", ".join(f"{e.real:.12g}{e.imag:+.12g}j" for e in ev_sorted))
        if heff.n == 2:
            report.append(f"  h11 - h22 = {d.real:.12g}{d.imag:+.12g}j")
        report.append(f"  min eigenvalue of Gamma = {gmin:.6g}")
        if method == "iterate":
            report.append(f"  converged = {heff.metadata['converged']} after {heff.metadata['iterations']} iterations")
        report.append("")
    (out / "report.txt").write_text("\n".join(report))
    return status


def cmd_evolve(cfg: RunConfig, out: Path) -> int:
    model = cfg.build_model()
    ev = SelfEnergyEvaluator(model, _eta(cfg))
    a0 = _initial(cfg.evolve.get("initial"), model, "[evolve].initial")
    times = cfg.time.values(_lifetime(model, ev) if cfg.time.t_max is None else None)
    report = [f"evolution of a0 = {a0.tolist()} on {times.size} times in [{_fmt(times[0])}, {_fmt(times[-1])}]"]
    exact_tr = None
    if cfg.evolve.get("exact", True):
        prop = ExactPropagator(model)
        exact_tr = evolve_exact(model, a0, times, prop)
        psi0 = model.parallel_state(a0)
        p = np.abs(prop.amplitude(psi0, psi0, times)) ** 2
        p_ref = np.abs(prop.amplitude(psi0, psi0, -times)) ** 2
        names, rows = exact_tr.columns()
        rows = [r + [p[i], p[i] - p_ref[i]] for i, r in enumerate(rows)]
        write_table(out / "trajectory_exact.csv",
                    _header(cfg, "evolve", model, None, "psi(t) = exp(-i t H) psi0, p(t) = |<psi0|psi(t)>|^2"),
                    names + ["survival_p", "evenness"], rows)
        report.append(f"[exact] max |p(t) - p(-t)| = {np.max(np.abs(p - p_ref)):.3g}")
    status = 0
    keep = times >= 0
    for method in cfg.methods:
        if method == "onedim":
            report.append("[onedim] skipped: a 1x1 Hamiltonian does not evolve the parallel amplitudes")
            continue
        try:
            heff = _compute(model, method, ev, cfg)
            traj = evolve_effective(heff, a0, times[keep])
        except NumericalError as exc:
            report.append(f"[{method}] FAILED: {exc}")
            status = 2
            continue
        names, rows = traj.columns()
        write_table(out / f"trajectory_{method}.csv",
                    _header(cfg, "evolve", model, ev.eta, "a(t) = exp(-i t H_eff) a0; " + FORMULAS[method]),
                    names, rows)
        nrm = traj.norm_track
        report.append(f"[{method}] norm non-increasing: {bool(np.all(np.diff(nrm) <= 1e-10))}")
        if exact_tr is not None:
            sub = replace(exact_tr, times=exact_tr.times[keep], states=exact_tr.states[keep])
            cm = compare_trajectories(sub, traj)
            write_table(out / f"comparison_{method}.csv",
                        _header(cfg, "evolve", model, ev.eta, "errors of exp(-i t H_eff) a0 against P exp(-i t H) psi0"),
                        ["time", "amplitude_error", "decay_law_error"], list(cm.rows()))
            report.append(f"  max |a_exact - a_eff| = {cm.max_amplitude_error:.6g}, "
                          f"max |p_exact - p_eff| = {cm.max_decay_law_error:.6g}")
    (out / "evolve_report.txt").write_text("\n".join(report) + "\n")
    return status


def cmd_fl_estimate(cfg: RunConfig, out: Path) -> int:
    from .friedrichs_lee import fl_cross_validate, fl_estimate_kaon

    params = cfg.fl_params()
    cv = fl_cross_validate(params)
    ana = cv.analytic
    md = params.metadata
    kaon = fl_estimate_kaon(params.m12.imag, md["tau_s"], md["kaon_gap"], md["hbar"])
    rows = [
        ["FL1_exact", ana.exact.real, ana.exact.imag,
         "i/4 (m21 G12 - m12 G21)/|m12| [sqrt(A/(A-|m12|)) - sqrt(A/(A+|m12|))], A = m0 - mu"],
        ["FL2", ana.approx2.real, ana.approx2.imag, "i (m21 G12 - m12 G21) / (4A)"],
        ["FL3", ana.approx3, 0.0, "(-Re m12 Im G12 + Im m12 Re G12) / (2A)"],
        ["FL4", ana.approx4, 0.0, "Im m12 (gamma_s - gamma_l) / (4A)"],
        ["numeric", cv.numeric.real, cv.numeric.imag, "h11 - h22 of " + FORMULAS["improved"]],
        ["relative_gap", cv.relative_gap, 0.0, "|numeric - FL1| / |FL1|"],
        ["gamma_s", ana.gamma_s, 0.0, "larger eigenvalue of the LOY decay matrix at w = A"],
        ["gamma_l", ana.gamma_l, 0.0, "smaller eigenvalue of the LOY decay matrix at w = A"],
        ["kaon_estimate", kaon, 0.0, "Im m12 * (hbar/tau_s) / (4 * 200 MeV), Im m12 read in MeV"],
        ["kaon_coefficient", fl_estimate_kaon(1.0, md["tau_s"], md["kaon_gap"], md["hbar"]), 0.0,
         "(hbar/tau_s) / (4 (m_K - 2 m_pi))"],
    ]
    header = {"loylab": f"fl-estimate (version {__version__})", "config": Path(cfg.source).name,
              "units": "model units; kaon rows in MeV", "eta": cv.eta, "grid_spacing": cv.grid_spacing,
              "grid_points": cv.points, "formula": "analytic h11 - h22 of the improved Hamiltonian vs grid value"}
    write_table(out / "fl_estimate.csv", header, ["quantity", "re", "im", "formula"], rows)
    lines = [f"Friedrichs-Lee sector ({md.get('regime')}, profile {md.get('profile')})",
             f"m0 - mu = {_fmt(ana.gap)}, m12 = {params.m12}, eta = {_fmt(cv.eta)}, points = {cv.points}"]
    lines += [f"{r[0]:>16s} = {_fmt(r[1])} {'+' if r[2] >= 0 else '-'} {_fmt(abs(r[2]))}j    ({r[3]})" for r in rows]
    (out / "fl_report.txt").write_text("\n".join(lines) + "\n")
    return 0


def cmd_diagnose(cfg: RunConfig, out: Path) -> int:
    model = cfg.build_model()
    d = cfg.diagnose
    psi0 = _initial(d.get("initial"), model, "[diagnose].initial")
    thr = float(d.get("threshold", 1.0))
    ev = SelfEnergyEvaluator(model, _eta(cfg))
    grid = cfg.time.values(_lifetime(model, ev) if cfg.time.t_max is None else None)
    # the validity conditions refer to t >= 0 with the initial state at t = 0
    times = np.linspace(0.0, float(d.get("t_max", grid[-1])), cfg.time.points)
    prop = ExactPropagator(model)
    rep = diagnose_loy_conditions(model, psi0, times, thr, prop)
    rows = [[r["time"], r["php_norm"], r["phq_norm"], r["ratio"], r["violated"], r["weak_ratio"]]
            for r in rep.rows()]
    write_table(out / "diagnose.csv",
                _header(cfg, "diagnose", model, None,
                        "ratio = ||P H1 P psi_par(t)|| / ||P H1 Q psi_perp(t)||; violated when ratio >= threshold"),
                ["time", "php_norm", "phq_norm", "ratio", "violated", "weak_ratio"], rows)
    t_max = float(times[-1])
    tstar = find_loy_crossing(model, psi0, t_max, int(d.get("scan_points", 200)), thr) if t_max > 0 else None
    lines = [f"LOY validity along the exact evolution (threshold {thr})",
             f"violated at {int(rep.violated.sum())} of {times.size} times",
             f"violated at t = 0: {bool(rep.violated[0])}",
             f"first crossing below threshold: {'none on (0, %s]' % _fmt(t_max) if tstar is None else _fmt(tstar)}"]
    (out / "diagnose_report.txt").write_text("\n".join(lines) + "\n")
    return 0


def _scaled(model: FullModel, s: float) -> FullModel:
    return FullModel(model.partition, model.m0, model.php, s * model.phq, model.qhq, model.h0_q,
                     model.channels, dict(model.metadata))


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    sw = cfg.sweep
    if cfg.model_section == "friedrichs_lee" and "im_m12" in sw:
        from .friedrichs_lee import fl_cross_validate

        base = cfg.fl_params()
        rows = []
        for v in sw["im_m12"]:
            p = replace(base, m=np.array([[base.m0, complex(base.m12.real, v)],
                                          [complex(base.m12.real, -v), base.m0]]))
            cv = fl_cross_validate(p)
            rows.append([v, cv.numeric.real, cv.numeric.imag, cv.analytic.exact.real, cv.analytic.exact.imag,
                         cv.analytic.approx4, cv.relative_gap])
        write_table(out / "sweep.csv",
                    _header(cfg, "sweep", None, base.eta, "h11 - h22 of the improved Hamiltonian vs Im m12"),
                    ["im_m12", "re_numeric", "im_numeric", "re_FL1", "im_FL1", "FL4", "relative_gap"], rows)
        return 0
    if "random_cpt" in sw:
        from .symmetry import random_cpt_model

        rng = np.random.default_rng(cfg.seed)
        rows = []
        for k in range(int(sw["random_cpt"])):
            model = random_cpt_model(rng, points=int(sw.get("points", 200)), q_scale=float(sw.get("q_scale", 0.0)))
            ev = SelfEnergyEvaluator(model, cfg.eta)
            row = [k]
            for method in ("loy0", "loy", "improved"):
                h = compute(model, method, ev)
                row.append(abs(h.diag_difference()) / np.linalg.norm(h.matrix))
            rows.append(row)
        write_table(out / "sweep.csv",
                    _header(cfg, "sweep", None, cfg.eta, "|h11 - h22| / ||H_eff|| on random CPT-invariant models"),
                    ["model", "loy0", "loy", "improved"], rows)
        return 0
    if "scale" in sw:
        base = cfg.build_model()
        eta = SelfEnergyEvaluator(base, _eta(cfg)).eta
        rows, status = [], 0
        n = base.n
        for s in sw["scale"]:
            model = _scaled(base, float(s))
            ev = SelfEnergyEvaluator(model, eta)
            for method in cfg.methods:
                if method == "onedim":
                    continue
                try:
                    h = _compute(model, method, ev, cfg)
                except NumericalError:
                    rows.append([s, method] + [float("nan")] * (2 * n + 3))
                    status = 2
                    continue
                lam = np.sort_complex(h.eigenvalues)
                d = h.diag_difference() if n == 2 else complex("nan")
                res = iterate_v(model, 2, 1e-300, ev)
                contraction = (np.linalg.norm(res.iterates[1] - res.iterates[0]) / np.linalg.norm(res.iterates[0])
                               if np.linalg.norm(res.iterates[0]) > 0 else 0.0)
                rows.append([s, method] + [x for e in lam for x in (e.real, e.imag)]
                            + [d.real, d.imag, contraction])
        cols = ["scale", "method"] + [c for k in range(n) for c in (f"re_lambda{k + 1}", f"im_lambda{k + 1}")]
        write_table(out / "sweep.csv",
                    _header(cfg, "sweep", base, eta, "couplings PHQ scaled by 'scale'; contraction = ||V2 - V1|| / ||V1||"),
                    cols + ["re_diag_difference", "im_diag_difference", "contraction"], rows)
        return status
    raise ConfigError("[sweep]: give one of scale (generic model), im_m12 (friedrichs_lee) or random_cpt")


COMMANDS = {
    "heff": cmd_heff,
    "evolve": cmd_evolve,
    "fl-estimate": cmd_fl_estimate,
    "diagnose": cmd_diagnose,
    "sweep": cmd_sweep,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="loylab", description="Effective Hamiltonians of unstable multi-level systems.")
    p.add_argument("--version", action="version", version=f"loylab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML run configuration")
        s.add_argument("--out", help="output directory (default: [run].output)")
        s.add_argument("--eta", type=float, help="override the regulator eta > 0")
        s.add_argument("--grid", type=int, help="override the number of grid points per channel")
        s.add_argument("--seed", type=int, help="random seed for model families")
        s.add_argument("--method", action="append", choices=ALL_METHODS,
                       help="method to run (repeatable; replaces [run].methods)")
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.eta is not None:
        if not args.eta > 0:
            raise ConfigError("--eta must be positive")
        cfg.eta = args.eta
    if args.grid is not None:
        if args.grid < 1:
            raise ConfigError("--grid must be >= 1")
        cfg.grid = args.grid
    if args.seed is not None:
        cfg.seed = args.seed
    if args.method:
        cfg.methods = list(dict.fromkeys(args.method))
    if args.out:
        cfg.output = args.out
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _apply_overrides(load_config(args.config), args)
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, ModelError) as exc:
        print(f"loylab: configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"loylab: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
