"""Command-line entry point: ``itelab <subcommand> [--config FILE] [--out DIR] ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 a ``--check`` assertion failed.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, ensemble_from_config, load_config
from .distinguisher import DirichletSource, advantage_experiment, collapse_spread
from .ensemble import fit_linear, fit_power_law
from .errors import CapacityError, ConfigError, InvalidInput, NoEquilibration, NumericFailure
from .experiments import (
    fit_scan,
    heisenberg_escape_curve,
    heisenberg_variances,
    kicked_top_variances,
    moment_scan,
    teq_scan,
)
from .gue import (
    delta_monte_carlo,
    gamma_monte_carlo,
    gamma_sine_kernel,
    sample_gue_spectra,
    t_eq_gue,
    validity_cutoff,
)
from .io import Series, build_manifest, dump_hamiltonian, svg_plot, write_csv, write_manifest
from .operators import build_kicked_top_generators, sample_hamiltonian
from .parallel import set_default_threads
from .rng import SeedPath
from .weingarten import (
    closed_form_mean_prob,
    closed_form_second_moment,
    closed_form_var_prob,
    closed_form_var_prob_exact,
    form_factor,
    haar_abs4_weingarten,
    haar_sample_unitary,
    mc_prob_moments,
    verify_inner_product_table,
    weingarten_second_moment,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4

SCAN_COLUMNS = ["D", "n", "t", "mean", "var", "stderr_mean", "stderr_var", "n_trials"]


def _plain(v):
    if isinstance(v, (list, tuple)):
        return [_plain(a) for a in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _check(name, value, tolerance, passed) -> dict:
    return {"name": name, "value": _plain(value), "tolerance": _plain(tolerance), "pass": bool(passed)}


class Run:
    """Collects emitted files for the manifest."""

    def __init__(self, out: Path, plot: bool):
        self.out = out
        self.plot = plot
        self.files: list[Path] = []
        self.checks: list[dict] = []

    def csv(self, name, rows, columns, units=None):
        self.files.append(write_csv(self.out / name, rows, columns, units))

    def svg(self, name, series, **kw):
        if self.plot:
            self.files.append(svg_plot(self.out / name, series, **kw))

    def json(self, name, obj):
        from .io import atomic_write_text, _json_default
        self.files.append(atomic_write_text(self.out / name, json.dumps(obj, indent=2, sort_keys=True,
                                                                       default=_json_default) + "\n"))


# ---------------------------------------------------------------- subcommands

def cmd_spread(cfg, seed, run: Run, threads):
    ens = cfg["ensemble"]
    variant = ens["variant"]
    t = np.linspace(0.0, cfg["t_max"], cfg["n_grid"])
    if variant == "KickedTop":
        raise ConfigError("spread needs a continuous-time Hamiltonian", "$.ensemble.variant")
    if variant == "HeisenbergTwoField":
        rows = []
        for n in cfg["n_values"]:
            curve, teq = heisenberg_escape_curve(n, t, cfg["x"], ens.get("normalize", True), cfg["window"])
            rows.append({"n": n, "D": 2**n, "t_eq": teq, "curve": curve})
    else:
        rows = teq_scan(lambda n: ensemble_from_config(ens, n, master_seed=seed), cfg["n_values"], cfg["n_trials"],
                        t, cfg["x"], seed, cfg["window"], threads)
    curve_rows = [{"t": ti, "n": r["n"], "D": r["D"], "escape_mean": v}
                  for r in rows for ti, v in zip(r["curve"].times, r["curve"].values)]
    run.csv("curves.csv", curve_rows, ["t", "n", "D", "escape_mean"], {"t": "1/energy"})
    run.csv("t_eq.csv", [{k: r[k] for k in ("n", "D", "t_eq")} for r in rows], ["n", "D", "t_eq"])
    run.svg("curves.svg", [Series(r["curve"].times, r["curve"].values, f"n={r['n']}") for r in rows],
            title="escape curves", xlabel="t", ylabel="mean Pr(k != x)")
    run.checks.append(_check("t_eq_max", max(r["t_eq"] for r in rows), cfg["t_eq_max"],
                             max(r["t_eq"] for r in rows) <= cfg["t_eq_max"]))
    run.checks.append(_check("initial_escape_zero", max(abs(r["curve"].values[0]) for r in rows), 1e-12,
                             max(abs(r["curve"].values[0]) for r in rows) <= 1e-12))
    if len(rows) >= 3:
        a, b, r2 = fit_linear([r["n"] for r in rows], [r["t_eq"] for r in rows])
        run.checks.append(_check("t_eq_linear_in_n_r2", r2, cfg["min_r_squared"], r2 > cfg["min_r_squared"]))


def cmd_scaling(cfg, seed, run: Run, threads):
    ens = cfg["ensemble"]
    variant = ens["variant"]
    rows, fits = [], []
    if variant == "KickedTop":
        xs = (cfg["x"],)
        res = kicked_top_variances(cfg["j_values"], cfg["n_kicks"], xs, ens.get("alpha", (1.1, 1.0, 1.0)),
                                   ens.get("tau", (10.0, 0.0, 1.0)), ens.get("torsion_scaling", "2j+1"))
        for k, pts in res.items():
            for D, v, sd in pts:
                rows.append({"D": D, "n": "", "t": k, "mean": v, "var": sd**2, "stderr_mean": 0.0,
                             "stderr_var": 0.0, "n_trials": len(xs)})
            f = fit_power_law([(D, v) for D, v, _ in pts])
            fits.append({"quantity": "outcome_variance", "t": k, "exponent": f.exponent,
                         "prefactor": f.prefactor, "r_squared": f.r_squared})
        main_fit = fits[-1]
        var_fit = None
    elif variant == "HeisenbergTwoField":
        pts = {t: [] for t in cfg["eval_times"]}
        for n in cfg["n_values"]:
            vs = heisenberg_variances(n, cfg["eval_times"], ens.get("normalize", True),
                                      None if cfg["all_x"] else cfg["x"])
            for t, v in zip(cfg["eval_times"], vs):
                rows.append({"D": 2**n, "n": n, "t": t, "mean": v, "var": 0.0, "stderr_mean": 0.0,
                             "stderr_var": 0.0, "n_trials": 1})
                pts[t].append((2**n, v))
        for t, p in pts.items():
            f = fit_power_law(p)
            fits.append({"quantity": "outcome_variance", "t": t, "exponent": f.exponent,
                         "prefactor": f.prefactor, "r_squared": f.r_squared})
        main_fit = fits[0]
        var_fit = None
    else:
        points = moment_scan(lambda n: ensemble_from_config(ens, n, master_seed=seed), cfg["n_values"],
                             cfg["n_trials"], cfg["eval_times"], cfg["x"], cfg["all_x"], seed, threads)
        for p in points:
            rows.extend(p.moments.rows(p.D, p.n))
        for i, t in enumerate(cfg["eval_times"]):
            mf, vf = fit_scan(points, i)
            fits.append({"quantity": "mean", "t": t, "exponent": mf.exponent, "prefactor": mf.prefactor,
                         "r_squared": mf.r_squared})
            if vf is not None:
                fits.append({"quantity": "var", "t": t, "exponent": vf.exponent, "prefactor": vf.prefactor,
                             "r_squared": vf.r_squared})
        main_fit = fits[0]
        var_fit = next((f for f in fits if f["quantity"] == "var"), None)
    run.csv("scan.csv", rows, SCAN_COLUMNS)
    run.csv("fits.csv", fits, ["quantity", "t", "exponent", "prefactor", "r_squared"])
    series = []
    for t in sorted({r["t"] for r in rows}):
        sel = [r for r in rows if r["t"] == t]
        series.append(Series([r["D"] for r in sel], [r["mean"] for r in sel], f"t={t:g}", style="both",
                             yerr=[r["stderr_mean"] for r in sel]))
    run.svg("scaling.svg", series, title="outcome variance", xlabel="D", ylabel="V_k", logx=True, logy=True)
    exp0 = cfg["expected_mean_exponent"]
    run.checks.append(_check("mean_exponent", main_fit["exponent"], [exp0 - cfg["mean_exponent_tol"],
                             exp0 + cfg["mean_exponent_tol"]],
                             abs(main_fit["exponent"] - exp0) <= cfg["mean_exponent_tol"]))
    if cfg["max_var_exponent"] is not None and var_fit is not None:
        run.checks.append(_check("var_exponent", var_fit["exponent"], cfg["max_var_exponent"],
                                 var_fit["exponent"] <= cfg["max_var_exponent"]))


def cmd_formfactor(cfg, seed, run: Run, threads):
    D = cfg["D"]
    t = np.linspace(cfg["t_max"] / cfg["n_grid"], cfg["t_max"], cfg["n_grid"])
    spectra = sample_gue_spectra(D, cfg["n_samples"], SeedPath(seed, 0), threads=threads)
    curve = gamma_monte_carlo(D, t, spectra=spectra)
    sk = gamma_sine_kernel(t, D)
    z = (curve.mc_mean - curve.analytic) / curve.mc_stderr
    zs = (curve.mc_mean - sk) / curve.mc_stderr
    valid = curve.valid
    run.csv("gamma.csv", [{"t": a, "analytic": b, "sine_kernel": c, "mc_mean": d, "mc_stderr": e, "z": f,
                           "z_sine_kernel": g, "valid": bool(h)}
                          for a, b, c, d, e, f, g, h in zip(t, curve.analytic, sk, curve.mc_mean, curve.mc_stderr,
                                                            z, zs, valid)],
            ["t", "analytic", "sine_kernel", "mc_mean", "mc_stderr", "z", "z_sine_kernel", "valid"])
    run.svg("gamma.svg", [Series(t, curve.mc_mean, "Monte Carlo", yerr=curve.mc_stderr, style="markers"),
                          Series(t, curve.analytic, "Bessel + ramp"), Series(t, sk, "sine kernel")],
            title=f"form factor D={D}", xlabel="t", ylabel="E|mu(t)|^2", logy=True)
    n_sigma = cfg["n_sigma"]
    run.checks.append(_check("gamma_analytic_vs_mc_max_z", float(np.max(np.abs(z[valid]))), n_sigma,
                             np.all(np.abs(z[valid]) <= n_sigma)))
    run.checks.append(_check("gamma_sine_kernel_vs_mc_max_z", float(np.max(np.abs(zs[valid]))), n_sigma,
                             np.all(np.abs(zs[valid]) <= n_sigma)))
    Ds = [2**e for e in cfg["teq_D_exponents"]]
    teqs = [t_eq_gue(d, cfg["c"]) for d in Ds]
    run.csv("t_eq.csv", [{"D": d, "t_eq": v} for d, v in zip(Ds, teqs)], ["D", "t_eq"])
    if len(Ds) >= 3:
        f = fit_power_law(list(zip(Ds, teqs)))
        run.checks.append(_check("t_eq_exponent", f.exponent, [-1 / 6 - 0.05, -1 / 6 + 0.05],
                                 abs(f.exponent + 1 / 6) <= 0.05))
    drows = []
    worst = 0.0
    for d in cfg["delta_D"]:
        td = np.linspace(t_eq_gue(d, cfg["c"]), 4 * np.sqrt(2 * d), 200)
        sp = spectra if d == D else sample_gue_spectra(d, cfg["n_samples"], SeedPath(seed, d), threads=threads)
        res = delta_monte_carlo(d, td, spectra=sp)
        ratio = np.abs(res["mean"]) / d
        worst = max(worst, float(ratio.max()))
        drows += [{"D": d, "t": a, "re": m.real, "im": m.imag, "abs_over_D": r, "stderr": s}
                  for a, m, r, s in zip(td, res["mean"], ratio, res["stderr"])]
    run.csv("delta.csv", drows, ["D", "t", "re", "im", "abs_over_D", "stderr"])
    run.checks.append(_check("delta_over_D_max", worst, 10.0, worst <= 10.0))


def cmd_haar_verify(cfg, seed, run: Run, threads):
    Dt = cfg["D_table"]
    E = np.random.default_rng(seed).standard_normal(Dt)
    report = verify_inner_product_table(E, cfg["t"], raise_on_mismatch=False, tol=1e-10)
    run.json("table.json", report)
    run.checks.append(_check("table_rows", report["n_pass"], report["n_rows"], report["pass"]))
    ff = form_factor(E, cfg["t"])
    for xk in (False, True):
        a = closed_form_second_moment(Dt, xk, ff.mu_t, ff.mu_2t)
        b = weingarten_second_moment(Dt, xk, ff.mu_t, ff.mu_2t)
        run.checks.append(_check(f"weingarten_vs_closed_form_{'x=k' if xk else 'x!=k'}", abs(a - b), 1e-9,
                                 abs(a - b) <= 1e-9))
    rows = []
    ns = cfg["n_sigma"]
    for D in cfg["D_mc"]:
        spec = sample_gue_spectra(D, 1, SeedPath(seed, 100 + D))[0]
        t = cfg["t"]
        f = form_factor(spec, t)
        for xk in (False, True):
            mc = mc_prob_moments(spec, t, xk, cfg["n_samples"], SeedPath(seed, 200 + D + int(xk)), threads=threads)
            cm = closed_form_mean_prob(D, xk, f.mu_t)
            ve = closed_form_var_prob_exact(D, xk, f.mu_t, f.mu_2t)
            vt = closed_form_var_prob(D, xk, f.mu_t, f.mu_2t)
            for q, cf, m, se, slack in (("mean", cm, mc["mean"], mc["stderr_mean"], 0.0),
                                        ("var_exact", ve, mc["var"], mc["stderr_var"], 0.0),
                                        ("var_truncated", vt, mc["var"], mc["stderr_var"], 10 / D**5)):
                ok = abs(cf - m) <= ns * se + slack
                rows.append({"D": D, "quantity": q, "x_equals_k": xk, "closed_form": cf, "mc": m, "stderr": se,
                             "z": (m - cf) / se if se > 0 else 0.0, "pass": ok})
                run.checks.append(_check(f"{q}_D{D}_{'x=k' if xk else 'x!=k'}", (m - cf) / se if se else 0.0,
                                         ns, ok))
        U = haar_sample_unitary(D, SeedPath(seed, 300 + D), batch=max(1, cfg["n_samples"] // D))
        u4 = (np.abs(U) ** 4).reshape(-1)
        m, se = u4.mean(), u4.std(ddof=1) / np.sqrt(u4.size)
        target = 2 / (D * (D + 1))
        rows.append({"D": D, "quantity": "abs_U_4", "x_equals_k": "", "closed_form": target, "mc": m,
                     "stderr": se, "z": (m - target) / se, "pass": abs(m - target) <= 5 * se})
        run.checks.append(_check(f"abs_U4_D{D}", (m - target) / se, 5.0, abs(m - target) <= 5 * se))
        run.checks.append(_check(f"abs_U4_weingarten_D{D}", abs(haar_abs4_weingarten(D) - target), 1e-12,
                                 abs(haar_abs4_weingarten(D) - target) <= 1e-12))
    run.csv("haar_mc.csv", rows, ["D", "quantity", "x_equals_k", "closed_form", "mc", "stderr", "z", "pass"])


def distinguish_grid(M: int, x_max: float, n_points: int) -> np.ndarray:
    xs = np.linspace(x_max / n_points, x_max, n_points)
    Ns = np.unique(np.round(np.sqrt(xs * np.sqrt(M))).astype(int))
    return np.unique(np.r_[1, Ns[Ns >= 1]])


def cmd_distinguish(cfg, seed, run: Run, threads):
    tables = []
    for e in cfg["M_exponents"]:
        M = 2**e
        Ns = distinguish_grid(M, cfg["x_max"], cfg["n_points"])
        tables.append(advantage_experiment(M, Ns, DirichletSource(M, cfg["c0"] * np.sqrt(M)), cfg["n_trials"],
                                           SeedPath(seed, e), threads=threads))
    rows = [dict(r, x=r["N"] ** 2 / np.sqrt(r["M"]), q2=t.q2) for t in tables for r in t.rows()]
    run.csv("accuracy.csv", rows, ["M", "N", "x", "accuracy", "stderr", "n_trials", "q2"])
    run.svg("accuracy.svg", [Series(t.N.astype(float) ** 2 / np.sqrt(t.M), t.accuracy, f"M={t.M}",
                                    yerr=t.stderr, style="both") for t in tables],
            title="collision classifier", xlabel="N^2 / sqrt(M)", ylabel="accuracy")
    for t in tables:
        a, s = t.accuracy[0], t.stderr[0]
        run.checks.append(_check(f"N1_chance_M{t.M}", a, [0.5 - 3 * s, 0.5 + 3 * s], abs(a - 0.5) <= 3 * s))
    if len(tables) >= 2:
        c = collapse_spread(tables, max_accuracy=cfg["accuracy_cap"])
        run.checks.append(_check("collapse_spread", c["spread"], cfg["max_spread"], c["spread"] < cfg["max_spread"]))


def cmd_dump_hamiltonian(cfg, seed, run: Run, threads):
    spec = ensemble_from_config(cfg["ensemble"], master_seed=seed)
    if spec.variant == "KickedTop":
        torsion, kick = build_kicked_top_generators(spec)
        for name, H in (("torsion", torsion), ("kick", kick)):
            run.files.extend(dump_hamiltonian(run.out / f"{name}.bin", H))
    else:
        H = sample_hamiltonian(spec, SeedPath(seed, cfg["trial"]))
        run.files.extend(dump_hamiltonian(run.out / "hamiltonian.bin", H))


HANDLERS = {
    "spread": cmd_spread,
    "scaling": cmd_scaling,
    "formfactor": cmd_formfactor,
    "haar-verify": cmd_haar_verify,
    "distinguish": cmd_distinguish,
    "dump-hamiltonian": cmd_dump_hamiltonian,
}


# ---------------------------------------------------------------- argument parsing

def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON config file")
    p.add_argument("--out", default=d, help="output directory (default runs/<command>)")
    p.add_argument("--seed", type=int, default=d, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, default=d, help="worker threads")
    p.add_argument("--no-plot", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="skip SVG output")
    p.add_argument("--check", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="exit 4 if any tolerance check fails")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="itelab", description="Pure-state equilibration experiments")
    p.add_argument("--version", action="version", version=f"itelab {__version__}")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "spread": "escape curves and equilibration times",
        "scaling": "outcome-variance scans against dimension",
        "formfactor": "GUE form factor, equilibration time and Delta",
        "haar-verify": "Weingarten table and Haar Monte Carlo checks",
        "distinguish": "collision-classifier accuracy experiments",
        "dump-hamiltonian": "write a sampled Hamiltonian to a binary file",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        _global_flags(sp, suppress=True)
    return p


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cmd = args.command
    try:
        cfg = load_config(cmd, args.config)
        seed = args.seed if args.seed is not None else cfg.get("master_seed", 0)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", "--seed")
        cfg["master_seed"] = seed
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads must be >= 1", "--threads")
        set_default_threads(args.threads)
        out = Path(args.out or Path("runs") / cmd).resolve()
        out.mkdir(parents=True, exist_ok=True)
        run = Run(out, plot=not args.no_plot)
        start, t0 = _now(), time.perf_counter()
        HANDLERS[cmd](cfg, seed, run, args.threads)
        status = "ok" if all(c["pass"] for c in run.checks) else "checks_failed"
        manifest = build_manifest(cmd, cfg, seed, run.files, out, start_time=start, end_time=_now(),
                                  wall_seconds=time.perf_counter() - t0, threads=args.threads, status=status,
                                  checks=run.checks)
        write_manifest(out / "manifest.json", manifest)
    except (ConfigError, InvalidInput, CapacityError) as exc:
        print(f"itelab {cmd}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, NoEquilibration) as exc:
        print(f"itelab {cmd}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for c in run.checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: value={c['value']} tolerance={c['tolerance']}")
    print(f"wrote {len(run.files)} files and manifest.json to {out}")
    if args.check and status != "ok":
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
