"""Command line: run configured experiments and write CSV, reports, figures and a hash manifest.

Exit codes: 0 pass, 1 verdict failure, 2 usage or configuration error,
3 numerical failure (blow-up, non-convergence).
"""

import argparse
import contextlib
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import evolve, plotting, spectral, stability_lab, waves
from .config import SUBCOMMAND_KINDS, ConfigError, build_kernel, check_buildable, parse_config, parse_speed
from .errors import InstabilityError, NumericalError, SemiwaveError
from .grid import EDGE, Grid

log = logging.getLogger("semiwave")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST = "manifest.sha256"


class Context:
    """Objects built from a config: frame, law, time step, spectral data, lazily the profile."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.params = cfg.experiment["params"]
        check_buildable(cfg)
        self.law = cfg.build_law()
        self.frame = cfg.build_frame()
        self.d = self.frame.d
        self.h = self.frame.h
        g = cfg.grid
        self.dz = g["dz"]
        self.method = g["method"]
        self.m = g["m_per_delay"] or int(math.ceil(self.h / (g["dt_factor"] * self.dz ** 2 / self.d) - 1e-9))
        self.dt = self.h / self.m
        self.rng = np.random.default_rng(cfg.seed)
        self.roots = None
        self._profile = None
        kind, off = parse_speed(cfg.frame["c"])
        if self.params.get("scheme_critical") and kind == "critical" and off == 0.0:
            c, lam = waves.scheme_critical(self.frame1d(), self.law, self.dz)
            self.frame = self.frame.with_speed(c)
            self.roots = spectral.RootReport(lam, lam, 1)

    def frame1d(self):
        """The frame along nu for profiles (tensor kernels reduce to their first factor)."""
        if self.d == 1:
            return self.frame
        facs = self.cfg.kernel["factors"]
        if any(abs(float(f.get("mass", 1.0)) - 1.0) > 1e-12 for f in facs[1:]):
            raise ConfigError(["kernel.factors: transverse factors must have unit mass"])
        k1 = build_kernel(facs[0], 1, self.cfg.source)
        return spectral.FrameSpec(1, self.frame.c, self.h, k1, self.law)

    def char_roots(self):
        if self.roots is None:
            self.roots = spectral.char_roots(self.frame1d())
        return self.roots

    def lam(self, spec, default="lambda1"):
        spec = default if spec is None else spec
        if not isinstance(spec, str):
            return float(spec)
        r = self.char_roots()
        lam2 = r.lam2 if r.lam2 is not None else r.lam1
        return {"lambda1": r.lam1, "lambda2": lam2, "mid": 0.5 * (r.lam1 + lam2), "half_lambda1": 0.5 * r.lam1,
                "best": stability_lab.best_rate(self.frame1d(), r)}[spec]

    def profile(self):
        if self._profile is None:
            p = self.params
            self._profile = waves.compute_profile(self.frame1d(), self.law, half_width=p.get("half_width", 40.0),
                                                  dz=self.dz, m=p.get("profile_m"), amplitude=p.get("amplitude", 1.0),
                                                  roots=self.roots)
        return self._profile

    def extent(self, default):
        ext = self.cfg.grid["extent"]
        return [list(e) for e in ext] if ext is not None else default

    def fills(self, orientation_left=True, rate=None):
        """(left, right) fills along the first axis, resolving "auto"."""
        g = self.cfg.grid
        out = []
        for side, val in (("left", g["left_fill"]), ("right", g["right_fill"])):
            if val == "auto":
                small = (side == "left") == orientation_left
                if small and rate is not None:
                    val = ("exp", rate)
                else:
                    val = 0.0 if small else EDGE
            elif val == "edge":
                val = EDGE
            elif isinstance(val, list):
                val = tuple(val)
            out.append(val)
        return tuple(out)


# ---------------------------------------------------------------------------
# data


def _plain_grid(ctx, fills):
    ext = ctx.extent([[-40.0, 40.0]] + [[-20.0, 20.0]] * (ctx.d - 1))
    axes = [tuple(ext[0])] + [tuple(e) for e in ext[1:]]
    fill = (fills,) + ((EDGE, EDGE),) * (ctx.d - 1)
    return Grid(tuple(axes), (ctx.dz,) * ctx.d, fill)


def _front_field(ctx):
    prof = ctx.profile()
    z = prof.z
    ext = ctx.extent(None)
    lo, hi = (z[0], z[-1]) if ext is None else ext[0]
    tr = None
    if ctx.d == 2:
        ylo, yhi = ext[1] if ext is not None else (-20.0, 20.0)
        tr = (ylo, yhi, ctx.dz)
    return waves.embed_profile(prof, lo, hi, tr)


def _center(ctx, c):
    return [c] + [0.0] * (ctx.d - 1)


def build_datum(ctx, block, lam=None):
    """DelayHistory (constant in s) from a datum block."""
    form = block["form"]
    kappa = ctx.law.kappa
    if form == "constant":
        g = _plain_grid(ctx, (EDGE, EDGE))
        return evolve.DelayHistory.constant(g, block["value"], ctx.m, ctx.dt)
    if form == "step":
        left = block["orientation"] == "left"
        g = _plain_grid(ctx, ctx.fills(left))
        x = g.mesh()[0]
        v = np.where(x >= block["z0"], block["value"], 0.0) if left else np.where(x <= block["z0"], block["value"], 0.0)
        return evolve.DelayHistory.constant(g, v, ctx.m, ctx.dt)
    if form == "bump":
        g = _plain_grid(ctx, (0.0, 0.0))
        v = block["amplitude"] * stability_lab.bump(g, _center(ctx, block["center"]), block["width"])
        return evolve.DelayHistory.constant(g, v, ctx.m, ctx.dt)
    if form == "exp_tail":
        rate = block["rate"]
        if isinstance(rate, str):
            if block["speed"] is not None:
                f1 = ctx.frame1d().with_speed(0.0)
                from .config import resolve_speed
                cp = resolve_speed(block["speed"], f1)
                r = spectral.char_roots(f1.with_speed(cp))
                lam2 = r.lam2 if r.lam2 is not None else r.lam1
                rate = {"lambda1": r.lam1, "lambda2": lam2, "mid": 0.5 * (r.lam1 + lam2),
                        "half_lambda1": 0.5 * r.lam1, "best": r.lam1}[rate]
            else:
                rate = ctx.lam(rate)
        left = rate > 0
        g = _plain_grid(ctx, ctx.fills(left, rate))
        x = g.mesh()[0]
        with np.errstate(over="ignore"):
            v = np.minimum(kappa, block["amplitude"] * np.exp(np.clip(rate * x, -745, 709)))
        return evolve.DelayHistory.constant(g, v, ctx.m, ctx.dt)
    F = _front_field(ctx)
    g = F.grid
    u = F.values.copy()
    x = g.mesh()[0]
    for p in block["perturbations"]:
        shape, a = p["shape"], p["amplitude"]
        if shape == "bump":
            b = stability_lab.bump(g, _center(ctx, p["center"]), p["width"])
            u = u + a * b * (F.values if p["relative"] else 1.0)
        elif shape == "gaussian":
            b = stability_lab.gaussian_bump(g, _center(ctx, p["center"]), p["width"])
            u = u + a * b * (F.values if p["relative"] else 1.0)
        elif shape == "weighted_gaussian":
            b = stability_lab.gaussian_bump(g, _center(ctx, p["center"]), p["width"])
            u = u + a * math.exp(lam * p["center"]) * b
        elif shape == "leading_edge":
            lo = float(g.axis(0)[0])
            tp = np.clip((x - lo) / p["taper"], 0, 1) * np.clip((x - 0.0) / p["stop"], 0, 1)
            tp = tp ** 2 * (3 - 2 * tp)
            u = u + a * np.exp(lam * np.minimum(x, 0.0)) * tp
        elif shape == "noise":
            noise = gaussian_filter(ctx.rng.standard_normal(g.shape), p["smooth"] / ctx.dz, mode="nearest")
            noise /= max(float(np.max(np.abs(noise))), 1e-300)
            u = u + a * noise * stability_lab.gaussian_bump(g, _center(ctx, p["center"]), p["width"])
    u = np.maximum(u, 0.0)
    return evolve.DelayHistory.constant(g, u, ctx.m, ctx.dt)


def _probes(ctx, names, grid):
    x = grid.mesh()[0]
    out = {}
    for name in names:
        if name == "sup":
            out[name] = lambda t, u: float(np.max(u))
        elif name == "inf":
            out[name] = lambda t, u: float(np.min(u))
        elif name == "mass":
            out[name] = lambda t, u: float(np.sum(u) * grid.cell_volume())
        elif name.startswith("u@"):
            z0 = float(name[2:])
            if grid.d == 1:
                out[name] = lambda t, u, z0=z0: float(np.interp(z0, x, u))
            else:
                j = grid.shape[1] // 2
                out[name] = lambda t, u, z0=z0, j=j: float(np.interp(z0, grid.axis(0), u[:, j]))
        elif name.startswith("level@"):
            beta = float(name[6:])
            line = (lambda u: u) if grid.d == 1 else (lambda u: u[:, grid.shape[1] // 2])
            out[name] = lambda t, u, beta=beta, line=line: stability_lab.level_position(grid.axis(0), line(u), beta)
    return out


# ---------------------------------------------------------------------------
# experiments; each returns (outputs dict, verdict or None)


def run_spectrum(ctx):
    p = ctx.params
    f1 = ctx.frame1d()
    rec = {"c": f1.c, "h_delay": f1.h, "gprime0": ctx.law.gprime0}
    cs = spectral.critical_speeds(f1.with_speed(0.0))
    rec.update(c_star_minus=cs[0], c_star_plus=cs[1])
    try:
        r = ctx.char_roots()
        rec.update(lambda_1=r.lam1, lambda_2=r.lam2, j_c=r.j_c)
        lam = ctx.lam(p.get("lambda"))
    except SemiwaveError as e:
        rec["roots"] = f"none ({e})"
        lam = p.get("lambda") if isinstance(p.get("lambda"), (int, float)) else None
    if lam is not None:
        rep = spectral.spectral_report(f1, lam)
        rec.update({k: v for k, v in rep.as_dict().items()})
    lo, hi = spectral.admissible_window(f1)
    lo = max(lo, -20.0) if not math.isfinite(lo) else lo
    hi = min(hi, 20.0) if not math.isfinite(hi) else hi
    rng = p.get("lam_range", [lo, hi, 401])
    lams = np.linspace(float(rng[0]), float(rng[1]), int(rng[2]))
    E = np.array([spectral.char_eval(f1, l) for l in lams])
    G = np.array([_safe_gamma(f1, l) for l in lams])
    return {"record": rec, "series": {"spectrum": {"lambda": lams, "E_c": E, "gamma_lambda": G}}}, None


def _safe_gamma(frame, lam):
    try:
        return spectral.gamma_lambda(frame, lam)
    except (SemiwaveError, ValueError, OverflowError):
        return math.nan


def run_profile(ctx):
    prof = ctx.profile()
    lo, hi = waves.liminf_limsup(prof)
    rec = {"c": prof.c, "lambda_1": prof.lam1, "j_c": prof.j_c, "orientation": prof.orientation,
           "residual": prof.meta["residual"], "residual_scheme": prof.meta["residual_scheme"],
           "classification": waves.classify(prof, ctx.law), "liminf": lo, "limsup": hi,
           "method": prof.meta["method"], "z_min": float(prof.z[0]), "z_max": float(prof.z[-1])}
    return {"record": rec, "object": prof}, None


def run_simulate(ctx):
    exp = ctx.cfg.experiment
    datum = build_datum(ctx, exp["datum"] or {"form": "profile", "perturbations": []}, ctx.lam("lambda1")
                        if exp["datum"] and exp["datum"]["form"] == "profile" else None)
    probes = _probes(ctx, exp["probes"], datum.grid)
    every = exp["sample_every"] or ctx.m
    traj = evolve.simulate(ctx.frame, ctx.law, datum, exp["T_horizon"], probes, every,
                           store_fields=exp["snapshots"], method=ctx.method)
    rec = {"c": ctx.frame.c, "T_horizon": exp["T_horizon"], "dt": ctx.dt, "m_per_delay": ctx.m,
           "steps": traj.meta["steps"], "min_value": traj.meta["min_value"]}
    for k, v in traj.probes.items():
        rec[f"final.{k}"] = float(v[-1])
    return {"record": rec, "object": traj}, None


def _needs_profile_datum(block):
    return block is None or block["form"] == "profile"


def run_experiment(ctx):
    exp = ctx.cfg.experiment
    kind, p, T = exp["kind"], ctx.params, exp["T_horizon"]
    frame, law = ctx.frame, ctx.law
    common = {"sample_every": exp["sample_every"], "method": ctx.method}
    if kind == "comparison":
        lam = ctx.lam(p.get("lambda"))
        u0 = build_datum(ctx, exp["datum"] or {"form": "profile", "perturbations": []}, lam)
        psi0 = build_datum(ctx, exp["datum_b"] or {"form": "profile", "perturbations": []}, lam)
        v = stability_lab.comparison_experiment(frame, law, u0, psi0, lam, T, window=exp["window"],
                                                fit_model=p.get("fit_model", "auto"), **common)
    elif kind == "local":
        lam = ctx.lam(p.get("lambda"), "mid")
        v = stability_lab.local_stability_experiment(frame, law, ctx.profile(), lam, p.get("eps", 0.1), T,
                                                     C_eps=p.get("C_eps", 0.5), center=p.get("center"),
                                                     width=p.get("width", 2.0), extent=_ext1(ctx), m=ctx.m,
                                                     slack=p.get("slack"), **common)
    elif kind == "global":
        lam = ctx.lam(p.get("lambda"), "mid")
        u0 = build_datum(ctx, exp["datum"] or {"form": "profile", "perturbations": []}, lam)
        v = stability_lab.global_stability_experiment(frame, law, ctx.profile(), lam, u0, T, z0=p.get("z0", 0.0),
                                                      band_eps=p.get("band_eps", 0.05),
                                                      z_threshold=p.get("z_threshold"), window=exp["window"],
                                                      **common)
    elif kind == "subsuper":
        prof = ctx.profile()
        gamma = p.get("gamma", 0.05)
        sign = int(p.get("sign", 1))
        q = p.get("q")
        if q is None:
            box = stability_lab.gg_box(law, gamma, ctx.h, p.get("delta"))
            q = p.get("q_fraction", 0.5) * (box["q_upper"] if sign > 0 else box["q_lower"])
        lam_c = ctx.lam(p["lambda"]) if p.get("lambda") is not None else None
        v = stability_lab.subsuper_check(frame, law, prof, q, gamma, b=p.get("b"), sign=sign, lam_c=lam_c,
                                         delta=p.get("delta"), m=p.get("slab_m", 20))
    elif kind == "squeeze":
        u0 = build_datum(ctx, exp["datum"] or {"form": "step", "value": 0.1, "z0": 0.0, "orientation": "left"})
        v = stability_lab.squeeze_experiment(frame, law, u0, p.get("eps", 0.05), T, z0=p.get("z0", 0.0),
                                             orientation=p.get("orientation", "left"),
                                             z_offset=p.get("z_offset", 0.0), **common)
    elif kind == "persistence":
        lam_p = ctx.lam(p.get("lambda_prime"), "half_lambda1")
        u0 = build_datum(ctx, exp["datum"] or {"form": "profile", "perturbations": []}, lam_p)
        pn = p.get("p", 1)
        pn = np.inf if pn in ("inf", float("inf")) else pn
        v = stability_lab.persistence_check(frame, law, u0, lam_p, int(p.get("k_max", 5)), p=pn,
                                            method=ctx.method)
    elif kind == "speed_selection":
        datum = build_datum(ctx, exp["datum"] or {"form": "exp_tail", "amplitude": 0.01, "rate": "lambda1",
                                                  "speed": None})
        ce = p.get("c_expected")
        if isinstance(ce, str):
            ce = resolve_or_none(ce, ctx)
        v = stability_lab.speed_selection_experiment(frame, law, datum, p.get("beta", 0.5 * law.kappa), T,
                                                     c_expected=ce, side=p.get("side"), window=exp["window"],
                                                     tol=p.get("tol", 0.03), **common)
    else:
        raise ConfigError([f"experiment.kind: {kind!r} is not a verdict experiment"])
    rec = {"experiment": exp["name"], "kind": kind, "c": frame.c}
    rec.update(v.as_record())
    return {"record": rec, "object": v}, v


def resolve_or_none(spec, ctx):
    from .config import resolve_speed
    return resolve_speed(spec, ctx.frame1d().with_speed(0.0))


def _ext1(ctx):
    ext = ctx.cfg.grid["extent"]
    return None if ext is None else tuple(ext[0])


RUNNERS = {"spectrum": run_spectrum, "profile": run_profile, "simulate": run_simulate}


# ---------------------------------------------------------------------------
# output


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir):
    """sha256 of every file under out_dir (manifest excluded), sorted by relative path."""
    out = Path(out_dir)
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST)
    lines = [f"{sha256(p)}  {p.relative_to(out).as_posix()}" for p in files]
    (out / MANIFEST).write_text("\n".join(lines) + "\n")
    return out / MANIFEST


def _emit(result, verdict, out, render):
    rec = result["record"]
    obj = result.get("object")
    if obj is not None:
        plotting.emit_plotdata(obj, out)
    elif "series" in result:
        plotting.emit_plotdata(result["series"], out)
    if isinstance(obj, waves.WaveProfile):
        meta = {k: (v.item() if isinstance(v, np.generic) else v) for k, v in rec.items()}
        (out / "profile.meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    plotting.write_report(out / "report.txt", rec)
    if render:
        src = obj if obj is not None else result["series"]
        plotting.render_figures(src, out / "figures", fit=getattr(verdict, "fit", None))


def run(cfg, subcommand, out_dir, render=None):
    """Run the configured experiment under a subcommand; returns the exit code."""
    kind = cfg.experiment["kind"]
    if kind not in SUBCOMMAND_KINDS[subcommand]:
        raise ConfigError([f"experiment.kind: {kind!r} cannot run under '{subcommand}' "
                           f"(accepts {', '.join(SUBCOMMAND_KINDS[subcommand])})"])
    out = Path(out_dir) / cfg.experiment["name"]
    out.mkdir(parents=True, exist_ok=True)
    for old in out.rglob("*"):
        if old.is_file():
            old.unlink()
    (out / "config.yaml").write_text(cfg.dump())
    render = subcommand == "report" if render is None else render
    try:
        ctx = Context(cfg)
        result, verdict = RUNNERS.get(kind, run_experiment)(ctx)
    except InstabilityError as e:
        diag = {"error": str(e), **{k: plotting.fmt(v) for k, v in e.diagnostics.items()}}
        (out / "diagnostic.txt").write_text("\n".join(f"{k} = {v}" for k, v in diag.items()) + "\n")
        write_manifest(out)
        log.error("numerical failure: %s", e)
        return EXIT_NUMERIC
    except NumericalError as e:
        hist = getattr(e, "history", [])
        lines = [f"error = {e}"] + [f"history.{i} = {plotting.fmt(v)}" for i, v in enumerate(hist)]
        (out / "diagnostic.txt").write_text("\n".join(lines) + "\n")
        write_manifest(out)
        log.error("numerical failure: %s", e)
        return EXIT_NUMERIC
    except (SemiwaveError, ValueError) as e:
        raise ConfigError([f"experiment: {e}"])
    _emit(result, verdict, out, render)
    write_manifest(out)
    if verdict is None:
        return EXIT_OK
    log.info("%s: %s %s", cfg.experiment["name"], "pass" if verdict.passed else "FAIL", verdict.reason)
    return EXIT_OK if verdict.passed else EXIT_FAIL


def build_parser():
    ap = argparse.ArgumentParser(prog="semiwave", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="experiment config (YAML)")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--threads", type=int, default=1, help="BLAS/FFT thread count (default: 1)")
    ap.add_argument("--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("spectrum", "characteristic function, roots and critical speeds"),
                        ("profile", "compute the traveling profile"),
                        ("simulate", "evolve a datum and record probes"),
                        ("compare", "weighted comparison-bound experiment"),
                        ("stability", "local/global stability, sub/super-solutions, squeeze, persistence"),
                        ("speedsel", "level-set speed selection"),
                        ("report", "run any experiment and render figures")):
        sp = sub.add_parser(name, help=help_)
        # accept the global flags after the subcommand as well
        sp.add_argument("--config", dest="sub_config", default=None)
        sp.add_argument("--out", dest="sub_out", default=None)
        sp.add_argument("--threads", dest="sub_threads", type=int, default=None)
        sp.add_argument("--verbose", dest="sub_verbose", action="store_true")
    return ap


def _thread_limit(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    cfg_path = args.sub_config or args.config
    out = args.sub_out or args.out
    threads = args.sub_threads or args.threads
    verbose = args.verbose or args.sub_verbose
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if cfg_path is None:
        print("semiwave: --config is required", file=sys.stderr)
        return EXIT_USAGE
    if threads < 1:
        print("semiwave: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = parse_config(cfg_path)
        with _thread_limit(threads):
            return run(cfg, args.command, out)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
