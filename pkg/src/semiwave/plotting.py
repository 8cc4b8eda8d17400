"""Plot data emission (CSV + plain-text plot script) and matplotlib figure rendering."""

import math
from pathlib import Path

import numpy as np

from .evolve import Trajectory
from .stability_lab import StabilityVerdict
from .waves import WaveProfile

# series whose values span decades get a log axis
LOG_SERIES = {"decay", "envelope", "persistence"}


def fmt(v):
    """Deterministic text for a report value."""
    if v is None:
        return "none"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns: dict):
    """Header row plus one row per sample; floats with 17 significant digits."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns must have equal length")
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(_cell(c[i]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def _cell(v):
    if isinstance(v, (str, np.str_)):
        return str(v)
    x = float(v)
    return "nan" if math.isnan(x) else format(x, ".17g")


def write_report(path, record: dict):
    """Flat key = value report, keys in the record's order."""
    lines = [f"{k} = {fmt(v)}" for k, v in record.items()]
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def plot_script(csv_name, columns, title="", logy=False, long_form=False):
    """Generic plotting recipe in plain text; adapt to any plotting tool."""
    names = list(columns)
    lines = [f"# plot recipe for {csv_name}",
             f"# columns: {', '.join(names)}",
             "import csv",
             "import matplotlib.pyplot as plt",
             f"rows = list(csv.DictReader(open({csv_name!r})))"]
    if long_form:
        lines += ["series = {}",
                  "for r in rows:",
                  "    series.setdefault(r['probe_name'], []).append((float(r['t']), float(r['value'])))",
                  "for name, pts in series.items():",
                  "    plt.plot([p[0] for p in pts], [p[1] for p in pts], label=name)",
                  "plt.xlabel('t')"]
    else:
        x = names[0]
        lines.append(f"x = [float(r[{x!r}]) for r in rows]")
        for y in names[1:]:
            lines.append(f"plt.plot(x, [float(r[{y!r}]) for r in rows], label={y!r})")
        lines.append(f"plt.xlabel({x!r})")
    if logy:
        lines.append("plt.yscale('log')")
    lines += [f"plt.title({title!r})", "plt.legend()", "plt.show()"]
    return "\n".join(lines) + "\n"


def tables(obj):
    """name -> (columns dict, long_form flag) for a trajectory, verdict, profile or raw series dict."""
    if isinstance(obj, Trajectory):
        t, names, vals = [], [], []
        for name in obj.probes:
            for ti, v in zip(obj.times, obj.probes[name]):
                t.append(ti)
                names.append(name)
                vals.append(v)
        out = {"trajectory": ({"t": np.array(t), "probe_name": np.array(names, dtype=object),
                               "value": np.array(vals)}, True)}
        if obj.fields:
            out["snapshots"] = (_snapshot_columns(obj), True)
        return out
    if isinstance(obj, StabilityVerdict):
        return {k: (dict(v), False) for k, v in obj.series.items()}
    if isinstance(obj, WaveProfile):
        return {"profile": ({"z": obj.z, "phi": obj.phi}, False)}
    if isinstance(obj, dict):
        return {k: (dict(v), False) for k, v in obj.items()}
    raise TypeError(f"no plot data for {type(obj).__name__}")


def _snapshot_columns(traj):
    rows = {"t": []}
    g = traj.fields[0].grid
    axes = ["z"] if g.d == 1 else ["z", "y"]
    for a in axes:
        rows[a] = []
    rows["u"] = []
    mesh = g.mesh()
    for t, f in zip(traj.times, traj.fields):
        n = f.values.size
        rows["t"].append(np.full(n, t))
        for a, m in zip(axes, mesh):
            rows[a].append(np.broadcast_to(m, g.shape).ravel())
        rows["u"].append(f.values.ravel())
    return {k: np.concatenate(v) for k, v in rows.items()}


def emit_plotdata(obj, path, overlays=None):
    """Write <stem>_<series>.csv and matching .plot.txt files (plus report for verdicts).

    path is a directory; overlays adds columns to a profile table (e.g. sub/super
    envelopes sampled on the same z).  Returns the written paths.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    tabs = tables(obj)
    if overlays and "profile" in tabs:
        tabs["profile"][0].update(overlays)
    for name, (cols, long_form) in tabs.items():
        csv_name = f"{name}.csv"
        written.append(write_csv(out / csv_name, cols))
        script = plot_script(csv_name, cols, name, name in LOG_SERIES, long_form and name == "trajectory")
        (out / f"{name}.plot.txt").write_text(script)
        written.append(out / f"{name}.plot.txt")
    if isinstance(obj, StabilityVerdict):
        written.append(write_report(out / "verdict.txt", obj.as_record()))
    return written


def render_figures(obj, path, fit=None):
    """PNG figures of every series table; returns the written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (cols, long_form) in tables(obj).items():
        if name == "snapshots":
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        if long_form:
            names = cols["probe_name"]
            for probe in dict.fromkeys(names):
                sel = names == probe
                ax.plot(cols["t"][sel], cols["value"][sel], label=str(probe))
            ax.set_xlabel("t")
        else:
            keys = list(cols)
            x = np.asarray(cols[keys[0]], dtype=float)
            for k in keys[1:]:
                y = np.asarray(cols[k], dtype=float)
                ax.plot(x, y, label=k)
            ax.set_xlabel(keys[0])
            if name in LOG_SERIES:
                ax.set_yscale("log")
                if fit is not None and name == "decay":
                    tt = x[(x >= fit.window[0]) & (x <= fit.window[1])]
                    ax.plot(tt, fit(tt), "k--", label=f"fit alpha={fit.alpha:.3g} gamma={fit.gamma:.3g}")
        ax.set_title(name)
        ax.legend(fontsize=8)
        fig.tight_layout()
        p = out / f"{name}.png"
        fig.savefig(p, dpi=100, metadata={"Software": None})
        plt.close(fig)
        written.append(p)
    return written
