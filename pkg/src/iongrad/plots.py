"""Optional SVG line plots built from the CSV files already written."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no timestamp keep the SVG output reproducible
matplotlib.rcParams["svg.hashsalt"] = "iongrad"


def _read(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _col(rows, key, cast=float):
    return [cast(r[key]) for r in rows]


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _spectra(rows, ax):
    for d in sorted({r["direction"] for r in rows}):
        sel = [r for r in rows if r["direction"] == d]
        ax.plot(_col(sel, "mode_index", int), [f / 1e6 for f in _col(sel, "freq_hz")], "o-", label=d)
    ax.set_xlabel("mode index")
    ax.set_ylabel("frequency (MHz)")
    ax.legend()


def _trajectories(rows, ax):
    for s in ("00", "01", "10", "11"):
        sel = [r for r in rows if r["state"] == s]
        ax.plot(_col(sel, "re_alpha"), _col(sel, "im_alpha"), label=f"|{s}>")
    ax.set_xlabel("Re alpha")
    ax.set_ylabel("Im alpha")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()


def _parity(rows, ax):
    ax.errorbar(_col(rows, "phi_rad"), _col(rows, "parity"), yerr=_col(rows, "parity_err"), fmt="o-", ms=3)
    ax.set_xlabel("analysis phase (rad)")
    ax.set_ylabel("parity")


def _decay(rows, ax):
    ax.errorbar(_col(rows, "n_gates", int), _col(rows, "fidelity"), yerr=_col(rows, "sigma"), fmt="o")
    ax.set_xlabel("number of gates")
    ax.set_ylabel("Bell-state fidelity")


def _residual(rows, ax):
    ax.errorbar([t * 1e6 for t in _col(rows, "t_s")], _col(rows, "infidelity"), yerr=_col(rows, "error_bar"),
                fmt="o-", ms=3)
    ax.set_xlabel("gate duration (us)")
    ax.set_ylabel("infidelity")


def _deflector(rows, ax):
    x = [v * 1e6 for v in _col(rows, "x_m")]
    ax.plot(x, _col(rows, "pop_tem00"), label="TEM00")
    ax.plot(x, _col(rows, "pop_tem10"), label="TEM10")
    ax.set_xlabel("beam position (um)")
    ax.set_ylabel("population")
    ax.legend()


def _sweep(rows, ax):
    n = _col(rows, "n_ions", int)
    ax.semilogy(n, _col(rows, "total_infidelity"), "o-", label="total")
    bd = [json.loads(r["row_breakdown_json"])["mean"] for r in rows]
    for key in ("spectator_modes", "com_heating", "motional_decoherence", "qubit_t2"):
        ax.semilogy(n, [b[key] for b in bd], ".--", label=key)
    ax.set_xlabel("number of ions")
    ax.set_ylabel("infidelity")
    ax.legend(fontsize="small")


PLOTTERS = {
    "spectra.csv": _spectra,
    "trajectories.csv": _trajectories,
    "parity_exact.csv": _parity,
    "parity_sampled.csv": _parity,
    "decay.csv": _decay,
    "residual_sampled.csv": _residual,
    "residual_exact.csv": _residual,
    "deflector_scan.csv": _deflector,
    "sweep.csv": _sweep,
}


def plot_outputs(out: Path) -> list[Path]:
    """Write ``<name>.svg`` next to every recognised CSV in ``out``."""
    out = Path(out)
    written = []
    for name, fn in PLOTTERS.items():
        src = out / name
        if not src.exists():
            continue
        fig, ax = plt.subplots(figsize=(5, 3.5))
        fn(_read(src), ax)
        written.append(_save(fig, src.with_suffix(".svg")))
    return written
