"""Per-mechanism error budget and infidelity versus chain length.

Contributions are evaluated one mechanism at a time and added linearly,
which is adequate in the high-fidelity regime.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

from iongrad.chain_modes import CrystalSpec, compute_modes, zigzag_ratio
from iongrad.constants import TWO_PI
from iongrad.drive_model import DriveConfig, calibrate_drive, retarget
from iongrad.errors import CalibrationError, PhysicsError
from iongrad.lindblad import GateSetup, NoiseModel, infidelity_contribution
from iongrad.phase_engine import spectator_budget

log = logging.getLogger(__name__)

# canonical row order of the budget table
MECHANISM_ROWS = (
    "spectator_modes",
    "qubit_t2",
    "motional_decoherence",
    "rf_pulses",
    "com_heating",
    "qubit_t1",
    "scattering",
)
ROW_LABELS = {
    "spectator_modes": "Spectator modes",
    "qubit_t2": "Qubit T2 decoherence",
    "motional_decoherence": "Motional decoherence",
    "rf_pulses": "RF pulses",
    "com_heating": "COM mode heating",
    "qubit_t1": "Qubit T1 decay",
    "scattering": "Scattering (Rayleigh & Raman)",
}
INPUT_CONSTANT_ROWS = ("rf_pulses", "scattering")
LINDBLAD_ROWS = ("qubit_t2", "motional_decoherence", "com_heating", "qubit_t1")
ZIGZAG_MARGIN = 1.005


def worker_count(default: int | None = None) -> int:
    """Pool size from ``IONGRAD_THREADS`` (falls back to the CPU count, max 8)."""
    env = os.environ.get("IONGRAD_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 1
        return max(1, n)
    if default is not None:
        return max(1, default)
    return max(1, min(8, os.cpu_count() or 1))


def _map(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map preserves input order, so the reduction is deterministic
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class BudgetRow:
    mechanism: str
    values: dict
    source: str

    def __post_init__(self):
        if self.mechanism not in MECHANISM_ROWS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        expected = "input_constant" if self.mechanism in INPUT_CONSTANT_ROWS else "simulated"
        if self.source != expected:
            raise ValueError(f"{self.mechanism} must have source {expected!r}")
        if any(v < 0 for v in self.values.values()):
            raise ValueError("infidelities must be non-negative")

    @property
    def label(self) -> str:
        return ROW_LABELS[self.mechanism]


@dataclass(frozen=True)
class BudgetReport:
    rows: list
    directions: tuple
    parameters: dict = field(default_factory=dict)

    @property
    def totals(self) -> dict:
        return {d: sum(r.values[d] for r in self.rows) for d in self.directions}

    def row(self, mechanism: str) -> BudgetRow:
        for r in self.rows:
            if r.mechanism == mechanism:
                return r
        raise KeyError(mechanism)

    def to_text(self, scale: float = 1e-4) -> str:
        heads = [_direction_label(d) for d in self.directions]
        name_w = max(len(ROW_LABELS[m]) for m in MECHANISM_ROWS) + 2
        lines = [f"{'Error mechanism':<{name_w}}" + "".join(f"{h:>12}" for h in heads) + "  source",
                 f"{'':<{name_w}}" + "".join(f"{'(x1e-4)':>12}" for _ in heads)]
        rule = "-" * (name_w + 12 * len(heads) + 16)
        lines.insert(0, rule)
        lines.append(rule)
        for r in self.rows:
            vals = "".join(f"{r.values[d] / scale:>12.1f}" for d in self.directions)
            lines.append(f"{r.label:<{name_w}}{vals}  {r.source}")
        lines.append(rule)
        tot = self.totals
        lines.append(f"{'Total':<{name_w}}" + "".join(f"{tot[d] / scale:>12.1f}" for d in self.directions))
        lines.append(rule)
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mechanism", *(f"infidelity_{d}" for d in self.directions), "source"])
        for r in self.rows:
            w.writerow([r.mechanism, *(repr(float(r.values[d])) for d in self.directions), r.source])
        tot = self.totals
        w.writerow(["total", *(repr(float(tot[d])) for d in self.directions), "sum"])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {
            "directions": list(self.directions),
            "rows": [{"mechanism": r.mechanism, "label": r.label, "source": r.source,
                      "infidelity": {d: r.values[d] for d in self.directions}} for r in self.rows],
            "totals": self.totals,
            "parameters": self.parameters,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def _direction_label(d: str) -> str:
    return "Axial" if d == "axial" else "Radial" if d.startswith("radial") else d


def _nbar_for(nbar, direction):
    if isinstance(nbar, dict):
        return nbar.get(direction, nbar.get("radial" if direction.startswith("radial") else direction))
    return nbar


def direction_rows(spec: CrystalSpec, drive: DriveConfig, noise: NoiseModel, direction: str, nbar: float,
                   *, policy: str = "target", n_max: int | None = None, workers: int = 1) -> dict:
    """Simulated rows for one direction, keyed by mechanism."""
    modes = compute_modes(spec, direction)
    try:
        cal = calibrate_drive(spec, modes, retarget(drive, direction, drive.target_index), policy=policy)
    except CalibrationError as exc:
        raise CalibrationError(f"spectator_modes ({direction}): {exc}") from exc
    setup = GateSetup.build(spec, cal, noise, nbar, modes)

    def safe(mech):
        try:
            if mech == "spectator_modes":
                return spectator_budget(spec, drive, direction, nbar, policy=policy)
            return infidelity_contribution(setup, mech, n_max=n_max)
        except PhysicsError as exc:
            exc.args = (f"row {mech} ({direction}): {exc}",) + tuple(exc.args[1:])
            raise

    mechs = ("spectator_modes",) + LINDBLAD_ROWS
    vals = _map(safe, mechs, workers)
    return dict(zip(mechs, (float(v) for v in vals)))


def assemble_budget(spec: CrystalSpec, drive: DriveConfig, noise: NoiseModel, directions=("axial", "radial_x"),
                    *, nbar=0.12, rf_pulses: float = 2.4e-4, scattering: float | None = None,
                    policy: str = "target", n_max: int | None = None, workers: int | None = None) -> BudgetReport:
    """Error budget for ``drive`` evaluated on each direction's COM mode.

    ``nbar`` may be a scalar or a per-direction mapping (``"radial"`` matches
    both radial axes). ``scattering`` defaults to the noise model's Rayleigh
    plus Raman contributions.
    """
    workers = worker_count(workers)
    directions = tuple(directions)
    scat = noise.scattering_rate() if scattering is None else scattering
    per_dir = {d: direction_rows(spec, drive, noise, d, _nbar_for(nbar, d), policy=policy, n_max=n_max,
                                 workers=workers) for d in directions}
    rows = []
    for mech in MECHANISM_ROWS:
        if mech == "rf_pulses":
            rows.append(BudgetRow(mech, {d: float(rf_pulses) for d in directions}, "input_constant"))
        elif mech == "scattering":
            rows.append(BudgetRow(mech, {d: float(scat) for d in directions}, "input_constant"))
        else:
            rows.append(BudgetRow(mech, {d: per_dir[d][mech] for d in directions}, "simulated"))
    params = {
        "crystal": asdict(spec),
        "drive": asdict(drive),
        "noise": asdict(noise),
        "nbar": nbar,
        "calibration_policy": policy,
        "gate_time_s": drive.gate_time,
    }
    return BudgetReport(rows, directions, _jsonable(params))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, float) and obj in (float("inf"), float("-inf")):
        return "inf" if obj > 0 else "-inf"
    return obj


# -- chain-length sweep -------------------------------------------------------

def pair_policy(n_ions: int) -> list[tuple[str, tuple[int, int]]]:
    """Innermost and outermost pairs; a single pair for N = 2."""
    if n_ions < 2:
        raise ValueError("need at least two ions for a gate")
    c = (n_ions + 1) // 2
    inner = (c - 1, c)
    outer = (0, n_ions - 1)
    if inner == outer:
        return [("innermost", inner)]
    return [("innermost", inner), ("outermost", outer)]


def stable_axial_frequency(spec: CrystalSpec, n_ions: int, margin: float = ZIGZAG_MARGIN) -> float:
    """Axial frequency for ``n_ions``: the template value, lowered if needed to keep the chain linear."""
    if n_ions < 2:
        return spec.omega_ax
    w_r = min(spec.omega_rad_x, spec.omega_rad_y)
    return min(spec.omega_ax, w_r / (margin * zigzag_ratio(n_ions)))


@dataclass(frozen=True)
class SweepPoint:
    n_ions: int
    omega_ax: float
    pairs: tuple
    totals: tuple
    breakdowns: tuple
    skipped: tuple = ()

    @property
    def mean_infidelity(self) -> float:
        return sum(self.totals) / len(self.totals) if self.totals else float("nan")

    def mean_breakdown(self) -> dict:
        if not self.breakdowns:
            return {}
        return {m: sum(b[m] for b in self.breakdowns) / len(self.breakdowns) for m in MECHANISM_ROWS}


def _sweep_point(args):
    n, template, drive, noise, direction, nbar, policy, rf_pulses, scattering, n_max = args
    spec = replace(template.with_ions(n), omega_ax=stable_axial_frequency(template, n))
    pairs, totals, breakdowns, skipped = [], [], [], []
    for label, pair in pair_policy(n):
        drv = replace(drive, target_ions=pair)
        try:
            rep = assemble_budget(spec, drv, noise, (direction,), nbar=nbar, rf_pulses=rf_pulses,
                                  scattering=scattering, policy=policy, n_max=n_max, workers=1)
        except CalibrationError as exc:
            log.warning("N=%d %s pair %s skipped: %s", n, label, pair, exc)
            skipped.append((label, pair, str(exc)))
            continue
        pairs.append((label, pair))
        totals.append(rep.totals[direction])
        breakdowns.append({r.mechanism: r.values[direction] for r in rep.rows})
    return SweepPoint(n, spec.omega_ax, tuple(pairs), tuple(totals), tuple(breakdowns), tuple(skipped))


def fidelity_vs_chain_length(template: CrystalSpec, drive: DriveConfig, noise: NoiseModel, n_list,
                             *, direction: str = "axial", nbar=0.12, policy: str = "full",
                             rf_pulses: float = 2.4e-4, scattering: float | None = None,
                             n_max: int | None = None, workers: int | None = None) -> list[SweepPoint]:
    """Mean budget total over the innermost and outermost pairs for each N.

    The noise model's ion number is left to follow the chain so that the COM
    heating rate scales with N. ``policy="full"`` calibrates against every
    mode of the direction, as done for the actual pair in an experiment.
    """
    noise = replace(noise, n_ions=None)
    jobs = [(int(n), template, drive, noise, direction, _nbar_for(nbar, direction), policy, rf_pulses,
             scattering, n_max) for n in n_list]
    return _map(_sweep_point, jobs, worker_count(workers))


def sweep_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n_ions", "pair", "total_infidelity", "row_breakdown_json"])
    for p in points:
        pair = "|".join(f"{a}-{b}" for _, (a, b) in p.pairs)
        detail = {
            "mean": p.mean_breakdown(),
            "pairs": [{"label": lab, "ions": list(ij), "total": tot}
                      for (lab, ij), tot in zip(p.pairs, p.totals)],
            "omega_ax_hz": p.omega_ax / TWO_PI,
            "skipped": [{"label": lab, "ions": list(ij), "reason": why} for lab, ij, why in p.skipped],
        }
        w.writerow([p.n_ions, pair, repr(float(p.mean_infidelity)), json.dumps(detail, sort_keys=True)])
    return buf.getvalue()
