"""Config-driven experiment harness: ``pgd-strip <study> --config file``.

Config files are line-oriented ``key = value`` text with ``#`` comments and
comma-separated lists.  Results go to a CSV with one row per solve.
"""

from __future__ import annotations

import argparse
import enum
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .metrics import (ConvergenceRecord, ReferenceKind, deflection_errors, energy_error,
                      kinematics_diagnostics)
from .model import (CASE_IDS, AxialOrder, Integration, SolverSettings, make_case,
                    plane_strain_moduli)
from .oracles import (asymptotic_energy, asymptotic_solution, kl_solution, limit_ode_problem,
                      reference_mesh, scaled_kl_center, solve_limit_ode, solve_reference_2d)
from .pgd import (PGDSolution, center_deflection, greedy_enrich, operators_for, solve_block,
                  solve_greedy, strain_energy)

log = logging.getLogger(__name__)

CSV_HEADER = ("case,slenderness,n_modes,integration,reference,defl_err_1,defl_err_2,"
              "energy_err,fp_iters,runtime_ms,status")

LOCKING_GRID = (4.0, 10.0, 40.0, 100.0, 400.0, 1000.0, 4000.0, 10000.0)


class Study(enum.Enum):
    LOCKING = "locking"
    SLENDERNESS_SWEEP = "slenderness-sweep"
    COMPARE_REFERENCE = "compare-reference"
    DUMP_MODES = "dump-modes"
    LIMIT_ODE = "limit-ode"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    study: Study
    cases: tuple[str, ...]
    slenderness: tuple[float, ...]
    settings: SolverSettings
    integrations: tuple[Integration, ...]
    output: Path
    parallel: bool = False
    workers: int = 4
    young_modulus: float = 1.0
    poisson_ratio: float = 0.3
    greedy_modes: int = 5
    timing: bool = True
    reference_nz: int = 10
    reference_aspect: float = 2.0
    ode_elements: int = 256
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.cases:
            raise ConfigError("at least one case is required")
        if not self.slenderness:
            raise ConfigError("slenderness grid is empty")
        if any(b <= a for a, b in zip(self.slenderness, self.slenderness[1:])):
            raise ConfigError("slenderness grid must be strictly increasing")

    @property
    def material(self):
        return plane_strain_moduli(self.young_modulus, self.poisson_ratio)


# per-study defaults that differ from the global ones
_STUDY_DEFAULTS = {
    Study.LOCKING: {"cases": "SS-SP", "slenderness": ",".join(f"{s:g}" for s in LOCKING_GRID),
                    "integration": "full,selective", "axial_order": "linear",
                    "boundary_layer": "false"},
    Study.SLENDERNESS_SWEEP: {"modes": "1"},
    Study.COMPARE_REFERENCE: {"cases": "CC-UP", "slenderness": "5,10,20,50,100,200,500,1000"},
    Study.DUMP_MODES: {"cases": "CC-UP", "slenderness": "20"},
    Study.LIMIT_ODE: {"slenderness": "100,1000,10000"},
}

_GLOBAL_DEFAULTS = {
    "cases": ",".join(CASE_IDS),
    "slenderness": "10,20,50,100,200,500,1000,2000,5000,10000",
    "eta": "1e-3",
    "max_iters": "100",
    "integration": "selective",
    "axial_order": "quadratic",
    "n_elements": "64",
    "thickness_degree": "4",
    "boundary_layer": "true",
    "young_modulus": "1.0",
    "nu": "0.3",
    "modes": "5",
    "block_extra_modes": "0",
    "divergence_window": "5",
    "parallel": "false",
    "workers": "4",
    "timing": "true",
    "reference_nz": "10",
    "reference_aspect": "2.0",
    "ode_elements": "256",
    "out": "",
}

_KEYS = {"study", *_GLOBAL_DEFAULTS}


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _converter(key: str, kind: Callable, lines: dict):
    def convert(text: str):
        try:
            return kind(text)
        except ValueError as exc:
            where = f"line {lines[key]}: " if key in lines else ""
            raise ConfigError(f"{where}{key}: {exc}") from None
    return convert


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}") from None


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}") from None


def _float_list(text: str) -> tuple[float, ...]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(_float(s) for s in items)


def _positive(kind):
    def convert(text):
        value = kind(text)
        if not value > 0:
            raise ValueError(f"must be > 0, got {text}")
        return value
    return convert


def _nonnegative_int(text):
    value = _int(text)
    if value < 0:
        raise ValueError(f"must be >= 0, got {text}")
    return value


def _case_list(text: str) -> tuple[str, ...]:
    items = tuple(s.strip().upper() for s in text.split(",") if s.strip())
    if not items:
        raise ValueError("empty case list")
    for item in items:
        if item not in CASE_IDS:
            raise ValueError(f"unknown case {item!r}, expected one of {', '.join(CASE_IDS)}")
    return items


def _integration_list(text: str) -> tuple[Integration, ...]:
    items = [s.strip().lower() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    if items == ["both"]:
        items = ["full", "selective"]
    try:
        return tuple(Integration(s) for s in items)
    except ValueError:
        raise ValueError(f"expected full, selective or both, got {text!r}") from None


def _eta(text):
    value = _float(text)
    if not value > 0:
        raise ValueError(f"tolerance eta must satisfy eta > 0, got {text}")
    return value


def _axial_order(text):
    orders = {"linear": AxialOrder.LINEAR, "quadratic": AxialOrder.QUADRATIC}
    if text.lower() not in orders:
        raise ValueError(f"expected linear or quadratic, got {text!r}")
    return orders[text.lower()]


def _poisson(text):
    value = _float(text)
    if not -1.0 < value < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {text}")
    return value


def _study(text: str, lineno: int | None) -> Study:
    try:
        return Study(text.lower())
    except ValueError:
        where = f"line {lineno}: " if lineno else ""
        raise ConfigError(f"{where}unknown study {text!r}; expected one of "
                          f"{', '.join(s.value for s in Study)}") from None


def parse_config(text: str, overrides: dict[str, str] | None = None,
                 study: Study | str | None = None) -> ExperimentConfig:
    """Parse ``key = value`` text; ``overrides`` (e.g. from the command line) win."""
    raw: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        key = key.lower().replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first on line {lines[key]})")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        raw[key] = value
        lines[key] = lineno

    from_file = _study(raw["study"], lines.get("study")) if "study" in raw else None
    chosen = _study(study, None) if isinstance(study, str) else study
    if chosen and from_file and chosen is not from_file:
        raise ConfigError(f"line {lines['study']}: config is for study {from_file.value!r}, "
                          f"not {chosen.value!r}")
    chosen = chosen or from_file or Study.SLENDERNESS_SWEEP

    values = {**_GLOBAL_DEFAULTS, **_STUDY_DEFAULTS[chosen], **raw, **(overrides or {})}

    def get(key, kind):
        return _converter(key, kind, lines)(values[key])

    try:
        settings = SolverSettings(
            fp_tolerance=get("eta", _eta),
            fp_max_iters=get("max_iters", _positive(_int)),
            integration=get("integration", _integration_list)[0],
            n_greedy_modes=get("block_extra_modes", _nonnegative_int),
            thickness_degree=get("thickness_degree", _positive(_int)),
            axial_order=get("axial_order", _axial_order),
            n_axial_elements=get("n_elements", _positive(_int)),
            boundary_layer_mesh=get("boundary_layer", _parse_bool),
            divergence_window=get("divergence_window", _nonnegative_int),
        )
    except ConfigError:
        raise
    except ValueError as exc:  # cross-field checks inside SolverSettings
        raise ConfigError(str(exc)) from None
    out = values["out"] or f"results/{chosen.value}.csv"
    grid = get("slenderness", _float_list)
    if any(s <= 0 for s in grid):
        where = f"line {lines['slenderness']}: " if "slenderness" in lines else ""
        raise ConfigError(f"{where}slenderness values must be positive")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        where = f"line {lines['slenderness']}: " if "slenderness" in lines else ""
        raise ConfigError(f"{where}slenderness grid must be strictly increasing")
    get("young_modulus", _positive(_float))
    return ExperimentConfig(
        study=chosen,
        cases=get("cases", _case_list),
        slenderness=grid,
        settings=settings,
        integrations=get("integration", _integration_list),
        output=Path(out),
        parallel=get("parallel", _parse_bool),
        workers=get("workers", _positive(_int)),
        young_modulus=get("young_modulus", _positive(_float)),
        poisson_ratio=get("nu", _poisson),
        greedy_modes=get("modes", _nonnegative_int),
        timing=get("timing", _parse_bool),
        reference_nz=get("reference_nz", _positive(_int)),
        reference_aspect=get("reference_aspect", _positive(_float)),
        ode_elements=get("ode_elements", _positive(_int)),
        source=dict(raw),
    )


# ---------------------------------------------------------------------------
# studies


@dataclass
class _Timer:
    enabled: bool
    elapsed_ms: float = 0.0

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed_ms = (time.perf_counter() - self._start) * 1e3 if self.enabled else 0.0


def _status(sol: PGDSolution) -> str:
    reports = ([sol.report] if sol.block is not None else []) + list(sol.mode_reports)
    if all(r.converged for r in reports):
        return "ok"
    return "diverged" if any(r.diverged for r in reports) else "not-converged"


def _pgd_record(cfg, case, sol, method, integration, ref_kind, ref_center, ref_energy, timer):
    e1, e2 = deflection_errors(sol, ref_center)
    return ConvergenceRecord(case.case_id, case.slenderness, sol.n_modes, method,
                             integration.value, ref_kind, e1, e2,
                             energy_error(strain_energy(sol), ref_energy),
                             sol.total_iterations, timer.elapsed_ms, _status(sol),
                             center_deflection(sol) / ref_center)


def _run_locking(cfg, case, mat):
    kl = kl_solution(case, mat)
    rows = []
    for integ in cfg.integrations:
        settings = cfg.settings.replace(integration=integ)
        with _Timer(cfg.timing) as timer:
            sol = solve_greedy(case, mat, settings, 1)
        rows.append(_pgd_record(cfg, case, sol, "greedy-1", integ, ReferenceKind.KL,
                                kl.w_center, kl.energy, timer))
    return rows


def _greedy_rows(cfg, case, mat, settings, ops, integ, kind, ref_center, ref_energy):
    """greedy-1 ... greedy-k rows; runtime is the cumulative cost of the k modes."""
    rows, sol, elapsed = [], None, 0.0
    for k in range(1, cfg.greedy_modes + 1):
        with _Timer(cfg.timing) as timer:
            sol = (solve_greedy(case, mat, settings, 1, ops=ops) if sol is None
                   else greedy_enrich(sol, 1))
        elapsed += timer.elapsed_ms
        timer.elapsed_ms = elapsed
        rows.append(_pgd_record(cfg, case, sol, f"greedy-{k}", integ, kind, ref_center,
                                ref_energy, timer))
    return rows


def _block_rows(cfg, case, mat, settings, ops, integ, kind, ref_center, ref_energy):
    with _Timer(cfg.timing) as timer:
        block = solve_block(case, mat, settings.replace(n_greedy_modes=0), ops=ops)
    rows = [_pgd_record(cfg, case, block, "block-2", integ, kind, ref_center, ref_energy, timer)]
    return rows + _block_enrichment_rows(cfg, case, block, integ, kind, ref_center, ref_energy)


def _run_sweep(cfg, case, mat):
    kl = kl_solution(case, mat)
    rows = []
    for integ in cfg.integrations:
        settings = cfg.settings.replace(integration=integ)
        ops = operators_for(case, settings)
        args = (integ, ReferenceKind.KL, kl.w_center, kl.energy)
        rows += _greedy_rows(cfg, case, mat, settings, ops, *args)
        rows += _block_rows(cfg, case, mat, settings, ops, *args)
    return rows


def _block_enrichment_rows(cfg, case, block, integ, kind, ref_center, ref_energy):
    rows = []
    sol = block
    for k in range(1, cfg.settings.n_greedy_modes + 1):
        with _Timer(cfg.timing) as timer:
            sol = greedy_enrich(sol, 1)
        rows.append(_pgd_record(cfg, case, sol, f"block-2+{k}", integ, kind, ref_center,
                                ref_energy, timer))
    return rows


def _run_compare_reference(cfg, case, mat):
    mesh = reference_mesh(case, nz=cfg.reference_nz, aspect=cfg.reference_aspect)
    ref = solve_reference_2d(case, mat, mesh)
    rows = []
    for integ in cfg.integrations:
        settings = cfg.settings.replace(integration=integ)
        ops = operators_for(case, settings)
        args = (integ, ReferenceKind.FINE_2D, ref.w_center, ref.energy)
        rows += _block_rows(cfg, case, mat, settings, ops, *args)
        rows += _greedy_rows(cfg, case, mat, settings, ops, *args)
    kind = ReferenceKind.FINE_2D
    _, u3 = asymptotic_solution(case, mat, case.length / 2, 0.0)
    err = abs(float(u3) - ref.w_center) / abs(ref.w_center)
    rows.append(ConvergenceRecord(case.case_id, case.slenderness, 0, "asymptotic", "none", kind,
                                  err, err, energy_error(asymptotic_energy(case, mat), ref.energy),
                                  center_ratio=float(u3) / ref.w_center))
    return rows


def _run_limit_ode(cfg, case, mat):
    problem = limit_ode_problem(mat.poisson_ratio, case.bc_kind, case.load_kind)
    ode = solve_limit_ode(problem, cfg.ode_elements)
    ode_ratio = ode.w_center / scaled_kl_center(mat.poisson_ratio, case.bc_kind, case.load_kind)
    kl = kl_solution(case, mat)
    rows = []
    for integ in cfg.integrations:
        with _Timer(cfg.timing) as timer:
            sol = solve_greedy(case, mat, cfg.settings.replace(integration=integ), 1)
        ratio = center_deflection(sol) / kl.w_center
        err = abs(ratio - ode_ratio) / abs(ode_ratio)
        rows.append(ConvergenceRecord(case.case_id, case.slenderness, 1, "greedy-1",
                                      integ.value, ReferenceKind.LIMIT_ODE, err, err,
                                      energy_error(strain_energy(sol), kl.energy),
                                      sol.total_iterations, timer.elapsed_ms, _status(sol),
                                      ratio / ode_ratio))
    return rows


def _run_dump_modes(cfg, case, mat):
    rows = []
    for integ in cfg.integrations:
        settings = cfg.settings.replace(integration=integ)
        with _Timer(cfg.timing) as timer:
            sol = solve_block(case, mat, settings)
        kl = kl_solution(case, mat)
        rows.append(_pgd_record(cfg, case, sol, "block-2", integ, ReferenceKind.KL,
                                kl.w_center, kl.energy, timer))
        path = mode_dump_path(cfg, case, integ)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_mode_dump(sol, path)
    return rows


def mode_dump_path(cfg: ExperimentConfig, case, integration: Integration) -> Path:
    stem = cfg.output.with_suffix("")
    return stem.parent / (f"{stem.name}_{case.case_id}_S{case.slenderness:g}_"
                          f"{integration.value}.modes.txt")


def write_mode_dump(sol: PGDSolution, path: Path, n_thickness: int = 41) -> None:
    """Axial table (x1, v1, v3, w3) then a thickness table (x3, r1, s3)."""
    if sol.block is None:
        raise ValueError("mode dump needs a block solution")
    ops, case = sol.ops, sol.case
    r1_fit = kinematics_diagnostics(sol)
    out = [f"# case {case.case_id}  slenderness {case.slenderness:g}  "
           f"integration {ops.integration.value}",
           f"# r1 linear-fit residual {r1_fit[0]:.6e}  shear residual {r1_fit[1]:.6e}",
           "# axial",
           "# x1 v1 v3 w3"]
    b = sol.block
    for row in zip(ops.mesh.node_coords, b.v1, b.v3, b.w3):
        out.append(" ".join(f"{v:.17e}" for v in row))
    out += ["", "# thickness", "# x3 r1 s3"]
    x3 = np.linspace(-case.thickness / 2, case.thickness / 2, n_thickness)
    N3 = ops.basis.values(x3)
    for row in zip(x3, N3 @ b.r1, N3 @ b.s3):
        out.append(" ".join(f"{v:.17e}" for v in row))
    out += ["", "# thickness coefficients, powers " + " ".join(map(str, ops.basis.powers)),
            "# r1 " + " ".join(f"{v:.17e}" for v in b.r1),
            "# s3 " + " ".join(f"{v:.17e}" for v in b.s3)]
    path.write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")


_RUNNERS = {
    Study.LOCKING: _run_locking,
    Study.SLENDERNESS_SWEEP: _run_sweep,
    Study.COMPARE_REFERENCE: _run_compare_reference,
    Study.DUMP_MODES: _run_dump_modes,
    Study.LIMIT_ODE: _run_limit_ode,
}


def _failed_row(case, message):
    return [ConvergenceRecord(case.case_id, case.slenderness, 0, "none", "none", ReferenceKind.KL,
                              math.nan, math.nan, math.nan, 0, 0.0,
                              "error: " + message.replace(",", ";").replace("\n", " "))]


def run_experiment(cfg: ExperimentConfig) -> list[ConvergenceRecord]:
    """Run every (case, slenderness) task; rows are case-major, slenderness-minor."""
    mat = cfg.material
    runner = _RUNNERS[cfg.study]
    tasks = [make_case(cid, s) for cid in cfg.cases for s in cfg.slenderness]

    def run(case):
        try:
            return runner(cfg, case, mat)
        except Exception as exc:  # one failed solve must not abort the sweep
            log.exception("%s at L/t=%g failed", case.case_id, case.slenderness)
            return _failed_row(case, f"{type(exc).__name__}: {exc}")

    if cfg.parallel and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(case) for case in tasks]
    return [row for rows in results for row in rows]


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.17e}"


def format_record(rec: ConvergenceRecord) -> str:
    return ",".join([rec.case_id, _fmt(rec.slenderness), rec.method, rec.integration,
                     rec.reference_kind.value, _fmt(rec.defl_err_1), _fmt(rec.defl_err_2),
                     _fmt(rec.energy_err), str(rec.fp_iterations), _fmt(rec.runtime_ms),
                     rec.status])


def write_csv(records, path) -> None:
    """Header plus one row per record; the n_modes column carries the method label."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    text = "\n".join([CSV_HEADER, *map(format_record, records)]) + "\n"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def normalized_deflection_table(records) -> str:
    """Center deflection over the reference, one line per integration rule."""
    grid = sorted({r.slenderness for r in records})
    rules = [i.value for i in Integration if any(r.integration == i.value for r in records)]
    lines = ["L/t        " + " ".join(f"{s:>8g}" for s in grid)]
    for rule in rules:
        by_s = {r.slenderness: r.center_ratio for r in records if r.integration == rule}
        lines.append(f"{rule:<10} " + " ".join(f"{by_s.get(s, math.nan):>8.5f}" for s in grid))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# command line


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pgd-strip", description=__doc__.splitlines()[0])
    parser.add_argument("study", choices=[s.value for s in Study])
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--out", help="CSV output path")
    parser.add_argument("--slenderness", help="comma-separated L/t grid")
    parser.add_argument("--case", choices=CASE_IDS)
    parser.add_argument("--integration", choices=["full", "selective", "both"])
    parser.add_argument("--modes", type=int, help="number of greedy modes to compare")
    parser.add_argument("--no-boundary-layer", action="store_true")
    parser.add_argument("--parallel", action="store_true")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    if args.out:
        overrides["out"] = args.out
    if args.slenderness:
        overrides["slenderness"] = args.slenderness
    if args.case:
        overrides["cases"] = args.case
    if args.integration:
        overrides["integration"] = args.integration
    if args.modes is not None:
        overrides["modes"] = str(args.modes)
    if args.no_boundary_layer:
        overrides["boundary_layer"] = "false"
    if args.parallel:
        overrides["parallel"] = "true"
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        cfg = parse_config(text, overrides, study=args.study)
    except (ConfigError, OSError) as exc:
        print(f"pgd-strip: config error: {exc}", file=sys.stderr)
        return 1
    records = run_experiment(cfg)
    try:
        write_csv(records, cfg.output)
    except OSError as exc:
        print(f"pgd-strip: {exc}", file=sys.stderr)
        return 1
    if cfg.study is Study.LOCKING:
        print(normalized_deflection_table(records))
    failed = [r for r in records if r.status != "ok"]
    print(f"wrote {len(records)} rows to {cfg.output}"
          + (f" ({len(failed)} not ok)" if failed else ""))
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
