"""Experiment commands and their on-disk outputs.

Every command writes its data files first and a ``manifest.toml`` last, via
a temporary file and an atomic rename.  Data files never contain wall-clock
times, so an identical config yields byte-identical data.
"""

from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, _fmt, config_to_lines
from .diagnostics import (NormReport, entropy_increase, gradient_norm_series, norm_report, pressure_equation_residual,
                          q_eps_field, q_reconstruction_error, r_eps_field, rate_study, relaxation_residual_field,
                          space_l2, synthetic_rate_report, total_entropy_series)
from .entropy import hessian_eigenvalue_sweep
from .eos import _inv_ae2_unchecked, validate_subcharacteristic
from .errors import ModelError, StateError, UsageError
from .presets import preset_initial_condition
from .relax_solver import SolutionField, run

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3
FIELD_HEADER = "x,rho_m,m,Gamma,p,u,alpha"


def _g(v) -> str:
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------


def write_fields(path: Path, fld: SolutionField, eos) -> None:
    p, u, alpha = fld.primitive(eos)
    x = fld.grid.centers
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(FIELD_HEADER + "\n")
        for k, t in enumerate(fld.times):
            fh.write(f"# t={_g(t)}\n")
            cols = (x, *fld.states[k], p[k], u[k], alpha[k])
            for row in zip(*cols):
                fh.write(",".join(_g(v) for v in row) + "\n")


def read_fields(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_fields`: ``(times, data)`` with data shaped ``(n_t, n, 7)``."""
    times, blocks, cur = [], [], None
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != FIELD_HEADER:
            raise UsageError(f"unexpected fields header {header!r}")
        for line in fh:
            if line.startswith("# t="):
                times.append(float(line[4:]))
                cur = []
                blocks.append(cur)
            elif line.strip():
                cur.append([float(v) for v in line.split(",")])
    return np.array(times), np.array(blocks)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_g(v) for v in row) + "\n")


def write_keyvalue(path: Path, items: dict) -> None:
    """Flat ``key = value`` document; nested dicts become dotted keys."""
    lines = []

    def walk(prefix, obj):
        for k, v in obj.items():
            key = f"{prefix}{k}"
            if isinstance(v, dict):
                walk(key + ".", v)
            else:
                if isinstance(v, np.ndarray):
                    v = [float(x) for x in v]
                elif isinstance(v, (np.floating, np.integer, np.bool_)):
                    v = v.item()
                if isinstance(v, (list, tuple)):
                    v = [float(x) if isinstance(x, (np.floating, float)) else x for x in v]
                lines.append(f"{key} = {_fmt(v) if v is not None else _fmt('none')}")

    walk("", items)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


@dataclass
class RunManifest:
    command: str
    config: RunConfig
    code_version: str = __version__
    started: str = field(default_factory=_now)
    finished: str = ""
    status: str = "running"
    checksums: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    failure: dict = field(default_factory=dict)

    def add_file(self, path: Path) -> None:
        self.checksums[Path(path).name] = sha256_file(path)

    def to_lines(self) -> list[str]:
        lines = [f"command = {_fmt(self.command)}", f"code_version = {_fmt(self.code_version)}",
                 f"started = {_fmt(self.started)}", f"finished = {_fmt(self.finished)}",
                 f"status = {_fmt(self.status)}"]
        lines += [f"checksums.{_fmt(k)} = {_fmt(v)}" for k, v in sorted(self.checksums.items())]
        lines += [f"verdicts.{k} = {_fmt(v)}" for k, v in self.verdicts.items()]
        for k, v in self.failure.items():
            lines.append(f"failure.{k} = {_fmt(v)}")
        lines += ["config." + ln for ln in config_to_lines(self.config)]
        return lines

    def write(self, out_dir: Path) -> Path:
        """Atomic write: temporary file in the same directory, then rename."""
        self.finished = self.finished or _now()
        target = Path(out_dir) / "manifest.toml"
        fd, tmp = tempfile.mkstemp(prefix=".manifest.", dir=out_dir)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write("\n".join(self.to_lines()) + "\n")
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return target


def verify_manifest(out_dir) -> dict:
    """Recompute checksums listed in a manifest; returns ``{name: matches}``."""
    import tomli

    out_dir = Path(out_dir)
    doc = tomli.loads((out_dir / "manifest.toml").read_text(encoding="utf-8"))
    return {name: (out_dir / name).exists() and sha256_file(out_dir / name) == digest
            for name, digest in doc.get("checksums", {}).items()}


def _prepare_out(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from exc
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def run_series(fld: SolutionField, eps: float, eos) -> tuple[list[str], np.ndarray]:
    dx = fld.grid.dx
    S = total_entropy_series(fld, eos)
    res = space_l2(relaxation_residual_field(fld, eos), dx)
    gp, gu = gradient_norm_series(fld, eos)
    R = space_l2(r_eps_field(fld, eps, eos).R, dx)
    header = ["t", "total_entropy", "l2_alpha_res", "l2_dxp", "l2_dxu", "l2_R"]
    return header, np.column_stack([fld.times, S, res, gp, gu, R])


def run_report(fld: SolutionField, eps: float, eos) -> dict:
    t, dx = fld.times, fld.grid.dx
    reports: dict[str, NormReport] = {
        "alpha_residual": norm_report(relaxation_residual_field(fld, eos), t, dx, "alpha - alpha_eq"),
        "R_eps": norm_report(r_eps_field(fld, eps, eos).R, t, dx, "R"),
        "Q_eps": norm_report(q_eps_field(fld, eps, eos), t, dx, "Q"),
    }
    out = {k: {kk: vv for kk, vv in v.to_dict().items() if kk != "l2_space"} for k, v in reports.items()}
    out["entropy"] = {"initial": float(total_entropy_series(fld, eos)[0]),
                      "final": float(total_entropy_series(fld, eos)[-1]),
                      "max_increase": entropy_increase(total_entropy_series(fld, eos))}
    out["q_reconstruction_error"] = q_reconstruction_error(fld, eps, eos)
    if fld.n_times >= 2:
        out["pressure_residual"] = pressure_equation_residual(fld, eps, eos)
    out["n_steps"] = int(fld.run_meta.get("n_steps", 0))
    out["n_snapshots"] = int(fld.n_times)
    return out


def cmd_run(cfg: RunConfig, out_dir) -> int:
    out = _prepare_out(out_dir)
    manifest = RunManifest("run", cfg)
    try:
        ic = preset_initial_condition(cfg.preset, cfg.params, cfg.grid, cfg.eos)
        fld = run(ic, cfg.solver, cfg.grid, cfg.eos)
    except StateError as exc:
        manifest.status = "failed"
        manifest.failure = {"message": str(exc)}
        if exc.time is not None:
            manifest.failure["time"] = float(exc.time)
        if exc.cell is not None:
            manifest.failure["cell"] = int(exc.cell)
        manifest.write(out)
        raise
    formats = set(cfg.outputs.formats)
    eps = cfg.solver.eps
    if "fields" in formats:
        write_fields(out / "fields.csv", fld, cfg.eos)
        manifest.add_file(out / "fields.csv")
    if "series" in formats:
        header, rows = run_series(fld, eps, cfg.eos)
        write_csv(out / "series.csv", header, rows)
        manifest.add_file(out / "series.csv")
    report = run_report(fld, eps, cfg.eos)
    if "report" in formats:
        write_keyvalue(out / "report.txt", report)
        manifest.add_file(out / "report.txt")
    manifest.verdicts["q_reconstruction"] = "PASS" if report["q_reconstruction_error"] <= 1e-12 else "FAIL"
    manifest.status = "completed"
    manifest.write(out)
    log.info("run finished: %d snapshots in %s", fld.n_times, out)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out_dir) -> int:
    sw = cfg.sweep
    if len(sw.eps_list) < 3:
        raise UsageError(f"a sweep needs at least three eps values, got {len(sw.eps_list)}")
    out = _prepare_out(out_dir)
    manifest = RunManifest("sweep", cfg)
    if sw.synthetic:
        report = synthetic_rate_report(sw.eps_list, sw.synthetic_power, slope_min=sw.slope_min,
                                       slope_max=sw.slope_max)
    else:
        report = rate_study(cfg.preset, sw.eps_list, cfg.grid, cfg.solver, cfg.eos, cfg.params,
                            slope_min=sw.slope_min, slope_max=sw.slope_max, precheck=sw.precheck,
                            workers=sw.workers)
    write_csv(out / "sweep.csv", ["eps", "error_p", "error_u", "residual_constant"],
              zip(report.eps_values, report.errors_p, report.errors_u, report.residual_constant))
    write_keyvalue(out / "rate_report.txt", report.to_dict())
    manifest.add_file(out / "sweep.csv")
    manifest.add_file(out / "rate_report.txt")
    manifest.verdicts["rate"] = report.verdict
    manifest.status = "completed"
    manifest.write(out)
    log.info("sweep verdict %s (slope_p=%.3f, slope_u=%.3f)", report.verdict, report.slope_p, report.slope_u)
    return {"PASS": EXIT_OK, "FAIL": EXIT_FAIL, "INCONCLUSIVE": EXIT_INCONCLUSIVE}[report.verdict]


def eos_checks(cfg: RunConfig) -> dict:
    eos = cfg.eos
    p = np.linspace(eos.p_lo, eos.p_hi, 1000)
    sub = validate_subcharacteristic(eos, p)
    eig = hessian_eigenvalue_sweep(eos, cfg.validate.n_samples, cfg.seed, cfg.validate.u_max,
                                   cfg.validate.alpha_width)
    drho_dp = _inv_ae2_unchecked(p, eos)
    return {
        "subcharacteristic": {"verdict": "PASS" if sub.passed else "FAIL", "min_margin": sub.min_margin,
                              "p_at_min": sub.p_at_min, "n_points": sub.n_points},
        "convexity": {"verdict": "PASS" if eig.min() > 0 else "FAIL", "min_eigenvalue": float(eig.min()),
                      "max_eigenvalue": float(eig.max()), "n_samples": int(eig.shape[0]), "seed": cfg.seed},
        "monotone_rho_eq": {"verdict": "PASS" if np.all(drho_dp > 0) else "FAIL",
                            "min_drho_dp": float(drho_dp.min())},
        "equal_density": {"verdict": "WARN" if sub.warnings else "PASS",
                          "pressure": eos.equal_density_pressure},
    }


def cmd_validate_eos(cfg: RunConfig, out_dir) -> int:
    out = _prepare_out(out_dir)
    manifest = RunManifest("validate-eos", cfg)
    try:
        checks = eos_checks(cfg)
    except ModelError as exc:
        checks = {"model": {"verdict": "FAIL", "message": str(exc)}}
    failed = any(c["verdict"] == "FAIL" for c in checks.values())
    checks["verdict"] = "FAIL" if failed else "PASS"
    write_keyvalue(out / "eos_report.txt", checks)
    manifest.add_file(out / "eos_report.txt")
    manifest.verdicts = {k: v["verdict"] for k, v in checks.items() if isinstance(v, dict)}
    manifest.status = "completed"
    manifest.write(out)
    return EXIT_FAIL if failed else EXIT_OK
