"""Command-line driver: solve, verify and write result files.

Usage::

    sosattractor run    --config vanderpol.json --out out/vdp
    sosattractor sweep  --config vanderpol_sweep.json --out out/sweep
    sosattractor verify --config vanderpol.json --certificate out/vdp/certificate.json

``--config`` also accepts the name of a bundled example
(``vanderpol``, ``henon``, ``no_poly_lyapunov``).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import conic
from .attractor import (Certificate, DynamicalSystem, SolveParams, intersect_members, load_certificate,
                        member, save_certificate, solve_attractor)
from .polycore import PolynomialSyntaxError, parse_polynomial
from .semialg import SemialgebraicSet
from .verify import estimate_volume, verify_certificate

log = logging.getLogger("sosattractor")

BUNDLED = ("vanderpol", "henon", "no_poly_lyapunov")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


VERIFICATION_DEFAULTS = {
    "residual_samples": 100_000,
    "attractor_init": 200,
    "transient": None,
    "keep": 2000,
    "step": 0.01,
    "invariance_points": 500,
    "horizon": None,
    "volume_samples": 100_000,
    "seed": 0,
}


@dataclass
class RunConfig:
    mode: str
    dynamics: list
    nvars: int
    set: SemialgebraicSet
    degrees: list
    betas: list = field(default_factory=list)
    alpha: float | None = None
    gamma: float | None = None
    epsilon_scale: float = 1.0
    rescale: bool = False
    solver: conic.SolverSettings = field(default_factory=conic.SolverSettings)
    verification: dict = field(default_factory=lambda: dict(VERIFICATION_DEFAULTS))
    grid: int = 400
    intersect: bool = False
    output: str = "out"

    @property
    def system(self) -> DynamicalSystem:
        return DynamicalSystem.parse(self.mode, self.dynamics)

    def params(self, degree: int, beta: float | None = None) -> SolveParams:
        if self.mode == "continuous":
            return SolveParams(degree, beta=beta if beta is not None else self.betas[0], epsilon_scale=self.epsilon_scale)
        return SolveParams(degree, alpha=self.alpha, gamma=self.gamma, epsilon_scale=self.epsilon_scale)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        def need(key, typ, path=None):
            path = path or key
            if key not in d:
                raise ConfigError(path, "missing")
            val = d[key]
            if typ is float and isinstance(val, int) and not isinstance(val, bool):
                val = float(val)
            if not isinstance(val, typ):
                raise ConfigError(path, f"expected {typ.__name__}")
            return val

        known = {"mode", "dynamics", "nvars", "set", "degree", "degrees", "beta", "betas", "alpha", "gamma",
                 "epsilon_scale", "rescale", "solver", "verification", "grid", "intersect", "output", "name",
                 "description"}
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown field")
        mode = need("mode", str)
        if mode not in ("continuous", "discrete"):
            raise ConfigError("mode", "must be 'continuous' or 'discrete'")
        nvars = need("nvars", int)
        dyn = need("dynamics", list)
        if len(dyn) != nvars:
            raise ConfigError("dynamics", f"needs {nvars} entries, got {len(dyn)}")
        for i, e in enumerate(dyn):
            try:
                parse_polynomial(e, nvars)
            except (PolynomialSyntaxError, TypeError) as exc:
                raise ConfigError(f"dynamics[{i}]", str(exc)) from None
        s = need("set", dict)
        try:
            X = SemialgebraicSet.from_dict({"nvars": nvars, **s})
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError("set", str(exc)) from None

        if ("degree" in d) == ("degrees" in d):
            raise ConfigError("degree", "give exactly one of 'degree' or 'degrees'")
        degrees = [d["degree"]] if "degree" in d else d["degrees"]
        if not isinstance(degrees, list) or not all(isinstance(k, int) and k >= 2 for k in degrees):
            raise ConfigError("degrees" if "degrees" in d else "degree", "degrees must be integers >= 2")

        betas, alpha, gamma = [], None, None
        if mode == "continuous":
            for key in ("alpha", "gamma"):
                if key in d:
                    raise ConfigError(key, "not allowed for continuous mode")
            if ("beta" in d) == ("betas" in d):
                raise ConfigError("beta", "give exactly one of 'beta' or 'betas'")
            betas = [d["beta"]] if "beta" in d else d["betas"]
            if not isinstance(betas, list) or not all(isinstance(b, (int, float)) and b > 0 for b in betas):
                raise ConfigError("beta", "must be positive")
            betas = [float(b) for b in betas]
        else:
            for key in ("beta", "betas"):
                if key in d:
                    raise ConfigError(key, "not allowed for discrete mode")
            alpha, gamma = need("alpha", float), need("gamma", float)
            for key, val in (("alpha", alpha), ("gamma", gamma)):
                if not 0 < val < 1:
                    raise ConfigError(key, "must lie in (0, 1)")

        eps_scale = float(d.get("epsilon_scale", 1.0))
        if eps_scale <= 0:
            raise ConfigError("epsilon_scale", "must be positive")
        solver = d.get("solver", {})
        try:
            settings = conic.SolverSettings(**solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError("solver", str(exc)) from None
        ver = dict(VERIFICATION_DEFAULTS)
        for key, val in d.get("verification", {}).items():
            if key not in ver:
                raise ConfigError(f"verification.{key}", "unknown field")
            ver[key] = val
        grid = d.get("grid", 400)
        if not isinstance(grid, int) or grid < 2:
            raise ConfigError("grid", "must be an integer >= 2")
        return cls(mode, list(dyn), nvars, X, degrees, betas, alpha, gamma, eps_scale,
                   bool(d.get("rescale", False)), settings, ver, grid, bool(d.get("intersect", False)),
                   str(d.get("output", "out")))


def load_config(name_or_path: str) -> dict:
    """Read a JSON config from a path or a bundled example name."""
    if name_or_path in BUNDLED:
        text = resources.files("sosattractor").joinpath("configs", name_or_path + ".json").read_text()
    else:
        text = Path(name_or_path).read_text()
    return json.loads(text)


# ---------------------------------------------------------------------------
# outputs

def _fmt(x: float) -> str:
    return repr(float(x))


def grid_points(X: SemialgebraicSet, resolution: int) -> np.ndarray:
    lo, hi = X.bounding_box()
    axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def grid_table(cert: Certificate, resolution: int) -> str:
    """CSV text with header ``x1,...,xn,J,v,w,in_K``."""
    pts = grid_points(cert.X, resolution)
    J, v, w = cert.J(pts), cert.v(pts), cert.w(pts)
    inK = member(cert, pts)
    buf = io.StringIO()
    cols = [f"x{i + 1}" for i in range(cert.nvars)] + ["J", "v", "w", "in_K"]
    buf.write(",".join(cols) + "\n")
    for p, a, b, c, k in zip(pts, J, v, w, inK):
        buf.write(",".join([_fmt(t) for t in p] + [_fmt(a), _fmt(b), _fmt(c), "1" if k else "0"]) + "\n")
    return buf.getvalue()


def _verify_kwargs(cfg: RunConfig) -> dict:
    v = cfg.verification
    return dict(residual_samples=v["residual_samples"], attractor_init=v["attractor_init"],
                transient=v["transient"], keep=v["keep"], h=v["step"], invariance_points=v["invariance_points"],
                horizon=v["horizon"], volume_samples=v["volume_samples"], seed=v["seed"])


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run(cfg: RunConfig, out: Path | None = None) -> int:
    """Solve, verify and write certificate, grid, report and summary.

    Returns 0 iff the solver reported optimal and the invariance check
    found no violations.
    """
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    k = cfg.degrees[0]
    params = cfg.params(k)
    summary = {"mode": cfg.mode, "degree": k, **params.to_dict()}
    try:
        cert = solve_attractor(cfg.system, cfg.set, params, cfg.solver, rescale=cfg.rescale)
    except conic.SolverError as exc:
        summary.update(status=exc.status, d_k=None, volume=None)
        _write(out / "report.txt", f"solver failed with status {exc.status}\n")
        _write(out / "report.json", json.dumps({"status": exc.status}, indent=1))
        _write(out / "summary.json", json.dumps(summary, indent=1))
        return 2
    save_certificate(cert, out / "certificate.json")
    _write(out / "grid.csv", grid_table(cert, cfg.grid))
    report = verify_certificate(cert, **_verify_kwargs(cfg))
    _write(out / "report.txt", f"status: {cert.status}\nd_k: {cert.d_k!r}\nepsilon: {cert.epsilon!r}\n" + report.to_text())
    _write(out / "report.json", report.to_json())
    summary.update(status=cert.status, d_k=cert.d_k, epsilon=cert.epsilon, volume=report.volume,
                   volume_stderr=report.volume_stderr, invariance_violations=report.invariance_violations,
                   containment_fraction=report.containment_fraction)
    _write(out / "summary.json", json.dumps(summary, indent=1))
    ok = cert.status == conic.OPTIMAL and report.invariance_violations == 0
    return 0 if ok else 1


def sweep(cfg: RunConfig, out: Path | None = None) -> list[dict]:
    """One solve per degree and beta value; writes ``sweep.csv``.

    With ``intersect`` set and several beta values, also writes
    ``grid_intersection.csv`` holding per-beta and intersected membership
    for every degree.
    """
    values = [(k, b) for k in cfg.degrees for b in (cfg.betas or [None])]
    if len(values) < 2:
        raise ConfigError("degrees", "a sweep needs at least two values")
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    ver = cfg.verification
    rows, certs = [], {}
    for k, beta in values:
        params = cfg.params(k, beta)
        row = {"degree": k, "beta": beta, "d_k": None, "volume": None, "volume_stderr": None}
        try:
            cert = solve_attractor(cfg.system, cfg.set, params, cfg.solver, rescale=cfg.rescale)
            vol, se = estimate_volume(cert, n_mc=ver["volume_samples"], seed=ver["seed"])
            row.update(d_k=cert.d_k, volume=vol, volume_stderr=se, status=cert.status)
            certs[(k, beta)] = cert
            save_certificate(cert, out / f"certificate_k{k}" f"{'' if beta is None else f'_beta{beta:g}'}.json")
        except conic.SolverError as exc:
            row["status"] = exc.status
        except Exception as exc:  # keep sweeping; the row records the failure
            row["status"] = f"error: {exc}"
        rows.append(row)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["degree", "beta", "d_k", "volume", "volume_stderr", "status"])
    for r in rows:
        wr.writerow([r["degree"], "" if r["beta"] is None else _fmt(r["beta"]),
                     "" if r["d_k"] is None else _fmt(r["d_k"]),
                     "" if r["volume"] is None else _fmt(r["volume"]),
                     "" if r["volume_stderr"] is None else _fmt(r["volume_stderr"]), r["status"]])
    _write(out / "sweep.csv", buf.getvalue())
    if cfg.intersect and len(cfg.betas) > 1:
        _write(out / "grid_intersection.csv", intersection_table(cfg, certs))
    return rows


def intersection_table(cfg: RunConfig, certs: dict) -> str:
    pts = grid_points(cfg.set, cfg.grid)
    buf = io.StringIO()
    header = [f"x{i + 1}" for i in range(cfg.nvars)] + ["degree"]
    header += [f"in_K_beta{b:g}" for b in cfg.betas] + ["in_K_intersection"]
    buf.write(",".join(header) + "\n")
    for k in cfg.degrees:
        group = [certs.get((k, b)) for b in cfg.betas]
        if any(c is None for c in group):
            continue
        flags = [member(c, pts) for c in group]
        inter = intersect_members(group, pts)
        for i, p in enumerate(pts):
            cells = [_fmt(t) for t in p] + [str(k)] + ["1" if f[i] else "0" for f in flags]
            buf.write(",".join(cells + ["1" if inter[i] else "0"]) + "\n")
    return buf.getvalue()


def verify_existing(cfg: RunConfig, cert_path, out: Path | None = None) -> int:
    """Re-run the verification for a certificate file under a config."""
    cert = load_certificate(cert_path)
    if cert.X.to_dict() != cfg.set.to_dict() or cert.system.f != cfg.system.f:
        raise ConfigError("set", "certificate was computed for a different system or set")
    cert = cert.with_scale(cfg.epsilon_scale)
    report = verify_certificate(cert, **_verify_kwargs(cfg))
    if out is not None:
        out = Path(out)
        _write(out / "verify_report.txt", report.to_text())
        _write(out / "verify_report.json", report.to_json())
    else:
        sys.stdout.write(report.to_text())
    return 0 if cert.status == conic.OPTIMAL and report.invariance_violations == 0 else 1


def _apply_overrides(d: dict, args) -> dict:
    d = copy.deepcopy(d)
    if args.seed is not None:
        d.setdefault("verification", {})["seed"] = args.seed
    if args.epsilon_scale is not None:
        d["epsilon_scale"] = args.epsilon_scale
    if args.degree is not None:
        d.pop("degrees", None)
        d["degree"] = args.degree
    return d


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="sosattractor", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path or bundled example name")
        p.add_argument("--out", help="output directory (default: config 'output')")
        p.add_argument("--seed", type=int)
        p.add_argument("--epsilon-scale", type=float)
        p.add_argument("--degree", type=int)
        if name == "verify":
            p.add_argument("--certificate", required=True)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_dict(_apply_overrides(load_config(args.config), args))
        if args.command == "run":
            return run(cfg, args.out)
        if args.command == "sweep":
            for r in sweep(cfg, args.out):
                print(r)
            return 0
        return verify_existing(cfg, args.certificate, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
