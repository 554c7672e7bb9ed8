"""Command-line experiment runner.

Every subcommand reads an optional JSON :class:`ExperimentConfig`, lets
flags override it, writes CSV/JSON artifacts to the output directory and
returns an exit status:

0 pass, 1 usage error, 2 computational failure, 3 property violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coeffs import AffineFamily, constant, model_family
from .discretize import (
    DiscretizationError,
    NearPoleError,
    assemble_a0,
    assemble_perturbation,
    build_mesh,
    solve,
)
from .dtn2d import BesselRangeError, check_sign_properties, dtn_symbol
from .holomorphy import (
    NeumannDivergence,
    RegionError,
    cauchy_residual,
    region_radius_part1,
    region_radius_part2,
    verify_factor_two,
)
from .opnorm import ConvergenceError, NormKind, k_sweep, norm_relation_check, solution_operator_norm
from .poles import ResonanceError, k_sequence_experiment, pole_map

__all__ = ["ExperimentConfig", "main", "run"]

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE, EXIT_PROPERTY = 0, 1, 2, 3
POLES_PPW = 40.0  # the pencil comparison is specified at 40 points per wavelength


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Serializable description of one experiment run."""

    seed: int = 42
    ppw: float = 20.0
    pollution_exp: float = 1.5
    k_min: float = 10.0
    k_max: float = 200.0
    k_count: int = 40
    family: str | None = None
    out: str = "paraholo-out"
    workers: int | None = None
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        data = json.loads(text)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def digest(self) -> str:
        """Hash of the fields that can change results (not ``out`` or ``workers``)."""
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _complexes(text: str) -> list[complex]:
    try:
        return [complex(t.replace(" ", "")) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _pair(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    return v[0], v[1]


def _norm(text: str) -> NormKind:
    try:
        return NormKind[text.upper()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"norm must be one of {[n.name for n in NormKind]}") from None


def _fmt_complex(z: complex) -> str:
    return f"{z.real:.16e}{z.imag:+.16e}j"


class Writer:
    """Single writer for all artifacts of one run."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dir = Path(cfg.out)
        self.written: list[Path] = []

    def _path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.dir / name

    def csv(self, name: str, body: str, partial: bool = False):
        head = f"# paraholo {__version__} config {self.cfg.digest()}"
        if partial:
            head += " PARTIAL"
        p = self._path(name)
        p.write_text(head + "\n" + body)
        self.written.append(p)

    def json(self, name: str, data: dict):
        payload = {"version": __version__, "config_hash": self.cfg.digest(), **data}
        p = self._path(name)
        p.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
        self.written.append(p)
        return payload


def _jsonable(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, NormKind):
        return o.name
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _family(cfg: ExperimentConfig) -> AffineFamily:
    if cfg.family is None:
        return model_family()
    try:
        return AffineFamily.from_dict(json.loads(Path(cfg.family).read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read family {cfg.family}: {exc}") from exc


def _setup(cfg: ExperimentConfig, k: float):
    fam = _family(cfg)
    bps = sorted(set(fam.base.breakpoints).union(*(m.breakpoints for m in fam.modes)))
    mesh = build_mesh(k, cfg.ppw, cfg.pollution_exp, bps, fam.base.R)
    op = assemble_a0(mesh, fam.base)
    perts = [assemble_perturbation(mesh, p, j) for j, p in enumerate(fam.modes)]
    return op, perts, fam


def _region(cfg, op, fam, part: int):
    if part == 1:
        return region_radius_part1(solution_operator_norm(op, NormKind.L2, NormKind.H1K), fam)
    return region_radius_part2(solution_operator_norm(op, NormKind.L2, NormKind.H2K), fam)


# ---------------------------------------------------------------- subcommands


def cmd_solve(cfg, a, w: Writer) -> int:
    op, perts, fam = _setup(cfg, a.k)
    y = a.y or [0.0] * fam.N
    if len(y) != fam.N:
        raise UsageError(f"--y needs {fam.N} entries")
    sol = solve(op, list(zip(perts, y)), constant(1.0, fam.base.R))
    if a.dump:
        rows = ["x,re_u,im_u"] + [f"{x:.15e},{u.real:.15e},{u.imag:.15e}" for x, u in zip(sol.mesh.nodes, sol.values)]
        w.csv("solution.csv", "\n".join(rows) + "\n")
    out = w.json("solve.json", {"k": a.k, "y": y, "residual": sol.residual, "condition": sol.condition,
                               "dofs": op.n_dofs})
    print(json.dumps({"residual": out["residual"], "condition": out["condition"]}))
    return EXIT_OK


def cmd_opnorm_sweep(cfg, a, w: Writer) -> int:
    ks = np.geomspace(cfg.k_min, cfg.k_max, cfg.k_count)
    fam = _family(cfg)
    table = k_sweep(fam.base, ks, (a.source, a.target), cfg.ppw, cfg.pollution_exp, cfg.workers)
    w.csv("opnorm_sweep.csv", table.to_csv(), partial=not table.complete)
    lo, hi = a.slope_range
    ok = table.complete and lo <= table.slope <= hi and table.min_ratio > 0
    w.json("opnorm_sweep.json", {**table.summary(), "min_ratio": table.min_ratio, "complete": table.complete,
                                 "error": table.error, "slope_range": [lo, hi], "ok": ok})
    print(f"slope {table.slope:.4f}")
    if not table.complete:
        print(table.error, file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_norm_relations(cfg, a, w: Writer) -> int:
    reports = {}
    ok = True
    for k in a.k:
        op, _, _ = _setup(cfg, k)
        rep = norm_relation_check(op, a.a_min)
        reports[f"{k:g}"] = rep.to_dict()
        ok = ok and rep.ok
    w.json("norm_relations.json", {"reports": reports, "ok": ok})
    print("ok" if ok else "violated")
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_holo_region(cfg, a, w: Writer) -> int:
    op, _, fam = _setup(cfg, a.k)
    region = _region(cfg, op, fam, a.part)
    data = w.json("holo_region.json", {"part": a.part, **region.to_dict()})
    print(json.dumps(data, sort_keys=True, default=_jsonable))
    return EXIT_OK


def cmd_holo_verify(cfg, a, w: Writer) -> int:
    op, perts, fam = _setup(cfg, a.k)
    region = _region(cfg, op, fam, 1)
    rep = verify_factor_two(op, perts, region, a.samples, cfg.seed)
    data = w.json("holo_verify.json", {**rep.to_dict(), "radii": region.per_mode_radii, "ok": rep.ok})
    print(json.dumps({"max_ratio": data["max_ratio"], "violations": data["violations"]}))
    return EXIT_OK if rep.ok else EXIT_PROPERTY


def cmd_cauchy(cfg, a, w: Writer) -> int:
    op, perts, fam = _setup(cfg, a.k)
    center = a.center or [0.0] * fam.N
    region = _region(cfg, op, fam, 1) if a.inside else None
    try:
        res = cauchy_residual(op, perts, center, a.radius, a.mode, a.nodes, region=region)
    except RegionError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_PROPERTY
    w.json("cauchy.json", {"k": a.k, "center": center, "radius": a.radius, "nodes": a.nodes, "residual": res})
    print(f"{res:.6e}")
    return EXIT_OK


def cmd_poles(cfg, a, w: Writer) -> int:
    ppw = a.ppw if a.ppw is not None else POLES_PPW
    rep = k_sequence_experiment((a.m_lo, a.m_hi), a.pencil_upto, ppw, cfg.pollution_exp)
    w.csv("poles.csv", rep.to_csv(), partial=bool(rep.errors))
    w.json("poles.json", {"bracket_ok": rep.bracket_ok, "agreement_ok": rep.agreement_ok,
                          "min_k_abs_y": rep.min_k_abs_y, "max_k_abs_y": rep.max_k_abs_y, "errors": rep.errors})
    sys.stdout.write(rep.to_csv())
    if rep.errors:
        return EXIT_COMPUTE
    return EXIT_OK if rep.ok else EXIT_PROPERTY


def cmd_pole_map(cfg, a, w: Writer) -> int:
    re, im, grid = pole_map(a.k, a.re_range, a.im_range, a.grid, cfg.ppw, cfg.pollution_exp)
    rows = ["re_y,im_y,log10_cond"]
    for i, yi in enumerate(im):
        for j, yr in enumerate(re):
            rows.append(f"{yr:.10e},{yi:.10e},{grid[i, j]:.6f}")
    w.csv("pole_map.csv", "\n".join(rows) + "\n")
    print(f"max log10 condition {np.max(grid[np.isfinite(grid)]):.3f}")
    return EXIT_OK


def cmd_dtn_check(cfg, a, w: Writer) -> int:
    rep = check_sign_properties(a.nmax, a.z)
    data = w.json("dtn_check.json", rep.to_dict())
    print(json.dumps(data, sort_keys=True, default=_jsonable))
    return EXIT_OK if rep.ok else EXIT_PROPERTY


def cmd_dtn_symbol(cfg, a, w: Writer) -> int:
    print(_fmt_complex(dtn_symbol(a.n, a.z).value))
    return EXIT_OK


def cmd_repro_all(cfg, a, w: Writer) -> int:
    from .acceptance import run_all

    results = run_all(a.only or None)
    w.json("repro_all.json", {"criteria": [r.to_dict() for r in results]})
    return EXIT_OK if all(r.ok for r in results) else EXIT_PROPERTY


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paraholo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"paraholo {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON ExperimentConfig")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--ppw", type=float)
    common.add_argument("--pollution-exp", type=float)
    common.add_argument("--family", help="JSON affine family descriptor")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    s = add("solve", cmd_solve, "solve the model problem with f = 1")
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--y", type=_complexes, help="parameter values, comma separated")
    s.add_argument("--dump", action="store_true", help="write solution.csv")

    s = add("opnorm-sweep", cmd_opnorm_sweep, "solution-operator norms over a k range")
    s.add_argument("--k-min", type=float)
    s.add_argument("--k-max", type=float)
    s.add_argument("--k-count", type=int)
    s.add_argument("--source", type=_norm, default=NormKind.L2)
    s.add_argument("--target", type=_norm, default=NormKind.L2)
    s.add_argument("--workers", type=int)
    s.add_argument("--slope-range", type=_pair, default=(0.85, 1.15))

    s = add("norm-relations", cmd_norm_relations, "check the dual/L2 norm inequalities")
    s.add_argument("--k", type=_floats, default=[20.0, 80.0])
    s.add_argument("--a-min", type=float, default=1.0)

    s = add("holo-region", cmd_holo_region, "guaranteed polydisc of holomorphy")
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--part", type=int, choices=(1, 2), default=1)

    s = add("holo-verify", cmd_holo_verify, "sample the region and check the factor-two bound")
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--samples", type=int, default=200)

    s = add("cauchy", cmd_cauchy, "Cauchy-formula residual on a circle in one parameter")
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--center", type=_complexes)
    s.add_argument("--radius", type=float, required=True)
    s.add_argument("--nodes", type=int, default=64)
    s.add_argument("--mode", type=int, default=0)
    s.add_argument("--inside", action="store_true", help="fail unless the circle lies in the region")

    s = add("poles", cmd_poles, "poles along the sequence k = 2 pi m sqrt 2")
    s.add_argument("--m-lo", type=int, default=5)
    s.add_argument("--m-hi", type=int, default=40)
    s.add_argument("--pencil-upto", type=int, default=None)

    s = add("pole-map", cmd_pole_map, "log condition of A0 + y P1 over a grid in complex y")
    s.add_argument("--k", type=float, required=True)
    s.add_argument("--re-range", type=_pair, required=True)
    s.add_argument("--im-range", type=_pair, required=True)
    s.add_argument("--grid", type=int, default=200)

    s = add("dtn-check", cmd_dtn_check, "sign properties of the 2-d DtN symbol")
    s.add_argument("--nmax", type=int, default=50)
    s.add_argument("--z", type=_floats, default=[1.0, 10.0, 100.0])

    s = add("dtn-symbol", cmd_dtn_symbol, "print H_n'(z)/H_n(z)")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--z", type=float, required=True)

    s = add("repro-all", cmd_repro_all, "run every acceptance criterion")
    s.add_argument("--only", type=lambda t: [int(v) for v in t.split(",")], help="criterion numbers")
    return p


def _config(a: argparse.Namespace) -> ExperimentConfig:
    if a.config:
        try:
            cfg = ExperimentConfig.from_json(Path(a.config).read_text())
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"bad config {a.config}: {exc}") from exc
    else:
        cfg = ExperimentConfig()
    for name in ("out", "seed", "ppw", "pollution_exp", "family", "k_min", "k_max", "k_count", "workers"):
        v = getattr(a, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if cfg.ppw < 10 or cfg.k_count < 2 or cfg.k_min <= 0 or cfg.k_max <= cfg.k_min:
        raise UsageError("invalid mesh policy or k range in config")
    return cfg


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = _config(a)
        return a.func(cfg, a, Writer(cfg))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DiscretizationError, BesselRangeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NearPoleError, ConvergenceError, ResonanceError, NeumannDivergence, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"computational failure: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
