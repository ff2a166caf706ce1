"""Batch command line interface: ``udw-coherent {terms,spectrum,sweep,verify}``.

Configuration is YAML with the top-level keys ``dimension``, ``detector_A``,
``detector_B``, ``amplitude``, ``quadrature`` and ``output``.  Inputs are in
any consistent units; they are rescaled so that detector A's switching time
is one before any computation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np
import yaml

from .detectors import CompactBump, DetectorSpec, GaussianSmearing, GaussianSwitching, PointLike
from .field_state import CoherentAmplitude, Packet
from .perturbation import PerturbativeTerms, assemble_terms
from .quadrature import QuadratureConfig, QuadratureError
from .state_assembly import (
    DEFAULT_GUARD,
    PerturbativeGuardError,
    single_detector_report,
    spectrum_report,
)
from . import verification

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2

SWEEP_PARAMS = ("separation", "gap_A", "gap_B", "amplitude_scale")
SWEEP_COLUMNS = ["parameter", "L_AA", "L_BB", "Re_L_AB", "Im_L_AB", "Re_M", "Im_M",
                 "abs_Lbar_A", "abs_Lbar_B", "N_closed", "N_numeric", "S_A", "error"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass
class RunConfig:
    dimension: int
    detector_A: DetectorSpec
    detector_B: DetectorSpec | None
    amplitude: CoherentAmplitude
    quadrature: QuadratureConfig
    output: str | None = None
    guard: float = DEFAULT_GUARD

    def internal(self) -> "RunConfig":
        """The same run in units where detector A's switching time is one."""
        L = self.detector_A.switching.T
        n = self.dimension
        amp = CoherentAmplitude(n, tuple(
            Packet(p.weight / L ** (n / 2), tuple(c * L for c in p.center), p.width * L)
            for p in self.amplitude.packets))
        B = self.detector_B.scaled(L) if self.detector_B is not None else None
        return replace(self, detector_A=self.detector_A.scaled(L), detector_B=B, amplitude=amp)


def _field(block: dict, key: str, where: str, cast=float, default=...):
    if key not in block:
        if default is ...:
            raise ConfigError(f"{where}.{key}: missing required field")
        return default
    try:
        return cast(block[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}: {exc}") from None


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError("complex values are [re, im]")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


def _vector(n: int):
    def cast(v):
        arr = [float(x) for x in v]
        if len(arr) != n:
            raise ValueError(f"expected {n} components, got {len(arr)}")
        return tuple(arr)
    return cast


def _smearing(block, where):
    if block is None:
        return PointLike()
    kind = _field(block, "kind", where, str, "gaussian")
    if kind == "pointlike":
        return PointLike()
    if kind == "gaussian":
        return GaussianSmearing(_field(block, "sigma", where))
    raise ConfigError(f"{where}.kind: unknown smearing {kind!r}")


def _switching(block, where):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: missing switching block")
    kind = _field(block, "kind", where, str, "gaussian")
    T, t0 = _field(block, "T", where), _field(block, "t0", where, float, 0.0)
    if kind == "gaussian":
        return GaussianSwitching(T, t0)
    if kind == "bump":
        return CompactBump(T, t0)
    raise ConfigError(f"{where}.kind: unknown switching {kind!r}")


def _detector(block, label: str, n: int) -> DetectorSpec:
    where = f"detector_{label}"
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: missing detector block")
    try:
        return DetectorSpec(
            label,
            _field(block, "gap", where),
            _field(block, "position", where, _vector(n)),
            _field(block, "coupling", where),
            _smearing(block.get("smearing"), f"{where}.smearing"),
            _switching(block.get("switching"), f"{where}.switching"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _amplitude(block, n: int) -> CoherentAmplitude:
    if block is None:
        return CoherentAmplitude.vacuum(n)
    packets = []
    for i, p in enumerate(block.get("packets") or []):
        where = f"amplitude.packets[{i}]"
        try:
            packets.append(Packet(_field(p, "weight", where, _complex),
                                  _field(p, "center", where, _vector(n)),
                                  _field(p, "width", where)))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    return CoherentAmplitude(n, tuple(packets))


def _quadrature(block) -> QuadratureConfig:
    block = dict(block or {})
    known = {f.name: f.type for f in fields(QuadratureConfig)}
    for key in block:
        if key not in known:
            raise ConfigError(f"quadrature.{key}: unknown field")
    try:
        return QuadratureConfig(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"quadrature: {exc}") from None


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a mapping at the top level")
    n = _field(data, "dimension", "config", int)
    if n not in (1, 2, 3):
        raise ConfigError(f"config.dimension: must be 1, 2 or 3, got {n}")
    A = _detector(data.get("detector_A"), "A", n)
    B = _detector(data["detector_B"], "B", n) if data.get("detector_B") is not None else None
    quad = _quadrature(data.get("quadrature"))
    try:
        quad.check_dimension(n)
    except ValueError as exc:
        raise ConfigError(f"quadrature.k_min: {exc}") from None
    out = data.get("output") or {}
    path = out.get("path") if isinstance(out, dict) else out
    guard = _field(out if isinstance(out, dict) else {}, "guard", "output", float, DEFAULT_GUARD)
    return RunConfig(n, A, B, _amplitude(data.get("amplitude"), n), quad, path, guard)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: invalid YAML: {exc}") from None
    return parse_config(data)


def _require_B(cfg: RunConfig, verb: str):
    if cfg.detector_B is None:
        raise ConfigError(f"detector_B: required by '{verb}'")


def _terms(cfg: RunConfig, threads: int = 1) -> PerturbativeTerms:
    c = cfg.internal()
    return assemble_terms(c.detector_A, c.detector_B, c.amplitude, c.quadrature, workers=threads)


TERM_NAMES = ("L_AA", "L_BB", "L_AB", "M", "Lbar_A", "Lbar_B", "Lbar_AB", "Mbar")


def terms_table(terms: PerturbativeTerms) -> list[list[str]]:
    header, row = [], []
    for name in TERM_NAMES:
        v = complex(getattr(terms, name))
        header += [f"Re_{name}", f"Im_{name}"]
        row += [fmt(v.real), fmt(v.imag)]
    for name in sorted(terms.errors):
        header.append(f"err_{name}")
        row.append(fmt(terms.errors[name]))
    return [header, row]


def spectrum_table(cfg: RunConfig, terms: PerturbativeTerms) -> list[list[str]]:
    rows = [["quantity", "index", "value"]]
    if cfg.detector_B is None:
        rep = single_detector_report(terms, cfg.guard)
        rows += [["rho_A_numeric", str(i), fmt(e)] for i, e in enumerate(rep.eigenvalues_numeric)]
        rows += [["rho_A_closed", str(i), fmt(e)] for i, e in enumerate(rep.eigenvalues_closed)]
        rows.append(["entropy_A", "", fmt(rep.entropy_A)])
        rows.append(["excitation_A", "", fmt(rep.excitation_probabilities[0])])
        return rows
    rep = spectrum_report(terms, cfg.guard)
    for label, arr in (("rho_AB_numeric", rep.eigenvalues_numeric),
                       ("rho_AB_closed", rep.eigenvalues_closed),
                       ("pt_numeric", rep.pt_eigenvalues_numeric),
                       ("pt_closed", rep.pt_eigenvalues_closed)):
        rows += [[label, str(i), fmt(e)] for i, e in enumerate(arr)]
    rows.append(["negativity_numeric", "", fmt(rep.negativity)])
    rows.append(["negativity_closed", "", fmt(rep.negativity_closed)])
    rows.append(["entropy_AB", "", fmt(rep.entropy)])
    rows.append(["entropy_A", "", fmt(rep.entropy_A)])
    rows.append(["excitation_A", "", fmt(rep.excitation_probabilities[0])])
    rows.append(["excitation_B", "", fmt(rep.excitation_probabilities[1])])
    return rows


def sweep_point(cfg: RunConfig, param: str, value: float) -> RunConfig:
    A, B = cfg.detector_A, cfg.detector_B
    if param == "separation":
        direction = np.subtract(B.position, A.position)
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 0 else np.eye(cfg.dimension)[0]
        return replace(cfg, detector_B=B.moved(np.add(A.position, value * direction)))
    if param == "gap_A":
        return replace(cfg, detector_A=replace(A, gap=value))
    if param == "gap_B":
        return replace(cfg, detector_B=replace(B, gap=value))
    if param == "amplitude_scale":
        return replace(cfg, amplitude=cfg.amplitude.scaled(value))
    raise ConfigError(f"--param: unknown sweep parameter {param!r}")


def sweep_row(cfg: RunConfig, param: str, value: float) -> list[str]:
    try:
        point = sweep_point(cfg, param, value)
        terms = _terms(point)
        rep = spectrum_report(terms, cfg.guard)
        vals = [terms.L_AA, terms.L_BB, terms.L_AB.real, terms.L_AB.imag, terms.M.real,
                terms.M.imag, abs(terms.Lbar_A), abs(terms.Lbar_B), rep.negativity_closed,
                rep.negativity, rep.entropy_A]
        return [fmt(value)] + [fmt(v) for v in vals] + [""]
    except (QuadratureError, ValueError, ArithmeticError) as exc:
        return [fmt(value)] + [""] * 11 + [f"{type(exc).__name__}: {exc}"]


def sweep_table(cfg: RunConfig, param: str, lo: float, hi: float, steps: int,
                threads: int = 1) -> list[list[str]]:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"--param: must be one of {', '.join(SWEEP_PARAMS)}")
    if steps < 1:
        raise ConfigError("--steps: must be at least 1")
    if cfg.detector_B is None:
        raise ConfigError("detector_B: required by 'sweep'")
    grid = [lo] if steps == 1 else list(np.linspace(lo, hi, steps))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda v: sweep_row(cfg, param, float(v)), grid))
    else:
        rows = [sweep_row(cfg, param, float(v)) for v in grid]
    return [SWEEP_COLUMNS] + rows


def scan_from_config(cfg: RunConfig | None, seed: int, threads: int) -> verification.ScanSpec:
    if cfg is None:
        return verification.ScanSpec.default(seed=seed, threads=threads)
    _require_B(cfg, "verify")
    c = cfg.internal()
    return verification.ScanSpec(c.detector_A, c.detector_B, [c.amplitude], seed=seed,
                                 quadrature=c.quadrature, guard=cfg.guard, threads=threads)


def _write_csv(rows, path: str | None):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    _emit(buf.getvalue(), path)


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="udw-coherent",
                                description="Second-order detector states in coherent field states.")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in ("terms", "spectrum", "sweep", "verify"):
        s = sub.add_parser(verb)
        s.add_argument("--config", required=verb != "verify")
        s.add_argument("--out")
        s.add_argument("--threads", type=int, default=1)
        if verb == "sweep":
            s.add_argument("--param", required=True, choices=SWEEP_PARAMS)
            s.add_argument("--from", dest="lo", type=float, required=True)
            s.add_argument("--to", dest="hi", type=float, required=True)
            s.add_argument("--steps", type=int, required=True)
        if verb == "verify":
            s.add_argument("--suite", default="all",
                           choices=list(verification.SUITES) + ["all"])
            s.add_argument("--seed", type=int, default=42)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else None
        out = args.out or (cfg.output if cfg else None)
        if args.verb == "terms":
            _write_csv(terms_table(_terms(cfg, args.threads)), out)
        elif args.verb == "spectrum":
            _write_csv(spectrum_table(cfg, _terms(cfg, args.threads)), out)
        elif args.verb == "sweep":
            _write_csv(sweep_table(cfg, args.param, args.lo, args.hi, args.steps, args.threads), out)
        else:
            scan = scan_from_config(cfg, args.seed, args.threads)
            fn = verification.run_all if args.suite == "all" else verification.SUITES[args.suite]
            report = fn(scan)
            for line in report.lines():
                print(line, file=sys.stderr)
            print(f"overall: {report.status}", file=sys.stderr)
            _emit(json.dumps(report.to_dict(), indent=2) + "\n", out)
            return {verification.PASS: EXIT_OK, verification.FAIL: EXIT_FAIL}.get(
                report.status, EXIT_ERROR)
    except (ConfigError, PerturbativeGuardError, QuadratureError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
