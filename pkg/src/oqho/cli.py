"""Command-line interface: ``oqho check|invariant|correct|bounds|repro``.

Exit codes: 0 success, 1 numerical or acceptance failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__
from ._io import atomic_write_text, sha256_hex
from .bounds import mean_sensitivity_norm, sensitivity_report
from .errors import InvalidInputError, OqhoError
from .gaussian import GaussianState, heisenberg_residual, invariant_covariance, is_controllable
from .model import (
    OqhoModel,
    build_state_space,
    ccr_position_momentum,
    check_physical_realizability,
    is_hurwitz,
)
from .numerics import SeededSampler
from .perturb import (
    HORIZON,
    PerturbationContext,
    mean_correction,
    second_moment_correction,
    transient_qcf_correction,
)
from .spectral import (
    CorrectionField,
    GridSpec,
    check_coverage,
    qpdf_from_qcf,
    sample_qcf_correction,
    write_field_binary,
    write_field_csv,
)
from .weyl import GaussianMixture, TabulatedStrength, WeylVariation, ZeroStrength

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_term = {
    "type": "object",
    "required": ["alpha", "gamma", "Lambda"],
    "additionalProperties": False,
    "properties": {
        "alpha": {"type": "number"},
        "gamma": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        "Lambda": _matrix,
    },
}
_strength = {
    "oneOf": [
        {"type": "array", "items": _term},
        {
            "type": "object",
            "required": ["tabulated"],
            "additionalProperties": False,
            "properties": {"tabulated": {"type": "string"}},
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["model"],
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "required": ["R", "M"],
            "additionalProperties": False,
            "properties": {
                "theta": {"oneOf": [{"const": "position-momentum"}, _matrix]},
                "R": _matrix,
                "M": _matrix,
            },
        },
        "variation": {
            "type": "object",
            "required": ["S"],
            "additionalProperties": False,
            "properties": {
                "S": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
                "psi": _strength,
                "upsilon": {"type": "array", "items": _strength},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "counts": {"type": "array", "items": {"type": "integer", "minimum": 32}},
                "half_widths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "quadrature": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "w_order": {"type": "integer", "minimum": 2},
                "time_order": {"type": "integer", "minimum": 2},
            },
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta_weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "mean_thetas": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "mc_count": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
                "fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "binary"]}},
            },
        },
        "reference": {"type": "object"},
    },
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    raw: dict
    sha256: str
    base_dir: Path
    model: OqhoModel
    variation: WeylVariation | None
    grid_counts: list | None = None
    half_widths: list | None = None
    w_order: int | None = None
    time_order: int = 16
    bounds: dict = field(default_factory=dict)
    formats: list = field(default_factory=lambda: ["csv"])
    out_dir: str | None = None
    reference: dict = field(default_factory=dict)


def _path(err) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def _strength_from(spec, d, base_dir, where):
    if isinstance(spec, dict):
        p = Path(spec["tabulated"])
        if not p.is_absolute():
            p = base_dir / p
        try:
            f = TabulatedStrength.from_csv(p)
        except OSError as exc:
            raise ConfigError(f"{where}.tabulated: cannot read {p}: {exc.strerror}") from None
    elif not spec:
        return ZeroStrength(d)
    else:
        f = GaussianMixture(tuple(spec))
    if f.d != d:
        raise ConfigError(f"{where}: strength dimension {f.d} does not match S ({d} rows)")
    return f


def parse_config(text: bytes, base_dir: Path) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"<root>: not valid YAML ({exc})") from None
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("\n".join(f"{_path(e)}: {e.message}" for e in errors))
    m = raw["model"]
    try:
        R = np.asarray(m["R"], dtype=float)
        theta = m.get("theta", "position-momentum")
        theta = ccr_position_momentum(R.shape[0]) if isinstance(theta, str) else np.asarray(theta, dtype=float)
    except (ValueError, InvalidInputError) as exc:
        raise ConfigError(f"model.R: {exc}") from None
    try:
        model = OqhoModel(theta, R, np.asarray(m["M"], dtype=float))
    except (ValueError, InvalidInputError) as exc:
        msg = str(exc)
        name = next((k for k in ("theta", "R", "M") if msg.startswith(k)), "model")
        raise ConfigError(f"model.{name}: {msg}" if name != "model" else f"model: {msg}") from None
    variation = None
    if "variation" in raw:
        v = raw["variation"]
        idx = v["S"]
        d = len(idx)
        if len(set(idx)) != d or max(idx) >= model.n:
            raise ConfigError(f"variation.S: indices must be distinct and below n = {model.n}")
        try:
            psi = _strength_from(v.get("psi", []), d, base_dir, "variation.psi")
            ups = [
                _strength_from(s, d, base_dir, f"variation.upsilon.{k}")
                for k, s in enumerate(v.get("upsilon", []))
            ]
            if len(ups) > model.m:
                raise ConfigError(f"variation.upsilon: at most m = {model.m} components")
            variation = WeylVariation.from_indices(idx, model.n, psi, ups)
        except InvalidInputError as exc:
            raise ConfigError(f"variation: {exc}") from None
    g = raw.get("grid", {})
    for key in ("counts", "half_widths"):
        if key in g and len(g[key]) != model.n:
            raise ConfigError(f"grid.{key}: needs {model.n} entries")
    q = raw.get("quadrature", {})
    outs = raw.get("outputs", {})
    return RunConfig(
        raw=raw,
        sha256=sha256_hex(text),
        base_dir=base_dir,
        model=model,
        variation=variation,
        grid_counts=g.get("counts"),
        half_widths=g.get("half_widths"),
        w_order=q.get("w_order"),
        time_order=q.get("time_order", 16),
        bounds=raw.get("bounds", {}),
        formats=outs.get("formats", ["csv"]),
        out_dir=outs.get("directory"),
        reference=raw.get("reference", {}),
    )


def load_config(path) -> RunConfig:
    """Read a YAML config; a bare name such as ``example1`` selects a bundled config."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and (resources.files("oqho") / "data" / f"{p.name}.yaml").is_file():
        return bundled_config(p.name)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"<root>: cannot read {p}: {exc.strerror}") from None
    return parse_config(text, p.parent)


def bundled_config(name: str) -> RunConfig:
    res = resources.files("oqho") / "data" / f"{name}.yaml"
    if not res.is_file():
        raise ConfigError(f"<root>: no bundled config named {name!r}")
    return parse_config(res.read_bytes(), Path("."))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o).__name__)


def _provenance(cfg: RunConfig, command: str, seed=None) -> dict:
    return {"command": command, "config_sha256": cfg.sha256, "seed": seed, "version": __version__}


def _finite_json(o):
    """Replace non-finite floats by the strings "inf", "-inf", "nan" so the output stays strict JSON."""
    if isinstance(o, dict):
        return {k: _finite_json(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite_json(v) for v in o]
    if isinstance(o, np.ndarray):
        return _finite_json(o.tolist())
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    return o


def _write_json(path, payload: dict) -> Path:
    text = json.dumps(_finite_json(payload), indent=2, sort_keys=True, default=_json_default, allow_nan=False)
    return atomic_write_text(path, text + "\n")


def _out_dir(args, cfg) -> Path:
    return Path(args.out or cfg.out_dir or "oqho-out")


def _context(cfg: RunConfig) -> PerturbationContext:
    if cfg.variation is None:
        raise ConfigError("variation: required for this command")
    return PerturbationContext.from_model(
        cfg.model, cfg.variation, w_order=cfg.w_order, time_order=cfg.time_order
    )


def _grid(cfg: RunConfig, P) -> GridSpec:
    n = cfg.model.n
    counts = cfg.grid_counts or [256] * n
    if cfg.half_widths:
        return GridSpec.from_half_widths(counts, cfg.half_widths)
    default = GridSpec.default_for(P, counts[0])
    return GridSpec.from_half_widths(counts, [c * h / 2 for c, h in zip(counts, default.spacings)])


def cmd_check(cfg: RunConfig, args, out=sys.stdout) -> int:
    ss = build_state_space(cfg.model)
    pr = check_physical_realizability(ss, cfg.model.theta)
    hurwitz, a = is_hurwitz(ss.A)
    print(f"PR drift residual     {pr.drift_residual:.3e}  (tol {pr.tolerance:.1e})", file=out)
    print(f"PR coupling residual  {pr.coupling_residual:.3e}", file=out)
    print(f"physical realizability: {'PASS' if pr.passed else 'FAIL'}", file=out)
    print(f"spectral abscissa     {a:.6g}", file=out)
    print(f"stability: {'PASS' if hurwitz else 'FAIL'}", file=out)
    ok = pr.passed and hurwitz
    if hurwitz:
        P = invariant_covariance(ss)
        h = heisenberg_residual(P, cfg.model.theta)
        heis = h >= -1e-10
        print(f"min eig(P + i Theta)  {h:.6g}", file=out)
        print(f"Heisenberg feasibility: {'PASS' if heis else 'FAIL'}", file=out)
        ok = ok and heis
    return EXIT_OK if ok else EXIT_FAIL


def cmd_invariant(cfg: RunConfig, args, out=sys.stdout) -> int:
    ss = build_state_space(cfg.model)
    hurwitz, a = is_hurwitz(ss.A)
    if not hurwitz:
        print(f"stability FAIL: spectral abscissa {a:.6g}", file=out)
        return EXIT_FAIL
    P = invariant_covariance(ss)
    eig = np.linalg.eigvals(ss.A)
    eig = eig[np.lexsort((-eig.imag, eig.real))]
    pd = is_controllable(ss) and bool(np.linalg.eigvalsh(P)[0] > 0)
    state = GaussianState(np.zeros(ss.n), P)
    payload = {
        "provenance": _provenance(cfg, "invariant"),
        "A": ss.A,
        "B": ss.B,
        "C": ss.C,
        "P": P,
        "P_positive_definite": pd,
        "eigenvalues": [[float(z.real), float(z.imag)] for z in eig],
        "state": {"mu": state.mu, "sigma": state.sigma},
    }
    path = _write_json(_out_dir(args, cfg) / "invariant.json", payload)
    print(f"P = {np.array2string(P, precision=6)}", file=out)
    print("eigenvalues: " + ", ".join(f"{z.real:.4f}{z.imag:+.4f}i" for z in eig), file=out)
    print(f"wrote {path}", file=out)
    return EXIT_OK


def _emit_field(fld: CorrectionField, stem: str, cfg, args, prov, out):
    d = _out_dir(args, cfg)
    if "csv" in cfg.formats:
        print(f"wrote {write_field_csv(fld, d / f'{stem}.csv', prov)}", file=out)
    if "binary" in cfg.formats:
        print(f"wrote {write_field_binary(fld, d / f'{stem}.oqfld', prov)}", file=out)
    meta = {
        "kind": fld.kind,
        "counts": list(fld.grid.counts),
        "spacings": list(fld.grid.spacings),
        "centers": [0.0] * fld.grid.ndim,
        "provenance": prov,
    }
    _write_json(d / f"{stem}.grid.json", meta)


def cmd_correct(cfg: RunConfig, args, out=sys.stdout) -> int:
    what = args.what or "qcf"
    ctx = _context(cfg)
    prov = _provenance(cfg, f"correct --what {what}")
    if what == "moments":
        mu, Pt = mean_correction(ctx), second_moment_correction(ctx)
        path = _write_json(
            _out_dir(args, cfg) / "moments.json", {"provenance": prov, "mu_tilde": mu, "P_tilde": Pt}
        )
        print(f"mu_tilde = {np.array2string(mu, precision=6)}", file=out)
        print(f"P_tilde  = {np.array2string(Pt, precision=6)}", file=out)
        print(f"wrote {path}", file=out)
        return EXIT_OK
    grid = _grid(cfg, ctx.P)
    if what == "transient":
        check_coverage(ctx.P, grid)
        t = args.t if args.t is not None else HORIZON / abs(ctx.abscissa)
        pts = grid.points().reshape(-1, grid.ndim)
        vals = transient_qcf_correction(ctx, t, pts).reshape(grid.counts)
        prov["t"] = t
        fld = CorrectionField("qcf", grid, vals)
        print(f"t = {t!r}", file=out)
        _emit_field(fld, "transient_qcf", cfg, args, prov, out)
        return EXIT_OK
    if what not in ("qcf", "qpdf"):
        raise ConfigError(f"--what: unknown kind {what!r}")
    fld = sample_qcf_correction(ctx, grid)
    centre = complex(fld.value_at_origin())
    print(f"qcf value at origin   {abs(centre):.3e}", file=out)
    if what == "qcf":
        _emit_field(fld, "qcf", cfg, args, prov, out)
        return EXIT_OK
    q = qpdf_from_qcf(fld)
    total = float(np.sum(q.values) * q.cell())
    print(f"qpdf zero-sum         {total:.3e}", file=out)
    _emit_field(q, "qpdf", cfg, args, prov, out)
    return EXIT_OK if abs(total) <= 1e-6 else EXIT_FAIL


def _report_table(reports) -> str:
    lines = []
    for r in reports:
        lines.append(f"theta = {r.theta_weight:g}")
        lines.append(f"  lambda              {r.lam:.6g}")
        lines.append(f"  tau                 {r.tau:.6g}")
        for t, v in r.mean_sensitivity.items():
            lines.append(f"  mean sensitivity({t:g})  {v:.6g}")
        for name, est in (("F", r.mc_norm_F), ("G", r.mc_norm_G)):
            tag = "  (diverging)" if est.diverging else ""
            lines.append(f"  |||{name}||| bound       {est.value:.6g} +/- {est.stderr:.2g}{tag}")
        lines.append(f"  strength norm       {r.strength_norm:.6g}")
        lines.append(f"  HS bound            {r.hs_bound:.6g}")
    return "\n".join(lines)


def cmd_bounds(cfg: RunConfig, args, out=sys.stdout) -> int:
    ctx = _context(cfg)
    b = cfg.bounds
    seed = args.seed if args.seed is not None else b.get("seed", 0)
    sampler = SeededSampler(int(seed))
    reports = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for th in b.get("theta_weights", [1.0]):
            reports.append(
                sensitivity_report(
                    ctx,
                    th,
                    sampler,
                    mean_thetas=tuple(b.get("mean_thetas", (0.5, 1.0, 2.0, 4.0))),
                    count=b.get("mc_count", 100_000),
                    fraction=b.get("fraction", 0.9),
                )
            )
    payload = {
        "provenance": _provenance(cfg, "bounds", seed),
        "reports": [r.to_dict() for r in reports],
    }
    path = _write_json(_out_dir(args, cfg) / "sensitivity.json", payload)
    print(_report_table(reports), file=out)
    for r in reports:
        for w in r.warnings:
            print(f"warning: {w}", file=out)
    print(f"wrote {path}", file=out)
    return EXIT_OK


def _compare(name, computed, ref) -> tuple:
    expected = ref["value"]
    if isinstance(expected, bool):
        ok = bool(computed) == expected
        return name, str(expected), str(bool(computed)), "-", ok
    comp = np.asarray(computed, dtype=float)
    exp = np.asarray(expected, dtype=float)
    if comp.shape != exp.shape:
        return name, str(exp.shape), str(comp.shape), "shape", False
    err = float(np.max(np.abs(comp - exp)))
    if "rtol" in ref:
        err = err / float(np.max(np.abs(exp)))
        tol = ref["rtol"]
        label = f"rel {tol:g}"
    else:
        tol = ref["tol"]
        label = f"abs {tol:g}"
    def show(x):
        return "[" + " ".join(f"{v:.6g}" for v in x.ravel()) + "]" if x.ndim else f"{float(x):.6g}"

    return name, show(exp), show(comp), f"{label} (err {err:.2e})", err <= tol


def repro_rows(cfg: RunConfig) -> list:
    ref = cfg.reference
    ss = build_state_space(cfg.model)
    rows = []
    for key in ("A", "B", "C"):
        if key in ref:
            rows.append(_compare(key, getattr(ss, key), ref[key]))
    if "eigenvalues" in ref:
        eig = np.linalg.eigvals(ss.A)
        exp = np.asarray(ref["eigenvalues"]["value"], dtype=float)
        # match each printed eigenvalue to the nearest computed one
        comp = [min(eig, key=lambda z: abs(z - complex(*e))) for e in exp]
        rows.append(_compare("eigenvalues", [[z.real, z.imag] for z in comp], ref["eigenvalues"]))
    hurwitz, _ = is_hurwitz(ss.A)
    if not hurwitz:
        rows.append(("stability", "Hurwitz", "not Hurwitz", "-", False))
        return rows
    P = invariant_covariance(ss)
    if "P" in ref:
        rows.append(_compare("P", P, ref["P"]))
    var = cfg.variation
    psi = var.psi if var is not None else None
    if isinstance(psi, GaussianMixture):
        term = psi.terms[0]
        if "Xi" in ref:
            Xi = var.S @ P @ var.S.T + term.Lambda
            rows.append(_compare("Xi", Xi.item() if Xi.size == 1 else Xi, ref["Xi"]))
        if "stiffness" in ref:
            k = -term.alpha * np.linalg.inv(term.Lambda)
            rows.append(_compare("stiffness", k.item() if k.size == 1 else k, ref["stiffness"]))
        if "mean_shift" in ref:
            ctx = _context(cfg)
            rows.append(_compare("mean_shift", mean_correction(ctx)[int(np.argmax(var.S[0]))], ref["mean_shift"]))
    if "mean_sensitivity_monotone" in ref:
        ctx = _context(cfg)
        ths = sorted(cfg.bounds.get("mean_thetas", [0.5, 1.0, 2.0, 4.0]))
        vals = [mean_sensitivity_norm(ctx, t) for t in ths]
        mono = all(b <= a for a, b in zip(vals, vals[1:]))
        rows.append(_compare("mean_sensitivity_monotone", mono, ref["mean_sensitivity_monotone"]))
    return rows


def cmd_repro(cfg: RunConfig, args, out=sys.stdout) -> int:
    rows = repro_rows(cfg)
    if not rows:
        raise ConfigError("reference: no reference values to compare")
    widths = [max(len(str(r[i])) for r in rows) for i in range(4)]
    head = ("item", "printed", "computed", "tolerance")
    widths = [max(w, len(h)) for w, h in zip(widths, head)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths) + "  {}"
    print(fmt.format(*head, "result"), file=out)
    for r in rows:
        print(fmt.format(*r[:4], "PASS" if r[4] else "FAIL"), file=out)
    ok = all(r[4] for r in rows)
    print(f"{sum(r[4] for r in rows)}/{len(rows)} rows pass", file=out)
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "check": cmd_check,
    "invariant": cmd_invariant,
    "correct": cmd_correct,
    "bounds": cmd_bounds,
    "repro": cmd_repro,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oqho", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        if name == "repro":
            s.add_argument("which", nargs="?", choices=["example1", "example2"])
        s.add_argument("--config", help="YAML run configuration")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int, help="Monte-Carlo seed (overrides the config)")
        s.add_argument("--what", choices=["qcf", "qpdf", "moments", "transient"], help="correction kind")
        s.add_argument("--t", type=float, help="time for --what transient")
    return p


def _format_warning(message, category, filename, lineno, line=None):
    return f"warning: {message}\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    previous = warnings.formatwarning
    warnings.formatwarning = _format_warning
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.command == "repro" and args.which:
            cfg = bundled_config(args.which)
        else:
            raise ConfigError("--config: required (or name a bundled example for repro)")
        if args.t is not None and not (args.t >= 0 and math.isfinite(args.t)):
            raise ConfigError("--t: must be finite and nonnegative")
        return COMMANDS[args.command](cfg, args, sys.stdout)
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OqhoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    finally:
        warnings.formatwarning = previous


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
