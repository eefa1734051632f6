r"""Discrete Fourier bridge between QCF and QPDF fields.

Grids are uniform and centred: along an axis with ``N`` points and spacing
``h`` the nodes are ``(j - N/2) h`` for ``j = 0..N-1``, so the origin sits at
index ``N/2``.  A frequency grid with spacing ``du`` is dual to a spatial grid
with spacing ``dx = 2*pi / (N du)`` and

.. math::

    \mho(x) = (2\pi)^{-n}\int\Phi(u)e^{-iu^Tx}du
    \approx (2\pi)^{-n}\prod du\;\mathrm{fftshift}(\mathrm{fftn}(\mathrm{ifftshift}(\Phi))).
"""

from __future__ import annotations

import io
import json
import math
import os
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_bytes, atomic_write_text
from .errors import AccuracyError, CoverageError, InvalidInputError
from .perturb import PerturbationContext, qcf_correction

MAGIC = b"OQHOFLD1"
KINDS = ("qcf", "qpdf")
BOUNDARY_DECAY = 1e-10
IMAG_RESIDUE = 1e-7


@dataclass(frozen=True)
class GridSpec:
    """Per-axis point counts (powers of two, at least 32) and spacings."""

    counts: tuple
    spacings: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        spacings = tuple(float(s) for s in self.spacings)
        if len(counts) != len(spacings) or not counts:
            raise InvalidInputError("counts and spacings must have equal nonzero length")
        for c in counts:
            if c < 32 or c & (c - 1):
                raise InvalidInputError(f"grid counts must be powers of two >= 32, got {c}")
        for s in spacings:
            if not (s > 0 and math.isfinite(s)):
                raise InvalidInputError("grid spacings must be positive")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "spacings", spacings)

    @classmethod
    def from_half_widths(cls, counts, half_widths) -> "GridSpec":
        return cls(tuple(counts), tuple(2.0 * w / c for c, w in zip(counts, half_widths)))

    @classmethod
    def default_for(cls, P, count: int = 256, factor: float = 16.0) -> "GridSpec":
        """Half-width ``factor * sqrt(max diag P)`` on every axis."""
        P = np.asarray(P, dtype=float)
        hw = factor * math.sqrt(float(np.max(np.diag(P))))
        n = P.shape[0]
        return cls.from_half_widths((count,) * n, (hw,) * n)

    @property
    def ndim(self) -> int:
        return len(self.counts)

    def axes(self) -> list:
        return [(np.arange(c) - c // 2) * h for c, h in zip(self.counts, self.spacings)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def dual(self) -> "GridSpec":
        return GridSpec(self.counts, tuple(2 * math.pi / (c * h) for c, h in zip(self.counts, self.spacings)))


@dataclass
class CorrectionField:
    """Samples on a centred uniform grid; ``kind`` is ``"qcf"`` (complex) or ``"qpdf"`` (real)."""

    kind: str
    grid: GridSpec
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"kind must be one of {KINDS}")
        self.values = np.asarray(self.values, dtype=complex if self.kind == "qcf" else float)
        if self.values.shape != self.grid.counts:
            raise InvalidInputError("values shape does not match the grid")

    def value_at_origin(self):
        return self.values[tuple(c // 2 for c in self.grid.counts)]

    def cell(self) -> float:
        return float(np.prod(self.grid.spacings))


def _workers() -> int:
    env = os.environ.get("OQHO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInputError("OQHO_THREADS must be a positive integer") from None
    return os.cpu_count() or 1


def check_coverage(P, grid: GridSpec) -> None:
    r"""Require :math:`e^{-\frac12 u^TPu} < 10^{-10}` on the whole grid boundary."""
    P = np.asarray(P, dtype=float)
    Pinv = np.linalg.inv(P)
    need = 2.0 * math.log(1.0 / BOUNDARY_DECAY)
    for i, (c, h) in enumerate(zip(grid.counts, grid.spacings)):
        edge = (c // 2 - 1) * h
        # min of u'Pu over the face u_i = edge is edge^2 / (P^{-1})_{ii}
        if edge**2 / Pinv[i, i] < need:
            suggest = math.sqrt(need * Pinv[i, i])
            raise CoverageError(
                f"grid axis {i} half-width {edge:.4g} is too narrow; use at least {suggest:.4g}"
            )


def sample_qcf_correction(
    ctx: PerturbationContext, grid: GridSpec, method: str = "auto", chunk: int = 4096
) -> CorrectionField:
    """Evaluate the QCF correction on every node of ``grid`` (parallel over chunks)."""
    if grid.ndim != ctx.ss.n:
        raise InvalidInputError(f"grid has {grid.ndim} axes, model has n = {ctx.ss.n}")
    check_coverage(ctx.P, grid)
    pts = grid.points().reshape(-1, grid.ndim)
    out = np.zeros(pts.shape[0], dtype=complex)
    if not ctx.variation.is_zero:
        starts = range(0, pts.shape[0], chunk)

        def work(s):
            out[s : s + chunk] = qcf_correction(ctx, pts[s : s + chunk], method)

        with ThreadPoolExecutor(max_workers=_workers()) as pool:
            list(pool.map(work, starts))
    values = out.reshape(grid.counts)
    peak = float(np.max(np.abs(values), initial=0.0))
    if peak > 0:
        edge = max(
            float(np.max(np.abs(np.take(values, idx, axis=ax))))
            for ax in range(grid.ndim)
            for idx in (0, -1)
        )
        if edge > 1e-8 * peak:
            warnings.warn(
                f"correction field boundary value {edge:.3g} is not negligible; widen the grid",
                stacklevel=2,
            )
    return CorrectionField("qcf", grid, values)


def _forward(values, grid: GridSpec):
    n = grid.ndim
    scale = np.prod(grid.spacings) / (2 * math.pi) ** n
    return scale * np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(values)))


def _backward(values, grid: GridSpec):
    scale = np.prod(grid.spacings) * np.prod(grid.counts)
    return scale * np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(values)))


def qpdf_from_qcf(field: CorrectionField) -> CorrectionField:
    """Transform a QCF field into the corresponding real QPDF field on the dual grid."""
    if field.kind != "qcf":
        raise InvalidInputError("qpdf_from_qcf needs a qcf field")
    out = _forward(field.values, field.grid)
    resid = float(np.max(np.abs(out.imag), initial=0.0))
    if resid > IMAG_RESIDUE * max(1.0, float(np.max(np.abs(out.real), initial=0.0))):
        raise AccuracyError(
            f"QPDF imaginary residue {resid:.3g} exceeds {IMAG_RESIDUE:g}; "
            "the QCF samples are not Hermitian or the grid is too narrow"
        )
    prov = dict(field.provenance)
    prov["imag_residue"] = resid
    return CorrectionField("qpdf", field.grid.dual(), out.real.copy(), prov)


def qcf_from_qpdf(field: CorrectionField) -> CorrectionField:
    """Inverse of :func:`qpdf_from_qcf`."""
    if field.kind != "qpdf":
        raise InvalidInputError("qcf_from_qpdf needs a qpdf field")
    return CorrectionField("qcf", field.grid.dual(), _backward(field.values, field.grid), dict(field.provenance))


def _trap_weights(count: int, h: float) -> np.ndarray:
    w = np.full(count, h)
    w[0] = w[-1] = 0.5 * h
    return w


def marginal(field: CorrectionField, keep_axes) -> CorrectionField:
    """Integrate a QPDF field over every axis not listed in ``keep_axes``."""
    if field.kind != "qpdf":
        raise InvalidInputError("marginals are defined for qpdf fields")
    keep = sorted(set(int(a) for a in keep_axes))
    if not keep:
        raise InvalidInputError("keep_axes must not be empty")
    if keep[0] < 0 or keep[-1] >= field.grid.ndim:
        raise InvalidInputError("keep_axes out of range")
    vals = field.values
    for ax in reversed(range(field.grid.ndim)):
        if ax not in keep:
            w = _trap_weights(field.grid.counts[ax], field.grid.spacings[ax])
            vals = np.tensordot(vals, w, axes=(ax, 0))
    grid = GridSpec(tuple(field.grid.counts[a] for a in keep), tuple(field.grid.spacings[a] for a in keep))
    return CorrectionField("qpdf", grid, vals, dict(field.provenance))


def field_moment(field: CorrectionField, monomial) -> float:
    """Trapezoid quadrature of ``prod x_i**k_i`` against a QPDF field."""
    if field.kind != "qpdf":
        raise InvalidInputError("moments are defined for qpdf fields")
    mono = [int(k) for k in monomial]
    if len(mono) != field.grid.ndim or min(mono) < 0 or sum(mono) > 4:
        raise InvalidInputError("monomial needs one nonnegative exponent per axis, total degree <= 4")
    vals = field.values
    for ax in reversed(range(field.grid.ndim)):
        x = field.grid.axes()[ax]
        w = _trap_weights(field.grid.counts[ax], field.grid.spacings[ax]) * x ** mono[ax]
        vals = np.tensordot(vals, w, axes=(ax, 0))
    return float(vals)


def generalized_moment(
    ctx: PerturbationContext,
    sigma_fn,
    grid: GridSpec,
    *,
    S=None,
    correction_weight: float = 0.0,
) -> complex:
    r""":math:`\int\sigma(w)\Phi(S^Tw)dw` on ``grid`` for the nominal QCF plus an optional scaled correction.

    Without ``S`` the integral runs over the full frequency space.  The
    correction is added as ``correction_weight * qcf_correction``.
    """
    n = ctx.ss.n
    S = np.eye(n) if S is None else np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape != (grid.ndim, n):
        raise InvalidInputError(f"S must be {grid.ndim}x{n}")
    pts = grid.points()
    sig = np.asarray(sigma_fn(pts), dtype=complex)
    peak = float(np.max(np.abs(sig), initial=0.0))
    if peak > 0:
        edge = max(
            float(np.max(np.abs(np.take(sig, idx, axis=ax))))
            for ax in range(grid.ndim)
            for idx in (0, -1)
        )
        if edge > BOUNDARY_DECAY * peak:
            raise CoverageError(f"sigma has mass at the grid boundary ({edge:.3g}); widen the grid")
    U = pts @ S
    phi = np.exp(-0.5 * np.einsum("...i,ij,...j->...", U, ctx.P, U))
    if correction_weight:
        phi = phi + correction_weight * qcf_correction(ctx, U.reshape(-1, n)).reshape(phi.shape)
    vals = sig * phi
    for ax in reversed(range(grid.ndim)):
        vals = np.tensordot(vals, _trap_weights(grid.counts[ax], grid.spacings[ax]), axes=(ax, 0))
    return complex(vals)


_SPACING_KEY = "grid_spacings"


def write_field_csv(field: CorrectionField, path, provenance: dict | None = None) -> Path:
    """One row per node: coordinates then ``value`` (qpdf) or ``re, im`` (qcf)."""
    prov = dict(field.provenance)
    prov.update(provenance or {})
    buf = io.StringIO()
    for key in sorted(prov):
        buf.write(f"# {key}: {prov[key]}\n")
    # exact spacings; differences of printed coordinates lose the last bits
    buf.write(f"# {_SPACING_KEY}: {' '.join(repr(h) for h in field.grid.spacings)}\n")
    n = field.grid.ndim
    coord = "u" if field.kind == "qcf" else "x"
    cols = [f"{coord}_{i + 1}" for i in range(n)] + (["re", "im"] if field.kind == "qcf" else ["value"])
    buf.write(",".join(cols) + "\n")
    pts = field.grid.points().reshape(-1, n)
    vals = field.values.ravel()
    for p, v in zip(pts.tolist(), vals.tolist()):
        row = [repr(float(c)) for c in p]
        if field.kind == "qcf":
            row += [repr(v.real), repr(v.imag)]
        else:
            row.append(repr(v))
        buf.write(",".join(row) + "\n")
    return atomic_write_text(path, buf.getvalue())


def read_field_csv(path) -> CorrectionField:
    prov = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].partition(":")
        prov[key.strip()] = val.strip()
        i += 1
    header = lines[i].split(",")
    kind = "qcf" if header[-1] == "im" else "qpdf"
    n = len(header) - (2 if kind == "qcf" else 1)
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[i + 1 :] if ln])
    counts, spacings = [], []
    exact = prov.pop(_SPACING_KEY, None)
    for ax in range(n):
        u = np.unique(data[:, ax])
        counts.append(u.size)
        spacings.append(float(u[1] - u[0]))
    if exact:
        spacings = [float(h) for h in exact.split()]
    grid = GridSpec(tuple(counts), tuple(spacings))
    if kind == "qcf":
        values = (data[:, n] + 1j * data[:, n + 1]).reshape(grid.counts)
    else:
        values = data[:, n].reshape(grid.counts)
    return CorrectionField(kind, grid, values, prov)


def encode_field(field: CorrectionField, provenance: dict | None = None) -> bytes:
    """Binary layout.

    ``OQHOFLD1`` magic, ``u8`` kind (0 qcf, 1 qpdf), ``u8`` ndim, then per
    axis ``u32`` count, ``f64`` centre, ``f64`` spacing, then ``u32`` length
    and UTF-8 JSON provenance, then the samples as little-endian ``f64`` in
    C order (qcf samples interleave real and imaginary parts).
    """
    prov = dict(field.provenance)
    prov.update(provenance or {})
    out = bytearray(MAGIC)
    out += struct.pack("<BB", KINDS.index(field.kind), field.grid.ndim)
    for c, h in zip(field.grid.counts, field.grid.spacings):
        out += struct.pack("<Idd", c, 0.0, h)
    meta = json.dumps(prov, sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(meta)) + meta
    if field.kind == "qcf":
        data = np.stack([field.values.real, field.values.imag], axis=-1)
    else:
        data = field.values
    out += np.ascontiguousarray(data, dtype="<f8").tobytes()
    return bytes(out)


def decode_field(blob: bytes) -> CorrectionField:
    if blob[:8] != MAGIC:
        raise InvalidInputError("not an OQHOFLD1 field")
    kind_id, ndim = struct.unpack_from("<BB", blob, 8)
    off = 10
    counts, spacings = [], []
    for _ in range(ndim):
        c, centre, h = struct.unpack_from("<Idd", blob, off)
        if centre != 0.0:
            raise InvalidInputError("only origin-centred grids are supported")
        counts.append(c)
        spacings.append(h)
        off += 20
    (mlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    prov = json.loads(blob[off : off + mlen].decode("utf-8"))
    off += mlen
    kind = KINDS[kind_id]
    data = np.frombuffer(blob, dtype="<f8", offset=off)
    grid = GridSpec(tuple(counts), tuple(spacings))
    if kind == "qcf":
        values = data.reshape(grid.counts + (2,))
        values = values[..., 0] + 1j * values[..., 1]
    else:
        values = data.reshape(grid.counts).copy()
    return CorrectionField(kind, grid, values, prov)


def write_field_binary(field: CorrectionField, path, provenance: dict | None = None) -> Path:
    return atomic_write_bytes(path, encode_field(field, provenance))


def read_field_binary(path) -> CorrectionField:
    return decode_field(Path(path).read_bytes())
