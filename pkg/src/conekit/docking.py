"""Docking probability path: coordinates -> trace-one 3x3 bounds -> cone probabilities.

The bound moves linearly from the ligand latent roots to the pocket latent
roots; at every step the single-block beta type II probability
``P(0 < F < A_j)`` is evaluated.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cones import ProbResult, beta2_batch
from .densities import MultimatrixParams
from .numeric import DomainError, Spectrum, jacobi_eigh
from .zonal import ConvergenceDomainError, SeriesControl

log = logging.getLogger(__name__)

LIGAND_ROOTS = (0.8663, 0.0991, 0.0346)
POCKET_ROOTS = (0.5864, 0.2351, 0.1785)
FITTED_A0 = 0.34397
FITTED_A = 0.19735
FITTED_K = 56
PATH_STEPS = 1000

BRACKET_MODES = ("half", "as-printed")
C_MODES = ("marginal", "joint")
CHUNK = 64
ROOT_SUM_TOL = 1e-6
CSV_COLUMNS = ("step", "root1", "root2", "root3", "probability", "degree_used", "tail_estimate", "converged")


class CoordinateParseError(ValueError):
    """A coordinate file could not be parsed."""


@dataclass(frozen=True)
class AtomFrame:
    ids: tuple
    coords: np.ndarray
    source: str = ""

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(-1, 3)
        if coords.shape[0] == 0:
            raise ValueError("an atom frame needs at least one atom")
        if len(self.ids) != coords.shape[0]:
            raise ValueError("ids and coordinates differ in length")
        if not np.all(np.isfinite(coords)):
            bad = int(np.nonzero(~np.isfinite(coords).all(axis=1))[0][0])
            raise ValueError(f"non-finite coordinates for atom {self.ids[bad]!r} (row {bad + 1})")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    def __len__(self):
        return self.coords.shape[0]

    @property
    def atoms(self) -> list:
        return [(i, *map(float, xyz)) for i, xyz in zip(self.ids, self.coords)]

    def subset(self, index: Sequence[int]) -> "AtomFrame":
        index = list(index)
        return AtomFrame(tuple(self.ids[i] for i in index), self.coords[index], self.source)


def _read_csv(path: Path) -> AtomFrame:
    ids, rows = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise CoordinateParseError(f"{path}:{lineno}: expected 4 columns id,x,y,z, got {len(row)}")
            try:
                xyz = [float(c) for c in row[1:]]
            except ValueError:
                if not rows and not ids:
                    continue  # header
                raise CoordinateParseError(f"{path}:{lineno}: non-numeric coordinate in {row}") from None
            ids.append(row[0].strip())
            rows.append(xyz)
    if not rows:
        raise CoordinateParseError(f"{path}: no atoms")
    return AtomFrame(tuple(ids), np.array(rows), str(path))


def _read_xyz(path: Path) -> AtomFrame:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].strip():
        raise CoordinateParseError(f"{path}:1: empty file")
    try:
        count = int(lines[0].split()[0])
    except ValueError:
        raise CoordinateParseError(f"{path}:1: first line must be the atom count") from None
    body = [(n, ln) for n, ln in enumerate(lines[2:], 3) if ln.strip()]
    if len(body) != count:
        raise CoordinateParseError(f"{path}:1: header says {count} atoms, found {len(body)}")
    ids, rows = [], []
    for lineno, ln in body:
        parts = ln.split()
        if len(parts) < 4:
            raise CoordinateParseError(f"{path}:{lineno}: expected 'element x y z'")
        try:
            rows.append([float(p) for p in parts[1:4]])
        except ValueError:
            raise CoordinateParseError(f"{path}:{lineno}: non-numeric coordinate") from None
        ids.append(parts[0])
    if not rows:
        raise CoordinateParseError(f"{path}: no atoms")
    return AtomFrame(tuple(ids), np.array(rows), str(path))


def load_coordinates(path, fmt: str | None = None) -> AtomFrame:
    """Read a ``csv`` (id,x,y,z; header optional) or ``xyz`` coordinate file."""
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lower().lstrip(".") or "csv"
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    if path.stat().st_size == 0:
        raise CoordinateParseError(f"{path}: empty file")
    if fmt == "csv":
        return _read_csv(path)
    if fmt == "xyz":
        return _read_xyz(path)
    raise ValueError(f"unknown coordinate format {fmt!r}")


def nearest_atoms(protein: AtomFrame, ligand: AtomFrame, count: int) -> AtomFrame:
    """The ``count`` protein atoms closest to any ligand atom, in file order.

    Ties in distance go to the atom that appears first in the file.
    """
    if not 1 <= count <= len(protein):
        raise ValueError(f"count must be in [1, {len(protein)}], got {count}")
    diff = protein.coords[:, None, :] - ligand.coords[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2)).min(axis=1)
    chosen = np.sort(np.argsort(dist, kind="stable")[:count])
    return protein.subset(chosen)


def symmetrize(frame: AtomFrame, centering: bool = True) -> tuple[np.ndarray, Spectrum]:
    """Trace-one Gram matrix ``T' T / tr(T' T)`` of the (centred) coordinates."""
    T = frame.coords - frame.coords.mean(axis=0) if centering else frame.coords
    S = T.T @ T
    tr = float(np.trace(S))
    if not tr > 0:
        raise DomainError("symmetrized matrix has rank 0 (all atoms coincide)")
    S = S / tr
    S = 0.5 * (S + S.T)
    vals, _ = jacobi_eigh(S)
    tol = 1e-12 * max(1.0, float(vals.sum()))
    rank = int((vals > tol).sum())
    if rank < 3:
        raise DomainError(f"symmetrized matrix is not positive definite (rank {rank} < 3)")
    vals = vals / vals.sum()
    return S, Spectrum(tuple(vals))


@dataclass(frozen=True)
class PathSpec:
    """Linear path of bound roots from ``start_roots`` to ``end_roots``.

    ``bracket_mode`` picks the Pochhammer denominator ``b = a + (m+1)/2``
    (``half``) or ``b = a + (m+1)`` (``as-printed``). ``c_mode`` picks the
    total exponent ``(a0 + a) m`` of the one-block marginal (``marginal``) or
    the joint ``(a0 + k a) m`` (``joint``); ``c_override`` wins over both.
    """

    start_roots: tuple = LIGAND_ROOTS
    end_roots: tuple = POCKET_ROOTS
    steps: int = PATH_STEPS
    params: MultimatrixParams = field(
        default_factory=lambda: MultimatrixParams(3, FITTED_A0, (FITTED_A,) * FITTED_K)
    )
    bracket_mode: str = "half"
    c_mode: str = "marginal"
    c_override: float | None = None
    series_mode: str = "kummer"

    def __post_init__(self):
        for name in ("start_roots", "end_roots"):
            r = tuple(float(x) for x in getattr(self, name))
            object.__setattr__(self, name, r)
            if len(r) != 3:
                raise ValueError(f"{name} must have 3 roots")
            if min(r) <= 0:
                raise DomainError(f"{name} must be positive, got {r}")
            if abs(math.fsum(r) - 1.0) > ROOT_SUM_TOL:
                raise DomainError(f"{name} must sum to 1, got {math.fsum(r)}")
            if max(r) >= 1:
                raise DomainError(f"{name} must be < 1, got {r}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if self.params.m != 3:
            raise ValueError("the docking path uses 3x3 bounds (m = 3)")
        if len(set(self.params.a)) != 1:
            raise ValueError("the docking path needs a common block parameter a")
        if self.bracket_mode not in BRACKET_MODES:
            raise ValueError(f"bracket_mode must be one of {BRACKET_MODES}")
        if self.c_mode not in C_MODES:
            raise ValueError(f"c_mode must be one of {C_MODES}")

    @property
    def a(self) -> float:
        return self.params.a[0]

    @property
    def b(self) -> float:
        m = self.params.m
        return self.a + ((m + 1) / 2.0 if self.bracket_mode == "half" else m + 1.0)

    @property
    def c(self) -> float:
        if self.c_override is not None:
            return float(self.c_override)
        if self.c_mode == "joint":
            return self.params.c
        return (self.params.a0 + self.a) * self.params.m

    def roots(self) -> np.ndarray:
        """``(steps + 1, 3)`` array of interpolated roots."""
        j = np.arange(self.steps + 1)[:, None] / self.steps
        L = np.array(self.start_roots)[None, :]
        A = np.array(self.end_roots)[None, :]
        return L + j * (A - L)

    def as_dict(self) -> dict:
        return {
            "start_roots": list(self.start_roots),
            "end_roots": list(self.end_roots),
            "steps": self.steps,
            "m": self.params.m,
            "k": self.params.k,
            "a0": self.params.a0,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "bracket_mode": self.bracket_mode,
            "c_mode": "override" if self.c_override is not None else self.c_mode,
            "series_mode": self.series_mode,
        }


@dataclass
class PathStep:
    step: int
    roots: tuple
    result: ProbResult


def probability_path(
    spec: PathSpec,
    ctrl: SeriesControl | None = None,
    threads: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> list[PathStep]:
    """Evaluate the probability at every step ``j = 0..n``.

    Steps are split into fixed chunks of 64 bounds, independent of
    ``threads``, so results do not depend on the worker count.
    """
    ctrl = ctrl or SeriesControl()
    roots = spec.roots()
    m = spec.params.m
    chunks = [(lo, min(lo + CHUNK, len(roots))) for lo in range(0, len(roots), CHUNK)]
    modes = {"bracket_mode": spec.bracket_mode, "c_mode": spec.as_dict()["c_mode"]}

    def run(chunk):
        lo, hi = chunk
        try:
            return beta2_batch(spec.c, spec.params.a0 * m, [spec.a], [spec.b], [roots[lo:hi]], ctrl, spec.series_mode, modes)
        except ConvergenceDomainError as exc:
            for j in range(lo, hi):
                try:
                    beta2_batch(spec.c, spec.params.a0 * m, [spec.a], [spec.b], [roots[j : j + 1]], ctrl, spec.series_mode)
                except ConvergenceDomainError:
                    raise ConvergenceDomainError(f"step {j}: {exc}") from exc
            raise

    results: list = [None] * len(chunks)
    done = 0
    if threads <= 1:
        for n, ch in enumerate(chunks):
            results[n] = run(ch)
            done += ch[1] - ch[0]
            if progress:
                progress(done, len(roots))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run, ch) for ch in chunks]
            for n, fut in enumerate(futures):
                results[n] = fut.result()
                done += chunks[n][1] - chunks[n][0]
                if progress:
                    progress(done, len(roots))
    flat = [r for chunk in results for r in chunk]
    return [PathStep(j, tuple(float(x) for x in roots[j]), flat[j]) for j in range(len(roots))]


def write_path_csv(dest, steps: Sequence[PathStep]) -> None:
    """Write the path to a file name or an open text stream."""
    if hasattr(dest, "write"):
        _write_rows(dest, steps)
        return
    with open(dest, "w", newline="") as fh:
        _write_rows(fh, steps)


def _write_rows(fh, steps: Sequence[PathStep]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for s in steps:
        r = s.result
        writer.writerow(
            [s.step, *(f"{x:.17g}" for x in s.roots), f"{r.probability:.17g}", r.degree_used, f"{r.tail_estimate:.17g}", str(r.converged).lower()]
        )


def path_summary(spec: PathSpec, steps: Sequence[PathStep]) -> dict:
    probs = [s.result.probability for s in steps]
    diffs = np.diff(probs)
    return {
        "params": spec.as_dict(),
        "start_probability": probs[0],
        "end_probability": probs[-1],
        "monotone": bool(np.all(diffs >= -1e-9)),
        "all_converged": all(s.result.converged for s in steps),
        "max_tail_estimate": max(s.result.tail_estimate for s in steps),
        "max_degree_used": max(s.result.degree_used for s in steps),
    }
