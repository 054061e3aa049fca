"""Zonal (Jack) polynomials of a matrix argument and the series built on them.

Jack polynomials are evaluated from eigenvalues with the branching rule

    P_kappa(x_1..x_n) = sum_mu psi_{kappa/mu} P_mu(x_1..x_{n-1}) x_n^{|kappa/mu|}

over horizontal strips ``kappa/mu``. The strip coefficients depend only on
``(kappa, mu, alpha)``; they are tabulated once per ``(m, alpha)`` in a
grow-only :class:`JackTable` and then applied to whole batches of spectra
with sparse products. ``C``-normalisation is ``C_kappa = alpha^k k! / c'_kappa
P_kappa`` where ``c'_kappa`` is the upper hook product, so that the
``C_kappa`` of one degree sum to ``(tr X)^k``.
"""

from __future__ import annotations

import itertools
import logging
import math
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .numeric import (
    NeumaierSum,
    Partition,
    SignedLog,
    Spectrum,
    check_beta,
    enumerate_partitions,
    gen_pochhammer,
)

log = logging.getLogger(__name__)

CACHE_ENV = "CONEKIT_CACHE_DIR"
CACHE_FORMAT = "conekit-jack"
CACHE_VERSION = 1
TAIL_RUN = 3


class SeriesPoleError(ZeroDivisionError):
    """A denominator parameter hits a Pochhammer pole."""


class ConvergenceDomainError(ValueError):
    """The requested series is outside its region of convergence."""


@dataclass(frozen=True)
class SeriesControl:
    max_degree: int = 150
    tail_tolerance: float = 1e-12
    hard_term_limit: int = 20_000_000

    def __post_init__(self):
        if self.max_degree < 0:
            raise ValueError("max_degree must be nonnegative")
        if not self.tail_tolerance > 0:
            raise ValueError("tail_tolerance must be positive")
        if self.hard_term_limit < 1:
            raise ValueError("hard_term_limit must be positive")


@dataclass
class SeriesResult:
    value: float
    degree_used: int
    tail_estimate: float
    converged: bool
    terms_evaluated: int
    notes: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "value": self.value,
            "degree_used": self.degree_used,
            "tail_estimate": self.tail_estimate,
            "converged": self.converged,
            "terms_evaluated": self.terms_evaluated,
        }
        if self.notes:
            out["notes"] = self.notes
        return out


def jack_alpha(beta: int) -> float:
    return 2.0 / check_beta(beta)


# ---------------------------------------------------------------------------
# coefficient table


def _upper_hook_log(kappa: Sequence[int], alpha: float) -> float:
    conj = Partition(kappa).conjugate()
    total = 0.0
    for i, ki in enumerate(kappa, 1):
        for j in range(1, ki + 1):
            total += math.log(conj[j - 1] - i + alpha * (ki - j + 1))
    return total


def _strip_psi(K: np.ndarray, M: np.ndarray, alpha: float) -> np.ndarray:
    """Branching coefficients for monic Jack polynomials, one per row pair.

    ``K`` and ``M`` hold padded ``kappa`` and ``mu`` (``mu`` a horizontal
    strip below ``kappa``). The product runs over boxes of ``mu`` lying in a
    row touched by the strip but in a column that is not.
    """
    npairs, n = K.shape
    psi = np.ones(npairs)
    if npairs == 0:
        return psi
    strip_row = K > M
    width = int(M[:, 0].max()) if n else 0
    for j in range(1, width + 1):
        kc = (K >= j).sum(axis=1)
        mc = (M >= j).sum(axis=1)
        col_ok = kc == mc
        for r in range(n):
            mask = col_ok & strip_row[:, r] & (M[:, r] >= j)
            if not mask.any():
                continue
            leg = (mc[mask] - (r + 1)).astype(float)
            am = alpha * (M[mask, r] - j)
            ak = alpha * (K[mask, r] - j)
            b_mu = (am + leg + 1.0) / (am + leg + alpha)
            b_ka = (ak + leg + 1.0) / (ak + leg + alpha)
            psi[mask] *= b_mu / b_ka
    return psi


class JackTable:
    """Grow-only table of strip coefficients for ``m`` variables.

    Degrees are published only once fully built; concurrent ``ensure`` calls
    may build the same degree twice, which is harmless.
    """

    def __init__(self, m: int, alpha: float):
        if m < 1:
            raise ValueError("m must be >= 1")
        self.m = m
        self.alpha = float(alpha)
        self._lock = threading.Lock()
        self.partitions: list[list[Partition]] = []
        self.log_scale: list[np.ndarray] = []
        # level_members[i][d]: positions (in partitions[d]) with <= i+1 parts
        self.level_members: list[list[np.ndarray]] = [[] for _ in range(m)]
        # links[i][d]: list of (d_mu, csr) feeding level i+1 from level i
        self.links: list[list[list]] = [[] for _ in range(m)]
        self._index: list[list[dict]] = [[] for _ in range(m)]
        self._load_cache()

    @property
    def degree(self) -> int:
        return len(self.partitions) - 1

    def count(self, d: int) -> int:
        return len(self.partitions[d])

    def ensure(self, degree: int) -> None:
        if degree <= self.degree:
            return
        start = self.degree + 1
        for d in range(start, degree + 1):
            built = self._build_degree(d)
            with self._lock:
                if d == len(self.partitions):
                    self._publish(d, built)
        if degree - start >= 10:
            self._save_cache()

    def _build_degree(self, d: int):
        parts = enumerate_partitions(d, self.m)
        log_scale = np.array(
            [d * math.log(self.alpha) + math.lgamma(d + 1) - _upper_hook_log(k, self.alpha) for k in parts]
        )
        members = []
        index = []
        for i in range(self.m):
            pos = [p for p, k in enumerate(parts) if len(k) <= i + 1]
            members.append(np.array(pos, dtype=np.int64))
            index.append({parts[p]: n for n, p in enumerate(pos)})
        links = [[] for _ in range(self.m)]
        for i in range(1, self.m):
            links[i] = self._build_links(d, parts, members[i], i)
        return parts, log_scale, members, index, links

    def _build_links(self, d, parts, member_pos, level):
        """Sparse maps from level ``level-1`` values to level ``level`` at degree d."""
        n_vars = level + 1
        rows, mus = [], []
        for row, p in enumerate(member_pos):
            kappa = tuple(parts[p]) + (0,) * (n_vars - len(parts[p]))
            ranges = [range(kappa[l + 1], kappa[l] + 1) for l in range(n_vars - 1)]
            for mu in itertools.product(*ranges):
                rows.append(row)
                mus.append(mu + (0,))
        if not rows:
            return []
        M = np.array(mus, dtype=np.int64)
        K = np.array(
            [tuple(parts[member_pos[r]]) + (0,) * (n_vars - len(parts[member_pos[r]])) for r in rows],
            dtype=np.int64,
        )
        psi = _strip_psi(K, M, self.alpha)
        rows = np.array(rows, dtype=np.int64)
        mu_deg = M.sum(axis=1)
        out = []
        n_rows = len(member_pos)
        for dm in range(d + 1):
            sel = np.nonzero(mu_deg == dm)[0]
            if sel.size == 0:
                continue
            idx = self._index[level - 1][dm] if dm < d else None
            if idx is None:
                # mu of the same degree as kappa means an empty strip: mu == kappa
                idx = {Partition(parts[p]): n for n, p in enumerate(p for p, k in enumerate(parts) if len(k) <= level)}
            cols = np.array([idx[Partition(M[s, :level])] for s in sel], dtype=np.int64)
            n_cols = len(idx)
            mat = sparse.csr_matrix((psi[sel], (rows[sel], cols)), shape=(n_rows, n_cols))
            mat.sum_duplicates()
            mat.sort_indices()
            out.append((dm, mat))
        return out

    def _publish(self, d, built):
        parts, log_scale, members, index, links = built
        self.partitions.append(parts)
        self.log_scale.append(log_scale)
        for i in range(self.m):
            self.level_members[i].append(members[i])
            self._index[i].append(index[i])
            self.links[i].append(links[i])

    # -- persistence -------------------------------------------------------

    def _cache_path(self) -> Path | None:
        root = os.environ.get(CACHE_ENV)
        if not root:
            return None
        return Path(root) / f"jack_m{self.m}_alpha{self.alpha!r}.npz"

    def _save_cache(self) -> None:
        path = self._cache_path()
        if path is None:
            return
        arrays = {
            "header": np.array([CACHE_FORMAT, str(CACHE_VERSION), str(self.m), repr(self.alpha), str(self.degree)])
        }
        for i in range(1, self.m):
            for d, links in enumerate(self.links[i]):
                for dm, mat in links:
                    key = f"{i}_{d}_{dm}"
                    arrays[f"data_{key}"] = mat.data
                    arrays[f"ind_{key}"] = mat.indices
                    arrays[f"ptr_{key}"] = mat.indptr
                    arrays[f"shape_{key}"] = np.array(mat.shape)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + f".{os.getpid()}.{threading.get_ident()}.tmp")
            with open(tmp, "wb") as fh:
                np.savez(fh, **arrays)
            os.replace(tmp, path)
        except OSError as exc:  # cache is best effort
            log.warning("could not write zonal cache %s: %s", path, exc)

    def _load_cache(self) -> None:
        path = self._cache_path()
        if path is None or not path.exists():
            return
        try:
            with np.load(path, allow_pickle=False) as data:
                header = [str(h) for h in data["header"]]
                if header[:4] != [CACHE_FORMAT, str(CACHE_VERSION), str(self.m), repr(self.alpha)]:
                    return
                degree = int(header[4])
                for d in range(degree + 1):
                    parts, log_scale, members, index, _ = self._build_degree_skeleton(d)
                    links = [[] for _ in range(self.m)]
                    for i in range(1, self.m):
                        for dm in range(d + 1):
                            key = f"{i}_{d}_{dm}"
                            if f"data_{key}" not in data:
                                continue
                            mat = sparse.csr_matrix(
                                (data[f"data_{key}"], data[f"ind_{key}"], data[f"ptr_{key}"]),
                                shape=tuple(data[f"shape_{key}"]),
                            )
                            links[i].append((dm, mat))
                    self._publish(d, (parts, log_scale, members, index, links))
        except (OSError, KeyError, ValueError) as exc:
            log.warning("ignoring unreadable zonal cache %s: %s", path, exc)
            self.partitions.clear()
            self.log_scale.clear()
            self.level_members = [[] for _ in range(self.m)]
            self.links = [[] for _ in range(self.m)]
            self._index = [[] for _ in range(self.m)]

    def _build_degree_skeleton(self, d):
        parts = enumerate_partitions(d, self.m)
        log_scale = np.array(
            [d * math.log(self.alpha) + math.lgamma(d + 1) - _upper_hook_log(k, self.alpha) for k in parts]
        )
        members, index = [], []
        for i in range(self.m):
            pos = [p for p, k in enumerate(parts) if len(k) <= i + 1]
            members.append(np.array(pos, dtype=np.int64))
            index.append({parts[p]: n for n, p in enumerate(pos)})
        return parts, log_scale, members, index, None


_TABLES: dict = {}
_TABLES_LOCK = threading.Lock()


def jack_table(m: int, beta: int) -> JackTable:
    key = (m, jack_alpha(beta))
    with _TABLES_LOCK:
        table = _TABLES.get(key)
        if table is None:
            table = _TABLES[key] = JackTable(m, key[1])
    return table


class JackEvaluator:
    """Degree-by-degree ``C_kappa`` values for a batch of spectra.

    ``x`` has shape ``(S, m)``; ``block(d)`` returns an ``(n_d, S)`` array in
    the frozen partition order of degree ``d``.
    """

    def __init__(self, table: JackTable, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != table.m:
            raise ValueError(f"expected spectra of shape (S, {table.m}), got {x.shape}")
        self.table = table
        self.x = x
        self._levels: list[list[np.ndarray]] = [[] for _ in range(table.m)]
        self._pow: list[list[np.ndarray]] = [[np.ones(x.shape[0])] for _ in range(table.m)]

    def _power(self, var: int, e: int) -> np.ndarray:
        cache = self._pow[var]
        while len(cache) <= e:
            cache.append(cache[-1] * self.x[:, var])
        return cache[e]

    def block(self, d: int) -> np.ndarray:
        table = self.table
        table.ensure(d)
        while len(self._levels[0]) <= d:
            self._advance(len(self._levels[0]))
        monic = self._levels[table.m - 1][d]
        return np.exp(table.log_scale[d])[:, None] * monic

    def _advance(self, d: int) -> None:
        table = self.table
        self._levels[0].append(self._power(0, d)[None, :].copy())
        S = self.x.shape[0]
        for i in range(1, table.m):
            n_rows = len(table.level_members[i][d])
            acc = np.zeros((n_rows, S))
            for dm, mat in table.links[i][d]:
                acc += (mat @ self._levels[i - 1][dm]) * self._power(i, d - dm)[None, :]
            self._levels[i].append(acc)


# ---------------------------------------------------------------------------
# single-matrix helpers


def _spectrum_batch(spectrum) -> np.ndarray:
    if isinstance(spectrum, Spectrum):
        return spectrum.as_array()[None, :]
    arr = np.asarray(spectrum, dtype=float)
    return arr[None, :] if arr.ndim == 1 else arr


def zonal_values(r: int, spectrum: Spectrum, beta: int = 1) -> list[tuple[Partition, float]]:
    """All ``(kappa, C_kappa(X))`` with ``|kappa| = r`` and at most ``m`` parts."""
    table = jack_table(spectrum.m, beta)
    vals = JackEvaluator(table, _spectrum_batch(spectrum)).block(r)[:, 0]
    return list(zip(table.partitions[r], (float(v) for v in vals)))


def zonal_C(rho: Sequence[int], spectrum: Spectrum, beta: int = 1) -> float:
    """Zonal polynomial ``C_rho`` (Jack, ``alpha = 2/beta``) at the eigenvalues."""
    rho = rho if isinstance(rho, Partition) else Partition(rho)
    if len(rho) > spectrum.m:
        return 0.0
    table = jack_table(spectrum.m, beta)
    vals = JackEvaluator(table, _spectrum_batch(spectrum)).block(rho.weight)
    pos = table.partitions[rho.weight].index(rho)
    return float(vals[pos, 0])


# ---------------------------------------------------------------------------
# partition weights


class _PartitionWeights:
    """``log |prod (a_i)_kappa / prod (b_j)_kappa|`` and signs, per degree."""

    def __init__(self, a, b, beta: int, table: JackTable):
        self.a = tuple(float(v) for v in a)
        self.b = tuple(float(v) for v in b)
        self.beta = beta
        self.table = table
        self._cache: dict[int, tuple] = {}

    def degree(self, d: int):
        got = self._cache.get(d)
        if got is not None:
            return got
        self.table.ensure(d)
        logs, signs = [], []
        for kappa in self.table.partitions[d]:
            w = SignedLog.one()
            for a in self.a:
                w = w * gen_pochhammer(a, kappa, self.beta)
            for b in self.b:
                den = gen_pochhammer(b, kappa, self.beta)
                if den.sign == 0:
                    raise SeriesPoleError(f"parameter b={b} hits a pole at partition {tuple(kappa)}")
                w = w / den
            logs.append(w.log_magnitude)
            signs.append(w.sign)
        logs = np.array(logs)
        signs = np.array(signs, dtype=float)
        top = logs[signs != 0].max() if (signs != 0).any() else 0.0
        got = (logs - top, signs, top)
        self._cache[d] = got
        return got


# ---------------------------------------------------------------------------
# the nested series engine


@dataclass
class Level:
    """One matrix argument ``X_j`` with its Pochhammer parameters."""

    a: tuple
    b: tuple
    x: np.ndarray  # (S, m) eigenvalues


@dataclass
class BatchSeries:
    value: np.ndarray
    degree_used: np.ndarray
    tail_estimate: np.ndarray
    converged: np.ndarray
    terms_evaluated: np.ndarray
    level_tails: np.ndarray

    def result(self, s: int = 0, notes: dict | None = None) -> SeriesResult:
        return SeriesResult(
            value=float(self.value[s]),
            degree_used=int(self.degree_used[s]),
            tail_estimate=float(self.tail_estimate[s]),
            converged=bool(self.converged[s]),
            terms_evaluated=int(self.terms_evaluated[s]),
            notes=dict(notes or {}),
        )


def _logbinom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def nested_series(
    degree_weight: Callable[[int], SignedLog],
    levels: Sequence[Level],
    beta: int,
    ctrl: SeriesControl,
) -> BatchSeries:
    """Evaluate ``sum_R w_R sum_{r_1+..+r_k=R} R!/(r_1!..r_k!) prod_j Q_{r_j}(a_j; b_j; X_j)``.

    ``Q_r`` is the degree-``r`` block ``sum_{kappa |- r} prod(a)_kappa /
    prod(b)_kappa C_kappa(X)``. With one level this is the weighted series
    ``sum_R w_R Q_R``. Arguments are rescaled so the summed absolute traces
    equal one, and every block is carried as ``exp(log scale) * mantissa``,
    so only genuinely huge terms can overflow.

    Blocks are added in increasing ``R`` with compensated summation; within
    a block partitions follow the frozen enumeration order. A spectrum stops
    at the first ``R`` closing a run of three blocks with
    ``|block| / |partial sum| < tail_tolerance``.
    """
    check_beta(beta)
    k = len(levels)
    if k < 1:
        raise ValueError("need at least one level")
    S = levels[0].x.shape[0]
    scale = np.zeros(S)
    for lev in levels:
        if lev.x.shape[0] != S:
            raise ValueError("all levels need the same number of spectra")
        scale += np.abs(lev.x).sum(axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    log_s = np.log(scale)

    evaluators, weights = [], []
    for lev in levels:
        table = jack_table(lev.x.shape[1], beta)
        evaluators.append(JackEvaluator(table, lev.x / scale[:, None]))
        weights.append(_PartitionWeights(lev.a, lev.b, beta, table))

    # per level j: per degree r a scalar log scale and an (S,) mantissa
    lv_log: list[list[float]] = [[] for _ in range(k)]
    lv_man: list[list[np.ndarray]] = [[] for _ in range(k)]
    # running convolutions over levels 0..j
    cv_log: list[list[np.ndarray]] = [[] for _ in range(k)]
    cv_man: list[list[np.ndarray]] = [[] for _ in range(k)]

    acc = NeumaierSum(np.zeros(S))
    active = np.ones(S, dtype=bool)
    run = np.zeros(S, dtype=int)
    degree_used = np.zeros(S, dtype=int)
    tail = np.full(S, np.inf)
    terms = np.zeros(S, dtype=np.int64)
    last_block = np.zeros(S)
    level_peak = np.zeros((k, S))
    level_last = np.zeros((k, S))
    converged = np.zeros(S, dtype=bool)

    for R in range(ctrl.max_degree + 1):
        n_terms = 0
        for j in range(k):
            logw, signs, top = weights[j].degree(R)
            vals = evaluators[j].block(R)
            n_terms += vals.shape[0]
            terms_mat = (signs * np.exp(logw))[:, None] * vals
            man = np.cumsum(terms_mat, axis=0)[-1] if terms_mat.shape[0] else np.zeros(S)
            lv_log[j].append(top)
            lv_man[j].append(man)
            mag = np.abs(man) * np.exp(np.minimum(top + R * log_s, 700.0))
            level_peak[j] = np.maximum(level_peak[j], mag)
            level_last[j] = mag
        if np.any(terms[active] + n_terms > ctrl.hard_term_limit):
            log.info("hard term limit reached at degree %d", R)
            break
        terms[active] += n_terms

        # convolution with binomial weights, level by level
        cv_log[0].append(np.full(S, lv_log[0][R]))
        cv_man[0].append(lv_man[0][R])
        for j in range(1, k):
            exps = np.array(
                [
                    _logbinom(R, r) + cv_log[j - 1][R - r] + lv_log[j][r]
                    for r in range(R + 1)
                ]
            )  # (R+1, S)
            top = exps.max(axis=0)
            top = np.where(np.isfinite(top), top, 0.0)
            total = np.zeros(S)
            for r in range(R + 1):
                total = total + np.exp(exps[r] - top) * cv_man[j - 1][R - r] * lv_man[j][r]
            cv_log[j].append(top)
            cv_man[j].append(total)

        w = degree_weight(R)
        if w.sign == 0:
            block = np.zeros(S)
        else:
            expo = w.log_magnitude + R * log_s + cv_log[k - 1][R]
            with np.errstate(over="ignore"):
                block = w.sign * np.exp(expo) * cv_man[k - 1][R]
        block = np.where(active, block, 0.0)
        acc.add(block)
        last_block = np.where(active, block, last_block)
        degree_used = np.where(active, R, degree_used)
        partial = acc.value
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(partial != 0, np.abs(block) / np.abs(partial), np.where(block == 0, 0.0, np.inf))
        small = ratio < ctrl.tail_tolerance
        run = np.where(active, np.where(small, run + 1, 0), run)
        tail = np.where(active, ratio, tail)
        done = active & (run >= TAIL_RUN)
        converged |= done
        active &= ~done
        if not active.any():
            break

    value = acc.value
    with np.errstate(divide="ignore", invalid="ignore"):
        level_tails = np.where(level_peak > 0, level_last / level_peak, 0.0)
    return BatchSeries(
        value=value,
        degree_used=degree_used,
        tail_estimate=tail,
        converged=converged & np.isfinite(value),
        terms_evaluated=terms,
        level_tails=level_tails,
    )


# ---------------------------------------------------------------------------
# public series


def _inverse_factorial(f: Callable[[int], SignedLog] | None = None):
    def weight(r: int) -> SignedLog:
        base = SignedLog(-math.lgamma(r + 1), 1)
        if f is None:
            return base
        fr = f(r)
        if not isinstance(fr, SignedLog):
            fr = SignedLog.from_float(float(fr))
        return base * fr

    return weight


def partial_sum_rQq(r: int, a: Sequence[float], b: Sequence[float], spectrum: Spectrum, beta: int = 1) -> float:
    """The single degree block ``sum_{kappa |- r} prod(a)_kappa/prod(b)_kappa C_kappa(X)``."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    table = jack_table(spectrum.m, beta)
    weights = _PartitionWeights(a, b, beta, table)
    logw, signs, top = weights.degree(r)
    vals = JackEvaluator(table, _spectrum_batch(spectrum)).block(r)[:, 0]
    terms = signs * np.exp(logw + top) * vals
    return float(np.cumsum(terms)[-1]) if terms.size else 0.0


def weighted_series_rPq(
    weight_fn: Callable[[int], SignedLog | float],
    a: Sequence[float],
    b: Sequence[float],
    spectrum: Spectrum,
    beta: int = 1,
    ctrl: SeriesControl | None = None,
) -> SeriesResult:
    """``sum_r f(r)/r! Q_r(a; b; X)`` with a degree-only weight ``f``."""
    ctrl = ctrl or SeriesControl()
    level = Level(tuple(a), tuple(b), _spectrum_batch(spectrum))
    return nested_series(_inverse_factorial(weight_fn), [level], beta, ctrl).result()


def hypergeometric_pFq(
    a: Sequence[float],
    b: Sequence[float],
    spectrum: Spectrum,
    beta: int = 1,
    ctrl: SeriesControl | None = None,
) -> SeriesResult:
    """Truncated ``pFq(a; b; X)`` of one matrix argument."""
    ctrl = ctrl or SeriesControl()
    level = Level(tuple(a), tuple(b), _spectrum_batch(spectrum))
    return nested_series(_inverse_factorial(), [level], beta, ctrl).result()
