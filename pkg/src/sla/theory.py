"""Executable checks of the magnitude-sensitivity and winner-take-all results.

Three statements are made testable here:

* normalized linear-attention weights (and their entropy) do not change when
  the query is scaled, for positively homogeneous feature maps;
* the head gate ``softmax(lambda * s)`` sharpens as ``lambda`` grows and tends
  to ``one_hot(argmax s)``;
* the read/write agreement ``C(lambda) = sum_h G^Q_h G^K_h`` tends to the
  Kronecker delta of the two argmax heads.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, ParameterError
from .report import RunReport
from .tensor import FeatureMapKind, Rng, as_matrix, entropy, feature_map, softmax_rows

LIMIT_TOL = 1e-6
INVARIANCE_TOL = 1e-12
MONOTONE_SLACK = 1e-12


def default_lambda_grid() -> list[float]:
    """``0, 0.25, 0.5`` then powers of two from 1 to 1024."""
    return [0.0, 0.25, 0.5] + [float(2**i) for i in range(11)]


def _vector(s, name: str) -> np.ndarray:
    s = as_matrix(s, name).ravel()
    if s.size == 0:
        raise ParameterError(f"{name} is empty")
    return s


def unique_argmax(s) -> int | None:
    """Index of the maximum, or ``None`` when the maximum is tied."""
    s = np.asarray(s, dtype=np.float64)
    top = np.flatnonzero(s == s.max())
    return int(top[0]) if top.size == 1 else None


def scaled_gate(s, lam: float) -> np.ndarray:
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    return softmax_rows(lam * _vector(s, "scores"))


# --------------------------------------------------------------------------
# magnitude invariance of normalized linear weights


def normalized_linear_weights(q, keys, fmap: FeatureMapKind | str) -> np.ndarray:
    """``w_j = phi(q).phi(k_j) / sum_i phi(q).phi(k_i)``."""
    fq = feature_map(_vector(q, "query"), fmap)
    fk = feature_map(np.atleast_2d(as_matrix(keys, "keys")), fmap)
    raw = fk @ fq
    denom = raw.sum()
    if abs(denom) < 1e-12:
        raise DegenerateInputError(f"linear-attention normalizer is {denom!r}")
    return raw / denom


@dataclass
class InvarianceReport:
    lambdas: list[float]
    max_weight_dev: float
    max_entropy_dev: float
    tol: float = INVARIANCE_TOL

    @property
    def passed(self) -> bool:
        return self.max_weight_dev <= self.tol and self.max_entropy_dev <= self.tol


def magnitude_invariance_check(q, keys, fmap: FeatureMapKind | str, lambdas) -> InvarianceReport:
    fmap = FeatureMapKind(fmap)
    if not fmap.homogeneous:
        raise ParameterError(f"{fmap.value} is not positively homogeneous")
    q = _vector(q, "query")
    base = normalized_linear_weights(q, keys, fmap)
    h0 = entropy(base)
    w_dev = e_dev = 0.0
    for lam in lambdas:
        if not lam > 0:
            raise ParameterError(f"scaling factors must be positive, got {lam}")
        w = normalized_linear_weights(lam * q, keys, fmap)
        w_dev = max(w_dev, float(np.max(np.abs(w - base))))
        e_dev = max(e_dev, abs(entropy(w) - h0))
    return InvarianceReport(list(lambdas), w_dev, e_dev)


# --------------------------------------------------------------------------
# gate sharpening and winner-take-all


@dataclass
class SweepGrid:
    lambdas: list[float]
    scores_q: np.ndarray
    scores_k: np.ndarray

    def __post_init__(self):
        self.lambdas = [float(x) for x in self.lambdas]
        if not self.lambdas:
            raise ParameterError("lambda grid is empty")
        if any(x < 0 for x in self.lambdas):
            raise ParameterError("lambdas must be non-negative")
        if any(b <= a for a, b in zip(self.lambdas, self.lambdas[1:])):
            raise ParameterError("lambdas must be strictly increasing")
        self.scores_q = _vector(self.scores_q, "scores_q")
        self.scores_k = _vector(self.scores_k, "scores_k")
        if self.scores_q.shape != self.scores_k.shape:
            raise ParameterError("scores_q and scores_k must have the same length")


def _is_monotone(values) -> bool:
    return all(b <= a + MONOTONE_SLACK for a, b in zip(values, values[1:]))


def _limit_verdict(s, gate_at_max) -> str:
    top = unique_argmax(s)
    if top is None:
        return "degenerate"
    target = np.zeros_like(gate_at_max)
    target[top] = 1.0
    return "pass" if np.max(np.abs(gate_at_max - target)) <= LIMIT_TOL else "fail"


@dataclass
class SweepReport:
    lambdas: list[float]
    entropy_q: list[float] = field(default_factory=list)
    entropy_k: list[float] = field(default_factory=list)
    c_lambda: list[float] = field(default_factory=list)
    monotone_q: bool | None = None
    monotone_k: bool | None = None
    limit_q: str = "degenerate"
    limit_k: str = "degenerate"

    @property
    def passed(self) -> bool:
        """No violated trend and no failed limit; degenerate/skipped parts do not fail."""
        return (self.monotone_q is not False and self.monotone_k is not False
                and "fail" not in (self.limit_q, self.limit_k))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "entropy_q", "entropy_k", "c_lambda"])
        for row in zip(self.lambdas, self.entropy_q, self.entropy_k, self.c_lambda):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def gate_entropy_sweep(grid: SweepGrid) -> SweepReport:
    """Gate entropy and ``C(lambda)`` over the grid, with trend and limit verdicts.

    The monotonicity flag is ``None`` (skipped) when the scores have a tied
    maximum; the limit verdict is then ``"degenerate"``.
    """
    rep = SweepReport(list(grid.lambdas))
    for lam in grid.lambdas:
        gq = scaled_gate(grid.scores_q, lam)
        gk = scaled_gate(grid.scores_k, lam)
        rep.entropy_q.append(entropy(gq))
        rep.entropy_k.append(entropy(gk))
        rep.c_lambda.append(float(gq @ gk))
    lam_max = grid.lambdas[-1]
    if unique_argmax(grid.scores_q) is not None:
        rep.monotone_q = _is_monotone(rep.entropy_q)
    if unique_argmax(grid.scores_k) is not None:
        rep.monotone_k = _is_monotone(rep.entropy_k)
    rep.limit_q = _limit_verdict(grid.scores_q, scaled_gate(grid.scores_q, lam_max))
    rep.limit_k = _limit_verdict(grid.scores_k, scaled_gate(grid.scores_k, lam_max))
    return rep


def wta_coefficient(scores_q, scores_k, lam: float) -> float:
    """``sum_h softmax(lam s^Q)_h softmax(lam s^K)_h``.

    Lies in ``(0, 1]`` mathematically; at very large ``lam`` a mismatched pair
    underflows to exactly 0.
    """
    sq, sk = _vector(scores_q, "scores_q"), _vector(scores_k, "scores_k")
    if sq.shape != sk.shape:
        raise ParameterError("scores_q and scores_k must have the same length")
    return float(scaled_gate(sq, lam) @ scaled_gate(sk, lam))


@dataclass
class WTAVerdict:
    target: float
    achieved: float
    lambda_max: float
    tol: float = LIMIT_TOL

    @property
    def error(self) -> float:
        return abs(self.achieved - self.target)

    @property
    def passed(self) -> bool:
        return self.error <= self.tol


def wta_limit_check(scores_q, scores_k, lambda_max: float = 1e3) -> WTAVerdict:
    hq, hk = unique_argmax(_vector(scores_q, "scores_q")), unique_argmax(_vector(scores_k, "scores_k"))
    if hq is None or hk is None:
        raise DegenerateInputError("winner-take-all limit needs a unique maximum in both score vectors")
    c = wta_coefficient(scores_q, scores_k, lambda_max)
    return WTAVerdict(target=float(hq == hk), achieved=c, lambda_max=float(lambda_max))


# --------------------------------------------------------------------------
# seeded suites

SUITE_HEADS = (2, 4, 8, 16)
MIN_GAP = 0.1
PROP_LAMBDAS = (0.5, 2.0, 10.0)


def random_scores(rng: Rng, heads: int, min_gap: float = MIN_GAP, winner: int | None = None,
                  scale: float = 1.0) -> np.ndarray:
    """Uniform scores in ``[-scale, scale]`` whose maximum beats the runner-up by ``>= min_gap``.

    ``winner`` forces the argmax onto that head.
    """
    s = rng.uniform(heads, scale)
    top = int(np.argmax(s)) if winner is None else winner
    rest = np.delete(s, top)
    s[top] = max(s[top], rest.max() + min_gap)
    return s


def entropy_suite(seed: int, count: int = 100, heads=SUITE_HEADS, lambda_max: float = 1e3,
                  lambdas=None) -> RunReport:
    """Gate-sharpening trend on the default grid plus the one-hot limit at ``lambda_max``."""
    rng = Rng(seed)
    lambdas = default_lambda_grid() if lambdas is None else list(lambdas)
    report = RunReport("theorem-entropy", meta={"seed": seed, "lambda_max": lambda_max,
                                                "lambdas": lambdas},
                       columns=["case", "H", "monotone", "max_error", "tol", "passed"])
    for i in range(count):
        H = heads[i % len(heads)]
        s = random_scores(rng, H)
        sweep = gate_entropy_sweep(SweepGrid(lambdas, s, s))
        gate = scaled_gate(s, lambda_max)
        target = np.zeros(H)
        target[unique_argmax(s)] = 1.0
        err = float(np.max(np.abs(gate - target)))
        report.add(case=i, H=H, monotone=sweep.monotone_q, max_error=err, tol=LIMIT_TOL,
                   passed=bool(sweep.monotone_q) and err <= LIMIT_TOL)
    return report


def wta_suite(seed: int, count: int = 100, heads=SUITE_HEADS, lambda_max: float = 1e3) -> RunReport:
    """``C(0) = 1/H`` exactly and ``C(lambda_max)`` against the Kronecker delta.

    Cases cycle through forced-match, forced-mismatch and unconstrained argmaxes.
    """
    rng = Rng(seed)
    report = RunReport("theorem-wta", meta={"seed": seed, "lambda_max": lambda_max},
                       columns=["case", "H", "mode", "c0", "target", "achieved", "max_error",
                                "tol", "passed"])
    for i in range(count):
        H = heads[i % len(heads)]
        mode = ("match", "mismatch", "random")[i % 3]
        if mode == "random":
            sq, sk = random_scores(rng, H), random_scores(rng, H)
        else:
            a = rng.integers(H)
            b = a if mode == "match" else (a + 1 + rng.integers(H - 1)) % H
            sq, sk = random_scores(rng, H, winner=a), random_scores(rng, H, winner=b)
        c0 = wta_coefficient(sq, sk, 0.0)
        verdict = wta_limit_check(sq, sk, lambda_max)
        report.add(case=i, H=H, mode=mode, c0=c0, target=verdict.target, achieved=verdict.achieved,
                   max_error=verdict.error, tol=LIMIT_TOL,
                   passed=c0 == 1.0 / H and verdict.passed)
    return report


def invariance_suite(seed: int, count: int = 100, n_keys: int = 8, dim: int = 8,
                     fmap: FeatureMapKind | str = FeatureMapKind.RELU,
                     lambdas=PROP_LAMBDAS) -> RunReport:
    """Query-scaling invariance of normalized linear weights on seeded instances.

    Draws that hit a vanishing normalizer are redrawn from the same stream.
    """
    rng = Rng(seed)
    report = RunReport("theorem-invariance", meta={"seed": seed, "fmap": FeatureMapKind(fmap).value,
                                                   "lambdas": list(lambdas)},
                       columns=["case", "max_weight_dev", "max_entropy_dev", "tol", "passed"])
    for i in range(count):
        while True:
            q, keys = rng.uniform(dim), rng.uniform((n_keys, dim))
            try:
                rep = magnitude_invariance_check(q, keys, fmap, lambdas)
                break
            except DegenerateInputError:
                continue
        report.add(case=i, max_weight_dev=rep.max_weight_dev, max_entropy_dev=rep.max_entropy_dev,
                   tol=rep.tol, passed=rep.passed)
    return report
