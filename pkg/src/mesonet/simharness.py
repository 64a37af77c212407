"""Synthetic network generators and the rejection-rate experiment runner.

Four generators cover the simulation settings: gaussian edges over
inner-product or Euclidean-distance latent positions, and binary edges
over a logistic inner-product model with optional beta-binomial
overdispersion.  Null regimes share the latent positions of the
hypothesis rows/columns between the samples, so the hypothesis-block
parameters agree exactly; alternatives perturb those shared positions
with a small gaussian shift.

``run_experiment`` replays a scenario ``reps`` times, re-drawing the
latent positions every replication, and tabulates empirical rejection
rates per method.  All randomness flows from one integer seed through
spawned per-replication streams, so serial and threaded runs produce
identical tables.
"""

import csv
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np
import scipy

from . import __version__ as _pkg_version
from .errors import ArgumentError, MesonetError
from .numkit import svd_thin
from .netmodel import (
    HypothesisSet, NetworkStack, ProjectionPair, TwoSampleData, family_by_name,
)
from . import stattests
from . import projlearn
from . import competitors

_GENERATORS = ("gaussian_ip", "gaussian_dist", "logit_ip", "logit_overdispersed")
_LATENT_DIM = {"gaussian_ip": 3, "gaussian_dist": 3,
               "logit_ip": 2, "logit_overdispersed": 2}
_PERTURBATION = {
    "gaussian_ip": 1.0 / (3.0 * math.sqrt(2.0)),
    "gaussian_dist": math.sqrt(2.0) / 3.0,
    "logit_ip": 1.0 / (4.0 * math.sqrt(2.0)),
    "logit_overdispersed": 1.0 / (4.0 * math.sqrt(2.0)),
}
_METHOD_KINDS = ("basic", "posn", "rand", "block",
                 "proj-rect", "proj-impute", "oracle")


@dataclass(frozen=True)
class MethodSpec:
    """One method to run per replication.

    ``kind`` picks the routine; ``d`` is the projection dimension (or the
    bootstrap rank for ``posn``); ``statistic`` overrides the default
    statistic for projection-based kinds; ``B`` is the bootstrap size.
    """

    name: str
    kind: str
    d: Optional[int] = None
    statistic: Optional[str] = None
    B: int = 500
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _METHOD_KINDS:
            raise ArgumentError(
                f"unknown method kind {self.kind!r}; expected one of {_METHOD_KINDS}"
            )
        if self.kind in ("posn", "rand", "proj-rect", "proj-impute", "oracle"):
            if self.d is None or self.d < 1:
                raise ArgumentError(f"method {self.name!r} ({self.kind}) needs d >= 1")

    def to_dict(self):
        out = {"name": self.name, "kind": self.kind}
        if self.d is not None:
            out["d"] = self.d
        if self.statistic is not None:
            out["statistic"] = self.statistic
        if self.kind == "posn":
            out["B"] = self.B
        if self.options:
            out["options"] = dict(self.options)
        return out

    @staticmethod
    def from_dict(obj):
        return MethodSpec(
            name=obj["name"], kind=obj["kind"], d=obj.get("d"),
            statistic=obj.get("statistic"), B=obj.get("B", 500),
            options=dict(obj.get("options", {})),
        )


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one simulation scenario."""

    generator: str
    n: int
    m: int
    reps: int
    rows: tuple
    cols: tuple
    methods: tuple
    seed: int
    regime: str = "null"
    sigma2: float = 50.0
    eta: float = 1.0
    alpha: float = 0.05
    latent_dim: Optional[int] = None

    def __post_init__(self):
        if self.generator not in _GENERATORS:
            raise ArgumentError(
                f"unknown generator {self.generator!r}; expected one of {_GENERATORS}"
            )
        if self.regime not in ("null", "alternative"):
            raise ArgumentError(f"regime must be 'null' or 'alternative', got {self.regime!r}")
        if self.reps < 1:
            raise ArgumentError(f"reps must be >= 1, got {self.reps}")
        if self.m < 1:
            raise ArgumentError(f"m must be >= 1, got {self.m}")
        if self.n < 2:
            raise ArgumentError(f"n must be >= 2, got {self.n}")
        if self.sigma2 <= 0:
            raise ArgumentError(f"sigma2 must be positive, got {self.sigma2}")
        if not 0 < self.alpha < 1:
            raise ArgumentError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.seed is None:
            raise ArgumentError("a seed is required for reproducibility")
        if self.generator == "logit_overdispersed":
            if not 1.0 <= self.eta < self.m:
                raise ArgumentError(
                    f"overdispersion eta={self.eta} must lie in [1, m) with m={self.m}"
                )
            if self.eta > 1.0 and self.m < 3:
                raise ArgumentError("overdispersed generation needs m >= 3")
        object.__setattr__(self, "rows", tuple(int(i) for i in self.rows))
        object.__setattr__(self, "cols", tuple(int(j) for j in self.cols))
        object.__setattr__(self, "methods", tuple(self.methods))
        self.hypothesis().validate(self.n)

    def hypothesis(self):
        return HypothesisSet.rectangle(self.rows, self.cols)

    @property
    def family(self):
        return family_by_name(
            "gaussian" if self.generator.startswith("gaussian") else "logit"
        )

    @property
    def k_latent(self):
        return self.latent_dim if self.latent_dim is not None else _LATENT_DIM[self.generator]

    @property
    def perturbation(self):
        return _PERTURBATION[self.generator]

    def to_dict(self):
        return {
            "generator": self.generator, "n": self.n, "m": self.m,
            "reps": self.reps, "rows": list(self.rows), "cols": list(self.cols),
            "methods": [sp.to_dict() for sp in self.methods], "seed": self.seed,
            "regime": self.regime, "sigma2": self.sigma2, "eta": self.eta,
            "alpha": self.alpha, "latent_dim": self.latent_dim,
        }

    @staticmethod
    def from_dict(obj):
        try:
            methods = tuple(MethodSpec.from_dict(sp) for sp in obj["methods"])
            return ScenarioConfig(
                generator=obj["generator"], n=int(obj["n"]), m=int(obj["m"]),
                reps=int(obj["reps"]), rows=tuple(obj["rows"]), cols=tuple(obj["cols"]),
                methods=methods, seed=int(obj["seed"]),
                regime=obj.get("regime", "null"),
                sigma2=float(obj.get("sigma2", 50.0)),
                eta=float(obj.get("eta", 1.0)),
                alpha=float(obj.get("alpha", 0.05)),
                latent_dim=obj.get("latent_dim"),
            )
        except KeyError as exc:
            raise ArgumentError(f"scenario config is missing field {exc}") from None


# ---------------------------------------------------------------------------
# Generators.
# ---------------------------------------------------------------------------


def _latent_positions(cfg, rng):
    """Fresh per-replication latent positions with the regime's sharing."""
    n, k = cfg.n, cfg.k_latent
    rows = np.asarray(cfg.rows, dtype=int)
    cols = np.asarray(cfg.cols, dtype=int)
    X1 = rng.standard_normal((n, k))
    Y1 = rng.standard_normal((n, k))
    X2 = rng.standard_normal((n, k))
    Y2 = rng.standard_normal((n, k))
    if cfg.regime == "null":
        X2[rows] = X1[rows]
        Y2[cols] = Y1[cols]
    else:
        # perturbation is the covariance scale of the shift, N(0, c*I)
        scale = math.sqrt(cfg.perturbation)
        X2[rows] = X1[rows] + scale * rng.standard_normal((rows.size, k))
        Y2[cols] = Y1[cols] + scale * rng.standard_normal((cols.size, k))
    return (X1, Y1), (X2, Y2)


def _theta_from_positions(cfg, XY):
    X, Y = XY
    if cfg.generator == "gaussian_dist":
        diff = X[:, None, :] - Y[None, :, :]
        return np.sqrt((diff * diff).sum(axis=-1))
    return X @ Y.T


def _overdispersed_layers(cfg, probs, rng):
    """Beta-binomial layer sums spread over layers uniformly at random."""
    m, n = cfg.m, cfg.n
    if cfg.eta == 1.0:
        return (rng.random((m, n, n)) < probs[None]).astype(float)
    scale = (m - cfg.eta) / (cfg.eta - 1.0)
    B = rng.beta(probs * scale, (1.0 - probs) * scale)
    counts = rng.binomial(m, B)
    u = rng.random((m, n, n))
    ranks = np.argsort(np.argsort(u, axis=0), axis=0)
    return (ranks < counts[None]).astype(float)


def _layers_from_theta(cfg, theta, rng):
    m, n = cfg.m, cfg.n
    if cfg.family.kind == "gaussian":
        return theta[None] + math.sqrt(cfg.sigma2) * rng.standard_normal((m, n, n))
    probs = cfg.family.h(theta)
    if cfg.generator == "logit_overdispersed":
        return _overdispersed_layers(cfg, probs, rng)
    return (rng.random((m, n, n)) < probs[None]).astype(float)


def _generate(cfg, rng):
    """One replication: (data, theta1, theta2) with fresh latent positions."""
    xy1, xy2 = _latent_positions(cfg, rng)
    theta1 = _theta_from_positions(cfg, xy1)
    theta2 = _theta_from_positions(cfg, xy2)
    data = TwoSampleData(
        sample1=NetworkStack(_layers_from_theta(cfg, theta1, rng)),
        sample2=NetworkStack(_layers_from_theta(cfg, theta2, rng)),
        family=cfg.family,
    )
    return data, theta1, theta2


def _checked_gen(cfg, rng, kind):
    if cfg.generator != kind:
        raise ArgumentError(f"config declares generator {cfg.generator!r}, not {kind!r}")
    return _generate(cfg, rng)[0]


def gen_gaussian_ip(cfg, rng):
    """Gaussian edges over a rank-k inner-product parameter matrix."""
    return _checked_gen(cfg, rng, "gaussian_ip")


def gen_gaussian_dist(cfg, rng):
    """Gaussian edges over Euclidean-distance parameters (low effective rank)."""
    return _checked_gen(cfg, rng, "gaussian_dist")


def gen_logit_ip(cfg, rng):
    """Binary edges with logistic link over a rank-k inner-product parameter."""
    return _checked_gen(cfg, rng, "logit_ip")


def gen_overdispersed(cfg, rng):
    """Binary edges whose layer sums are beta-binomial with inflation eta."""
    return _checked_gen(cfg, rng, "logit_overdispersed")


# ---------------------------------------------------------------------------
# Experiment runner.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RejectionRow:
    method: str
    m: int
    d_or_p: Optional[int]
    regime: str
    rate: float
    se: float
    failures: int


@dataclass(frozen=True)
class RejectionTable:
    rows: tuple
    config: ScenarioConfig

    def row(self, method):
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)


def _oracle_pair(theta1, theta2, S, d):
    diff = theta1[np.ix_(S.rows, S.cols)] - theta2[np.ix_(S.rows, S.cols)]
    res = svd_thin(diff)
    return ProjectionPair(
        U=res.U[:, :d].copy(), V=res.V[:, :d].copy(),
        source="oracle", padded=res.rank() < d, requested_d=d,
    )


_STAT_FUNCS = {
    "E": stattests.stat_E, "EUD": stattests.stat_EUD,
    "G": stattests.stat_G, "GP": stattests.stat_GP,
}


def _projection_statistic(spec, cfg, data, S, P):
    name = spec.statistic or competitors.default_statistic(data)
    func = _STAT_FUNCS.get(name)
    if func is None:
        raise ArgumentError(f"unknown statistic {name!r} in method {spec.name!r}")
    # statistic options (e.g. theta_tilde_mode for small-m binary runs)
    # pass through MethodSpec.options; defaults are the library's
    return func(data, S, P, alpha=cfg.alpha, **dict(spec.options))


def _run_method(spec, cfg, data, theta1, theta2, rng):
    S = cfg.hypothesis()
    if spec.kind == "basic":
        if cfg.family.kind == "gaussian":
            return competitors.basic_gaussian_f_test(data, S, alpha=cfg.alpha)
        return competitors.basic_proportion_test(data, S, alpha=cfg.alpha)
    if spec.kind == "posn":
        return competitors.position_bootstrap_test(
            data, S, p=spec.d, B=spec.B, alpha=cfg.alpha, rng=rng, **spec.options,
        )
    if spec.kind == "rand":
        return competitors.random_projection_test(
            data, S, d=spec.d, alpha=cfg.alpha, rng=rng, statistic=spec.statistic,
        )
    if spec.kind == "block":
        return competitors.block_projection_test(
            data, S, alpha=cfg.alpha, statistic=spec.statistic,
        )
    if spec.kind == "proj-rect":
        P = projlearn.learn_projections_rect(data, S, d=spec.d)
    elif spec.kind == "proj-impute":
        P = projlearn.learn_projections_impute(data, S, d=spec.d)
    else:
        P = _oracle_pair(theta1, theta2, S, spec.d)
    return _projection_statistic(spec, cfg, data, S, P)


def _one_replication(cfg, rep_seed):
    """All methods on one fresh dataset; returns per-method outcomes."""
    streams = rep_seed.spawn(len(cfg.methods) + 1)
    data_rng = np.random.default_rng(streams[0])
    data, theta1, theta2 = _generate(cfg, data_rng)
    if cfg.regime == "null":
        S = cfg.hypothesis()
        block = np.ix_(S.rows, S.cols)
        assert np.array_equal(theta1[block], theta2[block]), \
            "null regime must share the hypothesis-block parameters exactly"
    outcomes = {}
    for spec, stream in zip(cfg.methods, streams[1:]):
        rng = np.random.default_rng(stream)
        try:
            report = _run_method(spec, cfg, data, theta1, theta2, rng)
            outcomes[spec.name] = bool(report.reject)
        except MesonetError:
            outcomes[spec.name] = None
    return outcomes


def run_experiment(cfg, threads=1):
    """Run the scenario and tabulate rejection rates.

    Per-replication outcomes come from independent spawned seed streams
    and are reduced in replication order, so the table is identical for
    any thread count.  Method failures inside a replication are recorded
    in the ``failures`` column, not raised.
    """
    root = np.random.SeedSequence(cfg.seed)
    rep_seeds = root.spawn(cfg.reps)
    if threads is None or threads < 1:
        threads = 1
    if threads == 1:
        results = [_one_replication(cfg, s) for s in rep_seeds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: _one_replication(cfg, s), rep_seeds))
    rows = []
    for spec in cfg.methods:
        flags = [res[spec.name] for res in results]
        failures = sum(1 for f in flags if f is None)
        ok = [f for f in flags if f is not None]
        if ok:
            rate = sum(ok) / len(ok)
            se = math.sqrt(rate * (1.0 - rate) / len(ok))
        else:
            rate, se = float("nan"), float("nan")
        rows.append(RejectionRow(
            method=spec.name, m=cfg.m, d_or_p=spec.d, regime=cfg.regime,
            rate=rate, se=se, failures=failures,
        ))
    return RejectionTable(rows=tuple(rows), config=cfg)


# ---------------------------------------------------------------------------
# Artifact output: CSV table and run manifest.
# ---------------------------------------------------------------------------


def write_csv(table, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "m", "d_or_p", "regime", "rate", "se", "failures"])
        for r in table.rows:
            writer.writerow([
                r.method, r.m, "" if r.d_or_p is None else r.d_or_p,
                r.regime, repr(r.rate), repr(r.se), r.failures,
            ])


def manifest_dict(command, config_echo, seed):
    """Everything needed to reproduce a run: config echo, seed, versions."""
    return {
        "command": command,
        "config": config_echo,
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "mesonet": _pkg_version,
        },
        "conventions": {
            "perturbation_scale": "covariance scale c of the latent shift N(0, c*I)",
        },
    }


def write_manifest(path, command, config_echo, seed):
    with open(path, "w") as fh:
        json.dump(manifest_dict(command, config_echo, seed), fh, indent=2, sort_keys=True)
        fh.write("\n")
