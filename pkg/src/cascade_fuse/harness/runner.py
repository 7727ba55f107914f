"""Monte Carlo runner.

Every estimator sees the same per-trial record, so comparisons are paired.
Per-trial results are folded into running sums in trial-index order, which
makes every output independent of how many workers produced them.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import CascadeFuseError
from ..filters.cascade import CascadeBelief, FeedingOutput, apply_psi, cascade_step
from ..filters.linear import (
    LinearFeeder,
    full_joint_step_arrays,
    linearized_correct_arrays,
    linearized_predict_arrays,
    spci_linear_arrays,
)
from ..gaussian import Gaussian
from ..scenarios.linear import simulate_linear_batch, toy_model
from ..seeding import trial_seed
from .config import RunConfig
from .metrics import NeesSeries, kl_gaussian_batch, nees_values
from .trials import run_nonlinear_trial

log = logging.getLogger(__name__)

FLAG_THRESHOLD = 0.01

_PV = ("px", "py", "pz", "vx", "vy", "vz")
_ATT = ("phix", "phiy", "phiz")
_GROUPS_PV = {"position": slice(0, 3), "velocity": slice(3, 6)}


class RunFailure(CascadeFuseError):
    """More than the tolerated share of trials were flagged."""


@dataclass(eq=False)
class EstimatorSummary:
    """Reduced statistics of one estimator over the unflagged trials."""

    name: str
    components: tuple
    eval_steps: np.ndarray
    nees: NeesSeries | None
    rmse: dict
    coverage: dict
    kl: np.ndarray | None = None
    deflations: np.ndarray | None = None
    error_rows: dict | None = None


@dataclass(eq=False)
class RunResult:
    config: RunConfig
    n_trials: int
    flagged: list = field(default_factory=list)
    estimators: dict = field(default_factory=dict)

    @property
    def n_used(self) -> int:
        return self.n_trials - len(self.flagged)

    @property
    def failed(self) -> bool:
        return len(self.flagged) > FLAG_THRESHOLD * self.n_trials

    def check(self):
        """Raise :class:`RunFailure` if too many trials were flagged."""
        if self.failed:
            raise RunFailure(
                f"{len(self.flagged)} of {self.n_trials} trials flagged "
                f"(limit {FLAG_THRESHOLD:.0%})"
            )
        return self

    def rmse_table(self) -> dict:
        return {name: s.rmse for name, s in self.estimators.items()}


class _Accumulator:
    """Running sums for one estimator.

    ``add`` takes errors ``(B, K, n)`` and covariances ``(B, K, n, n)`` or a
    covariance stack ``(K, n, n)`` shared by the whole batch.
    """

    def __init__(self, name, components, groups, eval_steps, stride, with_kl=False, n_defl=None):
        self.name = name
        self.components = tuple(components)
        self.groups = groups
        self.eval_steps = np.asarray(eval_steps)
        K, n = self.eval_steps.shape[0], len(self.components)
        self.nees_sum = np.zeros(K)
        self.sq = {g: 0.0 for g in groups}
        self.cover = np.zeros(n, dtype=np.int64)
        self.samples = 0
        self.trials = 0
        self.kl_sum = np.zeros(K) if with_kl else None
        self.defl_sum = None if n_defl is None else np.zeros(n_defl, dtype=np.int64)
        self.keep = np.arange(stride - 1, K, stride)
        self.rows = []

    def add(self, trial_ids, errors, covs, kl=None, deflations=None):
        e = np.asarray(errors, dtype=np.float64)
        self.nees_sum += nees_values(e, covs).sum(axis=0)
        for g, sl in self.groups.items():
            self.sq[g] += float(np.sum(e[..., sl] ** 2))
        sig = np.sqrt(np.diagonal(covs, axis1=-2, axis2=-1))
        sig = np.broadcast_to(sig, e.shape)
        self.cover += np.sum(np.abs(e) <= 3.0 * sig, axis=(0, 1))
        self.samples += e.shape[0] * e.shape[1]
        self.trials += e.shape[0]
        if kl is not None:
            self.kl_sum += np.sum(kl, axis=0)
        if deflations is not None:
            self.defl_sum += np.sum(deflations, axis=0)
        self.rows.append((np.asarray(trial_ids), e[:, self.keep], sig[:, self.keep]))

    def summary(self) -> EstimatorSummary:
        n = len(self.components)
        if self.trials == 0:
            return EstimatorSummary(self.name, self.components, self.eval_steps, None, {}, {})
        nees = NeesSeries.from_sums(self.nees_sum, n, self.trials)
        rmse = {g: float(np.sqrt(v / self.samples)) for g, v in self.sq.items()}
        coverage = dict(zip(self.components, (self.cover / self.samples).tolist()))
        ids = np.concatenate([r[0] for r in self.rows])
        err = np.concatenate([r[1] for r in self.rows])
        sig = np.concatenate([r[2] for r in self.rows])
        rows = {"trial": ids, "step": self.eval_steps[self.keep], "error": err, "sigma": sig}
        return EstimatorSummary(
            self.name,
            self.components,
            self.eval_steps,
            nees,
            rmse,
            coverage,
            None if self.kl_sum is None else self.kl_sum / self.trials,
            None if self.defl_sum is None else self.defl_sum / self.trials,
            rows,
        )


def run_monte_carlo(cfg: RunConfig) -> RunResult:
    """Run ``cfg.n_trials`` trials of ``cfg.scenario`` and reduce the metrics.

    Flagged trials (filter failures or non-finite estimates) are excluded
    from the statistics and listed in ``RunResult.flagged``; call
    :meth:`RunResult.check` to enforce the failure threshold.
    """
    if cfg.scenario == "linear":
        return _run_linear(cfg)
    if cfg.scenario == "nonlinear":
        return _run_nonlinear(cfg)
    raise ValueError("replay logs are processed by the replay command, not the Monte Carlo runner")


# ---------------------------------------------------------------- linear toy


def _run_linear(cfg: RunConfig) -> RunResult:
    lc = cfg.linear
    N, n = cfg.n_trials, lc.steps
    model = toy_model(lc)
    x1_true, _, y1, y2, seeds = simulate_linear_batch(lc, cfg.seed, N)
    steps = np.arange(1, n + 1)
    m0 = np.asarray(lc.init_means)
    v0 = np.asarray(lc.init_vars)

    # feeding filter: shared covariance, one mean per trial
    feeder = LinearFeeder(model, np.tile(m0[1:], (N, 1)), np.diag(v0[1:]), cfg.cooperative)
    f_mean = np.empty((n + 1, N, 1))
    f_cov = np.empty((n + 1, 1, 1))
    f_psi = [None] * (n + 1)
    f_mean[0], f_cov[0] = feeder.mean, feeder.cov
    for k in range(1, n + 1):
        f_psi[k] = feeder.step(y2[:, k - 1 : k])
        f_mean[k], f_cov[k] = feeder.mean, feeder.cov

    means, covs, defl = {}, {}, {}
    for name in cfg.estimators:
        means[name], covs[name], defl[name] = _linear_estimator(
            name, cfg, model, m0, v0, y1, y2, f_mean, f_cov, f_psi
        )

    result = RunResult(cfg, N)
    errors = {k: means[k] - x1_true[:, 1:, None] for k in means}
    bad = np.zeros(N, dtype=bool)
    for k in errors:
        bad |= ~np.all(np.isfinite(errors[k]), axis=(1, 2))
    for i in np.flatnonzero(bad):
        result.flagged.append({"trial": int(i), "seed": int(seeds[i]), "reason": "non-finite estimate"})
    ok = np.flatnonzero(~bad)
    ref = "full" if "full" in cfg.estimators else None
    for name in cfg.estimators:
        acc = _Accumulator(
            name, ("x1",), {"x1": slice(0, 1)}, steps, cfg.record_stride,
            with_kl=ref is not None, n_defl=n + 1 if defl[name] is not None else None,
        )
        c = covs[name]
        kl = None
        if ref is not None:
            kl = kl_gaussian_batch(means[name][ok], c if c.ndim == 3 else c[ok], means[ref][ok], covs[ref])
        d = None if defl[name] is None else defl[name][ok] if defl[name].ndim == 2 else np.tile(defl[name], (ok.size, 1))
        if ok.size:
            acc.add(ok, errors[name][ok], c if c.ndim == 3 else c[ok], kl, d)
        result.estimators[name] = acc.summary()
    return result


def _linear_estimator(name, cfg, model, m0, v0, y1, y2, f_mean, f_cov, f_psi):
    """Returns ``(means (N, K, 1), covs, deflations)`` of one estimator.

    Covariances are ``(K, 1, 1)`` when shared across trials.
    """
    N, n = y1.shape
    x = np.tile(m0[:1], (N, 1))
    P = np.array([[v0[0]]])
    out_m = np.empty((N, n, 1))
    out_P = np.empty((n, 1, 1))
    defl = None
    if name == "full":
        zm = np.tile(m0, (N, 1))
        zP = np.diag(v0)
        for k in range(1, n + 1):
            zm, zP = full_joint_step_arrays(zm, zP, model, y1[:, k - 1 : k], y2[:, k - 1 : k])
            out_m[:, k - 1], out_P[k - 1] = zm[:, :1], zP[:1, :1]
        return out_m, out_P, None
    if name == "proposed-lin":
        P12 = np.zeros((1, 1))
        defl = np.zeros(n + 1, dtype=np.int64)
        for k in range(1, n + 1):
            x, P, P12, c1 = linearized_predict_arrays(
                x, P, P12, f_mean[k - 1], f_cov[k - 1], model, cfg.beta
            )
            P12 = apply_psi(P12, f_psi[k] if f_psi[k] is not None else model.psi_hat)
            x, P, P12, c2 = linearized_correct_arrays(
                x, P, P12, f_mean[k], f_cov[k], y1[:, k - 1 : k], model, cfg.beta
            )
            defl[k] = c1 + c2
            out_m[:, k - 1], out_P[k - 1] = x, P
        return out_m, out_P, defl
    if name == "naive":
        z = np.zeros((1, 1))
        for k in range(1, n + 1):
            x, P, _, _ = linearized_predict_arrays(x, P, z, f_mean[k - 1], f_cov[k - 1], model)
            x, P, _, _ = linearized_correct_arrays(
                x, P, z, f_mean[k], f_cov[k], y1[:, k - 1 : k], model
            )
            out_m[:, k - 1], out_P[k - 1] = x, P
        return out_m, out_P, None
    if name == "spci":
        for k in range(1, n + 1):
            x, P = spci_linear_arrays(
                x, P, f_mean[k - 1], f_cov[k - 1], f_mean[k], f_cov[k],
                y1[:, k - 1 : k], model, cfg.spci_weight,
            )
            out_m[:, k - 1], out_P[k - 1] = x, P
        return out_m, out_P, None
    if name == "proposed-sp":
        return _linear_sigma_point(cfg, model, m0, v0, y1, f_mean, f_cov, f_psi)
    raise ValueError(f"unknown estimator {name!r}")


def _linear_sigma_point(cfg, model, m0, v0, y1, f_mean, f_cov, f_psi):
    """Generic sigma-point cascade, one trial at a time."""
    N, n = y1.shape
    cm = model.as_cascade_model()
    out_m = np.empty((N, n, 1))
    out_P = np.empty((N, n, 1, 1))
    defl = np.zeros((N, n + 1), dtype=np.int64)
    for i in range(N):
        belief = CascadeBelief(Gaussian.trusted(m0[:1], [[v0[0]]]), np.zeros((1, 1)))
        prev = FeedingOutput(Gaussian.trusted(f_mean[0, i], f_cov[0]), f_psi[0])
        for k in range(1, n + 1):
            now = FeedingOutput(Gaussian.trusted(f_mean[k, i], f_cov[k]), f_psi[k])
            before = belief.deflations
            belief = cascade_step(belief, prev, now, y1[i, k - 1 : k], cm, beta=cfg.beta)
            defl[i, k] = belief.deflations - before
            out_m[i, k - 1], out_P[i, k - 1] = belief.x1.mean, belief.x1.cov
            prev = now
    return out_m, out_P, defl


# ------------------------------------------------------------ rigid body


def _nonlinear_job(args):
    cfg, index = args
    seed = trial_seed(cfg.seed, index)
    try:
        res = run_nonlinear_trial(
            cfg.nonlinear, index, seed, cfg.estimators, cfg.spci_weight, cfg.beta, cfg.cooperative
        )
    except (CascadeFuseError, np.linalg.LinAlgError) as exc:
        return index, seed, None, f"{type(exc).__name__}: {exc}"
    for name, tr in res.traces.items():
        if not (np.all(np.isfinite(tr.errors)) and np.all(np.isfinite(tr.covs))):
            return index, seed, None, f"non-finite estimate ({name})"
    return index, seed, res, None


def _trial_results(cfg: RunConfig):
    jobs = ((cfg, i) for i in range(cfg.n_trials))
    if cfg.workers == 1:
        yield from map(_nonlinear_job, jobs)
        return
    # map() yields in submission order, so reduction stays index-ordered
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        yield from pool.map(_nonlinear_job, jobs, chunksize=1)


def _run_nonlinear(cfg: RunConfig) -> RunResult:
    nl = cfg.nonlinear
    steps = nl.uwb_steps()
    result = RunResult(cfg, cfg.n_trials)
    has_full = "full" in cfg.estimators
    accs = {}
    for name in cfg.estimators:
        if name == "full":
            accs[name] = _Accumulator(
                name, _PV + _ATT, {**_GROUPS_PV, "attitude": slice(6, 9)}, steps, cfg.record_stride
            )
        else:
            accs[name] = _Accumulator(
                name, _PV, _GROUPS_PV, steps, cfg.record_stride, with_kl=has_full,
                n_defl=nl.n_steps + 1 if name == "proposed-sp" else None,
            )
    accs["ahrs"] = _Accumulator("ahrs", _ATT, {"attitude": slice(0, 3)}, steps, cfg.record_stride)

    for index, seed, res, reason in _trial_results(cfg):
        if res is None:
            log.warning("trial %d flagged: %s", index, reason)
            result.flagged.append({"trial": index, "seed": seed, "reason": reason})
            continue
        ids = np.array([index])
        for name, tr in res.traces.items():
            kl = None
            if has_full and name != "full":
                full = res.traces["full"]
                kl = kl_gaussian_batch(tr.means, tr.covs, full.means, full.covs[:, :6, :6])[None]
            d = None if tr.deflations is None else tr.deflations[None]
            accs[name].add(ids, tr.errors[None], tr.covs[None], kl, d)
        att_e, att_P = res.attitude["ahrs"]
        accs["ahrs"].add(ids, att_e[None], att_P[None])

    for name, acc in accs.items():
        result.estimators[name] = acc.summary()
    return result
