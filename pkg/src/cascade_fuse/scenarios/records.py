"""Per-trial container shared by the simulators and the harness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class TrialRecord:
    """Truth, measurement streams and (optionally) estimator outputs.

    ``truth`` and ``measurements`` map names to arrays whose first axis is
    the time step. ``estimates`` maps an estimator name to ``(means, covs)``
    on the evaluation grid ``eval_steps``.
    """

    seed: int
    truth: dict
    measurements: dict
    eval_steps: np.ndarray
    estimates: dict = field(default_factory=dict)

    def add_estimate(self, name, means, covs):
        means = np.asarray(means, dtype=np.float64)
        covs = np.asarray(covs, dtype=np.float64)
        if means.shape[0] != self.eval_steps.shape[0]:
            raise ValueError("estimate length does not match the evaluation grid")
        self.estimates[name] = (means, covs)
