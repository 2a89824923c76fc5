"""Domain types: observed panels, the six model variants, and chain state.

The hierarchy for a two-source variant is

    y[i,j] | th[i,j]          ~ N(th[i,j], v[i,j])        (v fixed, known)
    th[i,j] | mu[i], ...      ~ N(mu[i], a[i,j])
    mu[i] | eta, ...          ~ N(eta, lam_i[i] * tau2_sq)
    eta                       ~ flat

where the source-level variance a[i,j] depends on the variant:

    m11a/m11b   a = lam_ij * lam_i * tau1_sq     ("product" form)
    m1a/m1b     a = lam_ij * tau1_sq             ("source" form)
    m12         a = tau1_sq, lam_ij = lam_i = 1  ("unit" form)

m11a/m1a put the squared-half-Cauchy (horseshoe) law on the local
variances; m11b/m1b use the exponential (lasso) law. All variants keep
the horseshoe law on the global variances tau1_sq and tau2_sq. The
one-source variant drops the th level entirely:

    y[i] | mu[i] ~ N(mu[i], v[i]),  mu[i] | eta ~ N(eta, lam_i * tau2_sq)

with horseshoe laws on lam_i and tau2_sq (tau2_sq playing the single
global variance).

SourcePanel and ModelVariant are immutable and shareable across workers;
a ChainState is owned by exactly one chain.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from .rng import RngStream

VARIANT_TAGS = ("m11a", "m11b", "m1a", "m1b", "m12", "one_source")

_LOCAL_PRIOR = {
    "m11a": "horseshoe",
    "m11b": "lasso",
    "m1a": "horseshoe",
    "m1b": "lasso",
    "m12": "unit",
    "one_source": "horseshoe",
}
_THETA_FORM = {
    "m11a": "product",
    "m11b": "product",
    "m1a": "source",
    "m1b": "source",
    "m12": "unit",
    "one_source": "none",
}


@dataclass(frozen=True)
class ModelVariant:
    """One of the six model variants, with its derived structure."""

    tag: str

    def __post_init__(self):
        if self.tag not in VARIANT_TAGS:
            raise ValueError(f"unknown variant tag {self.tag!r}; expected one of {VARIANT_TAGS}")

    @property
    def local_prior(self) -> str:
        """Law on the local variances: horseshoe | lasso | unit."""
        return _LOCAL_PRIOR[self.tag]

    @property
    def theta_variance_form(self) -> str:
        """Source-level variance structure: product | source | unit | none."""
        return _THETA_FORM[self.tag]

    @property
    def has_theta_level(self) -> bool:
        return self.tag != "one_source"

    @property
    def has_local_ij(self) -> bool:
        """Whether lam_ij exists as a sampled quantity."""
        return self.theta_variance_form in ("product", "source")

    @property
    def updates_lambda_i(self) -> bool:
        """lam_i is sampled for every variant except the unit form."""
        return self.tag != "m12"


def variant(tag: str) -> ModelVariant:
    """Variant factory accepting CLI spellings (``one-source`` == ``one_source``)."""
    return ModelVariant(tag.strip().lower().replace("-", "_"))


@dataclass(frozen=True)
class SourcePanel:
    """Observed per-area, per-source point estimates and sampling variances.

    ``y`` and ``v`` are (I, J) arrays on the proportion scale; ``v`` holds
    fixed, known sampling variances. No missing cells.
    """

    areas: tuple[str, ...]
    sources: tuple[str, ...]
    y: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        v = np.array(self.v, dtype=float)
        y.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "areas", tuple(str(a) for a in self.areas))
        object.__setattr__(self, "sources", tuple(str(s) for s in self.sources))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "v", v)

    @property
    def n_areas(self) -> int:
        return len(self.areas)

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    def select_source(self, j: int) -> "SourcePanel":
        """Single-source view (columns j), used by the one-source variant."""
        return SourcePanel(self.areas, (self.sources[j],), self.y[:, [j]], self.v[:, [j]])


@dataclass(frozen=True)
class PanelViolation:
    code: str
    where: tuple | None
    message: str


@dataclass(frozen=True)
class PanelReport:
    violations: tuple[PanelViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_panel(panel: SourcePanel) -> PanelReport:
    """Check every panel invariant; the report lists all violations found."""
    bad: list[PanelViolation] = []
    y, v = panel.y, panel.v
    if y.ndim != 2 or v.ndim != 2 or y.shape != v.shape:
        bad.append(PanelViolation("shape", None, f"y {y.shape} and v {v.shape} must be equal 2-d shapes"))
        return PanelReport(tuple(bad))
    I, J = y.shape
    if I != len(panel.areas) or J != len(panel.sources):
        bad.append(PanelViolation("labels", None, "area/source labels do not match matrix dimensions"))
    if I < 2:
        bad.append(PanelViolation("too_few_areas", None, f"need at least 2 areas, got {I}"))
    if J < 1:
        bad.append(PanelViolation("no_sources", None, "need at least 1 source"))
    if len(set(panel.areas)) != len(panel.areas):
        bad.append(PanelViolation("duplicate_area", None, "duplicate area ids"))
    if len(set(panel.sources)) != len(panel.sources):
        bad.append(PanelViolation("duplicate_source", None, "duplicate source ids"))
    for i in range(I):
        for j in range(J):
            if not np.isfinite(y[i, j]):
                bad.append(PanelViolation("nonfinite_estimate", (i, j), f"estimate at {(i, j)} is not finite"))
            if not np.isfinite(v[i, j]) or v[i, j] <= 0:
                bad.append(PanelViolation("nonpositive_variance", (i, j), f"sampling variance at {(i, j)} must be > 0"))
    return PanelReport(tuple(bad))


@dataclass
class ChainState:
    """Full latent state of one Gibbs chain.

    Variance fields are strictly positive. For m12 the local variances are
    fixed at 1 and never updated; for one_source the th level is absent
    (``theta`` and ``lambda_ij`` are None) and ``tau2_sq`` plays the single
    global variance. ``xi_*`` are the inverse-gamma mixing variables, present
    only for horseshoe-distributed variances.
    """

    mu: np.ndarray
    eta: float
    lambda_i: np.ndarray
    tau1_sq: float
    tau2_sq: float
    theta: np.ndarray | None = None
    lambda_ij: np.ndarray | None = None
    xi_ij: np.ndarray | None = None
    xi_i: np.ndarray | None = None
    xi_tau1: float | None = None
    xi_tau2: float = 1.0

    def copy(self) -> "ChainState":
        def cp(a):
            return None if a is None else np.array(a, dtype=float)

        return ChainState(
            mu=cp(self.mu),
            eta=float(self.eta),
            lambda_i=cp(self.lambda_i),
            tau1_sq=float(self.tau1_sq),
            tau2_sq=float(self.tau2_sq),
            theta=cp(self.theta),
            lambda_ij=cp(self.lambda_ij),
            xi_ij=cp(self.xi_ij),
            xi_i=cp(self.xi_i),
            xi_tau1=None if self.xi_tau1 is None else float(self.xi_tau1),
            xi_tau2=float(self.xi_tau2),
        )

    def to_payload(self) -> dict[str, Any]:
        """JSON-safe dict; floats survive the round trip bit-exactly."""
        def enc(a):
            return None if a is None else np.asarray(a, dtype=float).tolist()

        return {
            "mu": enc(self.mu),
            "eta": float(self.eta),
            "lambda_i": enc(self.lambda_i),
            "tau1_sq": float(self.tau1_sq),
            "tau2_sq": float(self.tau2_sq),
            "theta": enc(self.theta),
            "lambda_ij": enc(self.lambda_ij),
            "xi_ij": enc(self.xi_ij),
            "xi_i": enc(self.xi_i),
            "xi_tau1": None if self.xi_tau1 is None else float(self.xi_tau1),
            "xi_tau2": float(self.xi_tau2),
        }

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "ChainState":
        def dec(a):
            return None if a is None else np.array(a, dtype=float)

        return cls(
            mu=dec(payload["mu"]),
            eta=float(payload["eta"]),
            lambda_i=dec(payload["lambda_i"]),
            tau1_sq=float(payload["tau1_sq"]),
            tau2_sq=float(payload["tau2_sq"]),
            theta=dec(payload["theta"]),
            lambda_ij=dec(payload["lambda_ij"]),
            xi_ij=dec(payload["xi_ij"]),
            xi_i=dec(payload["xi_i"]),
            xi_tau1=payload["xi_tau1"] if payload["xi_tau1"] is None else float(payload["xi_tau1"]),
            xi_tau2=float(payload["xi_tau2"]),
        )


MONITORABLE = frozenset({"mu", "theta", "phi", "variances", "eta"})


@dataclass(frozen=True)
class SamplerSettings:
    """Gibbs run configuration.

    Defaults follow the point-estimation protocol (one chain of 18000
    sweeps, 3000 burn-in); :meth:`diagnostics_protocol` gives the
    convergence-check protocol (five chains of 7000 with 2000 burn-in).
    """

    seed: int
    n_iter: int = 18000
    n_burnin: int = 3000
    n_chains: int = 1
    thin: int = 1
    monitor: frozenset[str] = frozenset({"mu", "eta", "variances", "phi"})

    def __post_init__(self):
        if self.n_iter <= 0 or self.n_chains <= 0 or self.thin <= 0:
            raise ValueError("n_iter, n_chains and thin must be positive")
        if not 0 <= self.n_burnin < self.n_iter:
            raise ValueError("need 0 <= n_burnin < n_iter")
        unknown = set(self.monitor) - MONITORABLE
        if unknown:
            raise ValueError(f"unknown monitored quantities: {sorted(unknown)}")
        object.__setattr__(self, "monitor", frozenset(self.monitor))

    @property
    def n_kept(self) -> int:
        return (self.n_iter - self.n_burnin + self.thin - 1) // self.thin

    @classmethod
    def diagnostics_protocol(cls, seed: int, monitor=frozenset({"mu"})) -> "SamplerSettings":
        return cls(seed=seed, n_iter=7000, n_burnin=2000, n_chains=5, thin=1, monitor=monitor)

    def with_(self, **kw) -> "SamplerSettings":
        return replace(self, **kw)


def init_state(
    panel: SourcePanel,
    model: ModelVariant,
    overdispersion: float,
    rng: RngStream,
) -> ChainState:
    """Data-anchored starting state.

    th starts at the observations, mu at the precision-weighted source
    mean per area, eta at the mean of mu; all variances start at 1. A
    positive ``overdispersion`` adds N(0, overdispersion^2) jitter to mu
    and eta so that multiple chains start dispersed (split-R-hat protocol).
    """
    if overdispersion < 0:
        raise ValueError("overdispersion must be >= 0")
    y, v = panel.y, panel.v
    I, J = y.shape
    w = 1.0 / v
    mu = (y * w).sum(axis=1) / w.sum(axis=1)
    eta = float(mu.mean())
    if overdispersion > 0:
        gen = rng.generator
        mu = mu + gen.normal(0.0, overdispersion, size=I)
        eta = eta + float(gen.normal(0.0, overdispersion))

    horseshoe_local = model.local_prior == "horseshoe"
    if model.has_theta_level:
        theta = y.copy()
        lambda_ij = np.ones((I, J))
        xi_ij = np.ones((I, J)) if (horseshoe_local and model.has_local_ij) else None
        xi_tau1 = 1.0
    else:
        if J != 1:
            raise ValueError("one_source needs a single-source panel; use SourcePanel.select_source")
        theta = None
        lambda_ij = None
        xi_ij = None
        xi_tau1 = None

    return ChainState(
        mu=mu,
        eta=eta,
        lambda_i=np.ones(I),
        tau1_sq=1.0,
        tau2_sq=1.0,
        theta=theta,
        lambda_ij=lambda_ij,
        xi_ij=xi_ij,
        xi_i=np.ones(I) if (horseshoe_local and model.updates_lambda_i) else None,
        xi_tau1=xi_tau1,
        xi_tau2=1.0,
    )
