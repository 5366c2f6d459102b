"""Cumulative-link ordinal regression of SRH on encoded features.

Model: P(Y <= k | x) = F(tau_k + x.beta), k = 1..4 over the five ordered
categories, with shared coefficients across thresholds and F the logistic
or standard-normal CDF. Because the latent construction behind this form is
Y* = -x.beta - eps, a positive coefficient *lowers* the latent score and
pushes mass toward better (lower-code) SRH; `summarize` therefore reports
effects on the latent worse-health scale, i.e. -beta.

Thresholds are parameterized as tau_1 = a, tau_{k+1} = tau_k + exp(s_k),
which keeps them strictly increasing without constrained optimization. The
fit is a Newton ascent on the weighted log-likelihood with backtracking
line search and a gradient-ascent fallback.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit, ndtr, ndtri

from .encoding import EncodingSchema, encode_frame
from .errors import Nonconvergence, SeparationWarning
from .population import N_SRH, SrhDistribution, srh_code

logger = logging.getLogger(__name__)

N_THRESH = N_SRH - 1
# Survey tokens treated as non-responses and dropped on ingest.
NON_RESPONSE_TOKENS = {"", "dk", "don't know", "dont know", "refusal", "refused", "na"}


class _Logit:
    name = "logit"

    @staticmethod
    def cdf(z):
        return expit(z)

    @staticmethod
    def pdf(z):
        p = expit(z)
        return p * (1.0 - p)

    @staticmethod
    def dpdf(z):
        p = expit(z)
        return p * (1.0 - p) * (1.0 - 2.0 * p)

    @staticmethod
    def ppf(q):
        q = np.asarray(q, dtype=float)
        return np.log(q / (1.0 - q))


class _Probit:
    name = "probit"

    @staticmethod
    def cdf(z):
        return ndtr(z)

    @staticmethod
    def pdf(z):
        return np.exp(-0.5 * np.square(z)) / np.sqrt(2.0 * np.pi)

    @staticmethod
    def dpdf(z):
        return -z * _Probit.pdf(z)

    @staticmethod
    def ppf(q):
        return ndtri(q)


LINKS = {"logit": _Logit, "probit": _Probit}


@dataclass(frozen=True, eq=False)
class OrdinalModel:
    """Fitted coefficients, monotone thresholds and the link choice."""

    beta: np.ndarray
    thresholds: np.ndarray
    link: str = "logit"
    schema_fingerprint: str = ""
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        tau = np.asarray(self.thresholds, dtype=float).ravel()
        if tau.shape != (N_THRESH,):
            raise ValueError(f"need {N_THRESH} thresholds, got {tau.shape}")
        if not np.all(np.diff(tau) > 0):
            raise ValueError(f"thresholds not strictly increasing: {tau}")
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}")
        if self.feature_names and len(self.feature_names) != beta.size:
            raise ValueError("feature_names length does not match beta")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "thresholds", tau)

    def to_json(self) -> str:
        return json.dumps(
            {
                "link": self.link,
                "beta": self.beta.tolist(),
                "thresholds": self.thresholds.tolist(),
                "schema_fingerprint": self.schema_fingerprint,
                "feature_names": list(self.feature_names),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "OrdinalModel":
        doc = json.loads(text)
        return cls(
            beta=np.asarray(doc["beta"], dtype=float),
            thresholds=np.asarray(doc["thresholds"], dtype=float),
            link=doc["link"],
            schema_fingerprint=doc.get("schema_fingerprint", ""),
            feature_names=tuple(doc.get("feature_names", ())),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "OrdinalModel":
        return cls.from_json(Path(path).read_text())


@dataclass
class TrainingSet:
    """Encoded rows (X), SRH codes 0..4 (y) and non-negative weights."""

    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int).ravel()
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ValueError("X and y shapes disagree")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= N_SRH):
            raise ValueError("labels outside 0..4")
        if self.weights is None:
            self.weights = np.ones(self.y.size)
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.weights.size != self.y.size:
            raise ValueError("weights length does not match y")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("weights must be finite and non-negative")
        if self.y.size:
            present = set(np.unique(self.y[self.weights > 0]))
            if 0 not in present or (N_SRH - 1) not in present:
                raise ValueError(
                    "need observations in the lowest and highest categories;"
                    " thresholds are unidentifiable otherwise"
                )

    @property
    def n(self) -> int:
        return self.y.size


# -- parameter packing --------------------------------------------------------
# theta = [beta (p), a, s_1, s_2, s_3] with tau = a + cumsum([0, exp(s)]).

def pack_params(beta: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    tau = np.asarray(thresholds, dtype=float)
    s = np.log(np.diff(tau))
    return np.concatenate([np.asarray(beta, dtype=float).ravel(), tau[:1], s])


def unpack_thresholds(theta: np.ndarray, n_features: int) -> np.ndarray:
    a = theta[n_features]
    s = theta[n_features + 1 :]
    return a + np.concatenate([[0.0], np.cumsum(np.exp(s))])


def _threshold_jacobian(theta: np.ndarray, n_features: int) -> np.ndarray:
    """d tau / d (a, s): J[k, 0] = 1, J[k, 1+m] = exp(s_m) for k >= m+1."""
    s = theta[n_features + 1 :]
    J = np.zeros((N_THRESH, N_THRESH))
    J[:, 0] = 1.0
    es = np.exp(s)
    for m in range(N_THRESH - 1):
        J[m + 1 :, m + 1] = es[m]
    return J


# -- probabilities -----------------------------------------------------------

def cumulative_prob(model: OrdinalModel, x, k: int) -> float:
    """P(Y <= k | x) for k in 1..4."""
    if not 1 <= k <= N_THRESH:
        raise ValueError(f"k must be in 1..{N_THRESH}")
    link = LINKS[model.link]
    eta = float(np.dot(np.asarray(x, dtype=float), model.beta))
    return float(link.cdf(model.thresholds[k - 1] + eta))


def predict_proba_batch(model: OrdinalModel, X: np.ndarray) -> np.ndarray:
    """(n, 5) category probabilities; rows are valid distributions."""
    link = LINKS[model.link]
    X = np.atleast_2d(np.asarray(X, dtype=float))
    eta = X @ model.beta
    cum = link.cdf(model.thresholds[None, :] + eta[:, None])
    probs = np.diff(np.concatenate(
        [np.zeros((len(eta), 1)), cum, np.ones((len(eta), 1))], axis=1), axis=1)
    np.clip(probs, 0.0, None, out=probs)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs


def predict_proba(model: OrdinalModel, x) -> SrhDistribution:
    return SrhDistribution.from_array(predict_proba_batch(model, np.asarray(x))[0])


# -- likelihood, gradient, Hessian -------------------------------------------

def _eval(theta, X, y, w, link, ridge=0.0, want_hessian=False):
    """Weighted log-likelihood, gradient, and optionally the Hessian, in
    the unconstrained (beta, a, s) parameterization."""
    n, p = X.shape
    beta = theta[:p]
    tau = unpack_thresholds(theta, p)
    eta = X @ beta

    upper = np.where(y < N_SRH - 1, tau[np.minimum(y, N_THRESH - 1)] + eta, np.inf)
    lower = np.where(y > 0, tau[np.maximum(y - 1, 0)] + eta, -np.inf)
    F_u = np.where(np.isinf(upper), 1.0, link.cdf(np.where(np.isinf(upper), 0.0, upper)))
    F_l = np.where(np.isinf(lower), 0.0, link.cdf(np.where(np.isinf(lower), 0.0, lower)))
    f_u = np.where(np.isinf(upper), 0.0, link.pdf(np.where(np.isinf(upper), 0.0, upper)))
    f_l = np.where(np.isinf(lower), 0.0, link.pdf(np.where(np.isinf(lower), 0.0, lower)))

    prob = F_u - F_l
    tiny = prob < 1e-300
    if tiny.any():
        logger.warning("clamped %d underflowing category probabilities", int(tiny.sum()))
        prob = np.maximum(prob, 1e-300)

    ll = float(w @ np.log(prob))

    q = (f_u - f_l) / prob
    grad_beta = X.T @ (w * q)
    grad_tau = np.zeros(N_THRESH)
    for k in range(N_THRESH):
        up_mask = y == k          # tau_k is this obs's upper threshold
        lo_mask = y == k + 1      # tau_k is this obs's lower threshold
        grad_tau[k] = np.sum(w[up_mask] * f_u[up_mask] / prob[up_mask]) - np.sum(
            w[lo_mask] * f_l[lo_mask] / prob[lo_mask]
        )
    J = _threshold_jacobian(theta, p)
    grad = np.concatenate([grad_beta, J.T @ grad_tau])

    if ridge:
        ll -= 0.5 * ridge * float(beta @ beta)
        grad[:p] -= ridge * beta

    if not want_hessian:
        return ll, grad, None

    df_u = np.where(np.isinf(upper), 0.0, link.dpdf(np.where(np.isinf(upper), 0.0, upper)))
    df_l = np.where(np.isinf(lower), 0.0, link.dpdf(np.where(np.isinf(lower), 0.0, lower)))

    # d2 ll / d eta2
    h_eta = (df_u - df_l) / prob - np.square(q)
    H_bb = X.T @ (X * (w * h_eta)[:, None])

    H_bt = np.zeros((p, N_THRESH))
    H_tt = np.zeros((N_THRESH, N_THRESH))
    au = f_u / prob
    al = f_l / prob
    for k in range(N_THRESH):
        up = y == k
        lo = y == k + 1
        # cross eta-tau_k
        c_up = df_u[up] / prob[up] - q[up] * au[up]
        c_lo = -df_l[lo] / prob[lo] + q[lo] * al[lo]
        H_bt[:, k] = X[up].T @ (w[up] * c_up) + X[lo].T @ (w[lo] * c_lo)
        # tau_k as upper threshold: d2/dTu2; as lower: d2/dTl2
        H_tt[k, k] = np.sum(w[up] * (df_u[up] / prob[up] - np.square(au[up]))) + np.sum(
            w[lo] * (-df_l[lo] / prob[lo] - np.square(al[lo]))
        )
        # cross tau_k (upper) with tau_{k-1} (lower) for obs with y == k
        if k >= 1:
            both = up & (y >= 1)
            cross = np.sum(w[both] * au[both] * al[both])
            H_tt[k, k - 1] += cross
            H_tt[k - 1, k] += cross

    # chain rule into (a, s); second-derivative term of tau wrt s is diagonal
    H_as = J.T @ H_tt @ J
    s = theta[p + 1 :]
    es = np.exp(s)
    for m in range(N_THRESH - 1):
        H_as[m + 1, m + 1] += es[m] * np.sum(grad_tau[m + 1 :])
    H = np.zeros((p + N_THRESH, p + N_THRESH))
    H[:p, :p] = H_bb
    H[:p, p:] = H_bt @ J
    H[p:, :p] = H[:p, p:].T
    H[p:, p:] = H_as
    if ridge:
        H[:p, :p] -= ridge * np.eye(p)
    return ll, grad, H


def log_likelihood(model: OrdinalModel, data: TrainingSet) -> float:
    """Weighted multinomial log-likelihood of the data under the model."""
    if data.n == 0:
        return 0.0
    theta = pack_params(model.beta, model.thresholds)
    ll, _, _ = _eval(theta, data.X, data.y, data.weights, LINKS[model.link])
    return ll


def gradient(model: OrdinalModel, data: TrainingSet) -> np.ndarray:
    """Analytic gradient over (beta, a, s_1..s_3), the unconstrained params."""
    if data.n == 0:
        return np.zeros(model.beta.size + N_THRESH)
    theta = pack_params(model.beta, model.thresholds)
    _, grad, _ = _eval(theta, data.X, data.y, data.weights, LINKS[model.link])
    return grad


def _start_params(data: TrainingSet, link) -> np.ndarray:
    p = data.X.shape[1]
    counts = np.bincount(data.y, weights=data.weights, minlength=N_SRH)
    shares = counts / counts.sum()
    cum = np.clip(np.cumsum(shares)[:N_THRESH], 1e-6, 1.0 - 1e-6)
    cum = np.maximum.accumulate(cum + 1e-9 * np.arange(N_THRESH))  # break ties
    tau = link.ppf(cum)
    diffs = np.maximum(np.diff(tau), 1e-6)
    s = np.log(diffs)
    return np.concatenate([np.zeros(p), tau[:1], s])


def fit(
    data: TrainingSet,
    link: str = "logit",
    tol: float = 1e-8,
    max_iter: int = 500,
    ridge: float = 0.0,
    schema: EncodingSchema | None = None,
) -> OrdinalModel:
    """Maximize the weighted log-likelihood by Newton ascent.

    Converges when the gradient max-norm drops below `tol`; raises
    Nonconvergence after `max_iter` iterations. Warns (SeparationWarning)
    when any coefficient exceeds 30 in absolute value.
    """
    link_impl = LINKS[link]
    X, y, w = data.X, data.y, data.weights
    p_full = X.shape[1]
    # constant columns (never or always active) are unidentifiable; fit
    # without them and report a zero coefficient
    col_min, col_max = (X.min(axis=0), X.max(axis=0)) if data.n else (np.zeros(p_full),) * 2
    active = col_min != col_max
    if not active.all():
        warnings.warn(
            f"{int((~active).sum())} constant feature columns excluded from the fit"
            " (coefficients reported as 0)",
            SeparationWarning,
            stacklevel=2,
        )
        X = X[:, active]
    p = X.shape[1]
    theta = _start_params(TrainingSet(X=X, y=y, weights=w), link_impl)
    ll, grad, H = _eval(theta, X, y, w, link_impl, ridge, want_hessian=True)

    for _ in range(max_iter):
        gnorm = np.max(np.abs(grad))
        if gnorm < tol:
            break
        step = _ascent_direction(H, grad)
        if step is None:
            step = grad / max(1.0, np.max(np.abs(grad)))  # ascent fallback
        t, slope = 1.0, float(grad @ step)
        for _ in range(60):
            cand = theta + t * step
            ll_new, grad_new, H_new = _eval(cand, X, y, w, link_impl, ridge, want_hessian=True)
            # near the optimum the likelihood gain sinks below float resolution;
            # a halved gradient norm is then the meaningful progress signal
            sufficient = ll_new >= ll + 1e-4 * t * slope
            norm_drop = np.max(np.abs(grad_new)) <= 0.5 * gnorm and ll_new >= ll - 1e-9 * max(
                1.0, abs(ll)
            )
            if sufficient or norm_drop:
                theta, ll, grad, H = cand, ll_new, grad_new, H_new
                break
            t *= 0.5
        else:
            raise Nonconvergence(
                f"line search stalled at gradient max-norm {np.max(np.abs(grad)):.3e}"
            )
    else:
        raise Nonconvergence(
            f"gradient max-norm {np.max(np.abs(grad)):.3e} after {max_iter} iterations"
        )

    beta = np.zeros(p_full)
    beta[active] = theta[:p]
    if np.any(np.abs(beta) > 30):
        warnings.warn(
            "coefficient magnitude exceeds 30; data may be quasi-separated",
            SeparationWarning,
            stacklevel=2,
        )
    return OrdinalModel(
        beta=beta,
        thresholds=unpack_thresholds(theta, p),
        link=link,
        schema_fingerprint=schema.fingerprint() if schema else "",
        feature_names=schema.feature_names() if schema else (),
    )


def _ascent_direction(H: np.ndarray, grad: np.ndarray) -> np.ndarray | None:
    """Newton direction, Levenberg-damped until it points uphill."""
    scale = max(float(np.max(np.abs(np.diag(H)))), 1.0)
    for damp in (0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0):
        try:
            step = np.linalg.solve(H - damp * scale * np.eye(len(grad)), -grad)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(step)) and float(grad @ step) > 0:
            return step
    return None


# -- sampling and reporting -----------------------------------------------------

def sample_category(model: OrdinalModel, x, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of an SRH code from the predicted distribution."""
    probs = predict_proba_batch(model, np.asarray(x))[0]
    return int(np.searchsorted(np.cumsum(probs), rng.random(), side="left"))


def sample_categories(model: OrdinalModel, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    probs = predict_proba_batch(model, X)
    cum = np.cumsum(probs, axis=1)
    u = rng.random(len(cum))
    return (cum < u[:, None]).sum(axis=1).astype(np.int8)


@dataclass(frozen=True)
class FeatureEffect:
    feature: str
    coefficient: float
    latent_effect: float  # effect on the latent worse-health scale (= -coef)
    direction: str  # "worse" | "better" | "none"


def summarize(model: OrdinalModel) -> list[FeatureEffect]:
    """Per-feature effects sorted by magnitude, largest first.

    A positive latent effect shifts mass toward higher (worse) SRH codes.
    """
    names = model.feature_names or tuple(f"x{i}" for i in range(model.beta.size))
    effects = []
    for name, coef in zip(names, model.beta):
        latent = -float(coef)
        direction = "none" if latent == 0 else ("worse" if latent > 0 else "better")
        effects.append(FeatureEffect(name, float(coef), latent, direction))
    return sorted(effects, key=lambda e: (-abs(e.latent_effect), e.feature))


# -- training CSV ingest ----------------------------------------------------------

TRAINING_COLUMNS = ("age", "sex", "marital_status", "economic_status", "education", "region")


def load_training_csv(path, schema: EncodingSchema) -> TrainingSet:
    """Read a survey-shaped CSV (six predictors + `srh` label column).

    Non-response rows ("Don't know" / refusals / blank) are dropped.
    An optional `weight` column is honoured.
    """
    df = pd.read_csv(Path(path))
    missing = (set(TRAINING_COLUMNS) | {"srh"}) - set(df.columns)
    if missing:
        raise ValueError(f"training CSV missing columns {sorted(missing)}")
    raw = df["srh"].astype(str).str.strip()
    keep = ~raw.str.lower().isin(NON_RESPONSE_TOKENS)
    dropped = int((~keep).sum())
    if dropped:
        logger.info("dropped %d non-response rows on ingest", dropped)
    df = df.loc[keep].reset_index(drop=True)
    y = np.array([srh_code(v) for v in df["srh"]])
    X = encode_frame(df, df["region"], schema)
    weights = df["weight"].to_numpy(float) if "weight" in df.columns else None
    return TrainingSet(X=X, y=y, weights=weights)
