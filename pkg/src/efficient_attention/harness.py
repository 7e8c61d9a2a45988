"""Synthetic single-head attention model and the three experiment runners.

The model follows the usual factorization: embeddings ``E`` (d_s x d),
values ``V = E W_V``, output projection ``H`` and ``T = V H``.  Attention
is ``softmax(Q K' / sqrt(d_q))`` with ``Q = E W_q`` and ``K = E W_k``.  The
decoder mean-pools the rows of ``A T``, applies an affine map and a
logistic, giving one scalar prediction per sample.

Weights are fixed random draws, never trained.  Entries are standard
normal draws scaled by ``1/sqrt(fan_in)`` (embeddings and the decoder bias
are unscaled), which keeps attention scores at unit variance; without the
scaling the softmax saturates to machine-precision one-hot rows.

Randomness comes from numpy's ``Generator`` with the PCG64 bit generator.
Sample ``i`` of an experiment seeded with ``s`` uses the 64-bit seed
``SeedSequence([s, i]).generate_state(1, uint64)[0]``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .adversarial import complement_attention, generate_adversarial
from .core import efficient_attention
from .linalg import DEFAULT_TOLERANCE, Tolerance
from .metrics import (
    GROUND_METRIC,
    L2_SCALED_NORMALIZER,
    compare_predictions,
    l2_rel,
    mean_wasserstein_matrices,
    wasserstein1_predictions,
)

__all__ = [
    "PRNG_NAME",
    "ModelParams",
    "SampleOutcome",
    "ExperimentConfig",
    "ExperimentReport",
    "sample_seed",
    "synth_model",
    "forward",
    "decode",
    "softmax_rows",
    "run_experiment1",
    "run_experiment2",
    "run_experiment3",
    "experiment3_sample",
    "random_dims",
    "METRIC_NAMES",
]

PRNG_NAME = "numpy.random.Generator(PCG64)"
METRIC_NAMES = ("wasserstein", "rmse", "r2", "l2_rel", "l2_scaled", "mean_row_wasserstein")
DISTINCT_EFF = 1e-3
DISTINCT_PRED = 1e-6


@dataclass(frozen=True)
class ModelParams:
    d_s: int
    d: int
    d_v: int
    d_q: int
    e: np.ndarray = field(repr=False)
    w_v: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    w_q: np.ndarray = field(repr=False)
    w_k: np.ndarray = field(repr=False)
    decoder_w: np.ndarray = field(repr=False)
    decoder_b: float = 0.0
    seed: int = 0

    def __post_init__(self):
        shapes = {
            "e": (self.d_s, self.d),
            "w_v": (self.d, self.d_v),
            "h": (self.d_v, self.d),
            "w_q": (self.d, self.d_q),
            "w_k": (self.d, self.d_q),
            "decoder_w": (self.d,),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def t(self) -> np.ndarray:
        return self.e @ self.w_v @ self.h


@dataclass(frozen=True)
class SampleOutcome:
    a: np.ndarray
    t: np.ndarray
    prediction: float


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def synth_model(d_s: int, d: int, d_v: int, d_q: int, seed: int) -> ModelParams:
    for name, value in (("d_s", d_s), ("d", d), ("d_v", d_v), ("d_q", d_q)):
        if int(value) < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    rng = np.random.default_rng(seed)

    def draw(shape, fan_in):
        return rng.standard_normal(shape) / np.sqrt(fan_in)

    e = rng.standard_normal((d_s, d))
    w_v = draw((d, d_v), d)
    h = draw((d_v, d), d_v)
    w_q = draw((d, d_q), d)
    w_k = draw((d, d_q), d)
    decoder_w = draw((d,), d)
    decoder_b = float(rng.standard_normal())
    return ModelParams(d_s, d, d_v, d_q, e, w_v, h, w_q, w_k, decoder_w, decoder_b, seed)


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def decode(p: ModelParams, a: np.ndarray, t: np.ndarray) -> float:
    """Prediction from the contextualization ``a @ t``."""
    pooled = (a @ t).mean(axis=0)
    z = float(p.decoder_w @ pooled + p.decoder_b)
    return 1.0 / (1.0 + np.exp(-z))


def forward(p: ModelParams) -> SampleOutcome:
    t = p.t
    q = p.e @ p.w_q
    k = p.e @ p.w_k
    a = softmax_rows(q @ k.T / np.sqrt(p.d_q))
    return SampleOutcome(a=a, t=t, prediction=decode(p, a, t))


def random_dims(rng: np.random.Generator, ds_range=(3, 12), max_d: int = 12) -> dict:
    """Random non-identifiable dimensions: ``d_v <= d_s - 2`` and ``d >= d_v``."""
    d_s = int(rng.integers(ds_range[0], ds_range[1] + 1))
    d_v = int(rng.integers(1, d_s - 1))
    d = int(rng.integers(d_v, max(d_v, max_d) + 1))
    d_q = int(rng.integers(1, 9))
    return {"d_s": d_s, "d": d, "d_v": d_v, "d_q": d_q}


@dataclass(frozen=True)
class ExperimentConfig:
    d_s: int
    d: int
    d_v: int
    d_q: int
    n_samples: int
    seed: int
    label: str = "synthetic"
    renormalize_complement: bool = False
    tol: Tolerance = DEFAULT_TOLERANCE

    def __post_init__(self):
        for name in ("d_s", "d", "d_v", "d_q", "n_samples"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    def model(self, index: int) -> ModelParams:
        return synth_model(self.d_s, self.d, self.d_v, self.d_q,
                           sample_seed(self.seed, index))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["tol"] = self.tol.to_dict()
        return out


@dataclass
class ExperimentReport:
    experiment: int
    dataset_label: str
    n_samples: int
    metrics: dict
    diagnostics: dict
    config: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("report needs at least one sample")
        for key, value in self.metrics.items():
            if value is not None and not np.isfinite(value):
                raise ValueError(f"metric {key} is not finite")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = [n for n in METRIC_NAMES if n in self.metrics]
        writer.writerow(["dataset", "n_test", *names])
        writer.writerow([self.dataset_label, self.n_samples,
                         *("" if self.metrics[n] is None else repr(float(self.metrics[n]))
                           for n in names)])
        return buf.getvalue()


def _metadata(cfg: ExperimentConfig) -> dict:
    return {
        "tool": "efficient-attention",
        "version": __version__,
        "prng": PRNG_NAME,
        "numpy": np.__version__,
        "ground_metric": GROUND_METRIC,
        "l2_scaled_normalizer": L2_SCALED_NORMALIZER,
        "row_wasserstein_signed": True,
        "tolerance": cfg.tol.to_dict(),
    }


def _report(number: int, cfg: ExperimentConfig, p: list, q: list,
            row_w: list, diagnostics: dict) -> ExperimentReport:
    summary = compare_predictions(p, q)
    metrics = {
        "wasserstein": summary.wasserstein,
        "rmse": summary.rmse,
        "r2": summary.r2,
        "l2_rel": summary.l2_rel,
        "l2_scaled": summary.l2_scaled,
        "mean_row_wasserstein": float(np.mean(row_w)),
    }
    return ExperimentReport(number, cfg.label, cfg.n_samples, metrics, diagnostics,
                            cfg.to_dict(), _metadata(cfg))


def run_experiment1(cfg: ExperimentConfig) -> ExperimentReport:
    """Predictions from A versus predictions from its efficient projection."""
    p_a, p_eff, row_w = [], [], []
    at_gap = sum_err = 0.0
    min_entry = np.inf
    negative = 0
    for i in range(cfg.n_samples):
        params = cfg.model(i)
        out = forward(params)
        a_eff = efficient_attention(out.a, out.t, cfg.tol, on_negative="ignore")
        p_a.append(out.prediction)
        p_eff.append(decode(params, a_eff, out.t))
        row_w.append(mean_wasserstein_matrices(out.a, a_eff, allow_signed=True))
        at_gap = max(at_gap, float(np.max(np.abs(a_eff @ out.t - out.a @ out.t))))
        sum_err = max(sum_err, float(np.max(np.abs(a_eff.sum(axis=1) - 1.0))))
        min_entry = min(min_entry, float(a_eff.min()))
        negative += bool(a_eff.min() < -cfg.tol.check_abs)
    diagnostics = {
        "max_at_gap": at_gap,
        "max_row_sum_error": sum_err,
        "min_entry": min_entry,
        "negative_fraction": negative / cfg.n_samples,
        "max_prediction_gap": float(np.max(np.abs(np.subtract(p_a, p_eff)))),
    }
    return _report(1, cfg, p_a, p_eff, row_w, diagnostics)


def run_experiment2(cfg: ExperimentConfig) -> ExperimentReport:
    """Efficient projections of A and of a kernel adversarial of A."""
    p_a, p_adv, p_eff, p_adv_eff = [], [], [], []
    row_w, effs, adv_effs = [], [], []
    min_change = np.inf
    for i in range(cfg.n_samples):
        params = cfg.model(i)
        out = forward(params)
        sample = generate_adversarial(out.a, out.t, sample_seed(params.seed, 1), cfg.tol)
        a_eff = efficient_attention(out.a, out.t, cfg.tol, on_negative="ignore")
        adv_eff = efficient_attention(sample.adversarial, out.t, cfg.tol,
                                      on_negative="ignore")
        p_a.append(out.prediction)
        p_adv.append(decode(params, sample.adversarial, out.t))
        p_eff.append(decode(params, a_eff, out.t))
        p_adv_eff.append(decode(params, adv_eff, out.t))
        row_w.append(mean_wasserstein_matrices(a_eff, adv_eff, allow_signed=True))
        effs.append(a_eff)
        adv_effs.append(adv_eff)
        min_change = min(min_change, sample.max_change)
    diagnostics = {
        "w_pred_raw_vs_adversarial": wasserstein1_predictions(p_a, p_adv),
        "max_raw_prediction_gap": float(np.max(np.abs(np.subtract(p_a, p_adv)))),
        "min_raw_attention_change": float(min_change),
        "l2_rel_efficient": l2_rel(np.array(effs), np.array(adv_effs)),
    }
    return _report(2, cfg, p_eff, p_adv_eff, row_w, diagnostics)


def experiment3_sample(params: ModelParams, a: np.ndarray, t: np.ndarray,
                       tol: Tolerance = DEFAULT_TOLERANCE,
                       renormalize: bool = False) -> dict:
    """One sample of the complement experiment.

    The literal ``1 - A`` is projected unless ``renormalize`` divides it by
    ``d_s - 1`` first.  Row distances always compare ``A_eff`` with the
    complement's projection rescaled to unit row mass.
    """
    d_s = a.shape[0]
    if d_s < 2:
        raise ValueError("the complement experiment needs d_s >= 2")
    comp = complement_attention(a)
    if renormalize:
        comp = comp / (d_s - 1)
    a_eff = efficient_attention(a, t, tol, on_negative="ignore")
    comp_eff = efficient_attention(comp, t, tol, on_negative="ignore")
    scale = 1.0 if renormalize else float(d_s - 1)
    row_w = mean_wasserstein_matrices(a_eff, comp_eff / scale, allow_signed=True)
    return {
        "a_eff": a_eff,
        "comp_eff": comp_eff,
        "row_wasserstein": row_w,
        "p_eff": decode(params, a_eff, t),
        "p_comp": decode(params, comp_eff, t),
    }


def run_experiment3(cfg: ExperimentConfig) -> ExperimentReport:
    """Efficient projections of A and of 1 - A, and their predictions."""
    p_eff, p_comp, row_w = [], [], []
    for i in range(cfg.n_samples):
        params = cfg.model(i)
        out = forward(params)
        res = experiment3_sample(params, out.a, out.t, cfg.tol, cfg.renormalize_complement)
        p_eff.append(res["p_eff"])
        p_comp.append(res["p_comp"])
        row_w.append(res["row_wasserstein"])
    gaps = np.abs(np.subtract(p_eff, p_comp))
    distinct = np.asarray(row_w) > DISTINCT_EFF
    n_distinct = int(distinct.sum())
    diagnostics = {
        "n_distinct_efficient": n_distinct,
        "distinct_prediction_fraction": (
            float(np.mean(gaps[distinct] > DISTINCT_PRED)) if n_distinct else None),
        "renormalized_complement": cfg.renormalize_complement,
    }
    return _report(3, cfg, p_eff, p_comp, row_w, diagnostics)
