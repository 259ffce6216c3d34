"""Config-driven, seeded simulation harness.

A JSON config describes one experiment: the sampling distribution, the model
family and its priors, the learning-rate grid, the methods to evaluate, and
the run/evaluation schedule.  ``run_matrix`` streams one ResultRow per
(run, n, method); run r is seeded with mix64(base_seed, r), so results are
fully deterministic given (config, base_seed) regardless of how runs are
distributed over workers.  Squared-error risks are computed analytically
against the known generator, never from held-out samples.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .conjugate import FixedVariance, InvGammaVariance, VarianceSpec
from .diagnostics import LossLedger
from .ensembles import CesaroState, ModelEnsemble, ModelPrior, nested_informative_builder
from .learners import EtaGrid, cv_eta, prefix_objective
from .seeds import mix64
from .truths import Generator

__all__ = [
    "ExperimentConfig",
    "ModelSpec",
    "ResultRow",
    "ConfigError",
    "load_config",
    "run_matrix",
    "write_outputs",
    "METHODS",
]


class ConfigError(ValueError):
    """Config document violates the schema; message carries the JSON path."""


METHODS = (
    "bayes",
    "r_log_safebayes",
    "i_log_safebayes",
    "r_square_safebayes",
    "i_square_safebayes",
    "discounted_r_log",
    "empirical_bayes",
    "cv_square",
    "cv_log",
    "map_variants",
    "cesaro_variants",
    "baselines",
)

# methods that resolve a learning rate from per-step objective traces:
# method -> (trace name, discount fraction)
_TRACE_METHODS = {
    "r_log_safebayes": ("r_log", 0.0),
    "i_log_safebayes": ("i_log", 0.0),
    "r_square_safebayes": ("r_square", 0.0),
    "i_square_safebayes": ("square", 0.0),
    "discounted_r_log": ("r_log", 0.5),
    "empirical_bayes": ("bayes", 0.0),
}

_BASELINES = ("AICc", "BIC", "kfoldCV", "LOOCV", "GCV")

ROW_FIELDS = (
    "experiment_id",
    "run",
    "n",
    "method",
    "eta_hat",
    "sq_risk",
    "map_order",
    "overconfidence",
    "cum_bayes_log",
    "cum_r_log",
    "cum_i_log",
    "delta_cum",
    "hyper_margin",
    "b_formula",
)


@dataclass(frozen=True)
class ResultRow:
    experiment_id: str
    run: int
    n: int
    method: str
    eta_hat: Optional[float]
    sq_risk: Optional[float]
    map_order: Optional[int]
    overconfidence: Optional[float]
    cum_bayes_log: Optional[float]
    cum_r_log: Optional[float]
    cum_i_log: Optional[float]
    delta_cum: Optional[float]
    hyper_margin: Optional[float]
    b_formula: str


@dataclass(frozen=True)
class ModelSpec:
    """Model family: nested orders 0..pmax with zero-mean scale*I priors."""

    pmax: int = 50
    variance: VarianceSpec = InvGammaVariance(1.0, 1.0 / 40.0)
    prior_scale: float = 1.0
    b_formula: str = "paper"

    def builder(self):
        return nested_informative_builder(self.variance, scale=self.prior_scale)

    def make_ensemble(self, model_prior: ModelPrior, eta: float) -> ModelEnsemble:
        return ModelEnsemble(model_prior, self.builder(), eta, b_formula=self.b_formula)

    @property
    def fixed_variance(self) -> bool:
        return isinstance(self.variance, FixedVariance)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str = "experiment"
    generator: Generator = field(default_factory=Generator)
    model: ModelSpec = field(default_factory=ModelSpec)
    model_prior: str = "log_squared"
    grid: EtaGrid = EtaGrid(kappa_step=1.0 / 3.0, kappa_max=8.0)
    methods: tuple = ("bayes", "r_log_safebayes", "i_log_safebayes")
    n_max: int = 100
    eval_ns: Optional[tuple] = None
    runs: int = 1
    base_seed: int = 0
    centering: bool = False

    def evaluation_points(self) -> List[int]:
        if self.eval_ns is not None:
            return sorted(set(int(n) for n in self.eval_ns))
        if self.n_max == 0:
            return [0]
        dense = list(range(1, min(100, self.n_max) + 1))
        sparse = list(range(105, self.n_max + 1, 5))
        return dense + sparse


# -- config loading --------------------------------------------------------------


def _reject_unknown(doc: dict, allowed: Sequence[str], path: str):
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{path}{key}: unknown key")


def _get(doc: dict, key: str, default, path: str, kind=None):
    val = doc.get(key, default)
    if kind is not None and val is not None and not isinstance(val, kind):
        names = kind if isinstance(kind, tuple) else (kind,)
        raise ConfigError(
            f"{path}{key}: expected {'/'.join(t.__name__ for t in names)}, got {type(val).__name__}"
        )
    return val


def _parse_generator(doc: dict, path: str) -> Generator:
    allowed = (
        "law",
        "coefficients",
        "intercept_offset",
        "noise_sd2",
        "easy_prob",
        "easy_x",
        "easy_y",
        "easy_scale",
    )
    _reject_unknown(doc, allowed, path)
    try:
        return Generator(
            covariate_law=_get(doc, "law", "iid_gauss", path, str),
            coefficients=tuple(_get(doc, "coefficients", (0.0, 0.1, 0.1, 0.1, 0.1), path, (list, tuple))),
            intercept_offset=float(_get(doc, "intercept_offset", 0.0, path, (int, float))),
            noise_sd2=float(_get(doc, "noise_sd2", 1.0 / 20.0, path, (int, float))),
            easy_prob=float(_get(doc, "easy_prob", 0.5, path, (int, float))),
            easy_x=float(_get(doc, "easy_x", 0.0, path, (int, float))),
            easy_y=float(_get(doc, "easy_y", 0.0, path, (int, float))),
            easy_scale=(
                None
                if _get(doc, "easy_scale", None, path, (int, float)) is None
                else float(doc["easy_scale"])
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_variance(doc: dict, path: str) -> VarianceSpec:
    kind = _get(doc, "kind", "inv_gamma", path, str)
    if kind == "fixed":
        _reject_unknown(doc, ("kind", "sigma2"), path)
        try:
            return FixedVariance(float(_get(doc, "sigma2", 1.0 / 40.0, path, (int, float))))
        except ValueError as exc:
            raise ConfigError(f"{path}sigma2: {exc}") from None
    if kind == "inv_gamma":
        _reject_unknown(doc, ("kind", "a0", "b0"), path)
        try:
            return InvGammaVariance(
                float(_get(doc, "a0", 1.0, path, (int, float))),
                float(_get(doc, "b0", 1.0 / 40.0, path, (int, float))),
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    raise ConfigError(f"{path}kind: must be 'fixed' or 'inv_gamma', got {kind!r}")


def _parse_model(doc: dict, path: str) -> ModelSpec:
    _reject_unknown(doc, ("pmax", "variance", "prior", "b_formula"), path)
    pmax = _get(doc, "pmax", 50, path, int)
    if pmax < 0:
        raise ConfigError(f"{path}pmax: must be >= 0, got {pmax}")
    prior = _get(doc, "prior", "informative", path, (str, dict))
    if prior == "informative":
        scale = 1.0
    elif prior == "slightly_informative":
        scale = 1000.0
    elif isinstance(prior, dict):
        _reject_unknown(prior, ("scale",), path + "prior.")
        scale = float(_get(prior, "scale", 1.0, path + "prior.", (int, float)))
        if scale <= 0:
            raise ConfigError(f"{path}prior.scale: must be positive")
    else:
        raise ConfigError(
            f"{path}prior: must be 'informative', 'slightly_informative' or {{'scale': s}}"
        )
    b_formula = _get(doc, "b_formula", "paper", path, str)
    if b_formula not in ("paper", "exact"):
        raise ConfigError(f"{path}b_formula: must be 'paper' or 'exact'")
    return ModelSpec(
        pmax=pmax,
        variance=_parse_variance(_get(doc, "variance", {}, path, dict), path + "variance."),
        prior_scale=scale,
        b_formula=b_formula,
    )


def load_config(doc) -> ExperimentConfig:
    """Validate a JSON config document (dict or JSON text); unknown keys are
    rejected with a path-qualified message."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    if not isinstance(doc, dict):
        raise ConfigError(": config must be a JSON object")
    allowed = (
        "experiment_id",
        "generator",
        "model",
        "model_prior",
        "grid",
        "methods",
        "n_max",
        "eval_ns",
        "runs",
        "base_seed",
        "centering",
    )
    _reject_unknown(doc, allowed, "")
    grid_doc = _get(doc, "grid", {}, "", dict)
    _reject_unknown(grid_doc, ("kappa_step", "kappa_max", "include_gt1"), "grid.")
    try:
        grid = EtaGrid(
            kappa_step=float(_get(grid_doc, "kappa_step", 1.0 / 3.0, "grid.", (int, float))),
            kappa_max=float(_get(grid_doc, "kappa_max", 8, "grid.", (int, float))),
            include_gt1=bool(_get(grid_doc, "include_gt1", False, "grid.", bool)),
        )
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    methods = tuple(_get(doc, "methods", ["bayes", "r_log_safebayes", "i_log_safebayes"], "", list))
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"methods: unknown method {m!r}")
    model_prior = _get(doc, "model_prior", "log_squared", "", str)
    if model_prior not in ("log_squared", "uniform", "single"):
        raise ConfigError("model_prior: must be 'log_squared', 'uniform' or 'single'")
    n_max = _get(doc, "n_max", 100, "", int)
    if n_max < 0:
        raise ConfigError(f"n_max: must be >= 0, got {n_max}")
    runs = _get(doc, "runs", 1, "", int)
    if runs < 1:
        raise ConfigError(f"runs: must be >= 1, got {runs}")
    eval_ns = _get(doc, "eval_ns", None, "", list)
    if eval_ns is not None:
        for n in eval_ns:
            if not isinstance(n, int) or n < 0 or n > n_max:
                raise ConfigError(f"eval_ns: entries must be integers in [0, n_max], got {n!r}")
        eval_ns = tuple(eval_ns)
    config = ExperimentConfig(
        experiment_id=_get(doc, "experiment_id", "experiment", "", str),
        generator=_parse_generator(_get(doc, "generator", {}, "", dict), "generator."),
        model=_parse_model(_get(doc, "model", {}, "", dict), "model."),
        model_prior=model_prior,
        grid=grid,
        methods=methods,
        n_max=n_max,
        eval_ns=eval_ns,
        runs=runs,
        base_seed=_get(doc, "base_seed", 0, "", int),
        centering=bool(_get(doc, "centering", False, "", bool)),
    )
    _validate_method_variance(config)
    if len(config.generator.coefficients) - 1 > config.model.pmax:
        raise ConfigError("model.pmax: smaller than the generator's true order")
    return config


def _validate_method_variance(config: ExperimentConfig):
    fixed = config.model.fixed_variance
    for m in config.methods:
        if m in ("r_log_safebayes", "i_log_safebayes", "discounted_r_log") and fixed:
            raise ConfigError(f"methods: {m} requires an inverse-gamma variance model")
        if m in ("r_square_safebayes", "i_square_safebayes") and not fixed:
            raise ConfigError(f"methods: {m} requires a fixed-variance model")


def config_to_dict(config: ExperimentConfig) -> dict:
    gen = config.generator
    model = config.model
    var = model.variance
    if isinstance(var, FixedVariance):
        var_doc = {"kind": "fixed", "sigma2": var.sigma2}
    else:
        var_doc = {"kind": "inv_gamma", "a0": var.a0, "b0": var.b0}
    return {
        "experiment_id": config.experiment_id,
        "generator": {
            "law": gen.covariate_law,
            "coefficients": list(gen.coefficients),
            "intercept_offset": gen.intercept_offset,
            "noise_sd2": gen.noise_sd2,
            "easy_prob": gen.easy_prob,
            "easy_x": gen.easy_x,
            "easy_y": gen.easy_y,
            "easy_scale": gen.easy_scale,
        },
        "model": {
            "pmax": model.pmax,
            "variance": var_doc,
            "prior": {"scale": model.prior_scale},
            "b_formula": model.b_formula,
        },
        "model_prior": config.model_prior,
        "grid": {
            "kappa_step": config.grid.kappa_step,
            "kappa_max": config.grid.kappa_max,
            "include_gt1": config.grid.include_gt1,
        },
        "methods": list(config.methods),
        "n_max": config.n_max,
        "eval_ns": list(config.eval_ns) if config.eval_ns is not None else None,
        "runs": config.runs,
        "base_seed": config.base_seed,
        "centering": config.centering,
    }


# -- the per-run engine ------------------------------------------------------------


class _TrackedEnsemble:
    """One constant-eta ensemble advanced through the run, with per-step
    objective traces, a loss ledger, and a Cesaro accumulator."""

    def __init__(self, config: ExperimentConfig, eta: float, n_max: int, want_cesaro: bool):
        self.eta = eta
        prior = ModelPrior(config.model_prior, config.model.pmax)
        self.ensemble = config.model.make_ensemble(prior, eta)
        self.ledger = LossLedger()
        self.traces: Dict[str, np.ndarray] = {
            name: np.full(max(n_max, 1), np.nan)
            for name in ("r_log", "i_log", "bayes", "square", "r_square", "mix")
        }
        self.cesaro = CesaroState() if want_cesaro else None
        self.fixed = config.model.fixed_variance

    def step(self, i: int, x: np.ndarray, y: float, optimal_increment: float):
        if self.fixed:
            self.traces["r_square"][i] = self.ensemble.r_square_step(x, y)
        rec = self.ensemble.advance_with_losses(x, y)
        self.traces["r_log"][i] = rec.r_log
        self.traces["i_log"][i] = rec.i_log
        self.traces["bayes"][i] = rec.bayes_log
        self.traces["square"][i] = rec.square
        self.traces["mix"][i] = rec.mix
        self.ledger.update(rec, optimal_increment)
        if self.cesaro is not None:
            can_accumulate = self.fixed or bool(np.all(self.ensemble.a > 1.0))
            if can_accumulate:
                self.cesaro.update(self.ensemble)


def _select_eta(tracked: Dict[float, _TrackedEnsemble], grid: EtaGrid, trace: str, n: int, discount: float) -> float:
    best_eta, best = None, math.inf
    for eta in grid.values:  # decreasing, so first strict minimum = largest
        total = prefix_objective(tracked[float(eta)].traces[trace], n, discount)
        if total < best:
            best_eta, best = float(eta), total
    return best_eta


def _na(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _predictor_row_stats(config, gen_moments, tr: _TrackedEnsemble, shift: float):
    """(sq_risk, map_order, overconfidence, coefficients) for the full
    posterior of one tracked ensemble."""
    summ = tr.ensemble.summary()
    coeffs = summ.mixture_coefficients.copy()
    coeffs[0] += shift
    risk = config.generator.square_risk(coeffs)
    try:
        variance = tr.ensemble.expected_predictive_variance(gen_moments)
        over = risk / variance
    except Exception:
        over = None
    return risk, summ.map_order, over


def _map_row_stats(config, gen_moments, tr: _TrackedEnsemble, shift: float):
    ens = tr.ensemble
    p = int(np.argmax(ens.log_weights))
    state = ens.states[p]
    coeffs = np.zeros(ens.pmax + 1)
    coeffs[: p + 1] = state.beta_bar
    coeffs[0] += shift
    risk = config.generator.square_risk(coeffs)
    try:
        s2 = state.expected_sigma2()
        Mp = gen_moments[: p + 1, : p + 1]
        variance = s2 * (1.0 + float(np.trace(state.Sigma @ Mp)))
        over = risk / variance
    except Exception:
        over = None
    return risk, p, over


def _cesaro_row_stats(config, gen_moments, tr: _TrackedEnsemble, shift: float):
    ces = tr.cesaro
    if ces is None or ces.n == 0:
        return None, None, None
    coeffs = ces.coefficients().copy()
    coeffs[0] += shift
    risk = config.generator.square_risk(coeffs)
    try:
        over = risk / ces.expected_predictive_variance(gen_moments)
    except Exception:
        over = None
    return risk, None, over


def run_one(config: ExperimentConfig, run: int) -> List[ResultRow]:
    """Execute one seeded run and return its result rows."""
    rng = np.random.default_rng(mix64(config.base_seed, run))
    pmax = config.model.pmax
    gen = config.generator
    X, y = gen.sample(config.n_max, rng, pmax) if config.n_max > 0 else (
        np.ones((0, pmax + 1)),
        np.zeros(0),
    )
    shift = 0.0
    if config.centering and config.n_max > 0:
        shift = float(y.mean())
        y = y - shift
    pseudo = gen.optimal_params(pmax)
    beta_comp = pseudo.beta.copy()
    beta_comp[0] -= shift  # comparator in centered coordinates
    pseudo_c = dataclasses.replace(pseudo, beta=beta_comp)

    want_cesaro = "cesaro_variants" in config.methods
    need_grid = any(m in _TRACE_METHODS or m in ("cv_square", "cv_log") for m in config.methods) or any(
        m in ("map_variants", "cesaro_variants") for m in config.methods
    )
    etas = [1.0]
    if need_grid:
        etas = sorted(set([1.0] + [float(e) for e in config.grid.values]), reverse=True)
    tracked = {
        eta: _TrackedEnsemble(config, eta, config.n_max, want_cesaro) for eta in etas
    }
    eval_set = set(config.evaluation_points())
    moments = gen.second_moments(pmax)
    rows: List[ResultRow] = []

    def emit(n, method, eta_hat, stats, ledger_of):
        risk, map_order, over = stats
        led = ledger_of
        rows.append(
            ResultRow(
                experiment_id=config.experiment_id,
                run=run,
                n=n,
                method=method,
                eta_hat=eta_hat,
                sq_risk=_na(risk),
                map_order=map_order,
                overconfidence=_na(over),
                cum_bayes_log=_na(led.cum_bayes_log if led else None),
                cum_r_log=_na(led.cum_r_log if led else None),
                cum_i_log=_na(led.cum_i_log if led and led.n_i_log else None),
                delta_cum=_na(led.cum_delta if led else None),
                hyper_margin=_na(led.hyper_margin if led else None),
                b_formula=config.model.b_formula,
            )
        )

    def evaluate(n):
        for method in config.methods:
            if method == "bayes":
                tr = tracked[1.0]
                emit(n, "bayes", 1.0, _predictor_row_stats(config, moments, tr, shift), tr.ledger)
            elif method in _TRACE_METHODS:
                trace, discount = _TRACE_METHODS[method]
                eta_hat = _select_eta(tracked, config.grid, trace, n, discount)
                tr = tracked[eta_hat]
                emit(n, method, eta_hat, _predictor_row_stats(config, moments, tr, shift), tr.ledger)
            elif method in ("cv_square", "cv_log"):
                if n < 2:
                    emit(n, method, None, (None, None, None), None)
                    continue
                loss = "square" if method == "cv_square" else "predictive_log"
                prior = ModelPrior(config.model_prior, pmax)
                factory = lambda e: config.model.make_ensemble(prior, e)
                result = cv_eta((X[:n], y[:n]), factory, config.grid, loss=loss)
                tr = tracked[float(result.eta_hat)]
                emit(n, method, result.eta_hat, _predictor_row_stats(config, moments, tr, shift), tr.ledger)
            elif method == "map_variants":
                for base, label in (
                    ("bayes", "bayes_map"),
                    ("r_log_safebayes", "r_log_safebayes_map"),
                    ("i_log_safebayes", "i_log_safebayes_map"),
                ):
                    if base != "bayes" and base not in config.methods:
                        continue
                    if base == "bayes":
                        eta_hat, tr = 1.0, tracked[1.0]
                    else:
                        trace, discount = _TRACE_METHODS[base]
                        eta_hat = _select_eta(tracked, config.grid, trace, n, discount)
                        tr = tracked[eta_hat]
                    emit(n, label, eta_hat, _map_row_stats(config, moments, tr, shift), tr.ledger)
            elif method == "cesaro_variants":
                for base, label in (
                    ("bayes", "bayes_cesaro"),
                    ("r_log_safebayes", "r_log_safebayes_cesaro"),
                    ("i_log_safebayes", "i_log_safebayes_cesaro"),
                ):
                    if base != "bayes" and base not in config.methods:
                        continue
                    if base == "bayes":
                        eta_hat, tr = 1.0, tracked[1.0]
                    else:
                        trace, discount = _TRACE_METHODS[base]
                        eta_hat = _select_eta(tracked, config.grid, trace, n, discount)
                        tr = tracked[eta_hat]
                    emit(n, label, eta_hat, _cesaro_row_stats(config, moments, tr, shift), tr.ledger)
            elif method == "baselines":
                for crit in _BASELINES:
                    from .learners import baseline_model_selection

                    if n < 2:
                        emit(n, f"baseline_{crit}", None, (None, None, None), None)
                        continue
                    try:
                        p_sel = baseline_model_selection(
                            (X[:n], y[:n]), pmax, crit, prior_builder=config.model.builder()
                        )
                    except ValueError:
                        emit(n, f"baseline_{crit}", None, (None, None, None), None)
                        continue
                    ens1 = tracked[1.0].ensemble
                    coeffs = ens1._all_means()[p_sel].copy()
                    coeffs[0] += shift
                    risk = config.generator.square_risk(coeffs)
                    emit(n, f"baseline_{crit}", None, (risk, p_sel, None), None)

    if 0 in eval_set:
        evaluate(0)
    for i in range(config.n_max):
        opt_inc = gen.optimal_log_loss(X[i], y[i], pseudo_c)
        for tr in tracked.values():
            tr.step(i, X[i], y[i], opt_inc)
        if (i + 1) in eval_set:
            evaluate(i + 1)
    return rows


def run_matrix(config: ExperimentConfig, threads: int = 1) -> List[ResultRow]:
    """All runs of the experiment; deterministic given (config, base_seed)
    regardless of thread count (runs are independent and rows are sorted)."""
    if threads <= 1 or config.runs == 1:
        rows = []
        for r in range(config.runs):
            rows.extend(run_one(config, r))
    else:
        rows = []
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for chunk in pool.map(_run_one_star, [(config, r) for r in range(config.runs)]):
                rows.extend(chunk)
    rows.sort(key=lambda r: (r.run, r.n, r.method))
    return rows


def _run_one_star(args):
    return run_one(*args)


# -- outputs ---------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        if math.isnan(value):
            return "NA"
        return repr(value)
    return str(value)


def _csv_field(text: str) -> str:
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def write_rows_csv(rows: Sequence[ResultRow], path: str):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(ROW_FIELDS) + "\n")
        for row in rows:
            fields = [_csv_field(_fmt(getattr(row, name))) for name in ROW_FIELDS]
            fh.write(",".join(fields) + "\n")


_AGG_COLUMNS = (
    "sq_risk",
    "map_order",
    "overconfidence",
    "cum_bayes_log",
    "cum_r_log",
    "cum_i_log",
    "delta_cum",
    "hyper_margin",
)


def write_aggregate_csv(rows: Sequence[ResultRow], path: str):
    """Mean and std per (n, method); eta_hat is aggregated by geometric mean."""
    groups: Dict[tuple, List[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.n, row.method), []).append(row)
    header = ["n", "method", "runs", "eta_hat_geomean"]
    for col in _AGG_COLUMNS:
        header += [f"{col}_mean", f"{col}_std"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for (n, method) in sorted(groups):
            bucket = groups[(n, method)]
            out = [str(n), _csv_field(method), str(len(bucket))]
            etas = [r.eta_hat for r in bucket if r.eta_hat is not None]
            if etas:
                out.append(repr(float(np.exp(np.mean(np.log(etas))))))
            else:
                out.append("NA")
            for col in _AGG_COLUMNS:
                vals = [getattr(r, col) for r in bucket if getattr(r, col) is not None]
                if vals:
                    out.append(repr(float(np.mean(vals))))
                    out.append(repr(float(np.std(vals))))
                else:
                    out += ["NA", "NA"]
            fh.write(",".join(out) + "\n")


def sweep_eta(config: ExperimentConfig, n: int, threads: int = 1) -> dict:
    """Cumulative R-log, mix, and Bayes log loss per grid eta at sample size
    n, averaged over the config's runs (the learning-rate sweep figure)."""
    if n > config.n_max:
        raise ConfigError(f"sweep n={n} exceeds n_max={config.n_max}")
    etas = [float(e) for e in config.grid.values]
    acc = {eta: {"r_log": [], "mix": [], "bayes": [], "optimal": []} for eta in etas}
    sweep_cfg = dataclasses.replace(config, methods=("r_log_safebayes",), eval_ns=(n,), n_max=n)
    for r in range(config.runs):
        rng = np.random.default_rng(mix64(config.base_seed, r))
        X, y = config.generator.sample(n, rng, config.model.pmax)
        pseudo = config.generator.optimal_params(config.model.pmax)
        if config.centering:
            shift = float(y.mean())
            y = y - shift
            beta_c = pseudo.beta.copy()
            beta_c[0] -= shift
            pseudo = dataclasses.replace(pseudo, beta=beta_c)
        for eta in etas:
            tr = _TrackedEnsemble(sweep_cfg, eta, n, want_cesaro=False)
            for i in range(n):
                tr.step(i, X[i], y[i], config.generator.optimal_log_loss(X[i], y[i], pseudo))
            acc[eta]["r_log"].append(tr.ledger.cum_r_log)
            acc[eta]["mix"].append(tr.ledger.cum_mix)
            acc[eta]["bayes"].append(tr.ledger.cum_bayes_log)
            acc[eta]["optimal"].append(tr.ledger.cum_optimal_log)
    return acc


def write_sweep_csv(acc: dict, path: str):
    header = [
        "eta",
        "cum_r_log_mean",
        "cum_r_log_std",
        "cum_mix_mean",
        "cum_mix_std",
        "cum_bayes_log_mean",
        "cum_bayes_log_std",
        "cum_optimal_log_mean",
    ]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for eta in sorted(acc, reverse=True):
            vals = acc[eta]
            out = [repr(float(eta))]
            for key in ("r_log", "mix", "bayes"):
                out.append(repr(float(np.mean(vals[key]))))
                out.append(repr(float(np.std(vals[key]))))
            out.append(repr(float(np.mean(vals["optimal"]))))
            fh.write(",".join(out) + "\n")


def write_outputs(rows: Sequence[ResultRow], out_dir: str, config: ExperimentConfig, sweep: Optional[dict] = None):
    """rows.csv, aggregate.csv, optional sweep_eta.csv, and manifest.json."""
    os.makedirs(out_dir, exist_ok=True)
    write_rows_csv(rows, os.path.join(out_dir, "rows.csv"))
    write_aggregate_csv(rows, os.path.join(out_dir, "aggregate.csv"))
    if sweep is not None:
        write_sweep_csv(sweep, os.path.join(out_dir, "sweep_eta.csv"))
    manifest = {
        "config": config_to_dict(config),
        "base_seed": config.base_seed,
        "version": __version__,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
