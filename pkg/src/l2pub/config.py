"""JSON experiment configuration.

One file fully determines an experiment, for reproducibility:

.. code-block:: json

    {
      "gamma": 0.9999999,
      "horizon": 1000,
      "seed": 42,
      "episodes": 200,
      "initial_queue": 1,
      "price": {"kind": "lognormal", "p0": 1.0, "mu": -0.005, "sigma": 0.1},
      "publish": {"alpha": 1.0, "beta": 0.0},
      "delay": {"kind": "linear", "slope": 6.0},
      "policy": {"kind": "threshold-martingale", "c": 5e-8},
      "policies": {"name": {"kind": "greedy"}}
    }

Price kinds: ``constant`` (p0), ``lognormal`` (p0, mu, sigma), ``trace``
(path to a ``step,price`` CSV, or inline ``prices``). Delay kinds:
``linear`` (slope), ``exponential`` (rate), ``table`` (values). Policy
kinds: ``trivial``; ``interval`` (n, optional phase); ``greedy``;
``threshold-martingale`` (c); ``threshold-rollup`` (c, optional n_max; mu,
sigma from the price model, alpha from publish); ``threshold-onestep``
(c; mu, sigma from the price model); ``threshold-table`` (values).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .costs import (
    DelaySpec,
    ExponentialDelay,
    LinearDelay,
    PublishingCostParams,
    TableDelay,
)
from .errors import ConfigError
from .policies import (
    FixedIntervalPolicy,
    GreedyBalancePolicy,
    MartingaleThreshold,
    OneStepThreshold,
    Policy,
    RollupNumericThreshold,
    RollupParams,
    TableThreshold,
    ThresholdPolicy,
    TrivialPolicy,
)
from .prices import (
    ConstantPrice,
    HistoricalTrace,
    LogNormalWalk,
    PriceProcess,
    load_trace_csv,
)
from .simulate import SimConfig

POLICY_KINDS = (
    "trivial",
    "interval",
    "greedy",
    "threshold-martingale",
    "threshold-rollup",
    "threshold-onestep",
    "threshold-table",
)


@dataclass
class RunConfig:
    sim: SimConfig
    episodes: int
    policy_descs: dict[str, dict]
    default_policy: dict | None

    def build_policy(self, name_or_kind: str) -> Policy:
        desc = self.policy_descs.get(name_or_kind)
        if desc is None:
            if name_or_kind in POLICY_KINDS:
                desc = {"kind": name_or_kind}
            else:
                raise ConfigError(
                    f"unknown policy {name_or_kind!r}: not a configured name or built-in kind"
                )
        return build_policy(desc, self.sim)


def _need(doc: dict, field: str, ctx: str):
    if field not in doc:
        raise ConfigError(f"{ctx}: missing field {field!r}")
    return doc[field]


def build_delay(doc: dict) -> DelaySpec:
    kind = _need(doc, "kind", "delay")
    if kind == "linear":
        return LinearDelay(float(_need(doc, "slope", "delay.linear")))
    if kind == "exponential":
        return ExponentialDelay(float(_need(doc, "rate", "delay.exponential")))
    if kind == "table":
        return TableDelay(tuple(_need(doc, "values", "delay.table")))
    raise ConfigError(f"delay.kind must be linear/exponential/table, got {kind!r}")


def build_price(doc: dict, base_dir: Path) -> PriceProcess:
    kind = _need(doc, "kind", "price")
    if kind == "constant":
        return ConstantPrice(float(_need(doc, "p0", "price.constant")))
    if kind == "lognormal":
        return LogNormalWalk(
            float(_need(doc, "p0", "price.lognormal")),
            float(_need(doc, "mu", "price.lognormal")),
            float(_need(doc, "sigma", "price.lognormal")),
        )
    if kind == "trace":
        if "prices" in doc:
            return HistoricalTrace(tuple(doc["prices"]))
        path = Path(_need(doc, "path", "price.trace"))
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise FileNotFoundError(f"price.trace.path: no such file {path}")
        return load_trace_csv(path)
    raise ConfigError(f"price.kind must be constant/lognormal/trace, got {kind!r}")


def build_publish(doc: dict) -> PublishingCostParams:
    try:
        return PublishingCostParams(
            float(_need(doc, "alpha", "publish")), float(_need(doc, "beta", "publish"))
        )
    except ValueError as exc:
        raise ConfigError(f"publish: {exc}") from exc


def _lognormal_params(sim: SimConfig, kind: str) -> tuple[float, float]:
    if not isinstance(sim.price, LogNormalWalk):
        raise ConfigError(f"policy {kind} requires a lognormal price model to read mu/sigma from")
    return sim.price.mu, sim.price.sigma


def build_policy(desc: dict, sim: SimConfig) -> Policy:
    kind = _need(desc, "kind", "policy")
    if kind == "trivial":
        return TrivialPolicy()
    if kind == "interval":
        return FixedIntervalPolicy(int(_need(desc, "n", "policy.interval")), int(desc.get("phase", 0)))
    if kind == "greedy":
        spec = sim.global_delay()
        if spec is None:
            raise ConfigError("policy greedy requires a global delay spec")
        return GreedyBalancePolicy(spec, sim.gamma, sim.publish.beta)
    if kind == "threshold-martingale":
        return ThresholdPolicy(MartingaleThreshold(float(_need(desc, "c", "policy")), sim.gamma))
    if kind == "threshold-rollup":
        mu, sigma = _lognormal_params(sim, kind)
        params = RollupParams(
            c=float(_need(desc, "c", "policy")),
            gamma=sim.gamma,
            mu=mu,
            sigma=sigma,
            alpha=sim.publish.alpha,
            n_max=int(desc.get("n_max", RollupParams.n_max)),
        )
        return ThresholdPolicy(RollupNumericThreshold(params))
    if kind == "threshold-onestep":
        mu, sigma = _lognormal_params(sim, kind)
        return ThresholdPolicy(
            OneStepThreshold(float(_need(desc, "c", "policy")), sim.gamma, mu, sigma)
        )
    if kind == "threshold-table":
        return ThresholdPolicy(TableThreshold(_need(desc, "values", "policy.threshold-table")))
    raise ConfigError(f"policy.kind must be one of {POLICY_KINDS}, got {kind!r}")


def load_run_config(path, seed: int | None = None, episodes: int | None = None) -> RunConfig:
    """Parse and validate an experiment file; overrides win over the file."""
    path = Path(path)
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    base_dir = path.parent

    gamma = _need(doc, "gamma", str(path))
    try:
        gamma = float(gamma)
    except (TypeError, ValueError):
        raise ConfigError(f"gamma must be a number, got {gamma!r}") from None
    sim = SimConfig(
        gamma=gamma,
        horizon=int(_need(doc, "horizon", str(path))),
        seed=int(seed if seed is not None else doc.get("seed", 0)),
        price=build_price(_need(doc, "price", str(path)), base_dir),
        publish=build_publish(_need(doc, "publish", str(path))),
        delay=build_delay(_need(doc, "delay", str(path))),
        initial_queue=int(doc.get("initial_queue", 1)),
    )
    eps = int(episodes if episodes is not None else doc.get("episodes", 1))
    if eps < 1:
        raise ConfigError(f"episodes must be >= 1, got {eps}")
    descs = doc.get("policies", {})
    if not isinstance(descs, dict):
        raise ConfigError("policies must be an object mapping names to descriptors")
    cfg = RunConfig(
        sim=sim,
        episodes=eps,
        policy_descs=descs,
        default_policy=doc.get("policy"),
    )
    # fail fast on malformed policy descriptors
    for name in descs:
        cfg.build_policy(name)
    if cfg.default_policy is not None:
        build_policy(cfg.default_policy, sim)
    return cfg
