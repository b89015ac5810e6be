"""One config file for routing, pricing, budgets and catalog paths.

INI sections (see data/default_config.ini for the shipped defaults):

    [router]   recon/trace/verdict = <model-id>
    [retry]    count, backoff_s, timeout_s
    [model.<id>]  kind = scripted|http, base_url, api_key_env,
                  price_in, price_out   (USD per million tokens)
    [budgets]  max_iterations, candidate_cap, taint_depth, trigger_depth,
               context_radius
    [catalogs] api = builtin|<path>, entry = builtin|<path>

Secrets never live in the file: `api_key_env` names the environment variable
holding the key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .agents import PipelineBudgets
from .backend import (
    ModelConfig,
    ModelRouter,
    PricingTable,
    RetryPolicy,
    RouterConfig,
    HttpProvider,
)
from .catalog import ApiCatalog, EntryCatalog
from .errors import ConfigError
from .scripted import ScriptedProvider


@dataclass
class AppConfig:
    router: RouterConfig
    pricing: PricingTable
    budgets: PipelineBudgets
    api_catalog: ApiCatalog
    entry_catalog: EntryCatalog

    def build_router(self, backend_mode: str | None = None) -> ModelRouter:
        """Instantiate providers; `backend_mode='scripted'` forces every
        model onto the scripted provider regardless of its configured kind."""
        providers: dict[str, object] = {}
        scripted = ScriptedProvider()
        for model_id, mc in self.router.models.items():
            kind = "scripted" if backend_mode == "scripted" else (
                backend_mode or mc.kind
            )
            if kind == "scripted":
                providers[model_id] = scripted
            elif kind == "http":
                if not mc.base_url:
                    raise ConfigError(f"model {model_id}: http provider needs base_url")
                providers[model_id] = HttpProvider(mc, self.router.retry)
            else:
                raise ConfigError(f"model {model_id}: unknown provider kind {kind!r}")
        return ModelRouter(self.router, providers)


def _builtin(name: str) -> str:
    return resources.files("droidtriage").joinpath(f"data/{name}").read_text("utf-8")


def default_api_catalog() -> ApiCatalog:
    return ApiCatalog.parse(_builtin("system_apis.cat"))


def default_entry_catalog() -> EntryCatalog:
    return EntryCatalog.parse(_builtin("entrypoints.epc"))


def load_config(path: str | Path | None = None) -> AppConfig:
    parser = configparser.ConfigParser()
    if path is None:
        parser.read_string(_builtin("default_config.ini"))
        base_dir = None
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser.read_string(path.read_text("utf-8"))
        base_dir = path.parent

    if "router" not in parser:
        raise ConfigError("config missing [router] section")
    tier_models = {k: v for k, v in parser["router"].items()}

    retry = RetryPolicy()
    if "retry" in parser:
        sec = parser["retry"]
        retry = RetryPolicy(
            count=sec.getint("count", retry.count),
            backoff_s=sec.getfloat("backoff_s", retry.backoff_s),
            timeout_s=sec.getfloat("timeout_s", retry.timeout_s),
        )

    models: dict[str, ModelConfig] = {}
    pricing = PricingTable()
    for section in parser.sections():
        if not section.startswith("model."):
            continue
        model_id = section[len("model."):]
        sec = parser[section]
        models[model_id] = ModelConfig(
            model_id=model_id,
            kind=sec.get("kind", "scripted"),
            base_url=sec.get("base_url", ""),
            api_key_env=sec.get("api_key_env", ""),
        )
        if "price_in" in sec or "price_out" in sec:
            pricing.set(model_id, sec.get("price_in", "0"), sec.get("price_out", "0"))

    budgets = PipelineBudgets()
    if "budgets" in parser:
        sec = parser["budgets"]
        budgets = PipelineBudgets(
            max_iterations=sec.getint("max_iterations", budgets.max_iterations),
            candidate_cap=sec.getint("candidate_cap", budgets.candidate_cap),
            taint_depth=sec.getint("taint_depth", budgets.taint_depth),
            trigger_depth=sec.getint("trigger_depth", budgets.trigger_depth),
            context_radius=sec.getint("context_radius", budgets.context_radius),
        )

    def _catalog_text(key: str, builtin_name: str) -> str:
        value = parser.get("catalogs", key, fallback="builtin")
        if value == "builtin":
            return _builtin(builtin_name)
        p = Path(value)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        if not p.is_file():
            raise ConfigError(f"catalog file not found: {p}")
        return p.read_text("utf-8")

    api_catalog = ApiCatalog.parse(_catalog_text("api", "system_apis.cat"))
    entry_catalog = EntryCatalog.parse(_catalog_text("entry", "entrypoints.epc"))

    router = RouterConfig(tier_models=tier_models, models=models, retry=retry)
    try:
        router.validate()
    except Exception as exc:
        raise ConfigError(str(exc)) from None
    return AppConfig(router, pricing, budgets, api_catalog, entry_catalog)
