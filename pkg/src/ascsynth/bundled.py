"""The bundled welding-cell case study and its factor increments."""

from __future__ import annotations

from importlib import resources

from .dsl import RiskModel, parse_risk_model, restrict
from .pgcl import Mdp, build_mdp
from .translate import compile_model

# factors in the order they are added to the model, one increment per prefix
INCREMENT_ORDER = ("HC", "HS", "WS", "HRW", "HW", "RT", "RC")


def model_path() -> str:
    return str(resources.files("ascsynth.data").joinpath("cell.riskm"))


def props_path() -> str:
    return str(resources.files("ascsynth.data").joinpath("cell.props"))


def model_text() -> str:
    return resources.files("ascsynth.data").joinpath("cell.riskm").read_text()


def load() -> RiskModel:
    return parse_risk_model(model_text())


def increment(k: int, model: RiskModel | None = None) -> RiskModel:
    """The model restricted to the first ``k`` factors of the increment order."""
    if not 1 <= k <= len(INCREMENT_ORDER):
        raise ValueError(f"increment must lie in 1..{len(INCREMENT_ORDER)}")
    return restrict(model or load(), INCREMENT_ORDER[:k])


def build(k: int = len(INCREMENT_ORDER)) -> Mdp:
    return build_mdp(compile_model(increment(k)))
