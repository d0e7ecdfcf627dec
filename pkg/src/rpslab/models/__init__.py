"""Behavioral models: the shared stepping interface and analytic baselines."""

from .base import BehavioralModel, NashModel, Prediction, StateMismatchError, model_step, softmax
from .csewa import (
    CsEwaModel,
    CsEwaParams,
    CsEwaState,
    csewa_act,
    csewa_forecast,
    csewa_retrospective_update,
    state_index,
)

__all__ = [
    "BehavioralModel",
    "CsEwaModel",
    "CsEwaParams",
    "CsEwaState",
    "NashModel",
    "Prediction",
    "StateMismatchError",
    "csewa_act",
    "csewa_forecast",
    "csewa_retrospective_update",
    "model_step",
    "softmax",
    "state_index",
]
