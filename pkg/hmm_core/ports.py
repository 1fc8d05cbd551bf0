# hmm_core/ports.py
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np
import pandas as pd

from .models import LikelihoodEvaluation


class LikelihoodObjective(ABC):
    """Port for anything the Newton step can differentiate twice."""

    @property
    @abstractmethod
    def num_states(self) -> int:
        """
        Number of hidden states X; the parameter has X(X-1) entries.
        """

    @abstractmethod
    def evaluate(self, theta: np.ndarray) -> LikelihoodEvaluation:
        """
        Value, gradient and Hessian at theta in a single pass.
        """


class ResultStore(ABC):
    """Port for wherever benchmark tables end up."""

    @abstractmethod
    def save_medians(self, df: pd.DataFrame) -> None:
        """
        Stores the per-size median table.
        """

    @abstractmethod
    def save_raw(self, df: pd.DataFrame) -> None:
        """
        Stores the per-replicate table.
        """

    @abstractmethod
    def load_medians(self) -> Optional[pd.DataFrame]:
        """
        Loads the median table, or None if nothing was saved yet.
        """

    @abstractmethod
    def load_raw(self) -> Optional[pd.DataFrame]:
        """
        Loads the per-replicate table, or None if nothing was saved yet.
        """
