"""Slow collective variables from time series.

Linear encoders (PCA, TICA, TCCA), a numpy time-lagged autoencoder, HMM
benchmark generators, and validation by canonical correlation against
hidden states and by Markov-state-model implied timescales.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DataError,
    DegenerateCovarianceError,
    LagError,
    NumericalError,
    RankError,
    ShapeError,
    SlowCVError,
    TrainingError,
)
from .linear import LinearEncoderDecoder, fit_pca, fit_tcca, fit_tica  # noqa: E402
from .neural import MlpSpec, TaeModel, TrainConfig, train_tae  # noqa: E402
from .stats import TimeSeries  # noqa: E402
