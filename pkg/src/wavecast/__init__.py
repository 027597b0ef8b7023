"""Multivariate time-series forecasting with learnable DB2 wavelet mixing."""

from .dwt import Db2Filter, WaveletCoeffs, dwt_level, idwt_level, make_db2_filter, wavedec, waverec
from .model import Checkpoint, ModelConfig, SeriesBatch, model_backward, model_forward
from .training import TrainConfig, TrainReport, fit
from .wavelet_layer import LearnableWaveletParams, init_params, mldb_backward, mldb_forward

__version__ = "0.1.0"

__all__ = [
    "Db2Filter",
    "WaveletCoeffs",
    "make_db2_filter",
    "dwt_level",
    "idwt_level",
    "wavedec",
    "waverec",
    "LearnableWaveletParams",
    "init_params",
    "mldb_forward",
    "mldb_backward",
    "ModelConfig",
    "Checkpoint",
    "SeriesBatch",
    "model_forward",
    "model_backward",
    "TrainConfig",
    "TrainReport",
    "fit",
]
