"""Continuous-domain discriminative convolution operators."""
import os

# CONTCONV_THREADS bounds BLAS/OpenMP workers; it only takes effect when set
# before numpy is first imported.
if os.environ.get("CONTCONV_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["CONTCONV_THREADS"])

from .fourier import DiscreteSignal2D, FourierSeries1D, FourierSeries2D
from .kernels import BACKEND
from .labels import LabelSpec
from .learner import FeatureMap, FilterBank, SampleMemory, TrainingSample
from .regularizer import PenaltySpec

__version__ = "0.1.0"
