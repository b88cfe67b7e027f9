"""Online active learning on noisy-label streams with a strong and a weak labeler."""
from .classifier import MLP, ClassifierKind, SoftmaxRegression, TrainConfig, build_classifier
from .selection import BatchPolicy, EngineConfig, run_batch, run_stream
from .stream import NoiseConfig, StreamPlan, generate_gaussian_blobs, make_stream
from .types import BatchMetrics, CostLedger, Sample, SelectionConfig

__version__ = "0.1.0"
