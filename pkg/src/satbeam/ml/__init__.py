from .approaches import *  # noqa: F401,F403
from .kmeans import KMeansModel, elbow_sweep, kmeans_fit, pick_knee  # noqa: F401
from .metrics import MultilabelScores, multilabel_metrics  # noqa: F401
from .nn import MlpModel, TrainConfig, bce_loss, ce_loss, loss_and_grads, mlp_forward  # noqa: F401
