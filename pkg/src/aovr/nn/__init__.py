from .autograd import Tensor
from .layers import Dense, GRUCell, SelfAttention, softmax_cross_entropy
from .optim import Adam, GradientError
from .gradcheck import finite_diff_check, finite_diff_check_sampled
from .checkpoint import save_tensors, load_tensors

__all__ = [
    "Tensor", "Dense", "GRUCell", "SelfAttention", "softmax_cross_entropy",
    "Adam", "GradientError", "finite_diff_check", "finite_diff_check_sampled",
    "save_tensors", "load_tensors",
]
