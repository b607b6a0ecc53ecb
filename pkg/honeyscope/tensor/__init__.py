from honeyscope.tensor.autograd import Tensor, Graph, backward, no_grad, precision, default_dtype
from honeyscope.tensor.ops import (
    conv2d, maxpool2, leaky_relu, batch_norm, concat_channels, space_to_depth, depth_to_space,
    sigmoid, tanh, softplus, log_softmax, exp, log, matmul, reshape, slice_last, sum_, mean,
)
from honeyscope.tensor.optim import SGD, Adam, OptimizerState, get_optimizer, AVAILABLE_OPTIMIZERS
