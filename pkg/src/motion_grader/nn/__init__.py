from .layers import (
    BatchNormLayer,
    ConvLayer,
    DenseLayer,
    Dropout,
    ReLU,
    batchnorm_backward,
    batchnorm_forward,
    conv1d_backward,
    conv1d_forward,
    cross_entropy,
    dropout,
    dropout_backward,
    global_avg_pool,
    global_avg_pool_backward,
    l1_penalty,
    relu,
    relu_backward,
    softmax,
    softmax_cross_entropy,
)
from .model import (
    ModelConfig,
    ResidualUnit,
    ResTcnModel,
    TrainConfig,
    build_res_tcn,
    load_checkpoint,
    make_optimizer,
    model_backward,
    model_forward,
    residual_unit_forward,
    save_checkpoint,
    train_step,
)
from .optim import NesterovSGD, sgd_nesterov_step
