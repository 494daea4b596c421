"""RMSProp update and per-epoch learning-rate decay."""
import numpy as np

from .errors import NonFiniteError
from .models import RmsPropConfig
from .params import ParameterStore


def rmsprop_step(store: ParameterStore, cfg: RmsPropConfig) -> None:
    """Apply one plain RMSProp update to every parameter, then zero the gradients.

    rms <- alpha*rms + (1-alpha)*g^2 ; value <- value - lr*g / (sqrt(rms) + eps)

    All gradients are checked before anything is written, so a non-finite
    gradient leaves the store untouched.
    """
    for param in store:
        if not np.all(np.isfinite(param.grad)):
            raise NonFiniteError(f"non-finite gradient in parameter '{param.name}'")

    lr, alpha, eps = cfg.learning_rate, cfg.alpha, cfg.epsilon
    for param in store:
        g = param.grad
        param.rms *= alpha
        param.rms += (1.0 - alpha) * g * g
        param.value -= lr * g / (np.sqrt(param.rms) + eps)
    store.zero_grad()


def epoch_decay(cfg: RmsPropConfig) -> RmsPropConfig:
    """Return ``cfg`` with its learning rate multiplied by the decay factor."""
    return cfg.model_copy(update={"learning_rate": cfg.learning_rate * cfg.decay_factor})
