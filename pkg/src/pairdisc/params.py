"""Named trainable tensors with gradient accumulators and RMSProp state."""
import hashlib
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, as_tensor, check_finite


class Parameter:
    """One trainable tensor with its gradient accumulator and squared-gradient average."""

    __slots__ = ("name", "value", "grad", "rms")

    def __init__(self, name: str, value: Tensor, rms: Optional[Tensor] = None):
        value = as_tensor(value)
        if value.size == 0:
            raise ShapeError(f"{name}: empty parameter")
        check_finite(name, value)
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        if rms is None:
            rms = np.zeros_like(value)
        rms = as_tensor(rms)
        if rms.shape != value.shape:
            raise ShapeError(f"{name}: rms shape {rms.shape} != value shape {value.shape}")
        self.rms = rms

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape


class ParameterStore:
    """Ordered map from parameter name to :class:`Parameter`.

    The set of names is frozen once :meth:`freeze` is called; after that only
    values, gradients and RMSProp state change.
    """

    def __init__(self):
        self._entries: Dict[str, Parameter] = {}
        self._frozen = False

    def add(self, name: str, value: Tensor, rms: Optional[Tensor] = None) -> Parameter:
        """Register a new parameter.

        Args:
            name: Unique dotted name such as ``enc.W_x``.
            value: Initial value; converted to the library dtype.
            rms: Optional RMSProp running average, zeros when omitted.

        Returns:
            The stored :class:`Parameter`.

        Raises:
            KeyError: If the store is frozen or ``name`` is taken.
            ShapeError: If ``value`` is empty or ``rms`` has another shape.
        """
        if self._frozen:
            raise KeyError(f"cannot add '{name}': parameter set is frozen")
        if name in self._entries:
            raise KeyError(f"duplicate parameter name '{name}'")
        param = Parameter(name, value, rms)
        self._entries[name] = param
        return param

    def freeze(self) -> "ParameterStore":
        self._frozen = True
        return self

    def __getitem__(self, name: str) -> Parameter:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def names(self, prefix: str = "") -> List[str]:
        """Parameter names starting with ``prefix``, in insertion order."""
        return [name for name in self._entries if name.startswith(prefix)]

    def value(self, name: str) -> Tensor:
        return self._entries[name].value

    def grad(self, name: str) -> Tensor:
        return self._entries[name].grad

    def accumulate(self, name: str, delta: Tensor) -> None:
        """Add ``delta`` into the gradient accumulator of ``name``.

        Args:
            name: Parameter to update.
            delta: Gradient contribution with the parameter's shape.

        Raises:
            KeyError: If ``name`` is unknown.
            ShapeError: If ``delta`` has the wrong shape.
        """
        param = self._entries[name]
        if np.shape(delta) != param.shape:
            raise ShapeError(f"{name}: gradient shape {np.shape(delta)} != {param.shape}")
        param.grad += delta

    def zero_grad(self) -> None:
        for param in self._entries.values():
            param.grad.fill(0.0)

    def grad_norm(self) -> float:
        """L2 norm of all gradient accumulators taken together."""
        total = 0.0
        for param in self._entries.values():
            total += float(np.sum(param.grad * param.grad))
        return float(np.sqrt(total))

    def scale_grads(self, factor: float) -> None:
        for param in self._entries.values():
            param.grad *= factor

    def copy(self) -> "ParameterStore":
        """Deep copy of values, gradients and RMSProp state, keeping the frozen flag."""
        clone = ParameterStore()
        for param in self._entries.values():
            entry = clone.add(param.name, param.value.copy(), param.rms.copy())
            entry.grad[...] = param.grad
        clone._frozen = self._frozen
        return clone

    def checksum(self, prefix: str = "") -> str:
        """SHA-256 over names and raw value bytes of the selected parameters.

        Args:
            prefix: Only parameters whose name starts with it are hashed.

        Returns:
            The hex digest.
        """
        digest = hashlib.sha256()
        for name in self.names(prefix):
            digest.update(name.encode("utf-8"))
            digest.update(self._entries[name].value.tobytes())
        return digest.hexdigest()

    def coordinates(self, names: Optional[Iterable[str]] = None) -> List[Tuple[str, int]]:
        """All ``(name, flat_index)`` pairs, in store order."""
        selected = list(names) if names is not None else list(self._entries)
        return [(name, idx) for name in selected for idx in range(self._entries[name].value.size)]
