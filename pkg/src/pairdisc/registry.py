"""Decorator registration of the ordered steps behind each CLI command."""
from functools import wraps
from typing import Callable, Dict, List, Tuple, TypeVar

from .contexts import BaseContext

CommandStep = Callable[[BaseContext], None]
T = TypeVar("T", bound=CommandStep)


class CommandRegistry:
    """Maps a command name to its steps, kept sorted by ``order``."""

    def __init__(self):
        self._steps: Dict[str, List[Tuple[int, CommandStep]]] = {}

    def register(self, command: str, order: int = 100):
        """Decorator adding a step to ``command``; lower orders run first."""
        def decorator(func: T) -> T:
            steps = self._steps.setdefault(command, [])
            position = len(steps)
            for i, (existing, _) in enumerate(steps):
                if order < existing:
                    position = i
                    break
            steps.insert(position, (order, func))

            @wraps(func)
            def wrapper(*args, **kwargs):
                return func(*args, **kwargs)
            return wrapper
        return decorator

    def execute(self, command: str, context: BaseContext) -> None:
        if command not in self._steps:
            raise KeyError(f"no steps registered for command '{command}'")
        for _, step in self._steps[command]:
            step(context)

    def get_commands(self) -> List[str]:
        return list(self._steps)

    def get_steps_for_command(self, command: str) -> List[str]:
        return [func.__name__ for _, func in self._steps.get(command, [])]


command_registry = CommandRegistry()


def step(command: str, order: int = 100):
    """Register a step of ``command``."""
    return command_registry.register(command, order)
