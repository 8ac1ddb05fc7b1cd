import functools
import sys
import time
from enum import Enum
from typing import Any, Callable, Optional, Tuple, TypeVar, cast

from loguru import logger

F = TypeVar("F", bound=Callable[..., Any])


class Level(Enum):
    TRACE = 5
    DEBUG = 10
    INFO = 20
    SUCCESS = 25
    WARNING = 30
    ERROR = 40
    CRITICAL = 50

    def __str__(self):
        return self.name

    def __repr__(self):
        return self.name


def log(start: Optional[str] = None,
        end: Optional[str] = None,
        format: Optional[Tuple[int, ...]] = None,
        level: Level = Level.INFO) -> Callable[[F], F]:
    """
    Log a message before and after the wrapped call.

    ``format`` lists positional argument indexes substituted into the messages;
    index -1 stands for the return value (end message only). The end message
    may also reference ``{elapsed}``, the call duration in seconds.
    """
    def outer_wrapper(function: F) -> F:
        @functools.wraps(function)
        def wrapper(*args, **kwargs):
            if start:
                format_args = [args[index] for index in (format or ()) if index != -1]
                logger.log(level.name, start.format(*format_args))

            started = time.perf_counter()
            result = function(*args, **kwargs)

            if end:
                format_args = [args[index] if index != -1 else result for index in (format or ())]
                elapsed = f"{time.perf_counter() - started:.2f}"
                logger.log(level.name, end.format(*format_args, elapsed=elapsed))

            return result

        return cast(F, wrapper)

    return outer_wrapper


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Install the single stderr sink used by the command-line tool"""
    logger.remove()
    if verbose:
        threshold = Level.DEBUG
    elif quiet:
        threshold = Level.WARNING
    else:
        threshold = Level.INFO
    logger.add(sys.stderr, level=threshold.name,
               format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}")
