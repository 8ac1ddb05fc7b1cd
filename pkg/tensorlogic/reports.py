import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Any, Callable, Dict, Iterable, Mapping, Optional, Union

from loguru import logger
from the_retry import retry

from . import __version__
from .logging import Level, log

PathLike = Union[str, Path]

ENGINE_VERSION = __version__


@retry(
    expected_exception=(PermissionError,),
    attempts=3,
    backoff=0.2,
    exponential_backoff=True,
)
def _replace(source: str, target: Path) -> None:
    os.replace(source, target)


def atomic_write(path: PathLike, writer: Callable[[IO[bytes]], None]) -> Path:
    """Write through a temporary file in the target directory, then rename over ``path``"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp", delete=False)
    try:
        with handle:
            writer(handle)
            handle.flush()
            os.fsync(handle.fileno())
        _replace(handle.name, target)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write(path, lambda handle: handle.write(text.encode("utf-8")))


def content_hash(path: PathLike) -> str:
    """Git blob hash of a file's bytes"""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def hash_inputs(paths: Mapping[str, Optional[PathLike]]) -> Dict[str, str]:
    return {name: content_hash(path) for name, path in sorted(paths.items()) if path is not None}


@dataclass
class RunReport:
    """
    Self-describing result of one command or experiment.

    Reports for the same config and seed are identical except for
    ``wall_clock_seconds``.
    """
    command: str
    config: Dict[str, Any] = field(default_factory=dict)
    dataset: Dict[str, Any] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)
    engine_version: str = ENGINE_VERSION
    wall_clock_seconds: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunReport":
        return cls(**dict(data))

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    @log("Writing report to {}", "Report written", format=(1,), level=Level.DEBUG)
    def write(self, path: PathLike) -> Path:
        target = atomic_write_text(path, self.to_json())
        logger.info(f"Report saved to {target}")
        return target


def _plain(value: Any) -> Any:
    """Convert numpy scalars, tuples and paths into JSON-native values"""
    if isinstance(value, Mapping):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items: Iterable[Any] = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [_plain(item) for item in items]
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "item") and callable(value.item):
        return value.item()
    return value
