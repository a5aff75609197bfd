import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type, TypeVar

from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from ngf.errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

load_dotenv()

M = TypeVar("M", bound=BaseModel)

PROJECT_ROOT = Path(__file__).resolve().parents[2]

DATA_DIR = Path(os.getenv("NGF_DATA_DIR", "data"))
LOG_CONFIG = Path(os.getenv("NGF_LOG_CONFIG", str(PROJECT_ROOT / "logging.ini")))


def default_jobs() -> int:
    raw = os.getenv("NGF_JOBS", "").strip()
    if not raw:
        return 1
    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigError(f"NGF_JOBS must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise ConfigError(f"NGF_JOBS must be at least 1, got {jobs}")
    return jobs


def resolve_data_path(path: str | os.PathLike) -> Path:
    """Absolute or existing paths are kept; anything else is looked up under NGF_DATA_DIR."""
    p = Path(path).expanduser()
    if p.is_absolute() or p.exists():
        return p
    return DATA_DIR / p


def dataset_files(name: str) -> tuple[Path, Path]:
    # LINQS naming: cora.content / cora.cites
    stem = name.lower()
    return DATA_DIR / f"{stem}.content", DATA_DIR / f"{stem}.cites"


# ---------- Experiment config files ----------
def _parse_value(text: str) -> Any:
    """TOML scalar or array; anything unparsable is kept as a string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _set_dotted(data: Dict[str, Any], model: Type[BaseModel], key: str, value: Any) -> None:
    parts = key.split(".")
    cls: Type[BaseModel] = model
    node = data
    for i, part in enumerate(parts):
        field = cls.model_fields.get(part)
        if field is None:
            raise ConfigError(f"unknown config key {key!r}")
        if i == len(parts) - 1:
            node[part] = value
            return
        ann = field.annotation
        if not (isinstance(ann, type) and issubclass(ann, BaseModel)):
            raise ConfigError(f"{'.'.join(parts[:i + 1])!r} is not a section in {key!r}")
        child = node.get(part)
        if not isinstance(child, dict):
            default = field.get_default(call_default_factory=True)
            child = default.model_dump() if isinstance(default, BaseModel) else {}
            node[part] = child
        node, cls = child, ann


def parse_overrides(items: Sequence[str]) -> List[Tuple[str, Any]]:
    out = []
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        out.append((key.strip(), _parse_value(raw.strip())))
    return out


def load_config(
    model: Type[M],
    path: Optional[str | os.PathLike] = None,
    overrides: Sequence[str] = (),
    **flags: Any,
) -> M:
    """defaults < file < `--set key=value` overrides < dedicated flags (None flags are skipped)."""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    for key, value in parse_overrides(overrides):
        _set_dotted(data, model, key, value)
    for key, value in flags.items():
        if value is not None:
            _set_dotted(data, model, key, value)
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid {model.__name__}: {problems}") from exc


def describe_keys(config: BaseModel, prefix: str = "") -> List[Tuple[str, Any]]:
    """Dotted keys with their current values, nested sections flattened."""
    out: List[Tuple[str, Any]] = []
    for name in type(config).model_fields:
        value = getattr(config, name)
        if isinstance(value, BaseModel):
            out.extend(describe_keys(value, f"{prefix}{name}."))
        else:
            out.append((f"{prefix}{name}", value))
    return out
