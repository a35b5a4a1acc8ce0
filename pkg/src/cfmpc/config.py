from __future__ import annotations

import copy
import logging
import os
from pathlib import Path
from typing import Any, Iterable, TypeVar

import yaml
from pydantic import BaseModel, TypeAdapter, ValidationError

from cfmpc.errors import ConfigError

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def config_dir() -> Path:
    return Path(os.getenv("CFMPC_CONFIG_DIR", DEFAULT_CONFIG_DIR))


def output_dir() -> Path:
    return Path(os.getenv("CFMPC_OUT_DIR", "runs"))


def read_yaml(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return raw


def apply_overrides(raw: dict[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """Apply `a.b.c=value` overrides; list items are addressed by integer keys."""
    result = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, text = item.split("=", 1)
        value = yaml.safe_load(text)
        node: Any = result
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = _child(node, part, create=True)
        _assign(node, parts[-1], value)
        logger.debug(f"override {key} = {value!r}")
    return result


def _child(node: Any, part: str, create: bool) -> Any:
    if isinstance(node, list):
        return node[_index(node, part)]
    if not isinstance(node, dict):
        raise ConfigError(f"cannot descend into '{part}'")
    if part not in node:
        if not create:
            raise ConfigError(f"unknown key '{part}'")
        node[part] = {}
    return node[part]


def _assign(node: Any, part: str, value: Any) -> None:
    if isinstance(node, list):
        node[_index(node, part)] = value
    elif isinstance(node, dict):
        node[part] = value
    else:
        raise ConfigError(f"cannot assign '{part}'")


def _index(node: list[Any], part: str) -> int:
    try:
        index = int(part)
    except ValueError as e:
        raise ConfigError(f"'{part}' is not a list index") from e
    if not -len(node) <= index < len(node):
        raise ConfigError(f"list index {index} out of range")
    return index


def validate(raw: dict[str, Any], schema: type[T] | TypeAdapter[T], source: str = "<memory>") -> T:
    adapter = schema if isinstance(schema, TypeAdapter) else TypeAdapter(schema)
    try:
        return adapter.validate_python(raw)
    except ValidationError as e:
        raise ConfigError(f"invalid config {source}:\n{e}") from e


def load_document(
    path: str | Path, schema: type[T] | TypeAdapter[T], overrides: Iterable[str] = ()
) -> T:
    raw = apply_overrides(read_yaml(path), overrides)
    return validate(raw, schema, str(path))


def resolve_reference(reference: str | Path, relative_to: str | Path | None = None) -> Path:
    """Resolve a file referenced from a config: relative to the referencing file, then the config dir."""
    reference = Path(reference)
    if reference.is_absolute():
        return reference
    candidates = []
    if relative_to is not None:
        candidates.append(Path(relative_to).parent / reference)
    candidates.append(config_dir() / reference)
    for candidate in candidates:
        if candidate.exists():
            return candidate
    raise ConfigError(f"cannot resolve '{reference}' (looked in {[str(c) for c in candidates]})")


def dump_yaml(model: BaseModel | dict[str, Any], path: str | Path) -> None:
    data = model.model_dump(mode="json") if isinstance(model, BaseModel) else model
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))
