"""
ConfigParser - Flat key-value experiment files with sweep axes
Safely evaluates values like "n_features = range(5, 45, 5)" using simpleeval

File format:
    # comment
    name = feature-sweep
    method = PCA, ESP              # a list: one experiment per entry
    n_features = range(5, 45, 5)
    window_size = 50
    pso.swarm_size = 10            # dotted keys reach nested blocks
    kernel.C = 10 ** 2

Bare words evaluate to themselves as strings. Any list value is a sweep axis;
expand_sweep() takes the cartesian product in file order (first axis slowest).
"""
import itertools
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from simpleeval import DEFAULT_FUNCTIONS, EvalWithCompoundTypes, InvalidExpression

from gaitid.errors import ConfigError
from gaitid.pipeline_config import PipelineConfig

logger = logging.getLogger(__name__)

KEY_ALIASES = {
    "features": "n_features",
    "window": "window_size",
    "windows": "window_size",
    "methods": "method",
    "sensor": "sensors",
    "pocket": "sub_activities",
    "pockets": "sub_activities",
    "sub_activity": "sub_activities",
}

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)?$")


def _linspace(start, stop, num=50):
    return [float(v) for v in np.linspace(start, stop, int(num))]


class ValueEvaluator:
    """
    simpleeval wrapper for config values.

    Example:
        >>> ValueEvaluator().evaluate("range(5, 45, 5)")
        [5, 10, 15, 20, 25, 30, 35, 40]
        >>> ValueEvaluator().evaluate("PCA, ESP")
        ['PCA', 'ESP']
    """

    def __init__(self):
        functions = {name: DEFAULT_FUNCTIONS[name] for name in ("int", "float", "str")}
        functions.update({
            "range": lambda *args: list(range(*(int(a) for a in args))),
            "linspace": _linspace,
            "min": min,
            "max": max,
            "abs": abs,
            "round": round,
        })
        # unknown names are bare words
        self.evaluator = EvalWithCompoundTypes(functions=functions, names=lambda node: node.id)

    def evaluate(self, raw: str) -> Any:
        raw = raw.strip()
        if raw == "":
            raise ConfigError("empty value")
        try:
            value = self.evaluator.eval(raw)
        except (InvalidExpression, SyntaxError, TypeError, ValueError, ZeroDivisionError, KeyError, AttributeError):
            # paths and other free text stay verbatim
            return raw
        return _listify(value)


def _listify(value: Any) -> Any:
    if isinstance(value, (tuple, list)):
        return [_listify(v) for v in value]
    return value


def _strip_comment(line: str) -> str:
    in_quote: Optional[str] = None
    for index, char in enumerate(line):
        if char in "'\"":
            if in_quote is None:
                in_quote = char
            elif in_quote == char:
                in_quote = None
        elif char == "#" and in_quote is None:
            return line[:index]
    return line


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """
    Parse config text into {key: value}, keys normalized and in file order.

    Raises:
        ConfigError: malformed line or key (message carries source:line)
    """
    evaluator = ValueEvaluator()
    assignments: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = _strip_comment(line).strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {content!r}")
        key, raw = content.split("=", 1)
        key = key.strip()
        if not _KEY.match(key):
            raise ConfigError(f"{source}:{number}: invalid key {key!r}")
        key = KEY_ALIASES.get(key, key)
        try:
            assignments[key] = evaluator.evaluate(raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{number}: {exc}") from exc
    return assignments


def parse_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def _assign(data: Dict[str, Any], key: str, value: Any):
    if "." in key:
        block, leaf = key.split(".", 1)
        if block not in data or not isinstance(data[block], dict):
            raise ConfigError(f"unknown configuration block {block!r} in key {key!r}")
        if leaf not in data[block]:
            raise ConfigError(f"unknown key {leaf!r} in block {block!r}")
        data[block][leaf] = value
    else:
        if key not in data:
            raise ConfigError(f"unknown configuration key {key!r}")
        data[key] = value


# keys whose values are lists by nature, never sweep axes
LIST_VALUED_KEYS = {"pso.bounds"}


def _is_axis(key: str, value: Any) -> bool:
    return isinstance(value, list) and key not in LIST_VALUED_KEYS


def sweep_axes(assignments: Dict[str, Any]) -> List[Tuple[str, List[Any]]]:
    """Keys whose value is a list, in file order."""
    return [(key, value) for key, value in assignments.items() if _is_axis(key, value)]


def _label(key: str, value: Any) -> str:
    leaf = key.split(".")[-1]
    text = "+".join(str(v) for v in value) if isinstance(value, list) else str(value)
    return re.sub(r"[^\w.=+-]+", "_", f"{leaf}={text}")


def expand_sweep(assignments: Dict[str, Any], base: Optional[PipelineConfig] = None) -> List[PipelineConfig]:
    """
    Expand assignments into one validated-shape PipelineConfig per sweep point.

    Args:
        assignments: Output of parse_config_text (plus any flag overrides)
        base: Starting configuration (defaults to PipelineConfig())

    Returns:
        Configurations in cartesian-product order; names get "-key=value"
        suffixes for every swept key.

    Raises:
        ConfigError: unknown keys or values the configuration rejects
    """
    base = base or PipelineConfig()
    axes = sweep_axes(assignments)
    for key, values in axes:
        if not values:
            raise ConfigError(f"sweep axis {key!r} is empty")
    scalars = {k: v for k, v in assignments.items() if not _is_axis(k, v)}

    configs = []
    for combination in itertools.product(*(values for _, values in axes)):
        data = base.to_dict()
        for key, value in scalars.items():
            _assign(data, key, value)
        suffix = []
        for (key, _), value in zip(axes, combination):
            _assign(data, key, value)
            suffix.append(_label(key, value))
        if suffix:
            data["name"] = "-".join([str(data["name"])] + suffix)
        try:
            configs.append(PipelineConfig.from_dict(data))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"configuration {data['name']!r}: {exc}") from exc
    logger.info("Expanded %d sweep axes into %d experiments", len(axes), len(configs))
    return configs


def load_experiments(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None,
                     base: Optional[PipelineConfig] = None) -> List[PipelineConfig]:
    """Parse a config file (optional), apply flag overrides on top, expand the sweep."""
    assignments = parse_config_file(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            assignments[KEY_ALIASES.get(key, key)] = value
    return expand_sweep(assignments, base=base)


if __name__ == "__main__":
    sample = """
    name = demo
    method = PCA, ESP
    n_features = range(10, 40, 10)
    kernel.C = 10 ** 2
    dataset_path = data/raw   # free text
    """
    parsed = parse_config_text(sample)
    assert parsed["method"] == ["PCA", "ESP"]
    assert parsed["n_features"] == [10, 20, 30]
    assert parsed["kernel.C"] == 100
    assert parsed["dataset_path"] == "data/raw"
    print(f"{len(sweep_axes(parsed))} sweep axes parsed")
