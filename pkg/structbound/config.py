import json
import re
from pathlib import Path
from typing import Any, Dict, Generic, List, Optional, Sequence, Type, TypeVar, Union

import numpy as np

_T = TypeVar("_T")

SECTION_RE = re.compile(r"^\[\s*([\w.]+)\s*\]$")


class ConfigListener:
    def config_changed(self, key, value):
        pass


class BaseConfigValue(Generic[_T]):
    value: _T

    def __init__(self, type: Type, value: Any, null: bool = False):
        self.type, self.null = type, null
        self.value = self.cast(value)

    def cast(self, value: Any) -> _T:
        return value

    def set_value(self, value: Any) -> bool:
        """Returns "changed" bool"""
        value = self.cast(value)
        if not _equal(value, self.value):
            self.value = value
            return True
        return False


class BoolValue(BaseConfigValue[bool]):
    def __init__(self, value: Any, null: bool = False):
        super().__init__(bool, value, null=null)

    def cast(self, value: Any) -> bool:
        """
        Emulates ConfigParser.getboolean():
        https://docs.python.org/3.8/library/configparser.html#configparser.ConfigParser.getboolean
        """
        if isinstance(value, bool):
            return value
        if isinstance(value, (int, float)):
            return bool(value)
        if isinstance(value, str):
            if value.lower() in ("1", "yes", "true", "on"):
                return True
            if value.lower() in ("0", "no", "false", "off"):
                return False
        raise ValueError(f"'{value}' is not a valid boolean value.")


class IntValue(BaseConfigValue[int]):
    def __init__(self, value: Any, null: bool = False):
        super().__init__(int, value, null=null)

    def cast(self, value: Any) -> int:
        return int(value)


class NullableIntValue(BaseConfigValue[Optional[int]]):
    def __init__(self, value: Any = None):
        super().__init__(int, value, null=True)

    def cast(self, value: Any):
        if value is None or value == "":
            return None
        return int(value)


class FloatValue(BaseConfigValue[float]):
    def __init__(self, value: Any, null: bool = False):
        super().__init__(float, value, null=null)

    def cast(self, value: Any) -> float:
        return float(value)


class NullableFloatValue(BaseConfigValue[Optional[float]]):
    def __init__(self, value: Any = None):
        super().__init__(float, value, null=True)

    def cast(self, value: Any):
        if value is None or value == "":
            return None
        return float(value)


class StringValue(BaseConfigValue[str]):
    def __init__(self, value: Any):
        super().__init__(str, value)

    def cast(self, value: Any) -> str:
        return _unquote(str(value))


class ChoiceValue(BaseConfigValue[str]):
    def __init__(self, choices: Sequence[str], value: Any):
        self.choices = tuple(choices)
        super().__init__(str, value)

    def cast(self, value: Any) -> str:
        value = _unquote(str(value)).lower()
        if value not in self.choices:
            raise ValueError(f"'{value}' is not one of {', '.join(self.choices)}.")
        return value


class JSONValue(BaseConfigValue[Any]):
    """Vectors, matrices and kernel term lists are written as JSON literals."""
    def __init__(self, value: Any = None):
        super().__init__(object, value, null=True)

    def cast(self, value: Any):
        if isinstance(value, str):
            try:
                return json.loads(value)
            except json.JSONDecodeError as e:
                raise ValueError(f"'{value}' is not a valid JSON literal.") from e
        return value


class ArrayValue(JSONValue):
    def cast(self, value: Any):
        value = super().cast(value)
        if value is None:
            return None
        arr = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"'{value}' contains non-finite entries.")
        return arr


class FloatListValue(BaseConfigValue[List[float]]):
    """Accepts "1,10,100", "[1, 10, 100]" or an actual sequence."""
    def __init__(self, value: Any):
        super().__init__(list, value)

    def cast(self, value: Any) -> List[float]:
        if isinstance(value, str):
            value = value.strip().strip("[]")
            return [float(v) for v in value.split(",") if v.strip()]
        return [float(v) for v in value]


class Config:
    """Run defaults: where output goes, how often rows are written, and so on."""
    _fields: Dict[str, BaseConfigValue]
    _listeners: List[ConfigListener]

    def __init__(self):
        self._fields = {
            "debug": BoolValue(False),
            "verbose": BoolValue(False),
            "out": StringValue("output"),
            "stride": IntValue(10),
            "snapshots": IntValue(0),
            "seed": IntValue(0),
            "workers": NullableIntValue(),
            "cfl_factor": FloatValue(0.9),
            "ktilde": FloatListValue([1.0, 10.0, 100.0, 1000.0]),
            "levels": IntValue(3),
            "transform_tolerance": FloatValue(1e-6),
        }
        self._listeners = []

    def __getattr__(self, name: str):
        if not name.startswith("_") and name in self._fields:
            return self._fields[name].value
        raise AttributeError(name)

    def __setattr__(self, name: str, value: Any):
        if not name.startswith("_") and name in self._fields:
            if self._fields[name].set_value(value):
                for listener in self._listeners:
                    listener.config_changed(name, self._fields[name].value)
        else:
            super().__setattr__(name, value)

    def __eq__(self, __o: object) -> bool:
        field_names = self._fields.keys()
        if isinstance(__o, self.__class__):
            return all(_equal(self._fields[name].value, __o._fields[name].value) for name in field_names)
        return super().__eq__(__o)

    def __getstate__(self):
        return {"_fields": self._fields}

    def add_listener(self, listener: ConfigListener):
        if not hasattr(self, "_listeners"):
            self._listeners = []
        self._listeners.append(listener)

    def update(self, **kwargs):
        for key, value in kwargs.items():
            if value is not None and key in self._fields:
                setattr(self, key, value)

    @classmethod
    def from_default_files(cls):
        local_conf_path = Path(__file__).parent / "defaults.conf"
        user_conf_path = Path.home() / ".structbound"
        conf_path = user_conf_path if user_conf_path.is_file() \
            else local_conf_path if local_conf_path.is_file() \
            else None
        if conf_path is not None:
            return cls.from_file(conf_path)
        return cls()

    @classmethod
    def from_file(cls, file: Union[str, Path]):
        """Raises error if file cannot be read"""
        new_config = cls()

        with open(file) as f:
            for row in f:
                try:
                    key, value = re.split(r" *= *", _strip_comment(row), maxsplit=1)
                    setattr(new_config, key, value)
                except ValueError:
                    # Row did not contain a "=", or cast failed
                    pass

        return new_config


class ConfigSection:
    """
    Raw `key = value` rows of one scenario section. Values stay strings until
    the model asks for them with a typed config value, so that a single bad
    value becomes one validation violation instead of an early abort.
    """
    def __init__(self, name: str, rows: Optional[Dict[str, Any]] = None):
        self.name = name
        self.rows: Dict[str, Any] = dict(rows or {})

    def __contains__(self, key: str) -> bool:
        return key in self.rows

    def get(self, key: str, config_value: BaseConfigValue):
        """Raises ValueError naming the offending key if the cast fails"""
        if key not in self.rows:
            return config_value.value
        try:
            config_value.set_value(self.rows[key])
        except (ValueError, TypeError) as e:
            raise ValueError(f"{self.name}.{key}: {e}") from e
        return config_value.value

    def set(self, key: str, value: Any):
        self.rows[key] = value


class ScenarioConfig:
    SECTIONS = (
        "interior", "boundary.b1", "boundary.b2", "interaction.b1", "interaction.b2",
        "time", "initial", "output",
    )

    def __init__(self, source: Optional[Path] = None):
        self.source = source
        self.sections: Dict[str, ConfigSection] = {name: ConfigSection(name) for name in self.SECTIONS}
        self.unknown_sections: List[str] = []

    def __getitem__(self, name: str) -> ConfigSection:
        if name not in self.sections:
            self.sections[name] = ConfigSection(name)
        return self.sections[name]

    def override(self, dotted_key: str, value: Any):
        section, key = dotted_key.rsplit(".", 1)
        self[section].set(key, value)

    def copy(self) -> "ScenarioConfig":
        new_config = ScenarioConfig(self.source)
        new_config.sections = {name: ConfigSection(name, s.rows) for name, s in self.sections.items()}
        new_config.unknown_sections = list(self.unknown_sections)
        return new_config

    def to_text(self) -> str:
        lines = []
        for name, section in self.sections.items():
            if not section.rows:
                continue
            lines.append(f"[{name}]")
            for key, value in section.rows.items():
                lines.append(f"{key} = {_serialize(value)}")
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str, source: Optional[Path] = None) -> "ScenarioConfig":
        config = cls(source)
        current = "interior"

        for row in text.splitlines():
            row = _strip_comment(row)
            if not row:
                continue
            match = SECTION_RE.match(row)
            if match:
                current = match.group(1)
                if current not in cls.SECTIONS and current not in config.unknown_sections:
                    config.unknown_sections.append(current)
                continue
            try:
                key, value = re.split(r" *= *", row, maxsplit=1)
            except ValueError:
                # Row did not contain a "="
                continue
            config[current].set(key.strip(), value.strip())

        return config

    @classmethod
    def from_file(cls, file: Union[str, Path]) -> "ScenarioConfig":
        """Raises error if file cannot be read"""
        with open(file) as f:
            return cls.from_text(f.read(), source=Path(file))


def _strip_comment(row: str) -> str:
    row = row.strip()
    if row.startswith("#"):
        return ""
    return re.sub(r"\s+#.*$", "", row)


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _serialize(value: Any) -> str:
    if isinstance(value, np.ndarray):
        return json.dumps(value.tolist())
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    return str(value)


def _equal(a: Any, b: Any) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return isinstance(a, np.ndarray) and isinstance(b, np.ndarray) and a.shape == b.shape and bool(np.all(a == b))
    return a == b
