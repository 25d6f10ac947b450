from __future__ import annotations

import dataclasses
import enum
import json
import types
import typing

import numpy as np

import schurqnn.errors

JsonInner = typing.TypeVar('JsonInner')
JsonLayer: typing.TypeAlias = typing.Mapping[str, JsonInner] | typing.Sequence[JsonInner] | bool | float | int | str | None
Json: typing.TypeAlias = JsonLayer['Json']

@typing.runtime_checkable
class JsonFormat(typing.Protocol):
    def to_json(self) -> Json:
        raise NotImplementedError

    @classmethod
    def from_json(cls, v: Json) -> typing.Self:
        raise NotImplementedError

ToJson: typing.TypeAlias = JsonFormat | complex | np.ndarray | np.generic | JsonLayer['ToJson']

def to_json(v: ToJson) -> Json:
    if isinstance(v, JsonFormat):
        return v.to_json()
    elif isinstance(v, np.ndarray):
        if np.iscomplexobj(v):
            return to_json(np.stack([v.real, v.imag], axis=-1))
        return v.tolist()
    elif isinstance(v, np.generic):
        return to_json(v.item())
    elif isinstance(v, complex):
        return [v.real, v.imag]
    elif isinstance(v, dict):
        return {str(k): to_json(val) for k, val in v.items()}
    elif isinstance(v, (list, tuple)):
        return [to_json(val) for val in v]
    elif isinstance(v, (bool, float, int, str, types.NoneType)):
        return v
    else:
        raise TypeError(type(v))

def complex_array(v: Json) -> np.ndarray:
    """Decode nested lists of ``[re, im]`` pairs into a complex array."""
    try:
        pairs = np.asarray(v, dtype=float)
    except (TypeError, ValueError) as e:
        raise schurqnn.errors.ParseError(f'expected complex pairs: {e}')
    if pairs.ndim == 0 or pairs.shape[-1] != 2:
        raise schurqnn.errors.ParseError(f'expected complex pairs, got shape {pairs.shape}')
    return pairs[..., 0] + 1j * pairs[..., 1]

#: Scalar types and the JSON values they accept. bool is excluded from
#: the numeric types even though it subclasses int.
_SCALARS: dict[type, tuple[type, ...]] = {
    float: (int, float),
    int: (int,),
    str: (str,),
}

def from_json[T](cls: type[T], v: Json) -> T:
    """Decode ``v`` as ``cls``, a scalar, a list, an optional or a JsonFormat."""
    args = typing.get_args(cls)
    origin = typing.get_origin(cls) or cls

    if origin is types.UnionType or origin is typing.Union:
        failures = []
        for option in args:
            try:
                return typing.cast(T, from_json(option, v))
            except (TypeError, schurqnn.errors.ParseError) as e:
                failures.append(str(e))
        raise TypeError(f'expected {cls}, got {v!r}: ' + '; '.join(failures))
    if origin is types.NoneType:
        if v is not None:
            raise TypeError('expected None')
        return typing.cast(T, None)
    if not isinstance(origin, type):
        raise TypeError(cls)

    if issubclass(origin, JsonFormat):
        return typing.cast(T, origin.from_json(v))
    if origin is list and len(args) == 1:
        if not isinstance(v, list):
            raise TypeError('expected list')
        return typing.cast(T, [from_json(args[0], x) for x in v])
    if origin in _SCALARS:
        if isinstance(v, bool) or not isinstance(v, _SCALARS[origin]):
            raise TypeError(f'expected {origin.__name__}')
        return typing.cast(T, origin(v))
    raise TypeError(cls)

class Struct:
    """Dataclass mixin that reads and writes itself field by field.

    Missing keys keep their defaults. Unknown keys are rejected.
    """

    def to_json(self) -> Json:
        assert dataclasses.is_dataclass(self)
        return {f.name: to_json(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_json(cls, v: Json) -> typing.Self:
        assert dataclasses.is_dataclass(cls)
        if not isinstance(v, dict):
            raise TypeError(f'expected object for {cls.__name__}')

        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(v) - set(fields))
        if unknown:
            raise schurqnn.errors.UsageError(f'unknown keys {unknown}', where=cls.__name__)

        hints = typing.get_type_hints(cls)
        kwargs = {}
        for name, val in v.items():
            try:
                kwargs[name] = from_json(hints[name], val)
            except TypeError as e:
                raise schurqnn.errors.ParseError(f'{name}: {e}', where=cls.__name__)
        return cls(**kwargs)

# for custom repr and str, common json impl
class Enum(enum.Enum):
    def __repr__(self) -> str:
        return f'{self.__class__.__name__}.{self.name}'

    def __str__(self) -> str:
        return str(self.value)

    def to_json(self) -> Json:
        return self.value

    @classmethod
    def from_json(cls, v: Json) -> typing.Self:
        if not isinstance(v, str):
            raise TypeError(type(v))
        return cls(v)

def dump(v: ToJson, f: typing.TextIO) -> None:
    json.dump(to_json(v), f, indent=2)
    f.write('\n')

def load(f: typing.TextIO) -> Json:
    try:
        return json.load(f)
    except json.JSONDecodeError as e:
        raise schurqnn.errors.ParseError(str(e), where=getattr(f, 'name', None))
