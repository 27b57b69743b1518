"""Learnable parameter containers for the attention LSTM variants.

All containers are frozen dataclasses of float64 arrays. Gradients and Adam moments reuse the
same containers, so every tensor has a stable dotted name (``"lstm.W_xi"``,
``"temporal.W_alpha"``, ...) used by the optimizer and the checkpoint format.

Shapes follow the row-vector convention: input weights are ``D x H`` and hidden weights
``H x H`` so that a gate pre-activation reads ``x_t @ W_x + h_{t-1} @ W_h + b``.
"""

from dataclasses import dataclass, field, fields, replace
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Dict, Final, List, Optional, Tuple

import numpy as np

from attnhar.errors import ConfigError, ShapeError


class Variant(str, Enum):
    """Model variant: which attention mechanisms are active."""

    PLAIN = "plain"
    TEMPORAL = "temporal"
    SENSOR = "sensor"
    TEMPORAL_SENSOR = "temporal_sensor"

    @property
    def has_temporal(self) -> bool:
        return self in (Variant.TEMPORAL, Variant.TEMPORAL_SENSOR)

    @property
    def has_sensor(self) -> bool:
        return self in (Variant.SENSOR, Variant.TEMPORAL_SENSOR)


@dataclass(frozen=True)
class LossConfig:
    """Variant selection and continuity regularizer strengths.

    Attributes:
        variant: Active attention mechanisms.
        lambda1: Temporal continuity strength (applied only with temporal attention).
        lambda2: Sensor continuity strength (applied only with sensor attention).
    """

    variant: Variant = Variant.TEMPORAL_SENSOR
    lambda1: float = 0.1
    lambda2: float = 0.5

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "variant", Variant(self.variant))
        except ValueError:
            choices = ", ".join(v.value for v in Variant)
            raise ConfigError(f"must be one of {choices}, got '{self.variant}'", "variant")
        for name in ("lambda1", "lambda2"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"must be finite and >= 0, got {value}", name)
            object.__setattr__(self, name, value)


def _check_shape(name: str, array: np.ndarray, expected: Tuple[int, ...]) -> None:
    if array.shape != expected:
        raise ShapeError(f"{name} has the wrong shape", array.shape, expected)


def _tensor(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class LstmParams:
    """Weights of one LSTM layer (input, forget, cell and output gates).

    The cell bias ``b_c`` is optional; the recurrence has none by default.
    """

    W_xi: np.ndarray
    W_xf: np.ndarray
    W_xc: np.ndarray
    W_xo: np.ndarray
    W_hi: np.ndarray
    W_hf: np.ndarray
    W_hc: np.ndarray
    W_ho: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                object.__setattr__(self, f.name, _tensor(value))
        if self.W_xi.ndim != 2:
            raise ShapeError("W_xi must be a matrix", self.W_xi.shape, (0, 0))
        d, h = self.W_xi.shape
        for name in ("W_xf", "W_xc", "W_xo"):
            _check_shape(name, getattr(self, name), (d, h))
        for name in ("W_hi", "W_hf", "W_hc", "W_ho"):
            _check_shape(name, getattr(self, name), (h, h))
        for name in ("b_i", "b_f", "b_o"):
            _check_shape(name, getattr(self, name), (h,))
        if self.b_c is not None:
            _check_shape("b_c", self.b_c, (h,))

    @property
    def input_size(self) -> int:
        return int(self.W_xi.shape[0])

    @property
    def hidden_size(self) -> int:
        return int(self.W_xi.shape[1])

    # Gate order in the stacked matrices: input, forget, cell candidate, output.
    @cached_property
    def W_x_stacked(self) -> np.ndarray:
        return np.hstack([self.W_xi, self.W_xf, self.W_xc, self.W_xo])

    @cached_property
    def W_h_stacked(self) -> np.ndarray:
        return np.hstack([self.W_hi, self.W_hf, self.W_hc, self.W_ho])

    @cached_property
    def b_stacked(self) -> np.ndarray:
        b_c = self.b_c if self.b_c is not None else np.zeros(self.hidden_size)
        return np.concatenate([self.b_i, self.b_f, b_c, self.b_o])


@dataclass(frozen=True, eq=False)
class TemporalAttentionParams:
    """Bilinear score matrix: ``score(h_T, h_t) = h_T W_alpha h_t``."""

    W_alpha: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "W_alpha", _tensor(self.W_alpha))
        h = self.W_alpha.shape[0] if self.W_alpha.ndim == 2 else -1
        _check_shape("W_alpha", self.W_alpha, (h, h))


@dataclass(frozen=True, eq=False)
class SensorAttentionParams:
    """Additive sensor-modality attention.

    ``E_t = V_e tanh(W_beta beta_{t-1} + W_x x_t)`` and ``beta_t = softmax(E_t)``; each input
    channel ``d`` is scaled by ``beta_t[modality_map[d]]``.

    Attributes:
        W_beta: ``k x M`` recurrent weights on the previous attention.
        W_x: ``k x D`` input weights.
        V_e: ``M x k`` energy projection.
        modality_map: Modality index of every input channel (not learnable).
    """

    W_beta: np.ndarray
    W_x: np.ndarray
    V_e: np.ndarray
    modality_map: Tuple[int, ...] = field(default=(), metadata={"tensor": False})

    def __post_init__(self) -> None:
        for name in ("W_beta", "W_x", "V_e"):
            object.__setattr__(self, name, _tensor(getattr(self, name)))
        mapping = tuple(int(m) for m in self.modality_map)
        object.__setattr__(self, "modality_map", mapping)
        if self.W_beta.ndim != 2:
            raise ShapeError("W_beta must be a matrix", self.W_beta.shape, (0, 0))
        k, m = self.W_beta.shape
        _check_shape("W_x", self.W_x, (k, len(mapping)))
        _check_shape("V_e", self.V_e, (m, k))
        validate_modality_map(mapping, m)

    @property
    def n_modalities(self) -> int:
        return int(self.W_beta.shape[1])

    @cached_property
    def membership(self) -> np.ndarray:
        """``D x M`` 0/1 matrix with a single 1 per row at the channel's modality."""
        member = np.zeros((len(self.modality_map), self.n_modalities))
        member[np.arange(len(self.modality_map)), list(self.modality_map)] = 1.0
        return member


@dataclass(frozen=True, eq=False)
class ClassifierHead:
    """Softmax classifier on the sequence representation."""

    W_y: np.ndarray
    b_y: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "W_y", _tensor(self.W_y))
        object.__setattr__(self, "b_y", _tensor(self.b_y))
        if self.W_y.ndim != 2:
            raise ShapeError("W_y must be a matrix", self.W_y.shape, (0, 0))
        _check_shape("b_y", self.b_y, (self.W_y.shape[1],))


def validate_modality_map(modality_map: Tuple[int, ...], n_modalities: int) -> None:
    """Check that ``modality_map`` maps every channel onto ``range(n_modalities)`` surjectively.

    Raises:
        ConfigError: If a channel maps outside the range or a modality has no channel.
    """
    if not modality_map:
        raise ConfigError("must list the modality of every channel", "modality_map")
    if any(m < 0 or m >= n_modalities for m in modality_map):
        raise ConfigError(f"indices must lie in [0, {n_modalities})", "modality_map")
    missing = sorted(set(range(n_modalities)) - set(modality_map))
    if missing:
        raise ConfigError(f"modalities without channels: {missing}", "modality_map")


def contiguous_modality_map(n_channels: int, n_modalities: int) -> Tuple[int, ...]:
    """Assign channels to modalities in equal contiguous blocks (``d * M // D``)."""
    if n_modalities < 1 or n_channels < n_modalities:
        raise ValueError(f"cannot split {n_channels} channels into {n_modalities} modalities")
    return tuple(d * n_modalities // n_channels for d in range(n_channels))


@dataclass(frozen=True)
class ModelDims:
    """Model dimensions.

    Attributes:
        input_size: D, number of input channels.
        hidden_size: H, LSTM hidden width.
        n_classes: C.
        n_modalities: M, number of sensor modalities.
        sensor_hidden: k, hidden width of the sensor attention (defaults to M).
        modality_map: Channel to modality assignment (defaults to contiguous blocks).
    """

    input_size: int
    hidden_size: int
    n_classes: int
    n_modalities: int = 1
    sensor_hidden: Optional[int] = None
    modality_map: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        for name in ("input_size", "hidden_size", "n_classes", "n_modalities"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")
        if self.sensor_hidden is None:
            object.__setattr__(self, "sensor_hidden", self.n_modalities)
        elif self.sensor_hidden < 1:
            raise ValueError(f"sensor_hidden must be a positive integer, got {self.sensor_hidden}")
        if self.modality_map is None:
            mapping = contiguous_modality_map(self.input_size, self.n_modalities)
        else:
            mapping = tuple(int(m) for m in self.modality_map)
        if len(mapping) != self.input_size:
            raise ConfigError(
                f"has {len(mapping)} entries for {self.input_size} channels", "modality_map"
            )
        validate_modality_map(mapping, self.n_modalities)
        object.__setattr__(self, "modality_map", mapping)


COMPONENTS: Final[Tuple[str, ...]] = ("lstm", "lstm2", "temporal", "sensor", "head")


def _tensor_fields(component: Any) -> List[str]:
    return [
        f.name
        for f in fields(component)
        if f.metadata.get("tensor", True) and getattr(component, f.name) is not None
    ]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """All learnable tensors of a model.

    Attributes:
        lstm: Bottom LSTM layer (reads the, possibly re-weighted, input channels).
        head: Classifier on the sequence representation.
        temporal: Temporal attention, present for temporal variants.
        sensor: Sensor attention, present for sensor variants.
        lstm2: Optional stacked second LSTM layer reading the first layer's states.
        modality_map: Channel to modality assignment of the data the model was built for.
    """

    lstm: LstmParams
    head: ClassifierHead
    temporal: Optional[TemporalAttentionParams] = None
    sensor: Optional[SensorAttentionParams] = None
    lstm2: Optional[LstmParams] = None
    modality_map: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        mapping = tuple(int(m) for m in self.modality_map)
        if not mapping:
            mapping = self.sensor.modality_map if self.sensor else (0,) * self.lstm.input_size
        object.__setattr__(self, "modality_map", mapping)
        if len(mapping) != self.lstm.input_size:
            raise ShapeError(
                "modality_map length differs from D", (len(mapping),), (self.input_size,)
            )
        if self.sensor is not None and self.sensor.modality_map != mapping:
            raise ConfigError("differs from the sensor attention's map", "modality_map")
        top = self.lstm2 if self.lstm2 is not None else self.lstm
        if self.lstm2 is not None and self.lstm2.input_size != self.lstm.hidden_size:
            raise ShapeError(
                "stacked layer input differs from first layer width",
                self.lstm2.W_xi.shape,
                (self.lstm.hidden_size, self.lstm2.hidden_size),
            )
        if self.head.W_y.shape[0] != top.hidden_size:
            raise ShapeError(
                "W_y rows differ from hidden size", self.head.W_y.shape, (top.hidden_size,)
            )
        if self.temporal is not None:
            _check_shape("W_alpha", self.temporal.W_alpha, (top.hidden_size, top.hidden_size))

    @property
    def input_size(self) -> int:
        return self.lstm.input_size

    @property
    def n_classes(self) -> int:
        return int(self.head.W_y.shape[1])

    @property
    def n_modalities(self) -> int:
        return len(set(self.modality_map))

    @property
    def dims(self) -> ModelDims:
        return ModelDims(
            input_size=self.input_size,
            hidden_size=self.lstm.hidden_size,
            n_classes=self.n_classes,
            n_modalities=self.n_modalities,
            sensor_hidden=int(self.sensor.W_beta.shape[0]) if self.sensor else None,
            modality_map=self.modality_map,
        )

    def check_variant(self, variant: Variant) -> None:
        """Ensure the components required by ``variant`` are present.

        Raises:
            ConfigError: If temporal or sensor parameters are missing.
        """
        variant = Variant(variant)
        if variant.has_temporal and self.temporal is None:
            raise ConfigError(f"variant '{variant.value}' needs temporal attention parameters")
        if variant.has_sensor and self.sensor is None:
            raise ConfigError(f"variant '{variant.value}' needs sensor attention parameters")

    def named_tensors(self) -> Dict[str, np.ndarray]:
        """All learnable tensors keyed by dotted name, in a fixed order."""
        named: Dict[str, np.ndarray] = {}
        for component_name in COMPONENTS:
            component = getattr(self, component_name)
            if component is None:
                continue
            for name in _tensor_fields(component):
                named[f"{component_name}.{name}"] = getattr(component, name)
        return named

    def map(self, fn: Callable[..., np.ndarray], *others: "ModelParams") -> "ModelParams":
        """Apply ``fn`` tensor-wise to this and aligned containers, returning a new container."""

        def component(name: str) -> Any:
            mine = getattr(self, name)
            if mine is None:
                return None
            theirs = [getattr(other, name) for other in others]
            updates = {
                f: fn(getattr(mine, f), *(getattr(t, f) for t in theirs))
                for f in _tensor_fields(mine)
            }
            return replace(mine, **updates)

        return replace(self, **{name: component(name) for name in COMPONENTS})

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    @classmethod
    def from_named(
        cls, tensors: Dict[str, np.ndarray], modality_map: Tuple[int, ...]
    ) -> "ModelParams":
        """Rebuild a container from :meth:`named_tensors` output.

        Raises:
            ShapeError: If tensors are missing or inconsistent.
        """
        grouped: Dict[str, Dict[str, np.ndarray]] = {}
        for dotted, value in tensors.items():
            component, _, name = dotted.partition(".")
            if component not in COMPONENTS or not name:
                raise ShapeError(f"unknown tensor '{dotted}'", np.shape(value), ())
            grouped.setdefault(component, {})[name] = value

        try:
            lstm = LstmParams(**grouped["lstm"])
            head = ClassifierHead(**grouped["head"])
            lstm2 = LstmParams(**grouped["lstm2"]) if "lstm2" in grouped else None
            temporal = (
                TemporalAttentionParams(**grouped["temporal"]) if "temporal" in grouped else None
            )
            sensor = (
                SensorAttentionParams(**grouped["sensor"], modality_map=tuple(modality_map))
                if "sensor" in grouped
                else None
            )
        except (KeyError, TypeError) as e:
            raise ShapeError(f"incomplete tensor set ({e})", (len(tensors),), ())
        return cls(
            lstm=lstm,
            head=head,
            temporal=temporal,
            sensor=sensor,
            lstm2=lstm2,
            modality_map=tuple(modality_map),
        )
