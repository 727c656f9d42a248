"""Model definitions: feature extractor, class/domain heads, autoencoder.

All networks are plain MLPs over the flattened feature block. The feature
extractor has exactly 3 weight layers so the autoencoder's 3-layer encoder
maps onto it one-to-one for pre-trained initialization.

Parameters are flat lists [W0, b0, W1, b1, ...] of ``Tensor`` values; a
forward pass with a live tape watches them so one backward produces all
gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor, add_bias, matmul, relu, tanh
from .errors import ConfigError, ShapeError

__all__ = [
    "MlpSpec",
    "ModelBundle",
    "Autoencoder",
    "init_params",
    "mlp_forward",
    "build_bundle",
    "build_autoencoder",
    "forward_features",
    "predict_class",
    "predict_domain",
    "ae_encode",
    "ae_reconstruct",
    "transfer_pretrained",
    "clone_params",
]

_ACTIVATIONS = {"relu": relu, "tanh": tanh}

# Default widths; the paper-side architecture is unspecified, these are the
# artifact's fixed choice.
FEATURE_HIDDEN = (256, 128, 64)
HEAD_HIDDEN = 32


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input first) and the activation between layers."""

    layer_widths: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError(f"need >= 2 widths, got {self.layer_widths}")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError(f"widths must be positive, got {self.layer_widths}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def num_weight_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]

    def param_count(self) -> int:
        return sum(a * b + b for a, b in zip(self.layer_widths, self.layer_widths[1:]))


def init_params(spec: MlpSpec, seed) -> list[Tensor]:
    """Fan-balanced uniform weights, zero biases; deterministic in seed."""
    rng = np.random.default_rng(seed)
    params: list[Tensor] = []
    for fan_in, fan_out in zip(spec.layer_widths, spec.layer_widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(Tensor(rng.uniform(-limit, limit, (fan_in, fan_out))))
        params.append(Tensor(np.zeros(fan_out)))
    return params


def clone_params(params: list[Tensor]) -> list[Tensor]:
    return [Tensor(p.array.copy()) for p in params]


def mlp_forward(spec: MlpSpec, params: list[Tensor], x, tape: Tape | None = None) -> Tensor:
    """Forward pass; activation between layers, none after the last."""
    if len(params) != 2 * spec.num_weight_layers:
        raise ShapeError(
            f"{len(params)} parameter tensors for {spec.num_weight_layers} layers")
    h = x if isinstance(x, Tensor) else Tensor(x)
    if h.array.ndim != 2 or h.array.shape[1] != spec.in_width:
        raise ShapeError(
            f"input shape {h.array.shape} does not match spec width {spec.in_width}")
    if tape is not None:
        for p in params:
            tape.watch(p)
    act = _ACTIVATIONS[spec.activation]
    last = spec.num_weight_layers - 1
    for i in range(spec.num_weight_layers):
        h = add_bias(matmul(h, params[2 * i]), params[2 * i + 1])
        if i != last:
            h = act(h)
    return h


@dataclass
class ModelBundle:
    """Feature extractor plus class and domain heads."""

    f_spec: MlpSpec
    c_spec: MlpSpec
    d_spec: MlpSpec
    theta_f: list[Tensor]
    theta_c: list[Tensor]
    theta_d: list[Tensor]

    def __post_init__(self):
        if self.f_spec.num_weight_layers != 3:
            raise ConfigError(
                f"feature extractor must have exactly 3 weight layers, "
                f"got {self.f_spec.num_weight_layers}")
        if self.c_spec.in_width != self.f_spec.out_width:
            raise ConfigError("class head input width must match feature width")
        if self.d_spec.in_width != self.f_spec.out_width:
            raise ConfigError("domain head input width must match feature width")
        if self.d_spec.out_width != 2:
            raise ConfigError("domain head must output 2 logits")

    @property
    def num_classes(self) -> int:
        return self.c_spec.out_width

    def parameters(self) -> list[Tensor]:
        return [*self.theta_f, *self.theta_c, *self.theta_d]


def build_bundle(input_dim: int, num_classes: int, seed,
                 feature_hidden=FEATURE_HIDDEN, head_hidden: int = HEAD_HIDDEN,
                 activation: str = "relu") -> ModelBundle:
    rng = np.random.default_rng(seed)
    f_spec = MlpSpec((input_dim, *feature_hidden), activation)
    c_spec = MlpSpec((f_spec.out_width, head_hidden, num_classes), activation)
    d_spec = MlpSpec((f_spec.out_width, head_hidden, 2), activation)
    return ModelBundle(
        f_spec, c_spec, d_spec,
        init_params(f_spec, rng), init_params(c_spec, rng), init_params(d_spec, rng))


def forward_features(bundle: ModelBundle, x, tape: Tape | None = None) -> Tensor:
    return mlp_forward(bundle.f_spec, bundle.theta_f, x, tape)


def predict_class(bundle: ModelBundle, f, tape: Tape | None = None) -> Tensor:
    return mlp_forward(bundle.c_spec, bundle.theta_c, f, tape)


def predict_domain(bundle: ModelBundle, f, tape: Tape | None = None) -> Tensor:
    """Domain logits; the caller routes ``f`` through grl first when the
    domain loss should confuse rather than sharpen the features."""
    return mlp_forward(bundle.d_spec, bundle.theta_d, f, tape)


@dataclass
class Autoencoder:
    """Encoder with the feature extractor's spec plus a mirrored decoder."""

    spec: MlpSpec
    enc_params: list[Tensor]
    dec_params: list[Tensor]

    def __post_init__(self):
        if self.spec.num_weight_layers != 3:
            raise ConfigError("encoder must have exactly 3 weight layers")

    @property
    def decoder_spec(self) -> MlpSpec:
        return MlpSpec(tuple(reversed(self.spec.layer_widths)), self.spec.activation)


def build_autoencoder(f_spec: MlpSpec, seed) -> Autoencoder:
    rng = np.random.default_rng(seed)
    dec_spec = MlpSpec(tuple(reversed(f_spec.layer_widths)), f_spec.activation)
    return Autoencoder(f_spec, init_params(f_spec, rng), init_params(dec_spec, rng))


def ae_encode(ae: Autoencoder, x, tape: Tape | None = None) -> Tensor:
    return mlp_forward(ae.spec, ae.enc_params, x, tape)


def ae_reconstruct(ae: Autoencoder, x, tape: Tape | None = None) -> Tensor:
    return mlp_forward(ae.decoder_spec, ae.dec_params, ae_encode(ae, x, tape), tape)


def transfer_pretrained(ae: Autoencoder, bundle: ModelBundle) -> ModelBundle:
    """Copy the trained encoder into the feature extractor, layer for layer.

    Heads are untouched; repeated transfers are no-ops after the first.
    """
    if ae.spec != bundle.f_spec:
        raise ConfigError(
            f"encoder spec {ae.spec} does not match feature spec {bundle.f_spec}")
    for dst, src in zip(bundle.theta_f, ae.enc_params):
        dst.array = src.array.copy()
    return bundle
