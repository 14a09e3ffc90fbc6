"""Architecture builders: MobileNetV2 backbone and the MobileNet-Lung variant.

MobileNet-Lung is MobileNetV2 with one SE attention block inserted directly
after the stem conv-BN-ReLU6 unit; all other feature layers are unchanged and
the classifier is sized to the task's class count.  Channel widths scale with
a width multiplier (rounded to the nearest multiple of 8, minimum 8), which
is also how the desk-scale "mini" preset is produced.
"""

from dataclasses import dataclass, replace

from .attention import SEBlock
from .errors import ConfigError, ShapeError
from .layers import (BatchNorm2d, Conv2d, Dropout, GlobalAvgPool, Layer,
                     Linear, ReLU6)
from .rng import TAG_DROPOUT, TAG_INIT, derive_rng

# Inverted-residual stage table: (expansion t, channels c, repeats n, first stride s).
STAGE_SPECS = (
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
)
STEM_CHANNELS = 32
HEAD_CHANNELS = 1280

ARCH_MOBILENET_V2 = "mobilenet_v2"
ARCH_MOBILENET_LUNG = "mobilenet_lung"
ARCHITECTURES = (ARCH_MOBILENET_V2, ARCH_MOBILENET_LUNG)

POLICIES = ("all", "none", "head_only")


@dataclass
class ModelConfig:
    num_classes: int
    width_multiplier: float = 1.0
    input_size: int = 224
    se_after_stem: bool = False
    se_reduction: int = 16
    dropout_rate: float = 0.2

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.width_multiplier <= 0:
            raise ConfigError(
                f"width_multiplier must be positive, got {self.width_multiplier}")
        if self.input_size < 16:
            raise ConfigError(f"input_size must be >= 16, got {self.input_size}")
        if self.se_reduction < 1:
            raise ConfigError(f"se_reduction must be >= 1, got {self.se_reduction}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(
                f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


def mini_config(num_classes=3, se_after_stem=False, dropout_rate=0.2, input_size=64):
    """Desk-scale preset: width 0.25 at 64x64 input, 3 classes."""
    return ModelConfig(num_classes=num_classes, width_multiplier=0.25,
                       input_size=input_size, se_after_stem=se_after_stem,
                       dropout_rate=dropout_rate)


def round_channels(value, divisor=8):
    """Nearest multiple of the divisor, never below it."""
    return max(divisor, int(value + divisor / 2) // divisor * divisor)


class Sequential:
    """Ordered named steps; each step is a Layer or a nested container."""

    def __init__(self, steps):
        self.steps = list(steps)

    def forward(self, x, training=False):
        for _, step in self.steps:
            x = step.forward(x, training=training)
        return x

    def backward(self, grad_out):
        for _, step in reversed(self.steps):
            grad_out = step.backward(grad_out)
        return grad_out

    def named_layers(self, prefix=""):
        for name, step in self.steps:
            full = f"{prefix}{name}"
            if isinstance(step, Layer):
                yield full, step
            else:
                yield from step.named_layers(f"{full}.")


class InvertedResidual:
    """Expand (1x1) -> depthwise (3x3) -> project (1x1, linear) bottleneck.

    The skip add applies only when stride is 1 and the channel count is
    preserved; backward mirrors the add by summing the body gradient with the
    incoming gradient.
    """

    def __init__(self, body, use_res):
        self.body = body
        self.use_res = use_res

    def forward(self, x, training=False):
        out = self.body.forward(x, training=training)
        return out + x if self.use_res else out

    def backward(self, grad_out):
        grad_in = self.body.backward(grad_out)
        return grad_in + grad_out if self.use_res else grad_in

    def named_layers(self, prefix=""):
        yield from self.body.named_layers(prefix)


class Model:
    """A built network: named layer graph plus its configuration."""

    def __init__(self, name, config, net):
        self.name = name
        self.config = config
        self.net = net
        names = [n for n, _ in self.named_layers()]
        if len(names) != len(set(names)):
            raise ConfigError("duplicate layer names in model graph")

    def forward(self, x, training=False):
        s = self.config.input_size
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != s or x.shape[3] != s:
            raise ShapeError(
                f"{self.name} expects input (N, 3, {s}, {s}), got {tuple(x.shape)}")
        return self.net.forward(x, training=training)

    def backward(self, grad_logits):
        return self.net.backward(grad_logits)

    def named_layers(self):
        yield from self.net.named_layers()

    def named_params(self):
        for lname, layer in self.named_layers():
            for pname in layer.params:
                yield f"{lname}.{pname}", layer, pname

    def state_dict(self):
        """All params plus running stats, keyed by dotted names."""
        state = {}
        for lname, layer in self.named_layers():
            for pname, value in layer.params.items():
                state[f"{lname}.{pname}"] = value
            for rname, value in layer.running.items():
                state[f"{lname}.{rname}"] = value
        return state

    def astype(self, dtype):
        for _, layer in self.named_layers():
            layer.astype(dtype)
        return self

    def layer(self, name):
        for lname, layer in self.named_layers():
            if lname == name:
                return layer
        raise KeyError(name)


def count_params(model):
    """Total learnable elements (weights, biases, BN gamma/beta); running
    statistics are excluded."""
    return sum(p.size for _, layer, pn in model.named_params()
               for p in [layer.params[pn]])


def param_breakdown(model):
    """Learnable-element counts grouped by top-level graph segment."""
    groups = {}
    for name, layer, pname in model.named_params():
        top = name.split(".")[0]
        groups[top] = groups.get(top, 0) + layer.params[pname].size
    return groups


def set_trainable(model, policy):
    """Apply a trainability policy: 'all', 'none', or 'head_only'."""
    if policy not in POLICIES:
        raise ConfigError(f"unknown trainable policy {policy!r}; expected one of {POLICIES}")
    for name, layer in model.named_layers():
        if policy == "all":
            layer.trainable = True
        elif policy == "none":
            layer.trainable = False
        else:
            layer.trainable = name == "classifier"
    return model


def _conv_unit(steps, prefix, in_ch, out_ch, kernel, stride, groups, rng):
    steps.append((f"{prefix}.conv", Conv2d(
        in_ch, out_ch, kernel, stride=stride, padding=kernel // 2,
        groups=groups, bias=False, rng=rng)))
    steps.append((f"{prefix}.bn", BatchNorm2d(out_ch)))
    steps.append((f"{prefix}.act", ReLU6()))


def _inverted_residual(in_ch, out_ch, stride, expansion, rng):
    hidden = in_ch * expansion
    steps = []
    if expansion != 1:
        _conv_unit(steps, "expand", in_ch, hidden, 1, 1, 1, rng)
    _conv_unit(steps, "dw", hidden, hidden, 3, stride, hidden, rng)
    steps.append(("project.conv", Conv2d(hidden, out_ch, 1, bias=False, rng=rng)))
    steps.append(("project.bn", BatchNorm2d(out_ch)))
    return InvertedResidual(Sequential(steps),
                            use_res=stride == 1 and in_ch == out_ch)


def _build(name, config, seed):
    rng = derive_rng(seed, TAG_INIT)
    width = config.width_multiplier
    steps = []

    ch = round_channels(STEM_CHANNELS * width)
    _conv_unit(steps, "stem", 3, ch, 3, 2, 1, rng)
    if config.se_after_stem:
        steps.append(("stem.se", SEBlock(ch, config.se_reduction, rng=rng)))

    for stage, (t, c, n, s) in enumerate(STAGE_SPECS, start=1):
        out_ch = round_channels(c * width)
        for block in range(n):
            steps.append((f"stage{stage}.block{block}", _inverted_residual(
                ch, out_ch, s if block == 0 else 1, t, rng)))
            ch = out_ch

    head_ch = HEAD_CHANNELS if width <= 1.0 else round_channels(HEAD_CHANNELS * width)
    _conv_unit(steps, "head", ch, head_ch, 1, 1, 1, rng)
    steps.append(("pool", GlobalAvgPool()))
    steps.append(("dropout", Dropout(config.dropout_rate,
                                     rng=derive_rng(seed, TAG_DROPOUT))))
    steps.append(("classifier", Linear(head_ch, config.num_classes, rng=rng)))

    return Model(name, config, Sequential(steps))


def build_mobilenet_v2(config, seed=0):
    """Plain MobileNetV2 backbone; requires se_after_stem=False."""
    if config.se_after_stem:
        raise ConfigError("mobilenet_v2 does not take an SE block; "
                          "use build_mobilenet_lung for se_after_stem=True")
    return _build(ARCH_MOBILENET_V2, config, seed)


def build_mobilenet_lung(config, seed=0):
    """MobileNetV2 plus one SE block right after the stem unit."""
    if not config.se_after_stem:
        config = replace(config, se_after_stem=True)
    return _build(ARCH_MOBILENET_LUNG, config, seed)


def build_model(arch, config, seed=0):
    if arch == ARCH_MOBILENET_V2:
        return build_mobilenet_v2(config, seed=seed)
    if arch == ARCH_MOBILENET_LUNG:
        return build_mobilenet_lung(config, seed=seed)
    raise ConfigError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
