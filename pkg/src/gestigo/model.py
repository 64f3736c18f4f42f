"""Multi-stream gesture classifier with an ensemble-tuner fusion network.

One shared convolutional encoder + classifier head scores each of the j
view-orientation images of a gesture independently. The j probability
vectors are painted into an RGB pseudo-image (j horizontal bands of N
class cells) which a much smaller tuner network reads to produce the
final classification. During training the pseudo-image is built from
the float probability tensor so gradients flow end to end; the 8-bit
quantized variant exists only for serialization and diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .condense import RenderConfig, ViewOrientation, condense_views, find_orientation
from .datasets import SkeletonSequence
from .errors import ArgumentError, ConfigError, ShapeError
from .nn import (
    AdaptiveAvgPool, AdaptiveMaxPool, BatchNorm1d, BatchNorm2d, Conv2d,
    Dropout, Flatten, Linear, MaxPool2d, ReLU, Tensor,
    cell_edges, concat, cross_entropy, parameter,
    read_checkpoint, softmax, stack, write_checkpoint,
)

DEFAULT_ENCODER_WIDTHS = (16, 32, 64, 128)
DEFAULT_TUNER_WIDTHS = (8, 16)
DEFAULT_STAGE_SIZES = (224, 276, 328, 380)
HEAD_DROPOUT = (0.25, 0.5)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture + data-shape description, serialized into checkpoints."""

    dataset_id: str
    class_count: int
    vo_names: tuple
    class_names: tuple = ()
    encoder_widths: tuple = DEFAULT_ENCODER_WIDTHS
    tuner_widths: tuple = DEFAULT_TUNER_WIDTHS
    head_hidden: int = 512
    tuner_head_hidden: int = 128
    stage_sizes: tuple = DEFAULT_STAGE_SIZES
    pseudo_px: int = 224
    seed: int = 17

    def __post_init__(self):
        object.__setattr__(self, "vo_names", tuple(self.vo_names))
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "tuner_widths", tuple(int(w) for w in self.tuner_widths))
        object.__setattr__(self, "stage_sizes", tuple(int(s) for s in self.stage_sizes))
        if not 1 <= self.stream_count <= 3:
            raise ConfigError(f"stream count must be 1..3, got {self.stream_count}")
        if self.class_count < 2:
            raise ConfigError(f"need at least 2 classes, got {self.class_count}")
        if len(set(self.vo_names)) != len(self.vo_names):
            raise ConfigError(f"duplicate view orientations: {self.vo_names}")
        if not self.encoder_widths or not self.tuner_widths:
            raise ConfigError("encoder width lists must be non-empty")
        if not self.stage_sizes:
            raise ConfigError("need at least one training stage size")
        min_px = 2 ** len(self.encoder_widths)
        for size in self.stage_sizes:
            if size < min_px:
                raise ConfigError(f"stage size {size} too small for {len(self.encoder_widths)} pooling stages")
        if self.pseudo_px // self.class_count < 1 or self.pseudo_px // self.stream_count < 1:
            raise ConfigError(f"pseudo-image {self.pseudo_px}px cannot hold "
                              f"{self.stream_count}x{self.class_count} cells")
        names = self.class_names
        if not names:
            names = tuple(f"class {i + 1}" for i in range(self.class_count))
        else:
            names = tuple(str(n) for n in names)
            if len(names) != self.class_count:
                raise ConfigError(f"{len(names)} class names for {self.class_count} classes")
        object.__setattr__(self, "class_names", names)

    @property
    def stream_count(self) -> int:
        return len(self.vo_names)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "class_count": self.class_count,
            "stream_count": self.stream_count,
            "vo_names": list(self.vo_names),
            "class_names": list(self.class_names),
            "encoder_widths": list(self.encoder_widths),
            "tuner_widths": list(self.tuner_widths),
            "head_hidden": self.head_hidden,
            "tuner_head_hidden": self.tuner_head_hidden,
            "stage_sizes": list(self.stage_sizes),
            "pseudo_px": self.pseudo_px,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            return cls(
                dataset_id=d["dataset_id"],
                class_count=int(d["class_count"]),
                vo_names=tuple(d["vo_names"]),
                class_names=tuple(d.get("class_names", ())),
                encoder_widths=tuple(d.get("encoder_widths", DEFAULT_ENCODER_WIDTHS)),
                tuner_widths=tuple(d.get("tuner_widths", DEFAULT_TUNER_WIDTHS)),
                head_hidden=int(d.get("head_hidden", 512)),
                tuner_head_hidden=int(d.get("tuner_head_hidden", 128)),
                stage_sizes=tuple(d.get("stage_sizes", DEFAULT_STAGE_SIZES)),
                pseudo_px=int(d.get("pseudo_px", 224)),
                seed=int(d.get("seed", 17)),
            )
        except KeyError as exc:
            raise ConfigError(f"checkpoint config missing field {exc}") from exc


def swipe_subset_config(vo_names=("custom", "top-down", "front-away"), **kw) -> ModelConfig:
    """Convenience config for the 7-class directional-swipe subset of DHG1428."""
    from .datasets import SWIPE_CLASSES
    return ModelConfig(dataset_id="DHG1428_14G", class_count=len(SWIPE_CLASSES),
                       vo_names=tuple(vo_names), class_names=SWIPE_CLASSES, **kw)


def _encoder_blocks(in_ch: int, widths, rng, dtype):
    """conv3x3 -> batchnorm -> relu -> maxpool2, repeated once per width."""
    layers = []
    for w in widths:
        layers.append(Conv2d(in_ch, w, rng=rng, dtype=dtype))
        layers.append(BatchNorm2d(w, dtype=dtype))
        layers.append(ReLU())
        layers.append(MaxPool2d(2))
        in_ch = w
    return layers


def _head_layers(feat_ch: int, hidden: int, n_classes: int, rng, dtype):
    """Classifier head applied after concat(avg-pool, max-pool) features."""
    width = 2 * feat_ch
    return [
        BatchNorm1d(width, dtype=dtype),
        Dropout(HEAD_DROPOUT[0], seed=int(rng.integers(2**31))),
        Linear(width, hidden, rng=rng, dtype=dtype),
        ReLU(),
        BatchNorm1d(hidden, dtype=dtype),
        Dropout(HEAD_DROPOUT[1], seed=int(rng.integers(2**31))),
        Linear(hidden, n_classes, rng=rng, dtype=dtype),
    ]


def _param_size(layers) -> int:
    return sum(p.data.size for layer in layers for p in layer.params())


class GestureNet:
    """The end-to-end network: shared stream branch + tuner + loss weights.

    The same encoder/head objects process every stream, so weight sharing
    is structural. ``s`` holds the j+1 learnable log-variance loss weights.
    """

    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(config.seed)
        self.encoder = _encoder_blocks(3, config.encoder_widths, rng, dtype)
        self.head = _head_layers(config.encoder_widths[-1], config.head_hidden,
                                 config.class_count, rng, dtype)
        self.tuner_encoder = _encoder_blocks(3, config.tuner_widths, rng, dtype)
        self.tuner_head = _head_layers(config.tuner_widths[-1], config.tuner_head_hidden,
                                       config.class_count, rng, dtype)
        self.s = parameter(np.zeros(config.stream_count + 1), dtype=dtype, name="loss_weights")
        self._avg = AdaptiveAvgPool()
        self._max = AdaptiveMaxPool()
        self._flat = Flatten()
        if self.tuner_param_count >= self.encoder_param_count:
            raise ConfigError(
                f"tuner has {self.tuner_param_count} parameters, not smaller than "
                f"the stream encoder's {self.encoder_param_count}")

    # -- parameter bookkeeping ------------------------------------------------

    def layer_chain(self):
        return [*self.encoder, *self.head, *self.tuner_encoder, *self.tuner_head]

    def parameters(self):
        ps = [p for layer in self.layer_chain() for p in layer.params()]
        ps.append(self.s)
        return ps

    @property
    def encoder_param_count(self) -> int:
        return _param_size(self.encoder)

    @property
    def tuner_param_count(self) -> int:
        return _param_size(self.tuner_encoder) + _param_size(self.tuner_head)

    @property
    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def state_arrays(self):
        """All learnable/running arrays in declaration order (s last)."""
        out = []
        for layer in self.layer_chain():
            out.extend(layer.state())
        out.append(self.s.data)
        return out

    def load_state_arrays(self, arrays):
        arrays = list(arrays)
        if len(arrays) != len(self.state_arrays()):
            raise ShapeError(f"expected {len(self.state_arrays())} state arrays, got {len(arrays)}")
        i = 0
        for layer in self.layer_chain():
            k = len(layer.state())
            layer.load_state(arrays[i:i + k])
            i += k
        s_arr = np.asarray(arrays[i], dtype=self.dtype)
        if s_arr.shape != self.s.data.shape:
            raise ShapeError(f"loss-weight vector shape {s_arr.shape} != {self.s.data.shape}")
        self.s.data = s_arr.copy()

    def clone_state(self):
        return [a.copy() for a in self.state_arrays()]

    def layer_specs(self):
        specs = [layer.spec() for layer in self.layer_chain()]
        specs.append({"kind": "loss_weights", "count": self.config.stream_count + 1})
        return specs

    # -- forward passes -------------------------------------------------------

    def _as_input(self, x) -> Tensor:
        if isinstance(x, Tensor):
            return x
        arr = np.asarray(x)
        if arr.ndim != 4 or arr.shape[3] != 3:
            raise ShapeError(f"expected (B, H, W, 3) input, got {arr.shape}")
        return Tensor(arr.astype(self.dtype, copy=False))

    def _branch(self, x: Tensor, encoder, head, mode: str) -> Tensor:
        h = x
        for layer in encoder:
            h = layer(h, mode)
        pooled = concat([self._flat(self._avg(h, mode), mode),
                         self._flat(self._max(h, mode), mode)], axis=1)
        for layer in head:
            pooled = layer(pooled, mode)
        return pooled

    def forward_stream(self, x, mode: str = "train") -> Tensor:
        """Logits for one batch of one stream's images, (B, H, W, 3) -> (B, N)."""
        return self._branch(self._as_input(x), self.encoder, self.head, mode)

    def forward_multistream(self, images, mode: str = "train"):
        """Run the shared branch over each stream; returns (probs, logits) lists."""
        images = list(images)
        if len(images) != self.config.stream_count:
            raise ArgumentError(f"model expects {self.config.stream_count} streams, got {len(images)}")
        logits = [self.forward_stream(x, mode) for x in images]
        probs = [softmax(lg) for lg in logits]
        return probs, logits

    def forward_tuner(self, pseudo, mode: str = "train") -> Tensor:
        """Tuner logits from a (B, S, S, 3) float pseudo-image batch."""
        x = self._as_input(pseudo)
        if x.shape[1] != self.config.pseudo_px or x.shape[2] != self.config.pseudo_px:
            raise ShapeError(f"pseudo-image batch is {x.shape[1]}x{x.shape[2]}, "
                             f"model expects {self.config.pseudo_px}px")
        return self._branch(x, self.tuner_encoder, self.tuner_head, mode)

    def tuner_probabilities(self, pseudo_image: np.ndarray) -> np.ndarray:
        """Probability vector for one serialized (S, S, 3) uint8 pseudo-image."""
        img = np.asarray(pseudo_image)
        expect = (self.config.pseudo_px, self.config.pseudo_px, 3)
        if img.shape != expect:
            raise ShapeError(f"pseudo-image shape {img.shape}, expected {expect}")
        logits = self.forward_tuner(img.astype(self.dtype)[None] / 255, mode="eval")
        return softmax(logits).data[0].astype(np.float64)

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        write_checkpoint(path, self.config.to_dict(), self.layer_specs(), self.state_arrays())

    @classmethod
    def load(cls, path, dtype=np.float32) -> "GestureNet":
        config_dict, specs, tensors = read_checkpoint(path)
        config = ModelConfig.from_dict(config_dict)
        net = cls(config, dtype=dtype)
        want = net.layer_specs()
        if specs != want:
            raise ConfigError(f"checkpoint layer inventory does not match the "
                              f"rebuilt model ({len(specs)} vs {len(want)} records)")
        net.load_state_arrays(tensors)
        return net


def homoscedastic_loss(losses, s: Tensor) -> Tensor:
    """total = sum_k exp(-s_k) * L_k + s_k over the j+1 task losses."""
    losses = list(losses)
    if len(losses) != s.data.shape[0]:
        raise ShapeError(f"{len(losses)} losses but {s.data.shape[0]} loss weights")
    return ((-s).exp() * stack(losses) + s).sum()


# -- pseudo-image construction ------------------------------------------------

def _check_prob_matrix(per_stream_probs) -> np.ndarray:
    probs = np.asarray(per_stream_probs, dtype=np.float64)
    if probs.ndim == 1:
        probs = probs[None]
    if probs.ndim != 2:
        raise ArgumentError(f"expected j probability vectors, got shape {probs.shape}")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise ArgumentError("probabilities must be finite and non-negative")
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-5):
        raise ArgumentError(f"probability vectors must sum to 1, got sums {sums}")
    return probs


def pseudo_layout(streams: int, classes: int, size: int):
    """Row/column cell boundaries of the pseudo-image grid."""
    return cell_edges(streams, size), cell_edges(classes, size)


def probs_to_pseudo_image(per_stream_probs, size: int = 224) -> np.ndarray:
    """Quantized (size, size, 3) uint8 pseudo-image: j bands x N cells.

    Cell intensity is round(255 * p) on all three channels; remainder
    pixels from the integer division are folded into the last band/cell.
    """
    probs = _check_prob_matrix(per_stream_probs)
    j, n = probs.shape
    rows, cols = pseudo_layout(j, n, size)
    img = np.empty((size, size, 3), dtype=np.uint8)
    values = np.rint(255.0 * probs).astype(np.uint8)
    for k in range(j):
        for c in range(n):
            img[rows[k]:rows[k + 1], cols[c]:cols[c + 1]] = values[k, c]
    return img


def pseudo_float_image(per_stream_probs, size: int = 224) -> np.ndarray:
    """Float (size, size, 3) pseudo-image holding raw probabilities (no quantization)."""
    probs = _check_prob_matrix(per_stream_probs)
    j, n = probs.shape
    rows, cols = pseudo_layout(j, n, size)
    img = np.empty((size, size, 3), dtype=np.float64)
    for k in range(j):
        for c in range(n):
            img[rows[k]:rows[k + 1], cols[c]:cols[c + 1], :] = probs[k, c]
    return img


def decode_pseudo_image(image: np.ndarray, streams: int, classes: int) -> np.ndarray:
    """Recover the (j, N) probability matrix from a pseudo-image via cell means."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] != img.shape[1]:
        raise ShapeError(f"expected square (S, S, 3) image, got {img.shape}")
    size = img.shape[0]
    rows, cols = pseudo_layout(streams, classes, size)
    out = np.empty((streams, classes), dtype=np.float64)
    scaled = img.astype(np.float64) / 255.0
    for k in range(streams):
        for c in range(classes):
            out[k, c] = scaled[rows[k]:rows[k + 1], cols[c]:cols[c + 1]].mean()
    return out


# -- prediction ---------------------------------------------------------------

def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    """Downscale a square RGB image by area averaging (identity if same size)."""
    if image.shape[0] == size and image.shape[1] == size:
        return image
    return cv2.resize(image, (size, size), interpolation=cv2.INTER_AREA)


def image_batch(images: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 (B, H, W, 3) -> float batch scaled to [0, 1] (layout preserved)."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    return arr.astype(dtype) / 255


@dataclass(frozen=True)
class StreamPrediction:
    """All j+1 probability vectors for one gesture plus the tuner's decision."""

    stream_probs: np.ndarray        # (j, N)
    tuner_probs: np.ndarray         # (N,)
    class_index: int                # 1-based, argmax of tuner_probs only
    class_label: str
    stream_losses: tuple = None     # j cross-entropy values, when a label was given
    tuner_loss: float = None

    def __post_init__(self):
        for vec in (*self.stream_probs, self.tuner_probs):
            v = np.asarray(vec, dtype=np.float64)
            if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-5:
                raise ArgumentError("prediction holds an invalid probability vector")


def _vo_name(vo) -> str:
    return vo.name if isinstance(vo, ViewOrientation) else str(vo)


def condense_for_model(model: GestureNet, seq: SkeletonSequence,
                       render_cfg: RenderConfig = None):
    """The model's j view images for one sequence, at master resolution."""
    vo_objs = [find_orientation(model.config.dataset_id, name)
               for name in model.config.vo_names]
    cfg = render_cfg if render_cfg is not None else RenderConfig()
    return condense_views(seq, vo_objs, cfg)


def predict_from_images(model: GestureNet, images, label: int = None,
                        eval_px: int = None) -> StreamPrediction:
    """Classify from already-condensed view images (j uint8 HxWx3 arrays)."""
    config = model.config
    images = list(images)
    if len(images) != config.stream_count:
        raise ArgumentError(f"model expects {config.stream_count} view images, "
                            f"got {len(images)}")
    px = eval_px if eval_px is not None else config.stage_sizes[-1]
    stream_in = [image_batch(resize_image(im, px)) for im in images]

    probs_t, logits_t = model.forward_multistream(stream_in, mode="eval")
    stream_probs = np.stack([p.data[0].astype(np.float64) for p in probs_t])
    pseudo = pseudo_float_image(stream_probs, config.pseudo_px)
    tuner_logits = model.forward_tuner(pseudo[None].astype(model.dtype), mode="eval")
    tuner_probs = softmax(tuner_logits).data[0].astype(np.float64)

    stream_losses = None
    tuner_loss = None
    if label is not None:
        label0 = np.array([label - 1])
        stream_losses = tuple(float(cross_entropy(lg, label0).item()) for lg in logits_t)
        tuner_loss = float(cross_entropy(tuner_logits, label0).item())

    cls = int(np.argmax(tuner_probs))
    return StreamPrediction(
        stream_probs=stream_probs,
        tuner_probs=tuner_probs,
        class_index=cls + 1,
        class_label=config.class_names[cls],
        stream_losses=stream_losses,
        tuner_loss=tuner_loss,
    )


def predict(model: GestureNet, seq: SkeletonSequence, vos=None,
            render_cfg: RenderConfig = None, eval_px: int = None) -> StreamPrediction:
    """Condense a sequence on the fly and run both sub-networks in eval mode.

    ``vos`` may restate the view orientations for sanity; they must match
    the order the model was trained with. The decision is the argmax of
    the tuner vector only (ties: lowest class index, via argmax).
    """
    if vos is not None:
        names = tuple(_vo_name(v) for v in vos)
        if names != model.config.vo_names:
            raise ConfigError(f"view orientations {names} do not match the "
                              f"model's training order {model.config.vo_names}")
    masters = condense_for_model(model, seq, render_cfg)
    return predict_from_images(model, masters, label=seq.label, eval_px=eval_px)
