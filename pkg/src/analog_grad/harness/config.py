"""Strict JSON experiment configs.

Unknown keys are errors, not warnings: a typo in a sweep axis would
silently invalidate an experiment grid.  Every error message names the
offending field by its dotted path.  Parsing resolves all defaults and
derived quantities (for the noise spec, both sigma and the error
probability), so a resolved config re-serializes and re-parses to the
same content digest.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from ..activations import ACTIVATION_KINDS, ActivationSpec
from ..datasets import (Dataset, generate_synthetic, read_csv_dataset,
                        read_idx_dataset, to_grayscale)
from ..errors import ConfigError
from ..network import ModelConfig, convnet_mini, mlp
from ..quant import (MAX_BITS, MIN_BITS, STAGE_NAMES, QuantNoiseSpec,
                     error_probability)
from ..training import TrainConfig

MODES = ("train", "sweep", "analyze-gsd", "analyze-surface", "analyze-accum",
         "analyze-ebp")
SWEEP_AXES = ("interpolation", "learning_rate", "bits", "ep", "alpha",
              "linear_layers")
DEFAULT_SWEEP_CAP = 500


def _check_keys(obj: dict, allowed, path: str):
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in {path}")


def _get(obj: dict, key: str, path: str, kind, default=None, required=False):
    if key not in obj or obj[key] is None:
        if required:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{path}.{key}: expected {getattr(kind, '__name__', kind)}, "
                          f"got {type(value).__name__}")
    return value


def _number_list(obj, key, path, required=False, default=None):
    values = _get(obj, key, path, list, default=default, required=required)
    if values is None:
        return None
    out = []
    for idx, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.{key}[{idx}]: expected a number, got {type(v).__name__}")
        out.append(v)
    return out


# ---------------------------------------------------------------------------
# section parsers: each returns the canonical (fully-defaulted) dict


def _parse_activation(obj: dict, path: str) -> dict:
    _check_keys(obj, ("kind", "s", "i", "alpha"), path)
    kind = _get(obj, "kind", path, str, required=True)
    if kind not in ACTIVATION_KINDS:
        raise ConfigError(f"{path}.kind: unknown activation {kind!r}")
    out = {
        "kind": kind,
        "s": _get(obj, "s", path, float, default=1.0),
        "i": _get(obj, "i", path, float, default=0.0),
        "alpha": _get(obj, "alpha", path, float, default=0.0),
    }
    try:
        ActivationSpec(**out)
    except ConfigError as exc:
        field = "i" if "interpolation" in str(exc) else ("s" if "scaling" in str(exc) else "alpha")
        raise ConfigError(f"{path}.{field}: {exc}") from exc
    return out


def _parse_noise(obj: dict, path: str) -> dict:
    _check_keys(obj, ("bits", "sigma", "ep", "clamp", "stages"), path)
    bits = _get(obj, "bits", path, int, required=True)
    if not (MIN_BITS <= bits <= MAX_BITS):
        raise ConfigError(f"{path}.bits: must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    sigma = _get(obj, "sigma", path, float)
    ep = _get(obj, "ep", path, float)
    clamp = _number_list(obj, "clamp", path, default=[-1.0, 1.0])
    if len(clamp) != 2 or clamp[0] >= clamp[1]:
        raise ConfigError(f"{path}.clamp: expected [lo, hi] with lo < hi, got {clamp}")
    stages = _get(obj, "stages", path, list,
                  default=["clamp", "reduce-precision", "noise"])
    for stage in stages:
        if stage not in STAGE_NAMES:
            raise ConfigError(f"{path}.stages: unknown stage {stage!r}")
    if not stages:
        raise ConfigError(f"{path}.stages: must not be empty")
    if sigma is None and ep is None:
        raise ConfigError(f"{path}: one of 'sigma' or 'ep' is required")
    if sigma is not None and ep is not None:
        # both present is only legal for a previously-resolved config
        implied = 0.0 if sigma == 0.0 else error_probability(bits, sigma)
        if abs(implied - ep) > 1e-9:
            raise ConfigError(
                f"{path}: sigma and ep are both set but inconsistent "
                f"(sigma {sigma} implies ep {implied:.6g}, config says {ep})")
        spec = QuantNoiseSpec(bits=bits, sigma=sigma, clamp_lo=clamp[0],
                              clamp_hi=clamp[1], stage_order=tuple(stages)).resolve()
        spec.target_ep = ep
    else:
        kw = {"sigma": sigma} if sigma is not None else {"target_ep": ep}
        try:
            spec = QuantNoiseSpec(bits=bits, clamp_lo=clamp[0], clamp_hi=clamp[1],
                                  stage_order=tuple(stages), **kw).resolve()
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return {"bits": bits, "sigma": spec.sigma, "ep": spec.target_ep,
            "clamp": [spec.clamp_lo, spec.clamp_hi], "stages": list(spec.stage_order)}


def _parse_dataset(obj: dict, path: str) -> dict:
    kind = _get(obj, "kind", path, str, required=True)
    if kind == "synthetic":
        _check_keys(obj, ("kind", "classes", "samples_per_class", "image_size",
                          "seed", "contrast", "pixel_noise", "clutter"), path)
        contrast = _number_list(obj, "contrast", path, default=[0.24, 0.44])
        if len(contrast) != 2 or not (0 < contrast[0] <= contrast[1] <= 1):
            raise ConfigError(f"{path}.contrast: expected [lo, hi] within (0, 1], got {contrast}")
        out = {"kind": kind,
               "classes": _get(obj, "classes", path, int, default=10),
               "samples_per_class": _get(obj, "samples_per_class", path, int, default=600),
               "image_size": _get(obj, "image_size", path, int, default=16),
               "seed": _get(obj, "seed", path, int, default=0),
               "contrast": contrast,
               "pixel_noise": _get(obj, "pixel_noise", path, float, default=0.2),
               "clutter": _get(obj, "clutter", path, int, default=6)}
        if out["samples_per_class"] < 6:
            raise ConfigError(f"{path}.samples_per_class: must be >= 6 for the 5:1 split")
        return out
    if kind == "csv":
        _check_keys(obj, ("kind", "train", "test", "image_size", "channels", "classes"), path)
        return {"kind": kind,
                "train": _get(obj, "train", path, str, required=True),
                "test": _get(obj, "test", path, str, required=True),
                "image_size": _get(obj, "image_size", path, int, required=True),
                "channels": _get(obj, "channels", path, int, default=1),
                "classes": _get(obj, "classes", path, int, default=10)}
    if kind == "idx":
        _check_keys(obj, ("kind", "train_images", "train_labels", "test_images",
                          "test_labels", "classes"), path)
        return {"kind": kind,
                "train_images": _get(obj, "train_images", path, str, required=True),
                "train_labels": _get(obj, "train_labels", path, str, required=True),
                "test_images": _get(obj, "test_images", path, str, required=True),
                "test_labels": _get(obj, "test_labels", path, str, required=True),
                "classes": _get(obj, "classes", path, int, default=10)}
    raise ConfigError(f"{path}.kind: unknown dataset kind {kind!r}")


def _parse_model(obj: dict, path: str) -> dict:
    preset = _get(obj, "preset", path, str, required=True)
    analog = obj.get("analog", {})
    if not isinstance(analog, dict):
        raise ConfigError(f"{path}.analog: expected an object")
    _check_keys(analog, ("inputs", "signals", "weights"), f"{path}.analog")
    analog_out = {"inputs": _get(analog, "inputs", f"{path}.analog", bool, default=True),
                  "signals": _get(analog, "signals", f"{path}.analog", bool, default=True),
                  "weights": _get(analog, "weights", f"{path}.analog", bool, default=True)}
    if preset == "convnet-mini":
        _check_keys(obj, ("preset", "classes", "width", "init_gain", "analog"), path)
        return {"preset": preset,
                "classes": _get(obj, "classes", path, int, default=10),
                "width": _get(obj, "width", path, int, default=8),
                "init_gain": _get(obj, "init_gain", path, float, default=1.4),
                "analog": analog_out}
    if preset == "mlp":
        _check_keys(obj, ("preset", "classes", "linear_layers", "hidden",
                          "init_gain", "analog"), path)
        n_linear = _get(obj, "linear_layers", path, int, default=2)
        if n_linear < 1:
            raise ConfigError(f"{path}.linear_layers: must be >= 1, got {n_linear}")
        return {"preset": preset,
                "classes": _get(obj, "classes", path, int, default=10),
                "linear_layers": n_linear,
                "hidden": _get(obj, "hidden", path, int, default=32),
                "init_gain": _get(obj, "init_gain", path, float, default=1.4),
                "analog": analog_out}
    raise ConfigError(f"{path}.preset: unknown preset {preset!r}")


def _parse_train(obj: dict, path: str) -> dict:
    _check_keys(obj, ("epochs", "batch_size", "learning_rate", "optimizer"), path)
    out = {"epochs": _get(obj, "epochs", path, int, default=10),
           "batch_size": _get(obj, "batch_size", path, int, default=64),
           "learning_rate": _get(obj, "learning_rate", path, float, default=1e-3),
           "optimizer": _get(obj, "optimizer", path, str, default="adam")}
    try:
        TrainConfig(**out, seed=0)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return out


def _parse_analysis(obj: dict, mode: str, path: str) -> dict:
    if mode == "analyze-gsd":
        _check_keys(obj, ("x0", "eps", "activations"), path)
        raw = _get(obj, "activations", path, list, required=True)
        acts = [_parse_activation(a, f"{path}.activations[{k}]") for k, a in enumerate(raw)]
        if not acts:
            raise ConfigError(f"{path}.activations: must not be empty")
        return {"x0": _get(obj, "x0", path, float, default=0.0),
                "eps": _get(obj, "eps", path, float, default=1e-3),
                "activations": acts}
    if mode == "analyze-surface":
        _check_keys(obj, ("bits", "ep", "grid", "trials", "i_values", "noise_mode"), path)
        grid = _number_list(obj, "grid", path,
                            default=[round(0.1 * k, 10) for k in range(11)])
        if any(abs(v) > 1 for v in grid):
            raise ConfigError(f"{path}.grid: values must lie within [-1, 1]")
        out = {"bits": _get(obj, "bits", path, int, default=8),
               "ep": _get(obj, "ep", path, float, default=0.5),
               "grid": grid,
               "trials": _get(obj, "trials", path, int, default=10000),
               "i_values": _number_list(obj, "i_values", path, default=None),
               "noise_mode": _get(obj, "noise_mode", path, str, default="combined")}
        if not (0.0 < out["ep"] < 1.0):
            raise ConfigError(f"{path}.ep: must be in (0, 1), got {out['ep']}")
        if out["noise_mode"] not in ("combined", "direct"):
            raise ConfigError(f"{path}.noise_mode: must be 'combined' or 'direct'")
        return out
    if mode == "analyze-accum":
        _check_keys(obj, ("sigma", "x_values", "n_values"), path)
        out = {"sigma": _get(obj, "sigma", path, float, default=0.01),
               "x_values": _number_list(obj, "x_values", path, default=[-1e-9, 1e-9]),
               "n_values": _number_list(obj, "n_values", path, default=[100, 10000, 1000000])}
        if out["sigma"] <= 0:
            raise ConfigError(f"{path}.sigma: must be > 0")
        for idx, n in enumerate(out["n_values"]):
            if int(n) != n or n < 1:
                raise ConfigError(f"{path}.n_values[{idx}]: must be a positive integer")
        out["n_values"] = [int(n) for n in out["n_values"]]
        return out
    if mode == "analyze-ebp":
        _check_keys(obj, ("bits", "window", "s_values"), path)
        out = {"bits": _get(obj, "bits", path, int, default=6),
               "window": _get(obj, "window", path, float, default=1.0),
               "s_values": _number_list(obj, "s_values", path, default=[1, 2, 3, 5])}
        if out["window"] <= 0:
            raise ConfigError(f"{path}.window: must be > 0")
        return out
    raise ConfigError(f"{path}: mode {mode!r} takes no analysis section")


def _parse_sweep(obj: dict, path: str) -> dict:
    _check_keys(obj, ("axes", "cap"), path)
    axes_obj = _get(obj, "axes", path, dict, required=True)
    axes = {}
    for name, values in axes_obj.items():
        if name not in SWEEP_AXES:
            raise ConfigError(f"{path}.axes: unknown axis '{name}' "
                              f"(expected one of {', '.join(SWEEP_AXES)})")
        axes[name] = _number_list(axes_obj, name, f"{path}.axes", required=True)
        if not axes[name]:
            raise ConfigError(f"{path}.axes.{name}: must not be empty")
    if not axes:
        raise ConfigError(f"{path}.axes: at least one axis is required")
    return {"axes": axes, "cap": _get(obj, "cap", path, int, default=DEFAULT_SWEEP_CAP)}


# ---------------------------------------------------------------------------
# whole-document parsing


TOP_KEYS = ("mode", "seed", "out_dir", "dataset", "model", "activation",
            "noise", "train", "analysis", "sweep")


@dataclass
class ResolvedConfig:
    """Canonical config: every default materialized, digest-stable."""

    data: dict
    out_dir: str | None = None

    @property
    def mode(self) -> str:
        return self.data["mode"]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def digest(self) -> str:
        return config_digest(self.data)

    def to_json(self) -> str:
        doc = dict(self.data)
        if self.out_dir is not None:
            doc["out_dir"] = self.out_dir
        return json.dumps(doc, indent=2, sort_keys=True)

    # --- typed views -------------------------------------------------

    def activation_spec(self) -> ActivationSpec:
        return ActivationSpec(**self.data["activation"])

    def noise_spec(self) -> QuantNoiseSpec | None:
        return _noise_spec_from(self.data["noise"])

    def train_config(self, seed: int | None = None) -> TrainConfig:
        t = self.data["train"]
        return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"],
                           learning_rate=t["learning_rate"], optimizer=t["optimizer"],
                           seed=self.seed if seed is None else seed)

    def load_dataset(self) -> tuple[Dataset, dict]:
        """Returns the dataset plus ingestion metadata flags."""
        d = self.data["dataset"]
        meta = {"kind": d["kind"]}
        if d["kind"] == "synthetic":
            ds = generate_synthetic(d["classes"], d["samples_per_class"],
                                    d["image_size"], d["seed"],
                                    contrast=tuple(d["contrast"]),
                                    pixel_noise=d["pixel_noise"],
                                    clutter=d["clutter"])
        elif d["kind"] == "csv":
            shape = (d["channels"], d["image_size"], d["image_size"])
            ds = read_csv_dataset(d["train"], d["test"], image_shape=shape,
                                  classes=d["classes"])
            if d["channels"] == 3:
                ds = Dataset(to_grayscale(ds.train_x), ds.train_y,
                             to_grayscale(ds.test_x), ds.test_y, ds.classes)
                meta["grayscale"] = "luminance-299-587-114"
        else:
            ds = read_idx_dataset(d["train_images"], d["train_labels"],
                                  d["test_images"], d["test_labels"],
                                  classes=d["classes"])
        return ds, meta

    def model_config(self, dataset: Dataset) -> ModelConfig:
        m = self.data["model"]
        act = self.activation_spec()
        noise = self.noise_spec()
        analog = m["analog"]
        signal = noise if (noise and analog["signals"]) else None
        weights = noise if (noise and analog["weights"]) else None
        inputs = noise if (noise and analog["inputs"]) else None
        if m["preset"] == "convnet-mini":
            shape = dataset.train_x.shape[1:]
            if len(shape) != 3:
                raise ConfigError(f"convnet-mini needs image data, dataset has shape {shape}")
            return convnet_mini(classes=m["classes"], input_shape=shape,
                                activation=act, signal_noise=signal,
                                weight_noise=weights, input_noise=inputs,
                                width=m["width"], init_gain=m["init_gain"])
        features = int(dataset.train_x.reshape(len(dataset.train_x), -1).shape[1])
        return mlp(m["linear_layers"], features, m["classes"], hidden=m["hidden"],
                   activation=act, signal_noise=signal, weight_noise=weights,
                   input_noise=inputs, init_gain=m["init_gain"])


def _noise_spec_from(noise: dict | None) -> QuantNoiseSpec | None:
    if noise is None:
        return None
    spec = QuantNoiseSpec(bits=noise["bits"], sigma=noise["sigma"],
                          clamp_lo=noise["clamp"][0], clamp_hi=noise["clamp"][1],
                          stage_order=tuple(noise["stages"])).resolve()
    spec.target_ep = noise["ep"]
    return spec


def parse_config(doc: dict, out_dir: str | None = None) -> ResolvedConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(doc, TOP_KEYS, "config")
    mode = _get(doc, "mode", "config", str, required=True)
    if mode not in MODES:
        raise ConfigError(f"config.mode: unknown mode {mode!r} (expected one of {', '.join(MODES)})")
    resolved: dict = {"mode": mode, "seed": _get(doc, "seed", "config", int, default=0)}

    needs_training = mode in ("train", "sweep")
    if needs_training:
        for section in ("dataset", "model", "train", "activation"):
            if section not in doc:
                raise ConfigError(f"config.{section}: required for mode '{mode}'")
        resolved["dataset"] = _parse_dataset(doc["dataset"], "config.dataset")
        resolved["model"] = _parse_model(doc["model"], "config.model")
        resolved["train"] = _parse_train(doc["train"], "config.train")
    else:
        resolved["dataset"] = _parse_dataset(doc["dataset"], "config.dataset") if doc.get("dataset") else None
        resolved["model"] = _parse_model(doc["model"], "config.model") if doc.get("model") else None
        resolved["train"] = _parse_train(doc["train"], "config.train") if doc.get("train") else None

    resolved["activation"] = (_parse_activation(doc["activation"], "config.activation")
                              if doc.get("activation") else None)
    if needs_training and resolved["activation"] is None:
        raise ConfigError(f"config.activation: required for mode '{mode}'")
    if mode == "analyze-accum" and resolved["activation"] is None:
        raise ConfigError("config.activation: required for mode 'analyze-accum'")

    resolved["noise"] = _parse_noise(doc["noise"], "config.noise") if doc.get("noise") else None

    if mode == "sweep":
        if "sweep" not in doc:
            raise ConfigError("config.sweep: required for mode 'sweep'")
        resolved["sweep"] = _parse_sweep(doc["sweep"], "config.sweep")
    else:
        if doc.get("sweep"):
            raise ConfigError("config.sweep: only allowed for mode 'sweep'")
        resolved["sweep"] = None

    if mode.startswith("analyze-"):
        if "analysis" not in doc:
            raise ConfigError(f"config.analysis: required for mode '{mode}'")
        resolved["analysis"] = _parse_analysis(doc["analysis"], mode, "config.analysis")
        if mode == "analyze-surface" and resolved["analysis"]["i_values"] is None \
                and resolved["activation"] is None:
            raise ConfigError("config.activation: required for analyze-surface "
                              "without analysis.i_values")
    else:
        if doc.get("analysis"):
            raise ConfigError(f"config.analysis: only allowed for analyze-* modes")
        resolved["analysis"] = None

    file_out = _get(doc, "out_dir", "config", str, default=None)
    return ResolvedConfig(data=resolved, out_dir=out_dir or file_out)


def load_config(path, out_dir: str | None = None) -> ResolvedConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(doc, out_dir=out_dir)


def config_digest(resolved: dict) -> str:
    """Content hash of a resolved config; out_dir is execution detail, not content."""
    doc = {k: v for k, v in resolved.items() if k != "out_dir"}
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
