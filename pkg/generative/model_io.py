"""
Model bundle files.

A bundle is one msgpack map holding everything needed to sample without the
training log:

    format_version  int, currently 1
    engine          "travag" or "ddpm"
    vocab           list of activity lists, column order
    case_count      cases in the training log (default sample count)
    networks        {name: network dict}; arrays as {"shape", "data"} with
                    little-endian float64 bytes
    schedule        {"betas": array} (ddpm only)
    privacy         {component: privacy report dict}
    config          training config sections

TraVaG bundles hold the decoder and generator only.
"""

import msgpack
import numpy as np
from loguru import logger

from errors import ModelFormatError, ShapeError
from eventlog.encoding import VariantVocabulary
from generative.ddpm import DiffusionModel, NoiseSchedule
from generative.travag import AutoencoderPair, GanPair, TravagModel
from nn.network import DenseNetwork
from privacy.accountant import PrivacyReport

BUNDLE_FORMAT_VERSION = 1
ENGINES = ("travag", "ddpm")

_FLOAT = np.dtype("<f8")


def _pack_array(values: np.ndarray) -> dict:
    values = np.asarray(values, dtype=_FLOAT)
    return {"shape": list(values.shape), "data": values.tobytes()}


def _unpack_array(packed: dict) -> np.ndarray:
    return np.frombuffer(packed["data"], dtype=_FLOAT).reshape(packed["shape"]).copy()


def _pack_network(net: DenseNetwork) -> dict:
    data = net.to_dict()
    for layer in data["layers"]:
        layer["weights"] = _pack_array(layer["weights"])
        layer["bias"] = _pack_array(layer["bias"])
    return data


def _unpack_network(data: dict) -> DenseNetwork:
    layers = [
        {**layer, "weights": _unpack_array(layer["weights"]), "bias": _unpack_array(layer["bias"])}
        for layer in data["layers"]
    ]
    return DenseNetwork.from_dict({**data, "layers": layers})


def _vocab_list(vocab: VariantVocabulary) -> list[list[str]]:
    return [list(v) for v in vocab.variants]


def model_to_bundle(model: TravagModel | DiffusionModel) -> dict:
    """Plain msgpack-ready dict of a trained model."""
    bundle = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "vocab": _vocab_list(model.vocab),
        "case_count": model.case_count,
        "config": model.config or {},
    }
    if isinstance(model, TravagModel):
        if model.gan is None:
            raise ValueError("Cannot save a TraVaG model without a trained generator")
        bundle["engine"] = "travag"
        bundle["networks"] = {
            "decoder": _pack_network(model.autoencoder.decoder),
            "generator": _pack_network(model.gan.generator),
        }
        bundle["privacy"] = {"decoder": model.decoder_privacy.to_dict()}
        if model.discriminator_privacy is not None:
            bundle["privacy"]["discriminator"] = model.discriminator_privacy.to_dict()
    else:
        bundle["engine"] = "ddpm"
        bundle["networks"] = {"predictor": _pack_network(model.predictor)}
        bundle["schedule"] = {"betas": _pack_array(model.schedule.betas)}
        bundle["embed_dim"] = model.embed_dim
        bundle["privacy"] = {"predictor": model.privacy.to_dict()} if model.privacy else {}
    return bundle


def bundle_to_model(bundle: dict) -> TravagModel | DiffusionModel:
    """
    Rebuild a model from a bundle dict.

    Raises:
        ModelFormatError: wrong format version, unknown engine or missing fields
    """
    if not isinstance(bundle, dict):
        raise ModelFormatError("corrupt model file: top level is not a map")
    version = bundle.get("format_version")
    if version != BUNDLE_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {version!r} (expected {BUNDLE_FORMAT_VERSION})"
        )
    engine = bundle.get("engine")
    if engine not in ENGINES:
        raise ModelFormatError(f"unknown engine {engine!r} in model file (format version {version})")

    try:
        vocab = VariantVocabulary([tuple(v) for v in bundle["vocab"]])
        networks = {name: _unpack_network(data) for name, data in bundle["networks"].items()}
        privacy = {name: PrivacyReport.from_dict(data) for name, data in bundle.get("privacy", {}).items()}
        case_count = int(bundle["case_count"])
        config = bundle.get("config") or {}

        if engine == "travag":
            return TravagModel(
                vocab=vocab,
                autoencoder=AutoencoderPair(None, networks["decoder"]),
                gan=GanPair(networks["generator"], None),
                decoder_privacy=privacy["decoder"],
                discriminator_privacy=privacy.get("discriminator"),
                case_count=case_count,
                config=config,
            )
        return DiffusionModel(
            vocab=vocab,
            schedule=NoiseSchedule(_unpack_array(bundle["schedule"]["betas"])),
            predictor=networks["predictor"],
            privacy=privacy.get("predictor"),
            case_count=case_count,
            embed_dim=int(bundle["embed_dim"]),
            config=config,
        )
    except (KeyError, TypeError, ValueError, ShapeError) as e:
        raise ModelFormatError(f"corrupt model file (format version {version}): {e}") from e


def save_model(model: TravagModel | DiffusionModel, path: str) -> None:
    with open(path, "wb") as f:
        f.write(msgpack.packb(model_to_bundle(model), use_bin_type=True))
    logger.info(f"Saved {type(model).__name__} to {path}")


def load_model(path: str) -> TravagModel | DiffusionModel:
    """
    Read a model file written by save_model.

    Raises:
        ModelFormatError: file is not a valid bundle of a supported version
    """
    with open(path, "rb") as f:
        raw = f.read()
    try:
        bundle = msgpack.unpackb(raw, raw=False)
    except (msgpack.exceptions.ExtraData, msgpack.exceptions.UnpackException, ValueError) as e:
        raise ModelFormatError(
            f"corrupt model file {path}: not a msgpack bundle (expected format version {BUNDLE_FORMAT_VERSION})"
        ) from e

    model = bundle_to_model(bundle)
    logger.debug(f"Loaded {bundle['engine']} model from {path} ({len(model.vocab)} variants)")
    return model
