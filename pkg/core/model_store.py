"""
Model Store Module

Persists generator and reranker parameters as a single .npz file: every
tensor under its parameter name plus a JSON header (format version, model
kind, mode, config echo, vocabularies, class inventory, training DA ids).
The header is validated against schemas/MODEL_HEADER_SCHEMA.json on load.
"""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

import numpy as np

from .config import TrainConfig
from .data_model import Vocabulary
from .errors import MissingModelError, ModelFormatError
from .log_utils import get_logger
from .reranker import ClassInventory, RerankerParams
from .schema_validator import SchemaValidator, default_validator
from .seq2seq import GeneratorParams

logger = get_logger("nlg.seq2seq")

FORMAT_VERSION = 1
HEADER_KEY = "__header__"


def _write(path: Path, header: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    header["tensors"] = {name: list(a.shape) for name, a in sorted(arrays.items())}
    payload = {name: np.asarray(a, dtype=np.float64) for name, a in arrays.items()}
    payload[HEADER_KEY] = np.array(json.dumps(header, sort_keys=True))
    # np.savez appends .npz when missing; write through a handle to keep the exact name
    with open(path, "wb") as f:
        np.savez(f, **payload)
    logger.info(f"Saved {header['kind']} model to {path}")
    return path


def read_model(path: Union[str, Path], command: str = "nlg-experiment train",
               validator: Optional[SchemaValidator] = None) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Read and check a model file.

    Raises:
        MissingModelError: If the file does not exist
        ModelFormatError: If the header is absent, invalid, of another version,
            or disagrees with the stored tensors
    """
    path = Path(path)
    if not path.exists():
        raise MissingModelError(str(path), command)
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {name: data[name] for name in data.files}
    except (OSError, ValueError) as e:
        raise ModelFormatError("Model file is not a readable archive", field=str(path), actual=str(e))
    if HEADER_KEY not in arrays:
        raise ModelFormatError("Model file has no header", field=str(path))
    header = json.loads(str(arrays.pop(HEADER_KEY)))

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError("Unsupported model format version", field="format_version",
                               expected=FORMAT_VERSION, actual=version)
    ok, errors = (validator or default_validator()).validate_model_header(header)
    if not ok:
        raise ModelFormatError("Invalid model header", field=str(path), actual=errors)
    for name, shape in header["tensors"].items():
        if name not in arrays:
            raise ModelFormatError("Tensor listed in header is missing", field=name)
        if list(arrays[name].shape) != shape:
            raise ModelFormatError("Tensor shape disagrees with header", field=name,
                                   expected=shape, actual=list(arrays[name].shape))
    return header, arrays


def _expect_kind(header: Dict[str, Any], kind: str, path: Path):
    if header["kind"] != kind:
        raise ModelFormatError(f"Expected a {kind} model", field=str(path), expected=kind, actual=header["kind"])


def save_generator(path: Union[str, Path], params: GeneratorParams, config: TrainConfig,
                   training_da_ids: Iterable[str], report: Optional[Dict] = None) -> Path:
    """Write a trained generator with the DA ids it was trained on."""
    header = {
        "kind": "generator",
        "mode": params.mode,
        "config": config.model_dump(mode="json"),
        "vocabularies": {"input": params.input_vocab.to_dict(), "output": params.output_vocab.to_dict()},
        "training_da_ids": sorted(set(training_da_ids)),
    }
    if report is not None:
        header["report"] = report
    return _write(Path(path), header, params.snapshot())


def load_generator(path: Union[str, Path],
                   command: str = "nlg-experiment train") -> Tuple[GeneratorParams, Dict[str, Any]]:
    """Load a generator; returns the parameters and the header."""
    path = Path(path)
    header, arrays = read_model(path, command)
    _expect_kind(header, "generator", path)
    config = TrainConfig(**header["config"])
    vocabs = header["vocabularies"]
    params = GeneratorParams.from_arrays(
        header["mode"],
        Vocabulary.from_dict(vocabs["input"]),
        Vocabulary.from_dict(vocabs["output"]),
        arrays,
        zero_init_decoder_cell=config.zero_init_decoder_cell,
        sort_triples=config.canonical_da_order,
    )
    return params, header


def save_reranker(path: Union[str, Path], params: RerankerParams, config: TrainConfig,
                  training_da_ids: Iterable[str], report: Optional[Dict] = None) -> Path:
    """Write a trained reranker with its class inventory."""
    header = {
        "kind": "reranker",
        "mode": params.mode,
        "config": config.model_dump(mode="json"),
        "vocabularies": {"input": params.vocab.to_dict()},
        "inventory": list(params.inventory.classes),
        "training_da_ids": sorted(set(training_da_ids)),
    }
    if report is not None:
        header["report"] = report
    return _write(Path(path), header, params.snapshot())


def load_reranker(path: Union[str, Path],
                  command: str = "nlg-experiment train-reranker") -> Tuple[RerankerParams, Dict[str, Any]]:
    """Load a reranker; returns the parameters and the header."""
    path = Path(path)
    header, arrays = read_model(path, command)
    _expect_kind(header, "reranker", path)
    if "inventory" not in header:
        raise ModelFormatError("Reranker header has no class inventory", field=str(path))
    params = RerankerParams.from_arrays(
        header["mode"],
        Vocabulary.from_dict(header["vocabularies"]["input"]),
        ClassInventory(tuple(header["inventory"])),
        arrays,
    )
    return params, header
