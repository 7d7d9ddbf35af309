"""
Schema Validator Module

Validates corpus records and model headers against the JSON Schema documents
in schemas/, collecting every violation with its JSON path so data errors can
be reported in one pass.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from jsonschema import Draft7Validator


class SchemaValidator:
    """Validates documents against the project's JSON schemas."""

    SCHEMA_FILES = {
        "corpus_record": "CORPUS_RECORD_SCHEMA.json",
        "model_header": "MODEL_HEADER_SCHEMA.json",
    }

    def __init__(self, schema_dir: Optional[Path] = None):
        """Initialize the validator with the schema directory."""
        self.schema_dir = Path(schema_dir) if schema_dir else Path(__file__).parent.parent / "schemas"
        self._validators: Dict[str, Draft7Validator] = {}
        self._load_schemas()

    def _load_schemas(self):
        for key, filename in self.SCHEMA_FILES.items():
            schema_path = self.schema_dir / filename
            if not schema_path.exists():
                raise FileNotFoundError(f"Schema file not found: {schema_path}")
            with open(schema_path, encoding="utf-8") as f:
                schema = json.load(f)
            Draft7Validator.check_schema(schema)
            self._validators[key] = Draft7Validator(schema)

    def validate(self, kind: str, document: Any) -> Tuple[bool, List[str]]:
        """
        Validate a document against one schema.

        Returns:
            Tuple of (is_valid, list_of_errors)
        """
        if kind not in self._validators:
            raise KeyError(f"Unknown schema kind: {kind}")
        errors = []
        for error in sorted(self._validators[kind].iter_errors(document), key=lambda e: list(e.path)):
            location = "/".join(str(p) for p in error.path) or "<root>"
            errors.append(f"{location}: {error.message}")
        return len(errors) == 0, errors

    def validate_corpus_record(self, record: Any) -> Tuple[bool, List[str]]:
        return self.validate("corpus_record", record)

    def validate_model_header(self, header: Any) -> Tuple[bool, List[str]]:
        return self.validate("model_header", header)


_default: Optional[SchemaValidator] = None


def default_validator() -> SchemaValidator:
    global _default
    if _default is None:
        _default = SchemaValidator()
    return _default
