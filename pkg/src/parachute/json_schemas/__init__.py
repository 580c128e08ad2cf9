from .validate_schema import load_document, load_schema, read_json, validate_document

__all__ = ["load_document", "load_schema", "read_json", "validate_document"]
