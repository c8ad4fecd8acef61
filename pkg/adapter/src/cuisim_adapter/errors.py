class AdapterError(Exception):
    """Fatal adapter failure (model loading, version mismatch, bad input)."""
