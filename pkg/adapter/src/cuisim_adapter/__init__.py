"""cuisim-adapter: annotation and candidate retrieval front end."""

from .annotate import LexiconAnnotator, RadGraphXLAnnotator, annotate_file, make_annotator
from .embed import (
    EmbeddingIndex,
    HashingEncoder,
    SapBertEncoder,
    build_embedding_index,
    load_index,
    make_encoder,
    retrieve_candidates,
    save_index,
)
from .errors import AdapterError
from .schemas import validate_annotations, validate_candidates

__version__ = "0.1.0"
