"""Constant-probe similarity search over whole-slide-image mosaics."""
from .encoding import TextureCode, binarize, hamming, index_from_latent
from .ranking import RankedResult, normalize_weights, rank_results
from .search import SearchHit, SearchParams, guided_search
from .store import Database, DataFormatError, MosaicMeta, build_database, load, save
from .veb import VebTree

__all__ = [
    "Database", "DataFormatError", "MosaicMeta", "RankedResult", "SearchHit", "SearchParams",
    "TextureCode", "VebTree", "binarize", "build_database", "guided_search", "hamming",
    "index_from_latent", "load", "normalize_weights", "rank_results", "save",
]
__version__ = "0.1.0"
