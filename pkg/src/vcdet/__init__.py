"""Video copy detection on frame descriptors: retrieval, localization, evaluation."""
from .store import Corpus, DescriptorSet, Role, read_corpus, write_corpus
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "Corpus", "DescriptorSet", "Role", "read_corpus", "write_corpus",
           "__version__"]
