"""embdim: how far can you compress text embeddings before regression suffers?"""

__version__ = "0.1.0"
