"""Decision-rule evidence selection and co-attention claim verification.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports its public surface.
"""

from ._core import (
    CommentMeta,
    ConfigError,
    DataError,
    DecisionThresholds,
    ParseError,
    ReviewerMeta,
    Scorer,
    ShapeError,
    Thread,
    ValidationError,
    comment_credibility,
    decide,
    make_planted_corpus_file,
    parse_thread,
    reviewer_credibility,
    run_cli,
    serialize_thread,
    tokenize,
)

__all__ = [
    "CommentMeta",
    "ConfigError",
    "DataError",
    "DecisionThresholds",
    "ParseError",
    "ReviewerMeta",
    "Scorer",
    "ShapeError",
    "Thread",
    "ValidationError",
    "comment_credibility",
    "decide",
    "make_planted_corpus_file",
    "parse_thread",
    "reviewer_credibility",
    "run_cli",
    "serialize_thread",
    "tokenize",
]

__version__ = "0.1.0"
