"""Recursive document chunking driven by a separator hierarchy.

A document is cut at the highest-priority separator that produces a split,
pieces that still exceed the token budget are cut again at the next level
down, and neighbouring fragments are greedily merged back up to the budget.
Separators are zero-width regular expressions, so concatenating the pieces
always reproduces the source text byte for byte.

Sizes are counted in whitespace tokens (maximal runs of non-space
characters), which keeps the arithmetic exact: joining two fragments merges
at most the boundary token pair.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ragmeta.corpus import Chunk, ChunkMetadata, Document

# Highest priority first: markdown headings, blank lines, newlines, sentence
# boundaries, any whitespace, then single characters as a last resort. Every
# pattern is zero-width so splitting never consumes text.
DEFAULT_SEPARATORS: tuple[str, ...] = (
    r"(?m)(?=^#{1,6} )",
    r"(?<=\n\n)",
    r"(?<=\n)",
    r"(?<=[.!?])(?=\s)",
    r"(?<=\s)",
    "",
)

_TOKEN_RE = re.compile(r"\S+")


def count_tokens(text: str) -> int:
    """Number of whitespace-delimited tokens in ``text``."""
    return len(_TOKEN_RE.findall(text))


@dataclass(frozen=True)
class ChunkingParams:
    max_tokens: int = 1000
    overlap_tokens: int = 100
    separators: tuple[str, ...] = DEFAULT_SEPARATORS

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if not 0 <= self.overlap_tokens < self.max_tokens:
            raise ValueError("overlap_tokens must satisfy 0 <= overlap < max_tokens")

    @property
    def piece_budget(self) -> int:
        """Token budget per piece before the overlap prefix is added."""
        return self.max_tokens - self.overlap_tokens


def _join_count(left_count: int, left_text: str, right_text: str) -> int:
    """Token count of ``left_text + right_text`` given ``count(left_text)``.

    Concatenation merges exactly the boundary token pair when the left side
    ends mid-token and the right side starts mid-token.
    """
    right_count = count_tokens(right_text)
    total = left_count + right_count
    if left_text and right_text and not left_text[-1].isspace() and not right_text[0].isspace():
        if left_count and right_count:
            total -= 1
    return total


def _split_level(text: str, pattern: str) -> list[str]:
    if pattern == "":
        return list(text)
    parts = re.split(pattern, text)
    return [p for p in parts if p]


def _merge(atoms: list[str], budget: int) -> list[str]:
    """Greedy left-to-right packing of fragments into budget-sized pieces."""
    pieces: list[str] = []
    current: list[str] = []
    current_count = 0
    current_text_tail = ""
    for atom in atoms:
        merged_count = _join_count(current_count, current_text_tail, atom)
        if current and merged_count > budget:
            pieces.append("".join(current))
            current = [atom]
            current_count = count_tokens(atom)
        else:
            current.append(atom)
            current_count = merged_count
        current_text_tail = atom if atom else current_text_tail
    if current:
        pieces.append("".join(current))
    return pieces


def _recursive_split(text: str, separators: tuple[str, ...], level: int, budget: int) -> list[str]:
    if count_tokens(text) <= budget:
        return [text]
    if level >= len(separators):
        # Custom hierarchies may omit the character fallback; apply it anyway
        # so an unsplittable run degrades instead of erroring.
        return _merge(list(text), budget)
    parts = _split_level(text, separators[level])
    if len(parts) <= 1:
        return _recursive_split(text, separators, level + 1, budget)
    atoms: list[str] = []
    for part in parts:
        if count_tokens(part) > budget:
            atoms.extend(_recursive_split(part, separators, level + 1, budget))
        else:
            atoms.append(part)
    return _merge(atoms, budget)


def split_text(text: str, params: ChunkingParams | None = None) -> list[str]:
    """Cut ``text`` into pieces of at most ``piece_budget`` tokens.

    A text that already fits ``max_tokens`` is returned whole, since a single
    chunk never receives an overlap prefix. ``"".join(result)`` equals the
    input exactly.
    """
    params = params or ChunkingParams()
    if count_tokens(text) <= params.max_tokens:
        return [text]
    return _recursive_split(text, params.separators, 0, params.piece_budget)


def _trailing_tokens(text: str, n: int) -> str:
    if n <= 0:
        return ""
    matches = list(_TOKEN_RE.finditer(text))
    if len(matches) <= n:
        return text
    return text[matches[len(matches) - n].start():]


def split_document(doc: Document, params: ChunkingParams | None = None) -> list[Chunk]:
    """Chunk a document, prefixing each piece with its predecessor's tail.

    Every chunk after the first starts with the final ``overlap_tokens``
    tokens of the previous chunk, so no chunk ever exceeds ``max_tokens``.
    """
    params = params or ChunkingParams()
    pieces = split_text(doc.markdown_text, params)
    chunks: list[Chunk] = []
    for ordinal, piece in enumerate(pieces):
        if ordinal == 0 or params.overlap_tokens == 0:
            text = piece
        else:
            text = _trailing_tokens(chunks[-1].text, params.overlap_tokens) + piece
        chunks.append(
            Chunk(
                chunk_id=f"{doc.doc_id}#{ordinal}",
                doc_id=doc.doc_id,
                ordinal=ordinal,
                text=text,
            )
        )
    return chunks


def _label_line(label: str, items: tuple[str, ...]) -> str:
    if not items:
        return f"{label}:"
    # Metadata items are free-form model output; flatten any stray newlines
    # so the header stays exactly four lines.
    return f"{label}: " + "; ".join(" ".join(item.split()) for item in items)


def build_contextual_text(text: str, metadata: ChunkMetadata) -> str:
    """Prefix chunk text with its metadata header for the contextual collection.

    The header is four labelled lines (semicolon-joined values, empty lists
    render as bare labels) followed by a blank line; the original text is
    preserved verbatim at the end.
    """
    header = "\n".join(
        (
            _label_line("Clusters", metadata.parent_clusters),
            _label_line("Entities", metadata.chunk_entities),
            _label_line("Questions", metadata.answered_questions),
            _label_line("Insights", metadata.retrieval_nuggets),
        )
    )
    return f"{header}\n\n{text}"
