"""Reversible byte-fallback tokenizer with atomic special tokens.

Ordinary text is encoded one byte per token (ids 0..255), which makes
encoding total over arbitrary UTF-8. Special literals (dialogue markers,
action tags, end-of-text) are matched greedily left to right, longest
literal first, and map to single ids that byte tokens can never produce.

Streaming note: retokenizing a growing string can only disagree with the
final tokenization inside the last `max_special_len` characters, since byte
tokens are context-free and specials are bounded literals. The actions
parser relies on this bound for its carry buffer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import FormatError, InvalidToken

SPECIAL_LITERALS = (
    "<human>",
    "<bot>",
    "<call>",
    "<search>",
    "<calendar>",
    "<|endoftext|>",
)

VOCAB_FILE_HEADER = "stlm-vocab 1"


@dataclass(frozen=True)
class Vocab:
    """id -> bytes table plus the ordered specials list."""

    entries: tuple[bytes, ...]
    specials: tuple[tuple[str, int], ...]
    _by_literal: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [i for _, i in self.specials]
        if len(set(ids)) != len(ids):
            raise ValueError("special ids must be distinct")
        object.__setattr__(self, "_by_literal", dict(self.specials))

    def __len__(self) -> int:
        return len(self.entries)

    def special_id(self, literal: str) -> int:
        return self._by_literal[literal]

    @property
    def eos_id(self) -> int:
        return self._by_literal["<|endoftext|>"]

    def is_special(self, token_id: int) -> bool:
        return any(i == token_id for _, i in self.specials)


def build_vocab(size: int = 512) -> Vocab:
    """Deterministic fixture vocabulary: 256 byte tokens + the specials.

    Ids past the specials up to `size` are reserved entries that decode to
    nothing; encode never produces them, but they keep decoding total over
    a model's whole id space.
    """
    entries = [bytes([b]) for b in range(256)]
    specials = []
    for offset, literal in enumerate(SPECIAL_LITERALS):
        specials.append((literal, 256 + offset))
        entries.append(literal.encode("utf-8"))
    if size < len(entries):
        raise ValueError(f"vocab size {size} smaller than required {len(entries)}")
    entries.extend(b"" for _ in range(size - len(entries)))
    return Vocab(entries=tuple(entries), specials=tuple(specials))


def encode(text: str, vocab: Vocab) -> list[int]:
    """Encode UTF-8 text; specials match atomically, bytes cover the rest."""
    ordered = sorted(vocab.specials, key=lambda s: len(s[0]), reverse=True)
    ids: list[int] = []
    i = 0
    n = len(text)
    while i < n:
        matched = False
        for literal, sid in ordered:
            if text.startswith(literal, i):
                ids.append(sid)
                i += len(literal)
                matched = True
                break
        if not matched:
            for b in text[i].encode("utf-8"):
                ids.append(b)
            i += 1
    return ids


def decode(ids, vocab: Vocab) -> str:
    """Concatenate token byte strings; inverse of encode on its outputs."""
    chunks = []
    size = len(vocab)
    for tid in ids:
        if not 0 <= tid < size:
            raise InvalidToken(f"token id {tid} outside vocab of size {size}")
        chunks.append(vocab.entries[tid])
    return b"".join(chunks).decode("utf-8", errors="replace")


def max_special_len(vocab: Vocab) -> int:
    return max(len(lit) for lit, _ in vocab.specials)


def save_vocab(vocab: Vocab, path) -> None:
    """Write the versioned text format: one `id TAB hex TAB flags` line per entry."""
    special_ids = {i for _, i in vocab.specials}
    lines = [VOCAB_FILE_HEADER]
    for tid, raw in enumerate(vocab.entries):
        flags = "S" if tid in special_ids else "-"
        lines.append(f"{tid}\t{raw.hex()}\t{flags}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_vocab(path) -> Vocab:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != VOCAB_FILE_HEADER:
        raise FormatError(f"not a vocab file (missing '{VOCAB_FILE_HEADER}' header)")
    entries: list[bytes] = []
    specials: list[tuple[str, int]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"line {lineno}: expected 3 tab-separated fields")
        tid, hexbytes, flags = parts
        tid = int(tid)
        if tid != len(entries):
            raise FormatError(f"line {lineno}: ids must be dense and ascending")
        raw = bytes.fromhex(hexbytes)
        entries.append(raw)
        if "S" in flags:
            specials.append((raw.decode("utf-8"), tid))
    return Vocab(entries=tuple(entries), specials=tuple(specials))
