"""Token sequences over the primitive vocabulary.

The vocabulary holds K primitive tokens (ids matching the dictionary) plus
BOS, SEP, EOS, PAD at ids K..K+3. Encoding expands each run into repeated
primitive tokens, with a SEP immediately before every pen-up run.

Round-trip note: encode is injective only on canonical abstracted sketches,
where no run shares a primitive id with an immediately preceding run unless
a SEP sits between them (i.e. the later run is pen-up flagged). Adjacent
same-id runs collapse into one token run, which leaves the drawn geometry
unchanged but merges the run boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

from .primitives import AbstractedSketch, Run


class TokenError(ValueError):
    """Structural violation in a token sequence, with the offending position."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        super().__init__(message if position is None else f"{message} (position {position})")


@dataclass(frozen=True)
class Vocabulary:
    orientation_count: int

    @property
    def size(self) -> int:
        return self.orientation_count + 4

    @property
    def bos(self) -> int:
        return self.orientation_count

    @property
    def sep(self) -> int:
        return self.orientation_count + 1

    @property
    def eos(self) -> int:
        return self.orientation_count + 2

    @property
    def pad(self) -> int:
        return self.orientation_count + 3

    def is_primitive(self, token: int) -> bool:
        return 0 <= token < self.orientation_count

    def describe(self, token: int) -> str:
        if self.is_primitive(token):
            return f"p{token}"
        return {self.bos: "BOS", self.sep: "SEP", self.eos: "EOS", self.pad: "PAD"}.get(
            token, f"<invalid {token}>"
        )


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    attention_length: int

    def __post_init__(self) -> None:
        if not (0 < self.attention_length <= len(self.ids)):
            raise ValueError("attention_length must cover 1..len(ids)")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def content(self) -> tuple[int, ...]:
        return self.ids[: self.attention_length]


def sequence_from_ids(ids: list[int] | tuple[int, ...], vocab: Vocabulary) -> TokenSequence:
    """Wrap raw ids, counting trailing PAD out of the attention length."""
    ids = tuple(int(i) for i in ids)
    n = len(ids)
    while n > 0 and ids[n - 1] == vocab.pad:
        n -= 1
    return TokenSequence(ids=ids, attention_length=max(n, 1))


def encode(abstracted: AbstractedSketch, vocab: Vocabulary) -> TokenSequence:
    k = vocab.orientation_count
    ids: list[int] = [vocab.bos]
    for run in abstracted.runs:
        if not (0 <= run.primitive_id < k):
            raise TokenError(f"primitive id {run.primitive_id} outside vocabulary")
        if run.count < 1:
            raise TokenError(f"run count {run.count} below 1")
        if run.pen_up_move:
            ids.append(vocab.sep)
        ids.extend([run.primitive_id] * run.count)
    ids.append(vocab.eos)
    return TokenSequence(ids=tuple(ids), attention_length=len(ids))


def decode(tokens: TokenSequence, vocab: Vocabulary) -> AbstractedSketch:
    """Invert encode. PAD and anything after EOS are ignored.

    Raises TokenError naming the offending position for missing BOS/EOS,
    terminal SEP, double SEP, or unknown ids.
    """
    ids = tokens.ids
    if not ids or ids[0] != vocab.bos:
        raise TokenError("missing BOS", 0)
    runs: list[Run] = []
    pending_sep = False
    current_id: int | None = None
    count = 0
    pen_flag = False
    saw_eos = False
    pos = 1
    for pos in range(1, len(ids)):
        tok = ids[pos]
        if tok == vocab.pad:
            if not saw_eos:
                raise TokenError("PAD before EOS", pos)
            continue
        if saw_eos:
            raise TokenError(f"content after EOS: {vocab.describe(tok)}", pos)
        if tok == vocab.eos:
            if pending_sep:
                raise TokenError("SEP in terminal position", pos - 1)
            if current_id is not None:
                runs.append(Run(current_id, count, pen_flag))
            saw_eos = True
            continue
        if tok == vocab.sep:
            if pending_sep:
                raise TokenError("two consecutive SEP tokens", pos)
            if current_id is not None:
                runs.append(Run(current_id, count, pen_flag))
                current_id = None
            pending_sep = True
            continue
        if tok == vocab.bos:
            raise TokenError("BOS after start", pos)
        if not vocab.is_primitive(tok):
            raise TokenError(f"unknown token id {tok}", pos)
        if current_id == tok:
            count += 1
        else:
            if current_id is not None:
                runs.append(Run(current_id, count, pen_flag))
            current_id = tok
            count = 1
            pen_flag = pending_sep
            pending_sep = False
    if not saw_eos:
        raise TokenError("missing EOS", len(ids) - 1)
    if not runs:
        raise TokenError("empty sketch between BOS and EOS", 1)
    return AbstractedSketch(runs=tuple(runs))


def pad_or_truncate(
    tokens: TokenSequence, max_len: int, vocab: Vocabulary
) -> tuple[TokenSequence, bool]:
    """Pad with PAD to max_len, or truncate forcing a final EOS.

    Returns (sequence, truncated flag). attention_length is unchanged when
    padding; truncation keeps max_len - 1 content tokens plus EOS.
    """
    if max_len < 3:
        raise ValueError("max_len must be at least 3")
    n = len(tokens.ids)
    if n == max_len:
        return tokens, False
    if n < max_len:
        ids = tokens.ids + (vocab.pad,) * (max_len - n)
        return TokenSequence(ids=ids, attention_length=tokens.attention_length), False
    kept = list(tokens.ids[: max_len - 1])
    if kept and kept[-1] == vocab.sep:  # never leave SEP dangling before EOS
        kept.pop()
    kept.append(vocab.eos)
    attention = len(kept)
    kept.extend([vocab.pad] * (max_len - len(kept)))
    return TokenSequence(ids=tuple(kept), attention_length=attention), True


__all__ = [
    "Vocabulary",
    "TokenSequence",
    "TokenError",
    "encode",
    "decode",
    "pad_or_truncate",
    "sequence_from_ids",
]
