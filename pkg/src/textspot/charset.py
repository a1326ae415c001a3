"""Recognition alphabet: A-Z, 0-9, plus EOS and PAD target classes."""

CHARS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
EOS = len(CHARS)          # 36, end-of-word class
PAD = len(CHARS) + 1      # 37, padding class, excluded from losses
NUM_CLASSES = len(CHARS) + 2
T_MAX = 12                # max decoded characters per instance

_CHAR_TO_INDEX = {c: i for i, c in enumerate(CHARS)}


class CharsetError(ValueError):
    """A string contains characters outside the recognition alphabet."""


def normalize_text(s: str) -> str:
    """Uppercase and drop everything outside the alphabet."""
    return "".join(c for c in s.upper() if c in _CHAR_TO_INDEX)


def encode_text(text: str, t_max: int = T_MAX) -> list[int]:
    """Class indices for a transcription: chars, one EOS, then PAD to t_max.

    A text that already fills t_max gets no EOS (there is no room).
    Raises CharsetError on characters outside the alphabet.
    """
    if len(text) > t_max:
        raise CharsetError(f"text {text!r} longer than t_max={t_max}")
    ids = []
    for c in text:
        if c not in _CHAR_TO_INDEX:
            raise CharsetError(f"character {c!r} not in charset")
        ids.append(_CHAR_TO_INDEX[c])
    if len(ids) < t_max:
        ids.append(EOS)
    ids.extend([PAD] * (t_max - len(ids)))
    return ids


def decode_indices(ids) -> str:
    """Characters up to the first EOS or PAD."""
    out = []
    for i in ids:
        i = int(i)
        if i >= EOS:
            break
        out.append(CHARS[i])
    return "".join(out)
