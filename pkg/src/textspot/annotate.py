"""Annotation records, transcript assembly, and speech-to-text clients.

Annotations carry transcriptions only - never geometry. That purity is
enforced both when parsing annotation files and when the HTTP service
accepts submissions (see server.py).

Speech input arrives as token sequences from an SttClient; word mode
treats each token as one text, char mode spells texts out one character
(or digit name) at a time with NEXT separating instances.
"""

from __future__ import annotations

import base64
import json
import logging
import urllib.request
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

from .charset import CHARS, normalize_text
from .rng import Rng, derive_seed

logger = logging.getLogger(__name__)

SOURCES = ("typed", "audio-word", "audio-char")
SEPARATOR = "NEXT"
DIGIT_NAMES = {
    "ZERO": "0", "ONE": "1", "TWO": "2", "THREE": "3", "FOUR": "4",
    "FIVE": "5", "SIX": "6", "SEVEN": "7", "EIGHT": "8", "NINE": "9",
}
# keys that would smuggle localization supervision into the store
GEOMETRY_KEYS = frozenset({
    "polygon", "polygons", "point", "points", "bbox", "box", "boxes",
    "mask", "masks", "center", "centers", "geometry", "coords",
    "x", "y", "width", "height",
})
_RECORD_KEYS = frozenset({"image_id", "texts", "source", "created_at"})


class TokenError(ValueError):
    """A char-mode token is not a character, digit name, or NEXT."""


class SchemaError(ValueError):
    """An annotation line violates the record schema."""


class SttError(RuntimeError):
    """A speech-to-text client failed to transcribe a file."""


class AnnotationError(RuntimeError):
    """An annotation batch produced no usable records."""


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class AnnotationRecord:
    image_id: str
    texts: list[str]          # normalized (uppercase, charset-only), non-empty
    source: str               # one of SOURCES
    created_at: str           # ISO-8601 UTC timestamp

    def __post_init__(self):
        if not isinstance(self.image_id, str) or not self.image_id:
            raise SchemaError(f"bad image_id {self.image_id!r}")
        if self.source not in SOURCES:
            raise SchemaError(f"source must be one of {SOURCES}, "
                              f"got {self.source!r}")
        if (not isinstance(self.texts, list) or not self.texts
                or not all(isinstance(t, str) for t in self.texts)):
            raise SchemaError("texts must be a non-empty list of strings")
        for t in self.texts:
            if not t or t != normalize_text(t):
                raise SchemaError(f"text {t!r} is not normalized "
                                  "(uppercase, charset-only, non-empty)")
        try:
            datetime.fromisoformat(self.created_at)
        except (TypeError, ValueError):
            raise SchemaError(f"created_at {self.created_at!r} is not "
                              "an ISO-8601 timestamp") from None


# ---------------------------------------------------------------------------
# transcript assembly


def assemble_transcript(tokens, mode: str) -> list[str]:
    """Token stream -> list of instance texts.

    word mode: one normalized text per token. char mode: concatenate
    single characters and digit names, split instances on NEXT. Either
    way, empty results are dropped.
    """
    tokens = list(tokens)
    if not tokens:
        raise ValueError("token sequence is empty")
    if mode == "word":
        texts = [normalize_text(t) for t in tokens]
    elif mode == "char":
        groups: list[list[str]] = [[]]
        for token in tokens:
            up = token.upper()
            if up == SEPARATOR:
                groups.append([])
            elif up in DIGIT_NAMES:
                groups[-1].append(DIGIT_NAMES[up])
            elif len(up) == 1:
                groups[-1].append(normalize_text(up))
            else:
                raise TokenError(
                    f"char-mode token {token!r} is not a single character, "
                    f"a digit name (ZERO..NINE), or {SEPARATOR}")
        texts = [normalize_text("".join(g)) for g in groups]
    else:
        raise ValueError(f"mode must be 'word' or 'char', got {mode!r}")
    return [t for t in texts if t]


# ---------------------------------------------------------------------------
# annotation store (append-only JSONL)


def record_to_json(record: AnnotationRecord) -> str:
    return json.dumps(asdict(record), sort_keys=True)


def append_record(path: Path | str, record: AnnotationRecord) -> None:
    """One atomic line-at-a-time append."""
    with open(path, "a", encoding="utf-8") as f:
        f.write(record_to_json(record) + "\n")
        f.flush()


def record_from_obj(obj, where: str = "record") -> AnnotationRecord:
    """Validate a decoded JSON object against the record schema."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected a JSON object, "
                          f"got {type(obj).__name__}")
    geo = sorted(GEOMETRY_KEYS & obj.keys())
    if geo:
        raise SchemaError(f"{where}: geometry key {geo[0]!r} not allowed - "
                          "annotations are transcription-only")
    unknown = sorted(obj.keys() - _RECORD_KEYS)
    if unknown:
        raise SchemaError(f"{where}: unknown key {unknown[0]!r}")
    missing = sorted(_RECORD_KEYS - obj.keys())
    if missing:
        raise SchemaError(f"{where}: missing key {missing[0]!r}")
    try:
        return AnnotationRecord(**obj)
    except SchemaError as e:
        raise SchemaError(f"{where}: {e}") from None


def parse_annotations(path: Path | str) -> list[AnnotationRecord]:
    """All records of a JSONL file, in file order.

    Any malformed line raises SchemaError carrying its line number.
    Consumers wanting one set of texts per image should keep the last
    record per image_id (a re-POST overrides earlier ones at read time).
    """
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"line {lineno}: malformed JSON: {e}") from None
            records.append(record_from_obj(obj, where=f"line {lineno}"))
    return records


def latest_by_image(records) -> dict[str, AnnotationRecord]:
    """Last record per image_id wins."""
    out: dict[str, AnnotationRecord] = {}
    for rec in records:
        out[rec.image_id] = rec
    return out


# ---------------------------------------------------------------------------
# speech-to-text clients


class SttClient(Protocol):
    def transcribe(self, audio_ref: str, mode: str) -> list[str]:
        """Token sequence for one audio file; raises SttError on failure."""
        ...


class MockSttClient:
    """Deterministic client backed by a fixture map.

    Fixture format: JSONL lines {"audio": filename, "tokens": [...]}.
    """

    def __init__(self, fixture_path: Path | str):
        self._tokens: dict[str, list[str]] = {}
        with open(fixture_path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    audio, tokens = obj["audio"], obj["tokens"]
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise SchemaError(
                        f"fixture line {lineno}: expected "
                        f'{{"audio": ..., "tokens": [...]}}: {e}') from None
                self._tokens[audio] = [str(t) for t in tokens]

    def transcribe(self, audio_ref: str, mode: str) -> list[str]:
        name = Path(audio_ref).name
        if name not in self._tokens:
            raise SttError(f"no fixture entry for audio file {name!r}")
        return list(self._tokens[name])


class NoisySttClient:
    """Wraps a client and substitutes transcript characters at a fixed rate.

    Models an imperfect speech recognizer: each alphanumeric character
    of each token is replaced, with probability `rate`, by a different
    character from the recognizer charset. Corruption is deterministic
    per audio file (seeded by the file name), so a run is reproducible
    regardless of transcription order. Non-alphanumeric characters are
    left alone. In char mode a substitution inside a multi-character
    token (a digit name or the separator) can yield an invalid token;
    annotate_audio then logs and skips that file, as with any
    recognizer failure.
    """

    def __init__(self, inner: SttClient, rate: float = 0.05, seed: int = 0):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"substitution rate must be in [0, 1], got {rate}")
        self.inner = inner
        self.rate = rate
        self.seed = seed

    def transcribe(self, audio_ref: str, mode: str) -> list[str]:
        tokens = self.inner.transcribe(audio_ref, mode)
        rng = Rng(derive_seed(self.seed, "stt-noise", Path(audio_ref).name))
        noisy = []
        for token in tokens:
            chars = []
            for ch in token:
                up = ch.upper()
                if up in CHARS and rng.uniform() < self.rate:
                    shift = 1 + rng.randint(len(CHARS) - 1)
                    ch = CHARS[(CHARS.index(up) + shift) % len(CHARS)]
                chars.append(ch)
            noisy.append("".join(chars))
        return noisy


class RemoteSttClient:
    """POSTs base64 audio to an HTTP endpoint returning {"tokens": [...]}."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def transcribe(self, audio_ref: str, mode: str) -> list[str]:
        payload = json.dumps({
            "audio": base64.b64encode(Path(audio_ref).read_bytes()).decode(),
            "mode": mode,
        }).encode()
        req = urllib.request.Request(
            self.endpoint, data=payload,
            headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.loads(resp.read())
        except (OSError, json.JSONDecodeError) as e:
            raise SttError(f"remote STT failed for {audio_ref}: {e}") from e
        if not isinstance(body, dict) or "tokens" not in body:
            raise SttError(f"remote STT returned no tokens for {audio_ref}")
        return [str(t) for t in body["tokens"]]


def annotate_audio(audio_dir: Path | str, mode: str, client: SttClient,
                   out_path: Path | str, now=utc_now_iso) -> int:
    """Transcribe every audio file in a directory into annotation records.

    File stems name the images. Per-file failures are logged and skipped;
    zero successes is an overall failure. Returns the record count.
    """
    if mode not in ("word", "char"):
        raise ValueError(f"mode must be 'word' or 'char', got {mode!r}")
    files = sorted(p for p in Path(audio_dir).iterdir() if p.is_file())
    if not files:
        raise AnnotationError(f"no audio files in {audio_dir}")
    count = 0
    first_error = None
    for path in files:
        try:
            tokens = client.transcribe(str(path), mode)
            texts = assemble_transcript(tokens, mode)
            if not texts:
                raise TokenError("transcript produced no usable texts")
            record = AnnotationRecord(image_id=path.stem, texts=texts,
                                      source=f"audio-{mode}",
                                      created_at=now())
        except (SttError, TokenError, ValueError, SchemaError) as e:
            logger.warning("skipping %s: %s", path.name, e)
            first_error = first_error or f"{path.name}: {e}"
            continue
        append_record(out_path, record)
        count += 1
    if count == 0:
        raise AnnotationError(
            f"all {len(files)} audio files failed; first error: {first_error}")
    return count
