"""Dataset schema, supervision construction, splitting, and embedding providers.

One record is a sentence of at most 40 words with a sentence-level embedding
(384-d), per-word embeddings (100-d), per-word gesture-intensity annotations
in [0, 1], and one of eight utterance emotions. Training pairs are produced by
expanding each record into one sample per word, fusing the word embedding with
the embedding of the emotion label.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

SENTENCE_DIM = 384
WORD_DIM = 100
MAX_WORDS = 40

EMOTIONS = (
    "joy",
    "sadness",
    "neutral",
    "anger",
    "contempt",
    "surprise",
    "disgust",
    "fear",
)

# Annotated intensity strictly above this value means "gesture present".
# This is the single place the binarization threshold is defined.
BINARIZATION_THRESHOLD = 0.5


class DatasetError(ValueError):
    """A record, file, or lexicon violates the dataset contract."""


def normalize_emotion(label: str) -> str:
    """Map a raw emotion label to the canonical 8-value set ('happiness' -> 'joy')."""
    label = label.strip().lower()
    if label == "happiness":
        label = "joy"
    if label not in EMOTIONS:
        raise DatasetError(f"unknown emotion label {label!r}; expected one of {EMOTIONS}")
    return label


def binarize(intensity: float) -> int:
    """1 iff the intensity strictly exceeds the 0.5 threshold."""
    if not 0.0 <= intensity <= 1.0:
        raise DatasetError(f"intensity {intensity} outside [0, 1]")
    return 1 if intensity > BINARIZATION_THRESHOLD else 0


def fuse_emotion(e_w: np.ndarray, e_emo: np.ndarray) -> np.ndarray:
    """Elementwise average of a word embedding with the emotion-label embedding."""
    if e_w.shape != (WORD_DIM,) or e_emo.shape != (WORD_DIM,):
        raise DatasetError(
            f"fuse_emotion expects two {WORD_DIM}-d vectors, got {e_w.shape} and {e_emo.shape}"
        )
    return (e_w + e_emo) / 2.0


@dataclass
class Word:
    text: str
    intensity: float
    e_w: np.ndarray  # (100,)


@dataclass
class UtteranceRecord:
    id: str
    emotion: str
    words: list[Word]
    h_s: np.ndarray  # (384,)


@dataclass
class WordSample:
    """One (sentence, word-of-interest) training pair."""

    record_id: str
    index: int
    h_s: np.ndarray  # (384,), shared across the record's samples
    e_n: np.ndarray  # (100,), fused word + emotion embedding
    label: int
    intensity: float


EmotionLexicon = dict  # emotion name -> (100,) embedding of the label word


def validate_lexicon(lexicon: EmotionLexicon) -> None:
    missing = [e for e in EMOTIONS if e not in lexicon]
    if missing:
        raise DatasetError(f"emotion lexicon is missing entries for {missing}")
    for emo, vec in lexicon.items():
        arr = np.asarray(vec, dtype=np.float64)
        if arr.shape != (WORD_DIM,):
            raise DatasetError(f"lexicon entry {emo!r} has shape {arr.shape}, expected ({WORD_DIM},)")


def expand_records(
    records: list[UtteranceRecord], lexicon: EmotionLexicon
) -> list[WordSample]:
    """One WordSample per word per record, in record order then word order."""
    samples: list[WordSample] = []
    for rec in records:
        if rec.emotion not in lexicon:
            raise DatasetError(
                f"record {rec.id!r}: emotion {rec.emotion!r} not present in lexicon"
            )
        e_emo = np.asarray(lexicon[rec.emotion], dtype=np.float64)
        for n, word in enumerate(rec.words):
            samples.append(
                WordSample(
                    record_id=rec.id,
                    index=n,
                    h_s=rec.h_s,
                    e_n=fuse_emotion(word.e_w, e_emo),
                    label=binarize(word.intensity),
                    intensity=word.intensity,
                )
            )
    return samples


def split_80_20(
    records: list[UtteranceRecord], seed: int
) -> tuple[list[UtteranceRecord], list[UtteranceRecord]]:
    """Deterministic record-level 80/20 split; no sentence appears on both sides."""
    if len(records) < 5:
        raise DatasetError(f"need at least 5 records to split, got {len(records)}")
    order = np.random.default_rng(seed).permutation(len(records))
    n_train = math.floor(0.8 * len(records))
    train = [records[i] for i in order[:n_train]]
    test = [records[i] for i in order[n_train:]]
    return train, test


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _parse_record(obj: dict, line_no: int, require_intensity: bool) -> UtteranceRecord:
    def fail(msg: str):
        raise DatasetError(f"line {line_no}: {msg}")

    for key in ("id", "emotion", "h_s", "words"):
        if key not in obj:
            fail(f"missing field {key!r}")
    rec_id = str(obj["id"])
    try:
        emotion = normalize_emotion(str(obj["emotion"]))
    except DatasetError as exc:
        fail(str(exc))
    h_s = np.asarray(obj["h_s"], dtype=np.float64)
    if h_s.shape != (SENTENCE_DIM,):
        fail(f"record {rec_id!r}: h_s has shape {h_s.shape}, expected ({SENTENCE_DIM},)")
    raw_words = obj["words"]
    if not isinstance(raw_words, list) or not raw_words:
        fail(f"record {rec_id!r}: 'words' must be a nonempty list")
    if len(raw_words) > MAX_WORDS:
        fail(
            f"record {rec_id!r} has {len(raw_words)} words; the schema caps sentences at {MAX_WORDS}"
        )
    words = []
    for n, w in enumerate(raw_words):
        if "w" not in w or "e_w" not in w:
            fail(f"record {rec_id!r} word {n}: missing 'w' or 'e_w'")
        if require_intensity and "intensity" not in w:
            fail(f"record {rec_id!r} word {n}: missing 'intensity'")
        intensity = float(w.get("intensity", 0.0))
        if not 0.0 <= intensity <= 1.0:
            fail(f"record {rec_id!r} word {n}: intensity {intensity} outside [0, 1]")
        e_w = np.asarray(w["e_w"], dtype=np.float64)
        if e_w.shape != (WORD_DIM,):
            fail(f"record {rec_id!r} word {n}: e_w has shape {e_w.shape}, expected ({WORD_DIM},)")
        words.append(Word(text=str(w["w"]), intensity=intensity, e_w=e_w))
    return UtteranceRecord(id=rec_id, emotion=emotion, words=words, h_s=h_s)


def load_dataset(path, require_intensity: bool = True) -> list[UtteranceRecord]:
    """Load a JSONL dataset, validating every line; record order == line order."""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"line {line_no}: expected a JSON object")
            records.append(_parse_record(obj, line_no, require_intensity))
    return records


def load_lexicon(path) -> EmotionLexicon:
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise DatasetError("lexicon file must contain a JSON object")
    lexicon = {
        normalize_emotion(k): np.asarray(v, dtype=np.float64) for k, v in raw.items()
    }
    validate_lexicon(lexicon)
    return lexicon


def save_dataset(records: list[UtteranceRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            obj = {
                "id": rec.id,
                "emotion": rec.emotion,
                "h_s": rec.h_s.tolist(),
                "words": [
                    {"w": w.text, "intensity": w.intensity, "e_w": w.e_w.tolist()}
                    for w in rec.words
                ],
            }
            f.write(json.dumps(obj) + "\n")


def save_lexicon(lexicon: EmotionLexicon, path) -> None:
    validate_lexicon(lexicon)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({k: np.asarray(v).tolist() for k, v in lexicon.items()}, f)


# ---------------------------------------------------------------------------
# Synthetic provider
# ---------------------------------------------------------------------------

_WORD_POOL = (
    "robot wave point big small open close happy sad tall wide spin lift drop "
    "push pull shake nod turn reach hold give take show tell move stop go fast "
    "slow heavy light round flat near far loud quiet warm cold bright dark new old"
).split()


def _hashed_rng(seed: int, kind: str, text: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{kind}:{text}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _unit_vector(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def hashed_word_embedding(seed: int, text: str) -> np.ndarray:
    """Deterministic unit-norm pseudo-embedding of a word (same text, same vector)."""
    return _unit_vector(_hashed_rng(seed, "word", text), WORD_DIM)


def hashed_sentence_embedding(seed: int, sentence: str) -> np.ndarray:
    return _unit_vector(_hashed_rng(seed, "sentence", sentence), SENTENCE_DIM)


def synthetic_lexicon(seed: int) -> EmotionLexicon:
    return {emo: hashed_word_embedding(seed, emo) for emo in EMOTIONS}


def synthetic_provider(
    seed: int,
    n_records: int,
    positive_rate: float = 0.15,
    min_words: int = 3,
    max_words: int = MAX_WORDS,
) -> tuple[list[UtteranceRecord], EmotionLexicon]:
    """Deterministic pseudo-dataset standing in for encoder-produced embeddings.

    Word and sentence embeddings are seeded from a hash of their text, so
    repeated text yields identical vectors. Positive (gesture-bearing) words
    are sparse, drawn at ``positive_rate`` to mimic the sparsity of iconic
    annotations.
    """
    if n_records < 1:
        raise DatasetError("n_records must be >= 1")
    if not 1 <= min_words <= max_words <= MAX_WORDS:
        raise DatasetError(f"word-count bounds must satisfy 1 <= min <= max <= {MAX_WORDS}")
    rng = np.random.default_rng(seed)
    records = []
    for r in range(n_records):
        n_words = int(rng.integers(min_words, max_words + 1))
        texts = [ _WORD_POOL[int(rng.integers(len(_WORD_POOL)))] for _ in range(n_words) ]
        sentence = " ".join(texts)
        words = []
        for text in texts:
            if rng.random() < positive_rate:
                intensity = float(rng.uniform(0.501, 1.0))
            else:
                intensity = float(rng.uniform(0.0, 0.5))
            words.append(Word(text=text, intensity=intensity, e_w=hashed_word_embedding(seed, text)))
        records.append(
            UtteranceRecord(
                id=f"synth-{seed}-{r:06d}",
                emotion=EMOTIONS[int(rng.integers(len(EMOTIONS)))],
                words=words,
                h_s=hashed_sentence_embedding(seed, f"{r}:{sentence}"),
            )
        )
    return records, synthetic_lexicon(seed)
