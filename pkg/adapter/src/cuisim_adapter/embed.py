"""String embedding, the cosine index and candidate retrieval.

The index embeds every (cui, string) pair from the catalog string dump.
For each mention, its isolated and context strings are embedded and the
top-128 strings by cosine similarity are mapped back to CUIs (deduplicated
to the best score per CUI).

Encoders:

- ``sapbert``: the pinned SapBERT checkpoint via transformers (CLS pooling,
  L2 normalization; needs the optional model dependencies and weights).
- ``hashing``: a deterministic character-n-gram hashing encoder.  Exact
  string matches embed to identical unit vectors (cosine exactly 1), which
  makes it a faithful stand-in for fixtures and offline tests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AdapterError

TOP_K = 128
INDEX_VERSION = 1
STRINGS_HEADER_PREFIX = "# cuisim-strings"


def _strings_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_string_dump(path: str | Path) -> tuple[list[tuple[str, str]], str]:
    """Parse the (cui, string) TSV exported by the catalog ingest; returns
    the pairs and the dump's own sha256 digest."""
    pairs: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise AdapterError(f"{path}:{lineno}: expected cui<TAB>string")
            pairs.append((parts[0], parts[1]))
    if not pairs:
        raise AdapterError(f"{path}: no strings to index")
    return pairs, _strings_digest(path)


class HashingEncoder:
    """Character n-gram (3..5) hashing into a fixed-width unit vector."""

    name = "hashing"
    version = "1"
    dim = 384

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            normalized = " ".join(text.casefold().split())
            padded = f" {normalized} "
            for n in (3, 4, 5):
                for i in range(max(0, len(padded) - n + 1)):
                    gram = padded[i:i + n]
                    digest = hashlib.md5(gram.encode("utf-8")).digest()
                    bucket = int.from_bytes(digest[:4], "little") % self.dim
                    sign = 1.0 if digest[4] % 2 == 0 else -1.0
                    out[row, bucket] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class SapBertEncoder:
    """The pinned SapBERT checkpoint (see models.lock): CLS pooling plus
    L2 normalization, the checkpoint's standard retrieval usage."""

    name = "sapbert"
    version = "1"
    model_id = "cambridgeltl/SapBERT-from-PubMedBERT-fulltext"

    def __init__(self, batch_size: int = 64):
        self.batch_size = batch_size
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise AdapterError(
                f"sapbert encoder requires the optional model dependencies: {exc}"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(self.model_id)
            self._model = AutoModel.from_pretrained(self.model_id).eval()
        except Exception as exc:
            raise AdapterError(f"failed to load {self.model_id}: {exc}") from exc
        self._torch = torch

    def encode(self, texts: list[str]) -> np.ndarray:
        torch = self._torch
        chunks = []
        with torch.no_grad():
            for i in range(0, len(texts), self.batch_size):
                batch = self._tokenizer(
                    texts[i:i + self.batch_size],
                    padding=True,
                    truncation=True,
                    max_length=32,
                    return_tensors="pt",
                )
                cls = self._model(**batch).last_hidden_state[:, 0]
                chunks.append(torch.nn.functional.normalize(cls, dim=-1).cpu().numpy())
        return np.concatenate(chunks, axis=0).astype(np.float32)


ENCODERS = {"hashing": HashingEncoder, "sapbert": SapBertEncoder}


def make_encoder(name: str):
    if name not in ENCODERS:
        raise AdapterError(f"unknown encoder {name!r}; expected one of {sorted(ENCODERS)}")
    return ENCODERS[name]()


@dataclass
class EmbeddingIndex:
    cuis: list[str]
    strings: list[str]
    vectors: np.ndarray  # unit rows
    encoder_name: str
    encoder_version: str
    strings_sha256: str

    def retrieve(self, query_vectors: np.ndarray, k: int = TOP_K) -> list[list[dict]]:
        """Per query row: top-k {cui, score} deduplicated to the best score
        per CUI, sorted by descending score then ascending CUI."""
        scores = query_vectors @ self.vectors.T
        np.clip(scores, -1.0, 1.0, out=scores)
        results = []
        for row in scores:
            best: dict[str, float] = {}
            for cui, score in zip(self.cuis, row):
                score = float(score)
                if cui not in best or score > best[cui]:
                    best[cui] = score
            ranked = sorted(best.items(), key=lambda item: (-item[1], item[0]))[:k]
            results.append([{"cui": cui, "score": score} for cui, score in ranked])
        return results


def build_embedding_index(strings_path: str | Path, encoder) -> EmbeddingIndex:
    pairs, digest = read_string_dump(strings_path)
    vectors = encoder.encode([s for _, s in pairs])
    return EmbeddingIndex(
        cuis=[c for c, _ in pairs],
        strings=[s for _, s in pairs],
        vectors=vectors,
        encoder_name=encoder.name,
        encoder_version=encoder.version,
        strings_sha256=digest,
    )


def save_index(index: EmbeddingIndex, path: str | Path) -> None:
    np.savez_compressed(
        path,
        vectors=index.vectors,
        cuis=np.array(index.cuis),
        strings=np.array(index.strings),
        meta=np.array(
            json.dumps(
                {
                    "version": INDEX_VERSION,
                    "encoder": index.encoder_name,
                    "encoder_version": index.encoder_version,
                    "strings_sha256": index.strings_sha256,
                }
            )
        ),
    )


def load_index(path: str | Path) -> EmbeddingIndex:
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise AdapterError(f"cannot read embedding index {path}: {exc}") from exc
    meta = json.loads(str(data["meta"]))
    if meta.get("version") != INDEX_VERSION:
        raise AdapterError(f"unsupported index version {meta.get('version')!r}")
    return EmbeddingIndex(
        cuis=[str(c) for c in data["cuis"]],
        strings=[str(s) for s in data["strings"]],
        vectors=data["vectors"],
        encoder_name=meta["encoder"],
        encoder_version=meta["encoder_version"],
        strings_sha256=meta["strings_sha256"],
    )


def read_mentions(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AdapterError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "report_id" not in record:
                raise AdapterError(f"{path}:{lineno}: mention record needs report_id")
            records.append(record)
    return records


def retrieve_candidates(
    mentions_path: str | Path,
    index: EmbeddingIndex,
    encoder,
    out_path: str | Path,
    k: int = TOP_K,
) -> int:
    """Emit the primary's candidate JSON: every mention record extended with
    independently ranked isolated and context candidate lists."""
    if encoder.name != index.encoder_name or encoder.version != index.encoder_version:
        raise AdapterError(
            f"index was built with encoder {index.encoder_name} v{index.encoder_version}, "
            f"got {encoder.name} v{encoder.version}; refusing to run"
        )
    records = read_mentions(mentions_path)
    texts = []
    for record in records:
        for m in record.get("mentions", []):
            texts.append(str(m["isolated_text"]))
            texts.append(str(m.get("context_text", m["isolated_text"])))
    ranked = (
        index.retrieve(encoder.encode(texts), k=k) if texts else []
    )
    n_mentions = 0
    cursor = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for record in records:
            mentions_out = []
            for m in record.get("mentions", []):
                enriched = dict(m)
                enriched["isolated_candidates"] = ranked[cursor]
                enriched["context_candidates"] = ranked[cursor + 1]
                cursor += 2
                n_mentions += 1
                mentions_out.append(enriched)
            fh.write(
                json.dumps(
                    {"report_id": record["report_id"], "mentions": mentions_out},
                    ensure_ascii=False,
                )
            )
            fh.write("\n")
    meta = {
        "kind": "candidates",
        "encoder": encoder.name,
        "encoder_version": encoder.version,
        "strings_sha256": index.strings_sha256,
        "top_k": k,
        "mentions": n_mentions,
    }
    with open(f"{out_path}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return n_mentions
