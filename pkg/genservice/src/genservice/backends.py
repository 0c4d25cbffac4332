"""Generation and embedding backends.

The stub pair is pure arithmetic on the request text: no model files, no
randomness, no state. Two identical requests produce byte-identical
responses, which is what the client test suites key on. The transformer
pair is the production path and loads lazily so the stub never pays the
import cost.
"""

from __future__ import annotations

import hashlib

STUB_TAG = "stub"
STUB_DIM = 17  # 16 hash lanes plus a constant bias lane
_STUB_HEAD_WORDS = 10


class StubGenerator:
    """Echoes the first ten whitespace-separated words of the context.

    max_new_tokens is accepted for interface parity and ignored; the
    fixed head keeps the output a deterministic function of the context
    alone.
    """

    tag = STUB_TAG

    def generate(self, question: str, context: str, max_new_tokens: int) -> str:
        return " ".join(context.split()[:_STUB_HEAD_WORDS])


def _token_lanes(token: str) -> list[float]:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return [b / 255.0 - 0.5 for b in digest[:STUB_DIM - 1]]


class StubEmbedder:
    """Hash-derived sentence vectors.

    Each token maps to the first sixteen bytes of its sha256 digest,
    centered to [-0.5, 0.5]; a text is the per-lane mean over its tokens.
    The final lane is a constant 1.0 so no text, not even the empty
    string, embeds to the zero vector.
    """

    tag = STUB_TAG
    dim = STUB_DIM

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [self._one(text) for text in texts]

    def _one(self, text: str) -> list[float]:
        tokens = text.split()
        if not tokens:
            return [0.0] * (STUB_DIM - 1) + [1.0]
        lanes = [_token_lanes(t) for t in tokens]
        mean = [sum(col) / len(tokens) for col in zip(*lanes)]
        return mean + [1.0]


class TransformerGenerator:
    """Seq2seq generation with greedy decoding.

    Greedy keeps repeated requests reproducible, matching the stub's
    contract. Imports stay inside __init__ so stub-only deployments do
    not need torch.
    """

    def __init__(self, model_name: str):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(model_name)
        self._model = AutoModelForSeq2SeqLM.from_pretrained(model_name)
        self._model.eval()
        self.tag = model_name

    def generate(self, question: str, context: str, max_new_tokens: int) -> str:
        prompt = f"question: {question} context: {context}"
        inputs = self._tokenizer(
            prompt, return_tensors="pt", truncation=True, max_length=512
        )
        output = self._model.generate(
            **inputs,
            max_new_tokens=max_new_tokens,
            do_sample=False,
            num_beams=1,
        )
        return self._tokenizer.decode(output[0], skip_special_tokens=True)


class SentenceEmbedder:
    def __init__(self, model_name: str):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self.tag = model_name

    def embed(self, texts: list[str]) -> list[list[float]]:
        vectors = self._model.encode(texts, convert_to_numpy=True)
        return [[float(x) for x in row] for row in vectors]


def load_generator(stub: bool, model_name: str):
    """Returns (generator, reason). reason is set when generator is None."""
    if stub:
        return StubGenerator(), None
    if not model_name:
        return None, "no generator model configured"
    try:
        return TransformerGenerator(model_name), None
    except Exception as exc:
        return None, f"generator model {model_name!r} failed to load: {exc}"


def load_embedder(stub: bool, model_name: str):
    if stub:
        return StubEmbedder(), None
    if not model_name:
        return None, "no embedding model configured"
    try:
        return SentenceEmbedder(model_name), None
    except Exception as exc:
        return None, f"embedding model {model_name!r} failed to load: {exc}"
