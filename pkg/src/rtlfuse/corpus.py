"""Corpus assembly: word-level vocab, tokenizers, summaries, JSONL dataset.

Summaries come from an HTTP text-generation service when configured and from
a deterministic rule-based template otherwise, so the whole pipeline can run
hermetically.
"""

from __future__ import annotations

import json
import os
import re
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .cdfg import parse_and_elaborate
from .cones import Cone, SubCircuitBundle, split_design
from .errors import HttpError, IoError, MalformedResponse, SummarizerTimeout

CLS, MASK, PAD, SEP, UNK = "[CLS]", "[MASK]", "[PAD]", "[SEP]", "[UNK]"
SPECIAL_TOKENS = (CLS, MASK, PAD, SEP, UNK)
CLS_ID, MASK_ID, PAD_ID, SEP_ID, UNK_ID = range(5)

_WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+|[^\sA-Za-z0-9_]")


def split_words(text: str) -> list[str]:
    """Word-level split on whitespace, punctuation, and identifier boundaries."""
    return _WORD_RE.findall(text)


@dataclass
class Vocab:
    token_to_id: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for i, tok in enumerate(SPECIAL_TOKENS):
            assert self.token_to_id.get(tok, i) == i
            self.token_to_id.setdefault(tok, i)
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"tokens": self.token_to_id}, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise IoError(str(exc)) from exc
        return cls(dict(data["tokens"]))


def build_vocab_from_texts(texts, min_count: int = 1) -> Vocab:
    counts: Counter = Counter()
    for text in texts:
        counts.update(split_words(text))
    kept = [(tok, c) for tok, c in counts.items()
            if c >= min_count and tok not in SPECIAL_TOKENS]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    mapping = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
    for i, (tok, _) in enumerate(kept):
        mapping[tok] = len(SPECIAL_TOKENS) + i
    return Vocab(mapping)


def build_vocab(corpus_path, min_count: int = 1) -> Vocab:
    """Vocabulary over the code and summary text of a JSONL corpus."""
    texts = []
    for b in read_corpus(corpus_path):
        texts.append(b.code)
        if b.summary:
            texts.append(b.summary)
    return build_vocab_from_texts(texts, min_count)


def tokenize(text: str, vocab: Vocab, max_len: int = 1024) -> list[int]:
    """[CLS]-prefixed ids, truncated to max_len; never emits [MASK]."""
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    ids = [CLS_ID]
    for tok in split_words(text):
        tid = vocab.id(tok)
        ids.append(UNK_ID if tid == MASK_ID else tid)
        if len(ids) >= max_len:
            break
    return ids


def detokenize(ids, vocab: Vocab) -> str:
    words = [vocab.id_to_token.get(int(i), UNK) for i in ids]
    return " ".join(w for w in words if w not in (CLS, PAD, SEP))


# --- summaries -------------------------------------------------------------------

PROMPT_TEMPLATE = (
    "Summarize this RTL sub-circuit in two sections. "
    "Functionality: what value does the register capture each clock cycle? "
    "Implementation details: operators, bit widths, and control structure."
)


@dataclass
class SummaryRequest:
    code: str
    template_id: str = "default"
    max_tokens: int = 128  # summary length cap, configurable

    def prompt(self) -> str:
        return PROMPT_TEMPLATE


def _histogram_text(counts: Counter) -> str:
    parts = [f"{c} {op}" for op, c in
             sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]
    return ", ".join(parts)


def offline_summary(cone: Cone) -> str:
    """Deterministic template over the cone graph: root register, boundary
    signals, operator histogram, and conditional structure."""
    g = cone.graph
    root_name = cone.root_name or f"n{cone.root}"
    kind = "Output" if cone.is_output_cone else "Register"
    ins = sorted(g.node(b).name or f"n{b}" for b in cone.boundary
                 if g.node(b).op == "INPUT")
    regs = sorted(g.node(b).name or f"n{b}" for b in cone.boundary
                  if g.node(b).op in ("REG", "DFF"))
    counts = Counter(g.node(m).op for m in cone.members)

    if len(cone.members) == 1 and regs == [] and ins:
        only = g.node(next(iter(cone.members)))
        if only.op not in ("CONST", "MUX"):
            operands = [g.node(s).name or f"n{s}" for s in g.operands(only.id)]
            return (f"{kind} {root_name} updates with the {only.op} of "
                    f"inputs {', '.join(operands)}.")

    sources = []
    if ins:
        sources.append(f"input{'s' if len(ins) > 1 else ''} {', '.join(ins)}")
    if regs:
        sources.append(f"register{'s' if len(regs) > 1 else ''} {', '.join(regs)}")
    src_text = " and ".join(sources) if sources else "constants only"
    sentences = [f"{kind} {root_name} updates from {src_text}."]
    if counts:
        total = sum(counts.values())
        sentences.append(
            f"The update logic uses {total} operator{'s' if total > 1 else ''}: "
            f"{_histogram_text(counts)}.")
    else:
        sentences.append("The update is a direct connection with no combinational logic.")
    muxes = counts.get("MUX", 0) + counts.get("MUX2", 0)
    if muxes:
        sentences.append(
            f"Conditional structure selects among {muxes} "
            f"multiplexed path{'s' if muxes > 1 else ''}.")
    return " ".join(sentences)


def _cone_from_code(code: str) -> Cone:
    graph = parse_and_elaborate(code)
    cones = split_design(graph, include_outputs=True)
    if not cones:
        raise MalformedResponse("sub-circuit code contains no register or output")
    return cones[0]


@dataclass
class SummarizerClient:
    """Minimal JSON-over-HTTP client: POST {prompt, input, max_tokens}."""

    url: str
    api_key: str | None = None
    timeout: float = 10.0
    max_retries: int = 3
    backoff: float = 0.25
    max_in_flight: int = 4

    @classmethod
    def from_env(cls) -> "SummarizerClient | None":
        url = os.environ.get("SUMMARIZER_URL")
        if not url:
            return None
        return cls(url=url, api_key=os.environ.get("SUMMARIZER_KEY"))

    def generate(self, prompt: str, text: str, max_tokens: int) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"prompt": prompt, "input": text, "max_tokens": max_tokens}
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = requests.post(self.url, json=payload, headers=headers,
                                     timeout=self.timeout)
            except requests.Timeout:
                last_error = SummarizerTimeout(self.url)
                continue
            except requests.RequestException as exc:
                last_error = HttpError(0, str(exc))
                continue
            if resp.status_code != 200:
                last_error = HttpError(resp.status_code)
                continue
            try:
                body = resp.json()
            except ValueError:
                last_error = MalformedResponse("response is not JSON")
                continue
            if not isinstance(body, dict) or "text" not in body:
                last_error = MalformedResponse("response lacks a 'text' field")
                continue
            return str(body["text"])
        assert last_error is not None
        raise last_error


def summarize(req: SummaryRequest, client: SummarizerClient | None = None) -> str:
    """Client mode posts the request; offline mode derives the summary from
    the cone graph of the request's code."""
    if client is None:
        return offline_summary(_cone_from_code(req.code))
    return client.generate(req.prompt(), req.code, req.max_tokens)


def summarize_bundles(bundles: list[SubCircuitBundle],
                      client: SummarizerClient | None = None,
                      max_tokens: int = 128) -> None:
    """Fill bundle.summary in place. Client requests run with bounded
    concurrency; offline summaries come straight from each bundle's cone."""
    if client is None:
        for b in bundles:
            b.summary = offline_summary(b.rtl_graph)
        return
    reqs = [SummaryRequest(b.code, max_tokens=max_tokens) for b in bundles]
    with ThreadPoolExecutor(max_workers=client.max_in_flight) as pool:
        results = list(pool.map(lambda r: summarize(r, client), reqs))
    for b, s in zip(bundles, results):
        b.summary = s


# --- JSONL corpus ------------------------------------------------------------------

def write_corpus(path, bundles) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in bundles:
            fh.write(b.to_json())
            fh.write("\n")


def append_corpus(path, bundles) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for b in bundles:
            fh.write(b.to_json())
            fh.write("\n")


def read_corpus(path) -> list[SubCircuitBundle]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return [SubCircuitBundle.from_json(line)
                    for line in fh if line.strip()]
    except OSError as exc:
        raise IoError(str(exc)) from exc
