"""Mining balanced positive/negative trigger datasets from annotated corpora.

Input corpora are already tokenized, POS-tagged and head-annotated (three
tab-separated columns per token line). Positives are windows around the
governor of a target adverb, with the adverb removed and a ``@@@@`` marker
inserted before the governor. Negatives reuse the same governor surface forms
in adverb-free sentences so the head word alone cannot give the class away.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field

from .config import ExtractionConfig
from .errors import ParseError, UsageError
from .rng import Rng

MARKER = "@@@@"


@dataclass
class AnnotatedSentence:
    tokens: list
    pos: list
    head: list  # 0-based governor index per token, -1 for root/unknown


@dataclass
class Document:
    doc_id: str
    section_id: str
    sentences: list

    def flat(self):
        """Document-level token/pos streams plus (start, end) bounds per
        sentence; the backward window may cross sentence boundaries but
        never leaves the document."""
        tokens, pos, bounds = [], [], []
        for sent in self.sentences:
            start = len(tokens)
            tokens.extend(sent.tokens)
            pos.extend(sent.pos)
            bounds.append((start, len(tokens)))
        return tokens, pos, bounds


@dataclass
class Occurrence:
    doc_id: str
    sent_index: int
    adverb: str
    adverb_index: int
    governor_index: int
    governor: str
    governor_pos: str


@dataclass
class Sample:
    label: str        # adverb string, or "none" for negatives
    tokens: list
    pos: list
    section: str = ""


@dataclass
class DatasetSplit:
    train: list
    dev: list
    test: list

    def counts(self):
        def pn(samples):
            p = sum(1 for s in samples if s.label != "none")
            return {"positive": p, "negative": len(samples) - p, "total": len(samples)}
        return {"train": pn(self.train), "dev": pn(self.dev), "test": pn(self.test)}


@dataclass
class AdverbStats:
    positives: int = 0
    negatives: int = 0
    unmatched_governors: int = 0
    filtered_too: int = 0
    skipped_residual_adverb: int = 0
    unresolved_governors: int = 0


@dataclass
class ExtractionStats:
    per_adverb: dict = field(default_factory=dict)

    def for_adverb(self, adverb: str) -> AdverbStats:
        return self.per_adverb.setdefault(adverb, AdverbStats())

    def to_dict(self) -> dict:
        return {
            adverb: vars(self.per_adverb[adverb]).copy()
            for adverb in sorted(self.per_adverb)
        }


# ---------------------------------------------------------------------------
# parsing


def parse_corpus(stream, fmt: str = "tsv") -> list:
    """Parse the three-column corpus format into Documents.

    Lines: ``#doc <doc_id> <section_id>`` opens a document; token lines are
    ``token<TAB>pos<TAB>head_index``; a blank line closes the sentence.
    """
    if fmt != "tsv":
        raise UsageError(f"unknown corpus format {fmt!r}")
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = [line.rstrip("\n") for line in stream]

    docs: list[Document] = []
    cur_doc: Document | None = None
    cur_tokens: list = []
    cur_pos: list = []
    cur_head: list = []

    def close_sentence(lineno):
        nonlocal cur_tokens, cur_pos, cur_head
        if not cur_tokens:
            return
        for h in cur_head:
            if not -1 <= h < len(cur_tokens):
                raise ParseError(
                    f"head index {h} out of range for sentence of length {len(cur_tokens)}",
                    line=lineno)
        cur_doc.sentences.append(AnnotatedSentence(cur_tokens, cur_pos, cur_head))
        cur_tokens, cur_pos, cur_head = [], [], []

    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#doc"):
            close_sentence(lineno)
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"bad document header {line!r}", line=lineno)
            cur_doc = Document(doc_id=parts[1], section_id=parts[2], sentences=[])
            docs.append(cur_doc)
            continue
        if not line.strip():
            close_sentence(lineno)
            continue
        if cur_doc is None:
            raise ParseError("token line before any #doc header", line=lineno)
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(
                f"expected 3 tab-separated fields, got {len(fields)}", line=lineno)
        token, pos, head = fields
        if not token or not pos:
            raise ParseError("empty token or POS field", line=lineno)
        try:
            head_idx = int(head)
        except ValueError:
            raise ParseError(f"head index {head!r} is not an integer", line=lineno) from None
        cur_tokens.append(token)
        cur_pos.append(pos)
        cur_head.append(head_idx)
    close_sentence(len(lines))
    return docs


# ---------------------------------------------------------------------------
# occurrence scanning


def resolve_governor(sentence: AnnotatedSentence, adverb_index: int):
    """Head annotation wins; otherwise fall back to the nearest verb
    (POS starting with VB), preferring the left. None if unresolvable."""
    head = sentence.head[adverb_index]
    if head >= 0 and head != adverb_index:
        return head
    n = len(sentence.tokens)
    for dist in range(1, n):
        for idx in (adverb_index - dist, adverb_index + dist):
            if 0 <= idx < n and sentence.pos[idx].startswith("VB"):
                return idx
    return None


def find_occurrences(doc: Document, cfg: ExtractionConfig, stats: ExtractionStats | None = None) -> list:
    targets = set(cfg.adverbs)
    occurrences = []
    for sent_index, sent in enumerate(doc.sentences):
        for i, token in enumerate(sent.tokens):
            adverb = token.lower()
            if adverb not in targets:
                continue
            gov = resolve_governor(sent, i)
            if gov is None:
                if stats is not None:
                    stats.for_adverb(adverb).unresolved_governors += 1
                continue
            occurrences.append(Occurrence(
                doc_id=doc.doc_id,
                sent_index=sent_index,
                adverb=adverb,
                adverb_index=i,
                governor_index=gov,
                governor=sent.tokens[gov],
                governor_pos=sent.pos[gov],
            ))
    return occurrences


def filter_too(occ: Occurrence) -> bool:
    """False iff this is the excess-quantity sense of "too" (governor tagged
    JJ or RB); other adverbs are always kept."""
    if occ.adverb != "too":
        return True
    return occ.governor_pos not in ("JJ", "RB")


# ---------------------------------------------------------------------------
# sample building


def truncate_sample(sample: Sample, max_len: int = 60) -> Sample:
    """Drop oldest context first when over length; if that would drop the
    marker, drop from the tail instead. The marker always survives."""
    n = len(sample.tokens)
    if n <= max_len:
        return sample
    marker_at = sample.tokens.index(MARKER)
    excess = n - max_len
    if marker_at >= excess:
        tokens = sample.tokens[excess:]
        pos = sample.pos[excess:]
    else:
        tokens = sample.tokens[:max_len]
        pos = sample.pos[:max_len]
    return Sample(label=sample.label, tokens=tokens, pos=pos, section=sample.section)


def _window(doc: Document, sent_index: int, pivot_index: int,
            cfg: ExtractionConfig, drop_global: int | None = None):
    tokens, pos, bounds = doc.flat()
    sent_start, sent_end = bounds[sent_index]
    g = sent_start + pivot_index
    start = max(0, g - cfg.window_before)
    prefix = [i for i in range(start, g) if i != drop_global]
    tail = [i for i in range(g + 1, sent_end) if i != drop_global]
    out_tokens = [tokens[i] for i in prefix] + [MARKER, tokens[g]] + [tokens[i] for i in tail]
    out_pos = [pos[i] for i in prefix] + [MARKER, pos[g]] + [pos[i] for i in tail]
    return out_tokens, out_pos


def extract_positive(doc: Document, occ: Occurrence, cfg: ExtractionConfig) -> Sample | None:
    """Window around the governor with the triggering adverb deleted.

    Returns None when another target adverb survives in the window (such a
    sample would leak the label); callers count these."""
    _, _, bounds = doc.flat()
    sent_start, _ = bounds[occ.sent_index]
    drop = sent_start + occ.adverb_index
    tokens, pos = _window(doc, occ.sent_index, occ.governor_index, cfg, drop_global=drop)
    targets = set(cfg.adverbs)
    if any(t.lower() in targets for t in tokens):
        return None
    sample = Sample(label=occ.adverb, tokens=tokens, pos=pos, section=doc.section_id)
    return truncate_sample(sample, cfg.max_len)


def extract_negatives(docs: list, occurrences: list, cfg: ExtractionConfig,
                      rng: Rng, stats: ExtractionStats | None = None) -> list:
    """One negative per positive occurrence, pivoting on the same governor
    surface form in an adverb-free sentence. Documents are scanned in
    rng-shuffled order, each from an rng-chosen sentence offset, to keep
    position-related confounds out of the negative class.

    Returns (adverb_group, Sample) pairs so negatives stay attached to the
    per-adverb dataset their positive came from.
    """
    targets = set(cfg.adverbs)
    demand: dict[str, deque] = {}
    for occ in occurrences:
        demand.setdefault(occ.governor, deque()).append(occ.adverb)
    remaining = sum(len(q) for q in demand.values())

    results = []
    doc_order = rng.shuffled(list(range(len(docs))))
    for doc_idx in doc_order:
        if remaining == 0:
            break
        doc = docs[doc_idx]
        n_sent = len(doc.sentences)
        if n_sent == 0:
            continue
        offset = rng.integers(0, n_sent)
        for k in range(n_sent):
            if remaining == 0:
                break
            sent_index = (offset + k) % n_sent
            sent = doc.sentences[sent_index]
            if any(t.lower() in targets for t in sent.tokens):
                continue
            for i, token in enumerate(sent.tokens):
                queue = demand.get(token)
                if not queue:
                    continue
                tokens, pos = _window(doc, sent_index, i, cfg)
                if cfg.strict_negative_window and any(t.lower() in targets for t in tokens):
                    continue
                sample = truncate_sample(
                    Sample(label="none", tokens=tokens, pos=pos, section=doc.section_id),
                    cfg.max_len)
                adverb_group = queue.popleft()
                results.append((adverb_group, sample))
                remaining -= 1
                if remaining == 0:
                    break

    if stats is not None:
        for queue in demand.values():
            for adverb in queue:
                stats.for_adverb(adverb).unmatched_governors += 1
    return results


def validate_sample(sample: Sample, cfg: ExtractionConfig) -> None:
    """Raise UsageError unless the sample satisfies its type invariants."""
    if len(sample.tokens) != len(sample.pos):
        raise UsageError("tokens and pos lengths differ")
    if len(sample.tokens) > cfg.max_len:
        raise UsageError(f"sample longer than {cfg.max_len} tokens")
    if sample.tokens.count(MARKER) != 1:
        raise UsageError("sample must contain exactly one marker token")
    at = sample.tokens.index(MARKER)
    if sample.pos[at] != MARKER or sample.pos.count(MARKER) != 1:
        raise UsageError("POS marker misaligned with token marker")
    if at + 1 >= len(sample.tokens):
        raise UsageError("marker has no following governor token")
    if sample.label != "none":
        targets = set(cfg.adverbs)
        if any(t.lower() in targets for t in sample.tokens):
            raise UsageError("positive sample contains a target adverb")


# ---------------------------------------------------------------------------
# splitting and serialization


def _parse_section_spec(test_sections):
    ranges = []
    singles = set()
    for item in test_sections:
        item = str(item)
        if "-" in item:
            lo_s, _, hi_s = item.partition("-")
            try:
                lo, hi = int(lo_s), int(hi_s)
            except ValueError:
                raise UsageError(f"bad section range {item!r}") from None
            if lo > hi:
                raise UsageError(f"bad section range {item!r}")
            ranges.append((lo, hi))
        elif item.isdigit():
            ranges.append((int(item), int(item)))
        else:
            singles.add(item)
    ranges.sort()
    for (alo, ahi), (blo, bhi) in zip(ranges, ranges[1:]):
        if blo <= ahi:
            raise UsageError(
                f"overlapping test section ranges {alo}-{ahi} and {blo}-{bhi}")
    return ranges, singles


def _is_test_section(section: str, ranges, singles) -> bool:
    if section in singles:
        return True
    try:
        v = int(section)
    except ValueError:
        return False
    return any(lo <= v <= hi for lo, hi in ranges)


def split_dataset(samples: list, cfg: ExtractionConfig, rng: Rng) -> DatasetSplit:
    """Test split by corpus section; remainder shuffled and cut into
    dev_fraction / rest."""
    ranges, singles = _parse_section_spec(cfg.test_sections)
    test = [s for s in samples if _is_test_section(s.section, ranges, singles)]
    rest = [s for s in samples if not _is_test_section(s.section, ranges, singles)]
    rest = rng.shuffled(rest)
    n_dev = int(len(rest) * cfg.dev_fraction)
    return DatasetSplit(train=rest[n_dev:], dev=rest[:n_dev], test=test)


def write_samples(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            record = {"label": s.label, "tokens": s.tokens, "pos": s.pos,
                      "section": s.section}
            f.write(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
            f.write("\n")


def read_samples(path) -> list:
    samples = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON ({e.msg})", line=lineno) from None
            for key in ("label", "tokens", "pos", "section"):
                if key not in record:
                    raise ParseError(f"missing field {key!r}", line=lineno)
            if len(record["tokens"]) != len(record["pos"]):
                raise ParseError("tokens and pos lengths differ", line=lineno)
            samples.append(Sample(label=record["label"], tokens=record["tokens"],
                                  pos=record["pos"], section=record["section"]))
    return samples


# ---------------------------------------------------------------------------
# orchestration


def run_extraction(docs: list, cfg: ExtractionConfig, rng: Rng):
    """Full pipeline: scan, filter, extract positives and negatives, split.

    Returns (datasets, stats) where datasets maps each adverb plus "all"
    to a DatasetSplit.
    """
    stats = ExtractionStats()
    for adverb in cfg.adverbs:
        stats.for_adverb(adverb)

    kept: list[tuple[Occurrence, Sample]] = []
    for doc in docs:
        for occ in find_occurrences(doc, cfg, stats):
            if not filter_too(occ):
                stats.for_adverb(occ.adverb).filtered_too += 1
                continue
            sample = extract_positive(doc, occ, cfg)
            if sample is None:
                stats.for_adverb(occ.adverb).skipped_residual_adverb += 1
                continue
            stats.for_adverb(occ.adverb).positives += 1
            kept.append((occ, sample))

    negatives = extract_negatives(docs, [occ for occ, _ in kept], cfg,
                                  rng.child("negatives"), stats)
    for adverb_group, _ in negatives:
        stats.for_adverb(adverb_group).negatives += 1

    by_adverb: dict[str, list] = {adverb: [] for adverb in cfg.adverbs}
    for occ, sample in kept:
        by_adverb[occ.adverb].append(sample)
    for adverb_group, sample in negatives:
        by_adverb[adverb_group].append(sample)

    datasets = {}
    for adverb in cfg.adverbs:
        datasets[adverb] = split_dataset(by_adverb[adverb], cfg, rng.child(f"split/{adverb}"))
    everything = [s for adverb in cfg.adverbs for s in by_adverb[adverb]]
    datasets["all"] = split_dataset(everything, cfg, rng.child("split/all"))
    return datasets, stats
