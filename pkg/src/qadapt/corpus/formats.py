"""Dataset loaders: native JSON plus import-only adapters for SQuAD v1.1,
BioASQ (factoid questions) and QUASAR-T.

QUASAR-T is read as JSON lines, one question per line, with the contexts
merged in: ``{"uid", "question", "answer", "contexts": [[score, text], ...]}``
(plain strings are accepted in ``contexts`` as well).
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .dataset import FormatError, Paragraph, QADataset, QAExample, from_native
from .text import tokenize

FORMATS = ("native", "squad_v1", "bioasq_factoid", "quasar_t")


def _byte_offset(text: str, char_pos: int) -> int:
    return len(text[:char_pos].encode("utf-8"))


def _read(path: Path) -> str:
    try:
        raw = path.read_bytes()
    except OSError as err:
        raise FormatError(path, None, f"cannot read file: {err.strerror or err}") from None
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as err:
        raise FormatError(path, err.start, "invalid UTF-8") from None


def _parse_json(path: Path, text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise FormatError(path, _byte_offset(text, err.pos), err.msg) from None


def _array_offsets(text: str, key: str) -> list[int]:
    """Byte offsets of the elements of the first ``"key": [...]`` array."""
    m = re.search(r'"%s"\s*:\s*\[' % re.escape(key), text)
    if not m:
        return []
    dec = json.JSONDecoder()
    pos, out = m.end(), []
    while True:
        while pos < len(text) and text[pos] in " \t\r\n,":
            pos += 1
        if pos >= len(text) or text[pos] == "]":
            return out
        out.append(_byte_offset(text, pos))
        try:
            _, pos = dec.raw_decode(text, pos)
        except json.JSONDecodeError:
            return out


def load_dataset(path, format: str = "native", split: str | None = None) -> QADataset:  # noqa: A002
    """Read ``path`` in the declared format and normalize it to a QADataset.

    Raises FormatError (with byte offset when known) on any parse failure;
    no partial dataset is returned.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown dataset format {format!r}; expected one of {', '.join(FORMATS)}")
    path = Path(path)
    text = _read(path)
    loader = {"native": _load_native, "squad_v1": _load_squad,
              "bioasq_factoid": _load_bioasq, "quasar_t": _load_quasar}[format]
    ds = loader(path, text)
    if split is not None:
        ds.split = split
    return ds


def _load_native(path, text):
    doc = _parse_json(path, text)
    return from_native(doc, path, _array_offsets(text, "questions"))


def _load_squad(path, text):
    doc = _parse_json(path, text)
    offsets = _array_offsets(text, "data")
    if not isinstance(doc, dict) or not isinstance(doc.get("data"), list):
        raise FormatError(path, None, "missing 'data' list")
    examples = []
    for ai, article in enumerate(doc["data"]):
        try:
            for pi, para in enumerate(article["paragraphs"]):
                context = tokenize(str(para["context"]))
                for qa in para["qas"]:
                    answers = list(dict.fromkeys(str(a["text"]) for a in qa["answers"]))
                    pid = f"{qa['id']}_p{pi}"
                    examples.append(QAExample(str(qa["id"]), tokenize(str(qa["question"])), answers,
                                              [Paragraph(pid, context)]))
        except (KeyError, TypeError) as err:
            raise FormatError(path, offsets[ai] if ai < len(offsets) else None,
                              f"article {ai}: missing or malformed field {err}") from None
    try:
        return QADataset("train", examples, f"squad_v1:{path.name}")
    except ValueError as err:
        raise FormatError(path, None, str(err)) from None


def _flatten_answers(exact) -> list[str]:
    out = []
    for item in exact if isinstance(exact, list) else [exact]:
        if isinstance(item, list):
            out.extend(_flatten_answers(item))
        else:
            out.append(str(item))
    return list(dict.fromkeys(a for a in out if a.strip()))


def _load_bioasq(path, text):
    doc = _parse_json(path, text)
    offsets = _array_offsets(text, "questions")
    if not isinstance(doc, dict) or not isinstance(doc.get("questions"), list):
        raise FormatError(path, None, "missing 'questions' list")
    examples = []
    for qi, q in enumerate(doc["questions"]):
        try:
            if q.get("type") != "factoid":
                continue
            qid = str(q["id"])
            paragraphs = [Paragraph(f"{qid}_s{si}", tokenize(str(s["text"])))
                          for si, s in enumerate(q.get("snippets", []))]
            examples.append(QAExample(qid, tokenize(str(q["body"])),
                                      _flatten_answers(q.get("exact_answer", [])), paragraphs))
        except (KeyError, TypeError, AttributeError) as err:
            raise FormatError(path, offsets[qi] if qi < len(offsets) else None,
                              f"question {qi}: missing or malformed field {err}") from None
    try:
        return QADataset("train", examples, f"bioasq_factoid:{path.name}")
    except ValueError as err:
        raise FormatError(path, None, str(err)) from None


def _load_quasar(path, text):
    examples = []
    offset = 0
    dec = json.JSONDecoder()
    for lineno, line in enumerate(text.splitlines(keepends=True)):
        start = offset
        offset += len(line.encode("utf-8"))
        if not line.strip():
            continue
        try:
            rec = dec.decode(line)
        except json.JSONDecodeError as err:
            raise FormatError(path, start + _byte_offset(line, err.pos), err.msg) from None
        try:
            uid = str(rec["uid"])
            paragraphs = []
            for ci, ctx in enumerate(rec.get("contexts", [])):
                body = ctx[1] if isinstance(ctx, list) else ctx
                paragraphs.append(Paragraph(f"{uid}_c{ci}", tokenize(str(body))))
            answers = rec["answer"]
            answers = [str(a) for a in answers] if isinstance(answers, list) else [str(answers)]
            examples.append(QAExample(uid, tokenize(str(rec["question"])), answers, paragraphs))
        except (KeyError, TypeError, IndexError) as err:
            raise FormatError(path, start, f"line {lineno + 1}: missing or malformed field {err}") from None
    try:
        return QADataset("train", examples, f"quasar_t:{path.name}")
    except ValueError as err:
        raise FormatError(path, None, str(err)) from None
