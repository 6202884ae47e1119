"""QA dataset containers and the native JSON format."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

from .text import TokenizedText, tokenize

NATIVE_VERSION = 1


class FormatError(ValueError):
    """A file does not parse in its declared format."""

    def __init__(self, path, offset, reason):
        self.path, self.offset, self.reason = str(path), offset, reason
        where = f"byte {offset}" if offset is not None else "unknown offset"
        super().__init__(f"{path}: {where}: {reason}")


@dataclass
class Span:
    start: int
    end: int


@dataclass
class Paragraph:
    id: str
    text: TokenizedText
    relevant: int | None = None
    spans: list[Span] = field(default_factory=list)


@dataclass
class QAExample:
    id: str
    question: TokenizedText
    answers: list[str]
    paragraphs: list[Paragraph]

    @property
    def gold_spans(self) -> list[tuple[str, int, int]]:
        return [(p.id, s.start, s.end) for p in self.paragraphs for s in p.spans]

    def paragraph(self, pid: str) -> Paragraph:
        for p in self.paragraphs:
            if p.id == pid:
                return p
        raise KeyError(pid)


@dataclass
class QADataset:
    split: str
    examples: list[QAExample]
    provenance: str = ""

    def __post_init__(self):
        seen = set()
        for ex in self.examples:
            if ex.id in seen:
                raise ValueError(f"duplicate example id {ex.id!r}")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def by_id(self) -> dict[str, QAExample]:
        return {ex.id: ex for ex in self.examples}

    def gold(self) -> dict[str, list[str]]:
        return {ex.id: list(ex.answers) for ex in self.examples}

    def digest(self) -> str:
        return hashlib.sha256(dumps_native(self).encode("utf-8")).hexdigest()

    @property
    def dataset_id(self) -> str:
        return f"{self.split}@{self.digest()[:16]}"


def to_native(ds: QADataset) -> dict:
    return {
        "version": NATIVE_VERSION,
        "split": ds.split,
        "provenance": ds.provenance,
        "questions": [
            {
                "id": ex.id,
                "question": ex.question.raw,
                "answers": list(ex.answers),
                "paragraphs": [
                    {
                        "id": p.id,
                        "text": p.text.raw,
                        "relevant": p.relevant,
                        "spans": [{"start_token": s.start, "end_token": s.end} for s in p.spans],
                    }
                    for p in ex.paragraphs
                ],
            }
            for ex in ds.examples
        ],
    }


def dumps_native(ds: QADataset) -> str:
    return json.dumps(to_native(ds), ensure_ascii=False, indent=1) + "\n"


def atomic_write(path, data: str | bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, **({} if isinstance(data, bytes) else {"encoding": "utf-8", "newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_native(ds: QADataset, path) -> None:
    atomic_write(path, dumps_native(ds))


def from_native(doc: dict, path="<memory>", offsets=None) -> QADataset:
    """Build a dataset from a parsed native document.

    ``offsets`` optionally maps question index to its byte offset for error
    messages.
    """
    def fail(i, reason):
        off = offsets[i] if offsets is not None and i is not None and i < len(offsets) else None
        raise FormatError(path, off, reason)

    if not isinstance(doc, dict):
        fail(None, "top level is not an object")
    if doc.get("version") != NATIVE_VERSION:
        fail(None, f"unsupported native version {doc.get('version')!r}")
    questions = doc.get("questions")
    if not isinstance(questions, list):
        fail(None, "missing 'questions' list")
    examples = []
    for qi, q in enumerate(questions):
        try:
            paragraphs = []
            for p in q["paragraphs"]:
                rel = p.get("relevant")
                if rel not in (0, 1, None):
                    raise ValueError(f"relevant must be 0, 1 or null, got {rel!r}")
                text = tokenize(str(p["text"]))
                spans = []
                for s in p.get("spans", []):
                    start, end = int(s["start_token"]), int(s["end_token"])
                    if not 0 <= start <= end < len(text):
                        raise ValueError(f"span ({start}, {end}) outside paragraph {p['id']!r}")
                    spans.append(Span(start, end))
                paragraphs.append(Paragraph(str(p["id"]), text, rel, spans))
            answers = q["answers"]
            if not isinstance(answers, list):
                raise ValueError("'answers' is not a list")
            examples.append(QAExample(str(q["id"]), tokenize(str(q["question"])),
                                      [str(a) for a in answers], paragraphs))
        except (KeyError, TypeError, ValueError) as err:
            fail(qi, f"question {qi}: {type(err).__name__}: {err}")
    try:
        return QADataset(str(doc.get("split", "")), examples, str(doc.get("provenance", "")))
    except ValueError as err:
        fail(None, str(err))
