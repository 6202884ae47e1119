"""Seeded synthetic factoid QA corpora.

Each question asks for the object of a (subject, relation) fact. Answer-
bearing paragraphs state that fact among filler facts; distractor
paragraphs talk about the same subject or relation without ever containing
the answer string. Relation phrasing differs between questions and
statements, so a reader has to learn the paraphrases from data.

Domains fix the entity lexicon and the relation inventory. The
``"general"`` and ``"biomed"`` domains share part of both, which is what the
transfer experiments rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..numerics.rng import Rng
from .dataset import Paragraph, QADataset, QAExample
from .text import tokenize
from .transform import annotate_paragraph


@dataclass(frozen=True)
class Relation:
    name: str
    questions: tuple[str, ...]
    statements: tuple[str, ...]


# {s} subject, {a} answer
RELATIONS = {
    "target": Relation("target", (
        "which protein does {s} target ?", "what is the molecular target of {s} ?"), (
        "{s} is known to block {a}", "{a} is blocked by {s}", "{s} binds tightly to {a}")),
    "cause": Relation("cause", (
        "what disease is caused by {s} ?", "which disorder does {s} cause ?"), (
        "{s} leads to {a}", "{a} results from exposure to {s}", "{s} triggers {a}")),
    "treat": Relation("treat", (
        "what is {s} used to treat ?", "which condition does {s} treat ?"), (
        "{s} is prescribed for {a}", "{a} responds well to {s}", "{s} relieves {a}")),
    "locate": Relation("locate", (
        "where is {s} located ?", "in which organ is {s} found ?"), (
        "{s} resides in the {a}", "the {a} contains {s}", "{s} is expressed in the {a}")),
    "produce": Relation("produce", (
        "what does {s} produce ?", "which molecule is made by {s} ?"), (
        "{s} synthesizes {a}", "{a} is secreted by {s}", "{s} releases {a}")),
    "discover": Relation("discover", (
        "who discovered {s} ?", "which scientist first described {s} ?"), (
        "{s} was first reported by {a}", "{a} identified {s}", "{a} isolated {s} decades ago")),
    "encode": Relation("encode", (
        "which gene encodes {s} ?", "what gene codes for {s} ?"), (
        "{s} is the product of {a}", "{a} is translated into {s}", "{a} directs synthesis of {s}")),
    "partner": Relation("partner", (
        "what does {s} interact with ?", "which partner does {s} have ?"), (
        "{s} forms a complex with {a}", "{a} associates with {s}", "{s} couples to {a}")),
    # target-domain phrasings and relations
    "target_b": Relation("target", (
        "which channels does {s} target ?", "what does {s} inhibit ?"), (
        "{s} , known to block {a} ,", "{s} antagonizes {a}", "{a} is a receptor for {s}")),
    "cause_b": Relation("cause", (
        "what is induced by {s} ?", "which disorder does {s} cause ?"), (
        "{s} provokes {a}", "{a} develops after {s}", "{s} leads to {a}")),
    "metabolize": Relation("metabolize", (
        "which enzyme metabolizes {s} ?", "what degrades {s} ?"), (
        "{s} is cleared by {a}", "{a} hydrolyzes {s}", "{a} converts {s} into metabolites")),
    "mutate": Relation("mutate", (
        "which gene is mutated in {s} ?", "mutations in which gene cause {s} ?"), (
        "{s} is linked to variants of {a}", "defects in {a} underlie {s}",
        "{a} mutations are found in {s}")),
}

DOMAINS = {
    "general": {
        "relations": ("target", "cause", "treat", "locate", "produce", "discover", "encode", "partner"),
        "suffixes": ("", "an", "or", "el"),
        "classes": ("system", "factor", "complex", "group"),
        "prefixes": ("new", "old", "major"),
        "lexicon_stream": "lex-general",
        "shared_fraction": 0.0,
    },
    "biomed": {
        "relations": ("target_b", "cause_b", "treat", "locate", "produce", "encode", "metabolize", "mutate"),
        "suffixes": ("ase", "in", "ol", "ide"),
        "classes": ("channels", "receptor", "kinase", "syndrome"),
        "prefixes": ("t-type", "alpha", "beta"),
        "lexicon_stream": "lex-biomed",
        "shared_fraction": 0.3,
    },
}

_ONSETS = "b c d f g h k l m n p r s t v z br cl dr gr pl st tr".split()
_VOWELS = "a e i o u ai ou".split()
_FILLER_PREFIX = ("", "", "", "in vitro , ", "recent studies show that ", "notably , ",
                  "in most patients , ", "according to early reports , ")


@dataclass(frozen=True)
class SynthProfile:
    num_questions: int
    paragraphs_per_question: int
    distractor_rate: float
    vocab_size: int
    domain: str = "general"
    sentences_per_paragraph: int = 3
    name: str = "synth"

    def validate(self) -> None:
        for field_name in ("num_questions", "paragraphs_per_question", "vocab_size",
                           "sentences_per_paragraph"):
            if int(getattr(self, field_name)) < 1:
                raise ValueError(f"profile.{field_name} must be positive")
        if not 0.0 <= self.distractor_rate <= 1.0:
            raise ValueError(f"profile.distractor_rate must lie in [0, 1], got {self.distractor_rate}")
        if self.vocab_size < 8:
            raise ValueError("profile.vocab_size must be at least 8")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")


def squad_like(num_questions: int = 2000, vocab_size: int = 400) -> SynthProfile:
    return SynthProfile(num_questions, 1, 0.0, vocab_size, "general", 3, "squad-like")


def quasar_like(num_questions: int = 200, paragraphs: int = 10, distractor_rate: float = 0.7,
                vocab_size: int = 400) -> SynthProfile:
    return SynthProfile(num_questions, paragraphs, distractor_rate, vocab_size, "general", 2, "quasar-like")


def bioasq_like(num_questions: int = 150, paragraphs: int = 4, distractor_rate: float = 0.3,
                vocab_size: int = 300) -> SynthProfile:
    return SynthProfile(num_questions, paragraphs, distractor_rate, vocab_size, "biomed", 3, "bioasq-like")


def _make_word(rng: Rng, suffix: str) -> str:
    syll = rng.randbelow(2) + 2
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syll)) + suffix


def lexicon(domain: str, size: int) -> list[str]:
    """Entity words of a domain; independent of the corpus seed."""
    info = DOMAINS[domain]
    shared = int(round(info["shared_fraction"] * size))
    words: list[str] = []
    seen: set[str] = set()
    if shared:
        words = lexicon("general", size)[:shared]
        seen = set(words)
    rng = Rng(0).split(f"{info['lexicon_stream']}/{size}")
    reserved = _reserved_words()
    while len(words) < size:
        w = _make_word(rng, rng.choice(info["suffixes"]))
        if w not in seen and w not in reserved:
            seen.add(w)
            words.append(w)
    return words


def _reserved_words() -> set[str]:
    out = set()
    for rel in RELATIONS.values():
        for t in rel.questions + rel.statements:
            out.update(tokenize(t.replace("{s}", "").replace("{a}", "")).tokens)
    for info in DOMAINS.values():
        for key in ("classes", "prefixes"):
            for w in info[key]:
                out.update(tokenize(w).tokens)
    for p in _FILLER_PREFIX:
        out.update(tokenize(p).tokens)
    return out


class _World:
    def __init__(self, profile: SynthProfile):
        info = DOMAINS[profile.domain]
        self.words = lexicon(profile.domain, profile.vocab_size)
        self.relations = [RELATIONS[r] for r in info["relations"]]
        self.classes = info["classes"]
        self.prefixes = info["prefixes"]

    def entity(self, rng: Rng) -> str:
        parts = [rng.choice(self.words)]
        roll = rng.randbelow(4)
        if roll == 1:
            parts.append(rng.choice(self.classes))
        elif roll == 2:
            parts.insert(0, rng.choice(self.prefixes))
        return " ".join(parts)

    def statement(self, rng: Rng, rel: Relation, subject: str, obj: str) -> str:
        body = rng.choice(rel.statements).format(s=subject, a=obj)
        return rng.choice(_FILLER_PREFIX) + body + " ."


def _paragraph_text(rng: Rng, world: _World, subject: str, rel: Relation, answer: str,
                    positive: bool, n_sent: int) -> str:
    sentences = []
    if positive:
        sentences.append(world.statement(rng, rel, subject, answer))
    while len(sentences) < n_sent:
        kind = rng.randbelow(3)
        other = world.entity(rng)
        if kind == 0:  # same subject, other relation
            r2 = rng.choice([r for r in world.relations if r.name != rel.name])
            sentences.append(world.statement(rng, r2, subject, other))
        elif kind == 1:  # same relation, other subject
            s2 = rng.choice(world.words)
            sentences.append(world.statement(rng, rel, s2, other))
        else:
            sentences.append(world.statement(rng, rng.choice(world.relations), rng.choice(world.words), other))
    rng.shuffle(sentences)
    text = " ".join(sentences)
    return text[0].upper() + text[1:]


def synth_generate(seed: int, profile: SynthProfile) -> QADataset:
    """Deterministic synthetic dataset with relevance labels and spans."""
    profile.validate()
    world = _World(profile)
    root = Rng(seed).split(f"synth/{profile.name}/{profile.domain}")
    examples = []
    for qi in range(profile.num_questions):
        rng = root.split(f"q{qi}")
        rel = rng.choice(world.relations)
        subject = rng.choice(world.words)
        answer = world.entity(rng)
        while subject in answer.split():
            answer = world.entity(rng)
        question = rng.choice(rel.questions).format(s=subject)
        n_par = profile.paragraphs_per_question
        positive = [not rng.bernoulli(profile.distractor_rate) for _ in range(n_par)]
        if profile.distractor_rate < 1.0 and not any(positive):
            positive[rng.randbelow(n_par)] = True
        qid = f"{profile.name}-{seed}-{qi}"
        paragraphs = []
        for pj, pos in enumerate(positive):
            while True:
                text = _paragraph_text(rng, world, subject, rel, answer, pos, profile.sentences_per_paragraph)
                para = annotate_paragraph(Paragraph(f"{qid}-p{pj}", tokenize(text)), [answer])
                if bool(para.spans) == pos:
                    break
            paragraphs.append(para)
        examples.append(QAExample(qid, tokenize(question[0].upper() + question[1:]), [answer], paragraphs))
    prov = (f"synth:{profile.name}:domain={profile.domain}:seed={seed}:q={profile.num_questions}:"
            f"p={profile.paragraphs_per_question}:rate={profile.distractor_rate}:vocab={profile.vocab_size}")
    return QADataset("synth", examples, prov)


def split_dataset(ds: QADataset, n_first: int, names=("train", "test")) -> tuple[QADataset, QADataset]:
    a = QADataset(names[0], ds.examples[:n_first], ds.provenance + f"|split:{names[0]}")
    b = QADataset(names[1], ds.examples[n_first:], ds.provenance + f"|split:{names[1]}")
    return a, b
