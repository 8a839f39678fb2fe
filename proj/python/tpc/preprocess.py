"""Drives external taggers, parsers and an aligner to build annotation bundles
and resource files in the formats the core reads.

Tool output contracts:
  dependency tools   CoNLL-U for one sentence on stdin (whitespace tokens)
  constituency tools one bracketed tree, "(S (NP (DT the) (NN cat)) ...)"
  aligner            "src tokens ||| tgt tokens" on stdin, Pharaoh "i-j" links
The adapter only formats; it never computes features.
"""

from __future__ import annotations

import json
import logging
import subprocess
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
RAW_LABELS = (
    "Literal",
    "Equivalence",
    "Generalization",
    "Particularization",
    "Modulation",
    "Transposition",
    "Mod+Trans",
)
ROLES = ("src_dependency", "tgt_dependency", "src_constituency", "tgt_constituency", "aligner")
_ROOT_WRAPPERS = ("ROOT", "TOP", "")


class AdapterError(Exception):
    """Base for adapter failures."""


class ToolError(AdapterError):
    def __init__(self, tool: str, message: str, output: str = ""):
        super().__init__(f"{tool}: {message}" + (f"\n--- tool output ---\n{output}" if output else ""))
        self.tool = tool
        self.output = output


class UnmappedTagError(AdapterError):
    def __init__(self, tag: str, tool: str):
        super().__init__(f"tag '{tag}' produced by {tool} has no unified mapping")
        self.tag = tag
        self.tool = tool


class InputFormatError(AdapterError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class ToolProfile:
    name: str
    version: str
    command: tuple[str, ...]
    tagset: str
    mapping: Mapping[str, str] = field(default_factory=dict)

    @property
    def identity(self) -> str:
        return f"{self.name} {self.version}"

    def map_tag(self, tag: str) -> str:
        try:
            return self.mapping[tag]
        except KeyError:
            raise UnmappedTagError(tag, self.identity) from None

    def unmapped(self, tags: Sequence[str]) -> list[str]:
        return sorted({t for t in tags if t not in self.mapping})

    @classmethod
    def from_dict(cls, data: Mapping, base: Path | None = None) -> "ToolProfile":
        mapping = dict(data.get("mapping", {}))
        if "mapping_file" in data:
            path = Path(data["mapping_file"])
            if base is not None and not path.is_absolute():
                path = base / path
            mapping.update(load_mapping(path))
        return cls(
            name=data["name"],
            version=str(data["version"]),
            command=tuple(data["command"]),
            tagset=data.get("tagset", ""),
            mapping=mapping,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ToolProfile":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)


def load_mapping(path: str | Path) -> dict[str, str]:
    """Two-column "native<TAB>unified" file; '#' starts a comment."""
    out: dict[str, str] = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise InputFormatError(str(path), n, "expected native<TAB>unified")
        out[cols[0]] = cols[1]
    return out


Tool = Callable[[str], str]


def subprocess_tool(profile: ToolProfile, timeout: float | None = 600) -> Tool:
    def run(text: str) -> str:
        try:
            proc = subprocess.run(
                list(profile.command), input=text, capture_output=True, text=True, timeout=timeout, check=False
            )
        except (OSError, subprocess.TimeoutExpired) as e:
            raise ToolError(profile.identity, f"could not run: {e}") from e
        if proc.returncode != 0:
            raise ToolError(profile.identity, f"exit status {proc.returncode}", proc.stderr + proc.stdout)
        return proc.stdout

    return run


# --- raw inputs ---------------------------------------------------------------


@dataclass(frozen=True)
class RawPair:
    id: str
    source: str
    target: str


@dataclass(frozen=True)
class SpanAnnotation:
    id: str
    src: tuple[int, int]
    tgt: tuple[int, int]
    label: str


def read_parallel(path: str | Path) -> list[RawPair]:
    """One pair per line: id<TAB>source<TAB>target."""
    pairs, seen = [], set()
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 3 or not cols[0]:
            raise InputFormatError(str(path), n, "expected id<TAB>source<TAB>target")
        if cols[0] in seen:
            raise InputFormatError(str(path), n, f"duplicate id '{cols[0]}'")
        seen.add(cols[0])
        pairs.append(RawPair(cols[0], cols[1].strip(), cols[2].strip()))
    return pairs


def _span(text: str, path: str, n: int) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split("-"))
    except ValueError:
        raise InputFormatError(path, n, f"bad span '{text}', expected start-end") from None
    if not 0 <= a < b:
        raise InputFormatError(path, n, f"empty or negative span '{text}'")
    return a, b


def read_spans(path: str | Path) -> list[SpanAnnotation]:
    """One phrase pair per line: id<TAB>src start-end<TAB>tgt start-end<TAB>label (half-open token spans)."""
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise InputFormatError(str(path), n, "expected id<TAB>src<TAB>tgt<TAB>label")
        if cols[3] not in RAW_LABELS:
            raise InputFormatError(str(path), n, f"unknown label '{cols[3]}'")
        out.append(SpanAnnotation(cols[0], _span(cols[1], str(path), n), _span(cols[2], str(path), n), cols[3]))
    return out


# --- tool output parsing --------------------------------------------------------


def parse_conllu(text: str, profile: ToolProfile, relations: Mapping[str, str] | None = None) -> dict:
    """Tokens and dependency arcs of one sentence. Root attachments are not
    stored; the tag comes from XPOS when present, else UPOS."""
    tokens, deps = [], []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) < 8:
            raise ToolError(profile.identity, f"malformed CoNLL-U row '{line}'", text)
        if "-" in cols[0] or "." in cols[0]:
            continue
        index = int(cols[0]) - 1
        if index != len(tokens):
            raise ToolError(profile.identity, f"token ids out of order at '{cols[0]}'", text)
        native = cols[4] if cols[4] != "_" else cols[3]
        lemma = cols[2] if cols[2] != "_" else cols[1]
        tokens.append({"surface": cols[1], "lemma": lemma, "upos": profile.map_tag(native)})
        head = int(cols[6])
        if head > 0:
            rel = cols[7]
            if relations is not None:
                rel = relations.get(rel, rel)
            deps.append({"head": head - 1, "dependent": index, "relation": rel})
    if not tokens:
        raise ToolError(profile.identity, "no tokens in output", text)
    return {"tokens": tokens, "deps": deps}


def _tokenize_brackets(text: str) -> list[str]:
    out, cur = [], ""
    for ch in text:
        if ch in "()":
            if cur:
                out.append(cur)
                cur = ""
            out.append(ch)
        elif ch.isspace():
            if cur:
                out.append(cur)
                cur = ""
        else:
            cur += ch
    if cur:
        out.append(cur)
    return out


def parse_bracketed(text: str, profile: ToolProfile) -> tuple[dict, list[str]]:
    """Constituency tree with token spans and the leaf words. Preterminal
    tags and phrase labels both go through the profile mapping."""
    toks = _tokenize_brackets(text)
    pos = 0
    words: list[str] = []

    def node() -> dict:
        nonlocal pos
        if pos >= len(toks) or toks[pos] != "(":
            raise ToolError(profile.identity, "malformed bracketed tree", text)
        pos += 1
        label = ""
        if pos < len(toks) and toks[pos] not in "()":
            label = toks[pos]
            pos += 1
        if pos < len(toks) and toks[pos] not in "()":
            word = toks[pos]
            pos += 1
            if pos >= len(toks) or toks[pos] != ")":
                raise ToolError(profile.identity, "malformed preterminal", text)
            pos += 1
            start = len(words)
            words.append(word)
            return {"label": profile.map_tag(label), "span": [start, start + 1]}
        start = len(words)
        children = []
        while pos < len(toks) and toks[pos] == "(":
            children.append(node())
        if pos >= len(toks) or toks[pos] != ")" or not children:
            raise ToolError(profile.identity, "malformed bracketed tree", text)
        pos += 1
        if label in _ROOT_WRAPPERS and len(children) == 1:
            return children[0]
        return {"label": profile.map_tag(label), "span": [start, len(words)], "children": children}

    tree = node()
    if pos != len(toks):
        raise ToolError(profile.identity, "trailing tokens after tree", text)
    return tree, words


def parse_pharaoh(text: str, tool: str, n_src: int, n_tgt: int) -> list[list[int]]:
    links = set()
    for item in text.split():
        try:
            a, b = (int(x) for x in item.split("-"))
        except ValueError:
            raise ToolError(tool, f"malformed link '{item}'", text) from None
        if not (0 <= a < n_src and 0 <= b < n_tgt):
            raise ToolError(tool, f"link '{item}' outside {n_src}x{n_tgt}", text)
        links.add((a, b))
    return [[a, b] for a, b in sorted(links)]


# --- pipeline ---------------------------------------------------------------------


def _side(pair_text: str, dep: Tool, dep_profile: ToolProfile, cons: Tool, cons_profile: ToolProfile,
          relations: Mapping[str, str] | None) -> dict:
    side = parse_conllu(dep(pair_text + "\n"), dep_profile, relations)
    tree, words = parse_bracketed(cons(pair_text + "\n"), cons_profile)
    surfaces = [t["surface"] for t in side["tokens"]]
    if words != surfaces:
        raise ToolError(cons_profile.identity, f"tree leaves {words} differ from tokens {surfaces}")
    side["tree"] = tree
    return side


def build_record(pair: RawPair, spans: Sequence[SpanAnnotation], tools: Mapping[str, Tool],
                 profiles: Mapping[str, ToolProfile], relations: Mapping[str, str] | None = None) -> dict:
    src = _side(pair.source, tools["src_dependency"], profiles["src_dependency"], tools["src_constituency"],
                profiles["src_constituency"], relations)
    tgt = _side(pair.target, tools["tgt_dependency"], profiles["tgt_dependency"], tools["tgt_constituency"],
                profiles["tgt_constituency"], relations)
    src_words = [t["surface"] for t in src["tokens"]]
    tgt_words = [t["surface"] for t in tgt["tokens"]]
    aligned = tools["aligner"](" ".join(src_words) + " ||| " + " ".join(tgt_words) + "\n")
    alignment = parse_pharaoh(aligned, profiles["aligner"].identity, len(src_words), len(tgt_words))
    phrase_pairs = []
    for s in spans:
        if s.src[1] > len(src_words) or s.tgt[1] > len(tgt_words):
            raise AdapterError(f"{pair.id}: span {s.src}/{s.tgt} exceeds {len(src_words)}/{len(tgt_words)} tokens")
        phrase_pairs.append({"src_span": list(s.src), "tgt_span": list(s.tgt), "label": s.label})
    meta = {"tools": {role: {"name": profiles[role].name, "version": profiles[role].version} for role in ROLES}}
    return {
        "format_version": FORMAT_VERSION,
        "id": pair.id,
        "src": src,
        "tgt": tgt,
        "alignment": alignment,
        "phrase_pairs": phrase_pairs,
        "meta": meta,
    }


def dump_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def run_pipeline(raw_parallel: str | Path, span_annotations: str | Path, profiles: Mapping[str, ToolProfile],
                 out_path: str | Path, *, tools: Mapping[str, Tool] | None = None,
                 relations: Mapping[str, str] | None = None, workers: int = 4) -> Path:
    """Writes one bundle record per input pair, in input order. `tools`
    overrides the subprocess runners built from `profiles`."""
    missing = [r for r in ROLES if r not in profiles]
    if missing:
        raise AdapterError(f"missing tool profiles: {', '.join(missing)}")
    runners = dict(tools or {})
    for role in ROLES:
        runners.setdefault(role, subprocess_tool(profiles[role]))
    pairs = read_parallel(raw_parallel)
    spans = read_spans(span_annotations)
    ids = {p.id for p in pairs}
    by_id: dict[str, list[SpanAnnotation]] = {p.id: [] for p in pairs}
    for s in spans:
        if s.id not in ids:
            raise AdapterError(f"span annotation for unknown sentence '{s.id}'")
        by_id[s.id].append(s)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        records = list(pool.map(lambda p: build_record(p, by_id[p.id], runners, profiles, relations), pairs))
    out_path = Path(out_path)
    out_path.write_text("".join(dump_record(r) + "\n" for r in records), encoding="utf-8")
    log.info("wrote %s (%d records)", out_path, len(records))
    return out_path


# --- lexicons ---------------------------------------------------------------------


@dataclass(frozen=True)
class LexiconFiles:
    translation_ef: Path
    translation_fe: Path
    embeddings: Path
    concepts: Path
    translation_rows: int
    embedding_rows: int
    concept_rows: int
    concepts_dropped: int


def _probability(text: str, path: str, n: int) -> float:
    try:
        p = float(text)
    except ValueError:
        raise InputFormatError(path, n, f"bad probability '{text}'") from None
    if not 0.0 <= p <= 1.0:
        raise InputFormatError(path, n, f"probability {p} outside [0, 1]")
    return p


def _node_language(node: str) -> str:
    parts = node.strip("/").split("/")
    if len(parts) >= 3 and parts[0] == "c":
        return parts[1]
    return parts[0] if len(parts) >= 2 else ""


def build_lexicons(aligner_dump: str | Path, embedding_source: str | Path, concept_source: str | Path,
                   out_dir: str | Path) -> LexiconFiles:
    """Aligner dump rows: e<TAB>f<TAB>p(e|f)<TAB>p(f|e). Embeddings: word2vec
    text with an optional "count dim" header. Concepts: assertion dump rows
    whose relation, start and end are the three columns after the URI
    (uri<TAB>relation<TAB>start<TAB>end[<TAB>...]) or the first three."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ef, fe = [], []
    path = str(aligner_dump)
    for n, line in enumerate(Path(aligner_dump).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4 or not cols[0] or not cols[1]:
            raise InputFormatError(path, n, "expected e<TAB>f<TAB>p(e|f)<TAB>p(f|e)")
        _probability(cols[2], path, n)
        _probability(cols[3], path, n)
        ef.append(f"{cols[1]}\t{cols[0]}\t{cols[2]}")
        fe.append(f"{cols[0]}\t{cols[1]}\t{cols[3]}")
    translation_ef = out / "lex_e_given_f.tsv"
    translation_fe = out / "lex_f_given_e.tsv"
    translation_ef.write_text("".join(r + "\n" for r in ef), encoding="utf-8")
    translation_fe.write_text("".join(r + "\n" for r in fe), encoding="utf-8")

    rows, dim = [], None
    path = str(embedding_source)
    lines = Path(embedding_source).read_text(encoding="utf-8").splitlines()
    for n, line in enumerate(lines, 1):
        cols = line.split()
        if not cols:
            continue
        if n == 1 and len(cols) == 2 and all(c.isdigit() for c in cols):
            continue
        values = cols[1:]
        try:
            [float(v) for v in values]
        except ValueError:
            raise InputFormatError(path, n, "non-numeric vector component") from None
        if dim is None:
            dim = len(values)
        if len(values) != dim or dim == 0:
            raise InputFormatError(path, n, f"vector has {len(values)} components, expected {dim}")
        rows.append(cols[0] + " " + " ".join(values))
    embeddings = out / "embeddings.txt"
    embeddings.write_text(f"{len(rows)} {dim or 0}\n" + "".join(r + "\n" for r in rows), encoding="utf-8")

    kept, dropped = [], 0
    path = str(concept_source)
    for n, line in enumerate(Path(concept_source).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) >= 4 and cols[0].startswith("/a/"):
            cols = cols[1:4]
        elif len(cols) >= 3:
            cols = cols[:3]
        else:
            raise InputFormatError(path, n, "expected relation<TAB>start<TAB>end")
        langs = {_node_language(cols[1]), _node_language(cols[2])}
        if "" in langs:
            raise InputFormatError(path, n, "node without a language")
        if langs <= {"en", "fr"} and "fr" in langs:
            kept.append("\t".join(cols))
        else:
            dropped += 1
    if dropped:
        log.info("dropped %d assertions outside EN-FR / FR-FR", dropped)
    concepts = out / "concepts.tsv"
    concepts.write_text("".join(r + "\n" for r in kept), encoding="utf-8")
    return LexiconFiles(translation_ef, translation_fe, embeddings, concepts, len(ef), len(rows), len(kept), dropped)
