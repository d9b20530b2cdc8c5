"""Citation-corpus loaders, Planetoid-style splits and the canonical on-disk format.

Supported inputs:

* LINQS ``.content`` / ``.cites`` pairs (Cora, Citeseer).
* The Pubmed-Diabetes ``NODE.paper.tab`` / ``DIRECTED.cites.tab`` pair.
* The canonical directory written by :func:`save_canonical`.

Every file may also be given gzip-compressed with a ``.gz`` suffix.

Canonical directory layout (UTF-8, LF line endings)::

    meta.json     n, d, num_classes, counts, format_version, sha256 per file
    features.tsv  one node per line, d tab-separated floats (shortest repr)
    labels.tsv    one integer per line, -1 for unlabeled
    edges.tsv     "i<TAB>j" per line, zero-based, i < j, sorted, unique
    splits.json   {"train": [...], "val": [...], "test": [...]}
"""

from __future__ import annotations

import gzip
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import UNLABELED, Graph, GraphError, Splits, canonical_edges
from .tensor import DTYPE, Rng

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
COMPONENTS = ("meta.json", "features.tsv", "labels.tsv", "edges.tsv", "splits.json")


class DataError(ValueError):
    """Input files are malformed or inconsistent."""


class MissingComponentError(DataError, FileNotFoundError):
    pass


class ChecksumError(DataError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    expected_n: int | None = None
    expected_edges: int | None = None
    expected_d: int | None = None
    expected_classes: int | None = None


# edge counts are raw citation-line counts of the public corpora
DATASETS = {
    "cora": DatasetSpec("cora", 2708, 5429, 1433, 7),
    "citeseer": DatasetSpec("citeseer", 3327, 4732, 3703, 6),
    "pubmed": DatasetSpec("pubmed", 19717, 44338, 500, 3),
    "custom": DatasetSpec("custom"),
}


def _resolve(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    gz = p.with_name(p.name + ".gz")
    if gz.exists():
        return gz
    raise MissingComponentError(f"missing component: {p} (nor {gz.name})")


def read_text(path) -> str:
    """Read a UTF-8 file, transparently accepting a ``.gz`` sibling."""
    p = _resolve(path)
    if p.suffix == ".gz":
        with gzip.open(p, "rb") as fh:
            return fh.read().decode("utf-8")
    return p.read_text(encoding="utf-8")


def _fields(line: str) -> list[str]:
    return line.split("\t") if "\t" in line else line.split()


# ---------------------------------------------------------------------------
# raw corpora
# ---------------------------------------------------------------------------

def _build_graph(ids, rows, label_tokens, pairs, name, cite_lines, vocab_size=None):
    index = {node_id: i for i, node_id in enumerate(ids)}
    if len(index) != len(ids):
        raise DataError("duplicate node id in content file")
    label_map: dict[str, int] = {}
    labels = np.full(len(ids), UNLABELED, dtype=np.int64)
    for i, tok in enumerate(label_tokens):
        if tok is None:
            continue
        labels[i] = label_map.setdefault(tok, len(label_map))
    edges, skipped = [], 0
    for a, b in pairs:
        if a in index and b in index:
            edges.append((index[a], index[b]))
        else:
            skipped += 1
    n = len(ids)
    raw_edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    self_loops = int(np.sum(raw_edges[:, 0] == raw_edges[:, 1])) if raw_edges.size else 0
    e = canonical_edges(raw_edges, n)
    report = {
        "cite_lines": cite_lines,
        "skipped_unknown": skipped,
        "self_loops_dropped": self_loops,
        "duplicates_dropped": len(edges) - self_loops - len(e),
        "label_names": list(label_map),
    }
    if skipped:
        log.warning("%s: skipped %d citations referencing unknown ids", name, skipped)
    g = Graph(rows, labels, e, len(label_map), None, name, {"load_report": report})
    return g


def load_linqs_content_cites(content_path, cites_path, name: str = "custom") -> Graph:
    """Load a LINQS ``.content`` / ``.cites`` pair.

    Node order follows the content file; class labels are numbered by first
    appearance. The load report (skipped citations and so on) is stored in
    ``graph.meta["load_report"]``.
    """
    lines = [ln for ln in read_text(content_path).splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"empty content file: {content_path}")
    ids, feats, labs = [], [], []
    width = None
    for lineno, line in enumerate(lines, 1):
        parts = _fields(line.strip())
        if len(parts) < 2:
            raise DataError(f"{content_path}:{lineno}: expected id, features and label")
        k = len(parts) - 2
        if width is None:
            width = k
        elif k != width:
            raise DataError(f"{content_path}:{lineno}: ragged feature row ({k} values, expected {width})")
        ids.append(parts[0])
        feats.append(parts[1:-1])
        labs.append(parts[-1])
    try:
        x = np.array(feats, dtype=DTYPE).reshape(len(lines), width)
    except ValueError as exc:
        raise DataError(f"{content_path}: non-numeric feature value") from exc

    pairs = []
    cite_text = read_text(cites_path)
    cite_lines = 0
    for lineno, line in enumerate(cite_text.splitlines(), 1):
        if not line.strip():
            continue
        parts = _fields(line.strip())
        if len(parts) != 2:
            raise DataError(f"{cites_path}:{lineno}: expected two ids")
        cite_lines += 1
        pairs.append((parts[0], parts[1]))
    return _build_graph(ids, x, labs, pairs, name, cite_lines)


def load_pubmed_tab(nodes_path, cites_path, name: str = "custom") -> Graph:
    """Load the Pubmed-Diabetes tab layout.

    The second header line declares the vocabulary (``numeric:<term>:0.0``
    fields); node lines carry ``label=<c>`` and sparse ``<term>=<value>``
    pairs. Labels ``1..C`` become ``0..C-1``.
    """
    lines = read_text(nodes_path).splitlines()
    if len(lines) < 3:
        raise DataError(f"{nodes_path}: expected two header lines and node rows")
    vocab = []
    for tok in lines[1].split("\t"):
        parts = tok.split(":")
        if parts[0] == "numeric" and len(parts) >= 2:
            vocab.append(parts[1])
    col = {w: j for j, w in enumerate(vocab)}
    ids, rows, labs = [], [], []
    for lineno, line in enumerate(lines[2:], 3):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        ids.append(parts[0].strip())
        row = np.zeros(len(vocab), dtype=DTYPE)
        label = None
        for tok in parts[1:]:
            if not tok or "=" not in tok:
                continue
            key, val = tok.split("=", 1)
            if key == "label":
                label = val
            elif key == "summary":
                continue
            elif key in col:
                row[col[key]] = float(val)
            else:
                raise DataError(f"{nodes_path}:{lineno}: attribute {key!r} not in header vocabulary")
        rows.append(row)
        labs.append(label)
    if not rows:
        raise DataError(f"{nodes_path}: no node rows")

    # number classes by their integer value, 1..C -> 0..C-1
    values = sorted({int(v) for v in labs if v is not None})
    if values and values != list(range(1, len(values) + 1)):
        raise DataError(f"{nodes_path}: labels must be 1..C, found {values}")
    label_tokens = [None if v is None else v for v in labs]

    pairs, cite_lines = [], 0
    for line in read_text(cites_path).splitlines():
        papers = [t.split(":", 1)[1] for t in line.split("\t") if t.startswith("paper:")]
        if len(papers) == 2:
            cite_lines += 1
            pairs.append((papers[0], papers[1]))

    g = _build_graph(ids, np.vstack(rows), label_tokens, pairs, name, cite_lines)
    # renumber by value instead of by first appearance
    names = g.meta["load_report"]["label_names"]
    remap = np.array([int(v) - 1 for v in names], dtype=np.int64)
    labels = np.where(g.labels == UNLABELED, UNLABELED, remap[np.maximum(g.labels, 0)])
    g.meta["load_report"]["label_names"] = [str(v) for v in values]
    return Graph(g.features, labels, g.edges, len(values), None, name, g.meta)


def validate_counts(g: Graph, spec: DatasetSpec) -> None:
    """Raise :class:`DataError` if ``g`` disagrees with a named dataset's statistics."""
    problems = []
    for field, actual in (("n", g.n), ("d", g.d), ("classes", g.num_classes)):
        expected = getattr(spec, f"expected_{field}")
        if expected is not None and expected != actual:
            problems.append(f"{field}: expected {expected}, got {actual}")
    cite_lines = g.meta.get("load_report", {}).get("cite_lines")
    if spec.expected_edges is not None and cite_lines is not None and cite_lines != spec.expected_edges:
        problems.append(f"citations: expected {spec.expected_edges}, got {cite_lines}")
    if problems:
        raise DataError(f"{spec.name} does not match its published statistics: " + "; ".join(problems))


def row_normalize(features: np.ndarray) -> np.ndarray:
    """Scale each row to unit L1 norm; all-zero rows are left at zero."""
    s = np.abs(features).sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return features / s


def make_planetoid_splits(g: Graph, per_class_train: int = 20, num_val: int = 500,
                          num_test: int = 1000, rng: Rng | None = None) -> Splits:
    """``per_class_train`` labeled nodes per class for training, then val and test.

    Validation and test nodes are drawn from the labeled nodes not used for
    training. Each returned index array is sorted.
    """
    if rng is None:
        rng = Rng(0)
    if per_class_train < 1:
        raise DataError("per_class_train must be at least 1: an empty train split cannot be trained")
    c = g.num_classes
    labeled = np.flatnonzero(g.labels != UNLABELED)
    if per_class_train * c + num_val + num_test > labeled.size:
        raise DataError(
            f"need {per_class_train * c + num_val + num_test} labeled nodes, graph has {labeled.size}")
    train = []
    for k in range(c):
        members = np.flatnonzero(g.labels == k)
        if members.size < per_class_train:
            raise DataError(f"class {k} has {members.size} labeled nodes, fewer than {per_class_train}")
        train.append(members[rng.choice(members.size, per_class_train)])
    train = np.sort(np.concatenate(train))
    rest = np.setdiff1d(labeled, train)
    rest = rest[rng.permutation(rest.size)]
    val = np.sort(rest[:num_val])
    test = np.sort(rest[num_val:num_val + num_test])
    return Splits(train, val, test)


PLANETOID_TRAIN_PER_CLASS = 20


# ---------------------------------------------------------------------------
# canonical format
# ---------------------------------------------------------------------------

def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _format_features(x: np.ndarray) -> str:
    out = []
    for row in x.tolist():
        out.append("\t".join(map(repr, row)))
        out.append("\n")
    return "".join(out)


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def save_canonical(g: Graph, directory) -> Path:
    """Write ``g`` in the canonical layout; the output is a pure function of ``g``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    edges = canonical_edges(g.edges, g.n)
    texts = {
        "features.tsv": _format_features(g.features),
        "labels.tsv": "".join(f"{int(v)}\n" for v in g.labels),
        "edges.tsv": "".join(f"{i}\t{j}\n" for i, j in edges.tolist()),
        "splits.json": json.dumps(
            {k: ([] if g.splits is None else g.splits[k].tolist()) for k in ("train", "val", "test")},
            sort_keys=True) + "\n",
    }
    report = g.meta.get("load_report", {})
    meta = {
        "format_version": FORMAT_VERSION,
        "name": g.name,
        "n": g.n,
        "d": g.d,
        "num_classes": g.num_classes,
        "num_edges": int(len(edges)),
        "num_labeled": int(np.sum(g.labels != UNLABELED)),
        "has_splits": g.splits is not None,
        "cite_lines": report.get("cite_lines"),
        "sha256": {k: _sha(v) for k, v in sorted(texts.items())},
    }
    for k, v in texts.items():
        _write(d / k, v)
    _write(d / "meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def load_canonical(directory) -> Graph:
    d = Path(directory)
    if not d.is_dir():
        raise MissingComponentError(f"not a dataset directory: {d}")
    try:
        meta = json.loads(read_text(d / "meta.json"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{d / 'meta.json'}: malformed JSON") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported canonical format version {meta.get('format_version')}")
    texts = {}
    for name in COMPONENTS[1:]:
        texts[name] = read_text(d / name)
        if _sha(texts[name]) != meta["sha256"].get(name):
            raise ChecksumError(f"checksum mismatch for {name}")
    n, dim = int(meta["n"]), int(meta["d"])

    lines = texts["features.tsv"].split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != n:
        raise DataError(f"features.tsv has {len(lines)} rows, meta says {n}")
    if dim == 0:
        x = np.zeros((n, 0), dtype=DTYPE)
    else:
        if any(ln.count("\t") != dim - 1 for ln in lines):
            raise DataError("features.tsv has ragged rows")
        x = np.array(texts["features.tsv"].split(), dtype=DTYPE).reshape(n, dim)

    labels = np.array(texts["labels.tsv"].split(), dtype=np.int64)
    if labels.size != n:
        raise DataError(f"labels.tsv has {labels.size} entries, meta says {n}")
    edges = np.array(texts["edges.tsv"].split(), dtype=np.int64).reshape(-1, 2)
    if len(edges) != meta["num_edges"]:
        raise DataError("edges.tsv row count disagrees with meta.json")
    sp_json = json.loads(texts["splits.json"])
    splits = Splits(sp_json["train"], sp_json["val"], sp_json["test"]) if meta["has_splits"] else None
    load_meta = {"load_report": {"cite_lines": meta.get("cite_lines")}}
    try:
        return Graph(x, labels, edges, meta["num_classes"], splits, meta.get("name", "custom"), load_meta)
    except GraphError as exc:
        raise DataError(str(exc)) from exc


def load_dataset(path, name: str = "custom") -> Graph:
    """Load whichever supported layout lives at ``path``.

    ``path`` may be a canonical directory, or a directory holding one
    ``*.content`` + ``*.cites`` pair, or the two Pubmed-Diabetes tab files.
    """
    p = Path(path)
    if not p.is_dir():
        raise MissingComponentError(f"dataset directory not found: {p}")
    if _exists(p / "meta.json"):
        return load_canonical(p)
    files = sorted(os.listdir(p))
    content = [f for f in files if f.endswith((".content", ".content.gz"))]
    cites = [f for f in files if f.endswith((".cites", ".cites.gz"))]
    if len(content) == 1 and len(cites) == 1:
        return load_linqs_content_cites(p / _strip_gz(content[0]), p / _strip_gz(cites[0]), name)
    node_tab = [f for f in files if "NODE" in f and ".tab" in f]
    cite_tab = [f for f in files if "cites" in f and ".tab" in f]
    if len(node_tab) == 1 and len(cite_tab) == 1:
        return load_pubmed_tab(p / _strip_gz(node_tab[0]), p / _strip_gz(cite_tab[0]), name)
    raise DataError(f"{p}: no recognised dataset layout")


def _exists(p: Path) -> bool:
    return p.exists() or p.with_name(p.name + ".gz").exists()


def _strip_gz(name: str) -> str:
    return name[:-3] if name.endswith(".gz") else name
