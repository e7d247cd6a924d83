"""Plain-text file formats.

Every float is printed with 17 significant digits, which round-trips
IEEE doubles exactly, so write-then-parse is the identity for datasets,
statistics, transforms and score files. Lines starting with '#' are
comments everywhere; the embedding format additionally uses a '#dim D'
header line.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .adapt import DomainTransform
from .dataset import LabeledDataset
from .errors import ParseError
from .experiments import ResultRow
from .model import DomainStats
from .scoring import ScoreRecord

__all__ = [
    "fmt_float",
    "write_embeddings",
    "read_embeddings",
    "write_stats",
    "read_stats",
    "write_transform",
    "read_transform",
    "write_scores",
    "read_scores",
    "write_result_rows",
]


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _parse_float(token: str, path: str, line: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what}: cannot parse float from {token!r}", path, line) from None
    if not math.isfinite(value):
        raise ParseError(f"{what}: non-finite value {token!r}", path, line)
    return value


def _content_lines(path: str | Path):
    """Yield (line_number, stripped_text) for non-blank, non-comment lines."""
    with open(path, "r", encoding="ascii") as handle:
        for no, raw in enumerate(handle, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            yield no, text


# -- embeddings -------------------------------------------------------------


def write_embeddings(path: str | Path, data: LabeledDataset) -> None:
    with open(path, "w", encoding="ascii") as out:
        out.write(f"#dim {data.dim}\n")
        for utt, spk, dom, vec in data.records():
            values = " ".join(fmt_float(v) for v in vec)
            out.write(f"{utt} {spk} {dom} {values}\n")


def read_embeddings(path: str | Path) -> LabeledDataset:
    """Parse an embedding file: '#dim D' header, then one record per line
    of 'utt_id spk_id domain_id v1 .. vD'."""
    spath = str(path)
    dim: int | None = None
    utts: list[str] = []
    spks: list[str] = []
    doms: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    with open(path, "r", encoding="ascii") as handle:
        for no, raw in enumerate(handle, start=1):
            text = raw.strip()
            if not text:
                continue
            if text.startswith("#"):
                fields = text[1:].split()
                if fields and fields[0] == "dim":
                    if dim is not None:
                        raise ParseError("duplicate '#dim' header", spath, no)
                    if len(fields) != 2 or not fields[1].isdigit() or int(fields[1]) < 1:
                        raise ParseError(
                            f"malformed dimension header {text!r}", spath, no
                        )
                    dim = int(fields[1])
                continue
            if dim is None:
                raise ParseError("record found before the '#dim' header", spath, no)
            tokens = text.split()
            if len(tokens) != 3 + dim:
                raise ParseError(
                    f"expected 3 ids + {dim} values, got {len(tokens)} fields", spath, no
                )
            utt, spk, dom = tokens[:3]
            if utt in seen:
                raise ParseError(f"duplicate utterance id {utt!r}", spath, no)
            seen.add(utt)
            vec = np.array(
                [_parse_float(t, spath, no, f"value {k + 1}") for k, t in enumerate(tokens[3:])]
            )
            utts.append(utt)
            spks.append(spk)
            doms.append(dom)
            rows.append(vec)
    if dim is None:
        raise ParseError("missing '#dim' header", spath)
    if not rows:
        raise ParseError("no records found", spath)
    return LabeledDataset(tuple(utts), tuple(spks), tuple(doms), np.vstack(rows))


# -- domain statistics --------------------------------------------------------


def write_stats(path: str | Path, stats: DomainStats) -> None:
    with open(path, "w", encoding="ascii") as out:
        out.write(f"dim {stats.dim}\n")
        out.write(f"epsilon {fmt_float(stats.between_var)}\n")
        out.write(f"sigma {fmt_float(stats.within_var)}\n")
        out.write("center " + " ".join(fmt_float(v) for v in stats.center) + "\n")


def read_stats(path: str | Path) -> DomainStats:
    spath = str(path)
    fields: dict[str, tuple[int, list[str]]] = {}
    for no, text in _content_lines(path):
        tokens = text.split()
        key = tokens[0]
        if key not in ("dim", "epsilon", "sigma", "center"):
            raise ParseError(f"unknown statistics field {key!r}", spath, no)
        if key in fields:
            raise ParseError(f"duplicate field {key!r}", spath, no)
        fields[key] = (no, tokens[1:])
    for key in ("dim", "epsilon", "sigma", "center"):
        if key not in fields:
            raise ParseError(f"missing field {key!r}", spath)
    no, tokens = fields["dim"]
    if len(tokens) != 1 or not tokens[0].isdigit() or int(tokens[0]) < 1:
        raise ParseError(f"malformed dim line", spath, no)
    dim = int(tokens[0])
    scalars = {}
    for key in ("epsilon", "sigma"):
        no, tokens = fields[key]
        if len(tokens) != 1:
            raise ParseError(f"field {key!r} expects one value", spath, no)
        scalars[key] = _parse_float(tokens[0], spath, no, key)
    no, tokens = fields["center"]
    if len(tokens) != dim:
        raise ParseError(f"center expects {dim} values, got {len(tokens)}", spath, no)
    center = np.array([_parse_float(t, spath, no, "center") for t in tokens])
    return DomainStats(
        dim=dim,
        between_var=scalars["epsilon"],
        within_var=scalars["sigma"],
        center=center,
    )


# -- transforms ---------------------------------------------------------------


def write_transform(path: str | Path, transform: DomainTransform) -> None:
    with open(path, "w", encoding="ascii") as out:
        out.write(f"dim {transform.dim}\n")
        for row in transform.matrix:
            out.write(" ".join(fmt_float(v) for v in row) + "\n")
        out.write(" ".join(fmt_float(v) for v in transform.offset) + "\n")


def read_transform(path: str | Path) -> DomainTransform:
    spath = str(path)
    lines = list(_content_lines(path))
    if not lines:
        raise ParseError("empty transform file", spath)
    no, text = lines[0]
    tokens = text.split()
    if len(tokens) != 2 or tokens[0] != "dim" or not tokens[1].isdigit():
        raise ParseError(f"expected 'dim <D>' on the first content line", spath, no)
    dim = int(tokens[1])
    if len(lines) != 1 + dim + 1:
        raise ParseError(
            f"expected {dim} matrix rows plus one offset row, got {len(lines) - 1} content lines",
            spath,
            lines[-1][0],
        )
    rows = []
    for no, text in lines[1:]:
        tokens = text.split()
        if len(tokens) != dim:
            raise ParseError(f"expected {dim} values, got {len(tokens)}", spath, no)
        rows.append(np.array([_parse_float(t, spath, no, "entry") for t in tokens]))
    return DomainTransform(matrix=np.vstack(rows[:dim]), offset=rows[dim])


# -- scores -------------------------------------------------------------------


def write_scores(path: str | Path, records: Iterable[ScoreRecord]) -> None:
    with open(path, "w", encoding="ascii") as out:
        for r in records:
            out.write(f"{r.model_id} {r.test_utt_id} {fmt_float(r.score)} {r.label}\n")


def read_scores(path: str | Path) -> list[ScoreRecord]:
    spath = str(path)
    records = []
    for no, text in _content_lines(path):
        tokens = text.split()
        if len(tokens) != 4:
            raise ParseError(
                f"expected 'model_id test_utt_id score label', got {len(tokens)} fields",
                spath,
                no,
            )
        score = _parse_float(tokens[2], spath, no, "score")
        try:
            records.append(ScoreRecord(tokens[0], tokens[1], score, tokens[3]))
        except Exception as exc:
            raise ParseError(str(exc), spath, no) from None
    if not records:
        raise ParseError("no score records found", spath)
    return records


# -- result tables --------------------------------------------------------------

RESULT_HEADER = "case method n_speakers proportion eer_percent"


def write_result_rows(path: str | Path, rows: Iterable[ResultRow]) -> None:
    with open(path, "w", encoding="ascii") as out:
        out.write(RESULT_HEADER + "\n")
        for r in rows:
            prop = "-" if r.proportion is None else fmt_float(r.proportion)
            out.write(
                f"{r.case} {r.method} {r.n_speakers} {prop} {fmt_float(r.eer.eer_percent)}\n"
            )
