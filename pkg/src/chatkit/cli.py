"""Command-line entry point.

One subcommand per pipeline stage: validate, normalize, segment, align,
morphotag, analyze, dot.  Any path argument may be a directory, in which
case every ``.cha`` file inside is processed in lexicographic order; one
file failing never aborts the rest.  Exit codes: 0 success, 1 diagnostics
under --strict, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__
from . import aligner, analysis, chat, morphosyntax, normalize, segmenter
from .chat import BULLET, TimeInterval
from .diagnostics import Diagnostic


class UsageError(Exception):
    pass


@dataclass
class PipelineConfig:
    language: str | None = None
    repair_lexicon: str | None = None
    mwt_lexicon: str | None = None
    pad_ms: int = 500
    kernel: int = 7
    frame_ms: int = 20
    english_compat: bool = False
    dot_dir: str | None = None
    strict: bool = False

    def validate(self) -> None:
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise UsageError(f"kernel must be odd and >= 1, got {self.kernel}")
        if self.pad_ms < 0:
            raise UsageError(f"pad_ms must be >= 0, got {self.pad_ms}")
        if self.frame_ms <= 0:
            raise UsageError(f"frame_ms must be > 0, got {self.frame_ms}")


_BOOL_VALUES = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def load_config_file(path: str | Path) -> PipelineConfig:
    """Read a flat key=value config file; '#' starts a comment line."""
    config = PipelineConfig()
    types = {f.name: f.type for f in fields(PipelineConfig)}
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in types:
            raise UsageError(f"bad config line: {line!r}")
        if types[key] in ("int", int):
            setattr(config, key, int(value))
        elif types[key] in ("bool", bool):
            if value.lower() not in _BOOL_VALUES:
                raise UsageError(f"bad boolean for {key}: {value!r}")
            setattr(config, key, _BOOL_VALUES[value.lower()])
        else:
            setattr(config, key, value)
    return config


def _merge_config(args: argparse.Namespace) -> PipelineConfig:
    config = load_config_file(args.config) if args.config else PipelineConfig()
    for name in ("language", "repair_lexicon", "mwt_lexicon", "pad_ms", "kernel", "frame_ms", "dot_dir"):
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "english_compat", False):
        config.english_compat = True
    if args.strict:
        config.strict = True
    config.validate()
    return config


# ---------------------------------------------------------------------------
# shared file machinery


@dataclass(frozen=True)
class SummaryRow:
    file: str
    status: str
    diagnostics_count: int
    elapsed_ms: int


def atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, "utf-8")
    os.replace(tmp, path)


def _collect_cha_files(paths: list[str]) -> list[Path]:
    out: list[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            out.extend(sorted(path.glob("*.cha")))
        else:
            out.append(path)
    return sorted(set(out))


def _output_path(path: Path, output_dir: str | None) -> Path:
    if output_dir is None:
        return path
    directory = Path(output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory / path.name


def _run_over_files(
    paths: list[str], worker, jobs: int
) -> tuple[list[SummaryRow], list[Diagnostic]]:
    """Apply worker(file) to every file; failures become diagnostics."""
    files = _collect_cha_files(paths)

    def run_one(path: Path) -> tuple[SummaryRow, list[Diagnostic]]:
        started = time.perf_counter()
        try:
            diags = worker(path)
            status = "ok"
        except Exception as exc:  # per-file isolation: record, keep going
            diags = [
                Diagnostic(
                    code=type(exc).__name__,
                    message=str(exc),
                    file=str(path),
                    line=getattr(exc, "line", None),
                )
            ]
            status = "failed"
        elapsed = int((time.perf_counter() - started) * 1000)
        return SummaryRow(str(path), status, len(diags), elapsed), diags

    if jobs > 1 and len(files) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_one, files))
    else:
        results = [run_one(path) for path in files]
    results.sort(key=lambda pair: pair[0].file)
    rows = [row for row, _ in results]
    diagnostics = [d for _, diags in results for d in diags]
    return rows, diagnostics


def _emit_results(rows: list[SummaryRow], diagnostics: list[Diagnostic], config) -> int:
    for diag in diagnostics:
        print(diag.as_line(), file=sys.stderr)
    print("file\tstatus\tdiagnostics_count\telapsed_ms", file=sys.stderr)
    for row in rows:
        print(
            f"{row.file}\t{row.status}\t{row.diagnostics_count}\t{row.elapsed_ms}",
            file=sys.stderr,
        )
    return 1 if config.strict and diagnostics else 0


def _transcript_language(t: chat.Transcript, config: PipelineConfig) -> str:
    if config.language:
        return config.language
    languages = t.languages
    return languages[0] if languages else "und"


# ---------------------------------------------------------------------------
# per-file stage workers


def _worker_validate(path: Path, config: PipelineConfig) -> list[Diagnostic]:
    transcript = chat.parse_chat(path.read_text("utf-8"))
    return chat.validate(transcript, file=str(path))


def _worker_normalize(
    path: Path, config: PipelineConfig, output_dir: str | None
) -> list[Diagnostic]:
    transcript = chat.parse_chat(path.read_text("utf-8"))
    language = _transcript_language(transcript, config)
    if config.repair_lexicon:
        lexicon = normalize.load_repair_lexicon(config.repair_lexicon, language)
    else:
        lexicon = normalize.builtin_repair_lexicon(language)
    diagnostics: list[Diagnostic] = []
    repaired = normalize.normalize_transcript(transcript, lexicon, diagnostics, str(path))
    atomic_write(_output_path(path, output_dir), chat.serialize_chat(repaired))
    return diagnostics


def _worker_align(
    path: Path,
    config: PipelineConfig,
    output_dir: str | None,
    which_pass: str,
    tighten: bool,
) -> list[Diagnostic]:
    transcript = chat.parse_chat(path.read_text("utf-8"))
    diagnostics: list[Diagnostic] = []
    if which_pass in ("utterance", "both"):
        backplate_path = path.with_suffix(".backplate.json")
        if not backplate_path.exists():
            raise UsageError(f"no backplate sidecar: {backplate_path}")
        backplate = aligner.load_backplate(backplate_path)
        transcript = aligner.recover_utterance_times(transcript, backplate, config.pad_ms)
    if which_pass in ("word", "both"):
        attn_dir = path.with_suffix(".attn")
        if not attn_dir.is_dir():
            if which_pass == "word":
                raise UsageError(f"no attention directory: {attn_dir}")
            diagnostics.append(
                Diagnostic(
                    code="missing-attention",
                    message=f"word pass skipped: {attn_dir} not found",
                    file=str(path),
                )
            )
        else:
            updated = []
            for index, u in enumerate(transcript.utterances):
                matrix_path = attn_dir / f"{index:04d}.mat"
                groups_path = attn_dir / f"{index:04d}.groups.json"
                if not matrix_path.exists() or not groups_path.exists():
                    diagnostics.append(
                        Diagnostic(
                            code="missing-attention",
                            message=f"utterance {index}: no attention inputs",
                            file=str(path),
                            line=u.line,
                        )
                    )
                    updated.append(u)
                    continue
                matrix = aligner.load_attention(matrix_path)
                groups = aligner.load_token_groups(groups_path)
                forms = [t.text for t in aligner.alignable_tokens(u)]
                start = u.time.start_ms if u.time is not None else 0
                timed = aligner.align_words(
                    forms, matrix, groups, config.frame_ms, start, config.kernel
                )
                content = " ".join(
                    f"{form} {BULLET}{iv.start_ms}_{iv.end_ms}{BULLET}" for form, iv in timed
                )
                u = u.with_tier("%wor", content)
                if tighten and timed:
                    u = u.with_time(
                        TimeInterval(timed[0][1].start_ms, timed[-1][1].end_ms)
                    )
                updated.append(u)
            transcript = transcript.with_utterances(tuple(updated))
    atomic_write(_output_path(path, output_dir), chat.serialize_chat(transcript))
    return diagnostics


def _worker_morphotag(
    path: Path, config: PipelineConfig, output_dir: str | None, conllu_path: str | None
) -> list[Diagnostic]:
    transcript = chat.parse_chat(path.read_text("utf-8"))
    source = Path(conllu_path) if conllu_path else path.with_suffix(".conllu")
    if not source.exists():
        raise UsageError(f"no CONLL-U sidecar: {source}")
    sentences = morphosyntax.parse_conllu(source.read_text("utf-8"))
    if len(sentences) != len(transcript.utterances):
        raise morphosyntax.AlignmentMismatch(
            f"{len(sentences)} sentences for {len(transcript.utterances)} utterances"
        )
    language = _transcript_language(transcript, config)
    if config.mwt_lexicon:
        lexicon = morphosyntax.load_mwt_lexicon(config.mwt_lexicon, language)
    else:
        lexicon = morphosyntax.builtin_mwt_lexicon(language)
    mor_name, gra_name = ("%umor", "%ugra") if config.english_compat else ("%mor", "%gra")
    diagnostics: list[Diagnostic] = []
    updated = []
    for u, sentence in zip(transcript.utterances, sentences):
        corrected = morphosyntax.apply_mwt_correction(sentence, lexicon)
        if u.tier(mor_name) is not None:
            diagnostics.append(
                Diagnostic(
                    code="tier-overwritten",
                    message=f"existing {mor_name} replaced",
                    file=str(path),
                    line=u.line,
                )
            )
        mor = morphosyntax.emit_mor(corrected, u, diagnostics=diagnostics, file=str(path))
        u = u.with_tier(mor_name, mor).with_tier(gra_name, morphosyntax.emit_gra(corrected))
        updated.append(u)
    atomic_write(
        _output_path(path, output_dir),
        chat.serialize_chat(transcript.with_utterances(tuple(updated))),
    )
    return diagnostics


def _worker_dot(
    path: Path, config: PipelineConfig, output_dir: str | None, conllu_path: str | None
) -> list[Diagnostic]:
    transcript = chat.parse_chat(path.read_text("utf-8"))
    source = Path(conllu_path) if conllu_path else path.with_suffix(".conllu")
    if not source.exists():
        raise UsageError(f"no CONLL-U sidecar: {source}")
    sentences = morphosyntax.parse_conllu(source.read_text("utf-8"))
    if len(sentences) != len(transcript.utterances):
        raise morphosyntax.AlignmentMismatch(
            f"{len(sentences)} sentences for {len(transcript.utterances)} utterances"
        )
    directory = Path(output_dir or config.dot_dir or path.parent)
    directory.mkdir(parents=True, exist_ok=True)
    for index, (u, sentence) in enumerate(zip(transcript.utterances, sentences)):
        dot = morphosyntax.export_dot(sentence, terminator=u.terminator)
        atomic_write(directory / f"{path.stem}.{index:04d}.dot", dot)
    return []


# ---------------------------------------------------------------------------
# subcommands


def _cmd_validate(args, config) -> int:
    rows, diagnostics = _run_over_files(
        args.files, lambda p: _worker_validate(p, config), args.jobs
    )
    return _emit_results(rows, diagnostics, config)


def _cmd_normalize(args, config) -> int:
    rows, diagnostics = _run_over_files(
        args.files, lambda p: _worker_normalize(p, config, args.output_dir), args.jobs
    )
    return _emit_results(rows, diagnostics, config)


def _cmd_align(args, config) -> int:
    rows, diagnostics = _run_over_files(
        args.files,
        lambda p: _worker_align(
            p, config, args.output_dir, args.pass_name, not args.no_tighten
        ),
        args.jobs,
    )
    return _emit_results(rows, diagnostics, config)


def _cmd_morphotag(args, config) -> int:
    rows, diagnostics = _run_over_files(
        args.files,
        lambda p: _worker_morphotag(p, config, args.output_dir, args.conllu),
        args.jobs,
    )
    return _emit_results(rows, diagnostics, config)


def _cmd_dot(args, config) -> int:
    rows, diagnostics = _run_over_files(
        args.files,
        lambda p: _worker_dot(p, config, args.output_dir, args.conllu),
        args.jobs,
    )
    return _emit_results(rows, diagnostics, config)


def _cmd_segment(args, config) -> int:
    tokens_path = Path(args.tokens)
    labels_path = Path(args.labels) if args.labels else tokens_path.with_suffix(".labels")
    tokens = tokens_path.read_text("utf-8").split()
    provider = segmenter.FileLabelProvider(labels_path)
    utterances = segmenter.segment_with_provider(tokens, provider, args.speaker)
    headers = [("Begin", ""), ("Participants", f"{args.speaker} Speaker")]
    language = config.language
    if language:
        headers.insert(1, ("Languages", language))
    transcript = chat.Transcript(tuple(headers), tuple(utterances), (("End", ""),))
    out = Path(args.output) if args.output else tokens_path.with_suffix(".cha")
    atomic_write(out, chat.serialize_chat(transcript))
    return 0


def _measure_fields(report: analysis.MeasureReport) -> list[str]:
    return [
        str(report.utterance_count),
        str(report.word_tokens),
        str(report.word_types),
        f"{report.mlu_words:.4f}",
        f"{report.mlu_morphemes:.4f}",
        f"{report.ttr:.4f}",
        str(report.ndw),
        f"{report.mattr:.4f}" if report.mattr is not None else "",
    ]


def _cmd_analyze(args, config) -> int:
    files = _collect_cha_files(args.files)
    queries = []
    for spec_text in args.freq or []:
        parts = spec_text.split(":", 2)
        if len(parts) < 2:
            raise UsageError(f"bad --freq value: {spec_text!r} (want tier:facet[:pattern])")
        tier, facet = parts[0], parts[1]
        pattern = parts[2] if len(parts) == 3 else None
        speakers = frozenset([args.speaker]) if args.speaker else None
        try:
            queries.append(analysis.FreqQuery(tier, facet, pattern, speakers))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    out = []
    payload = []
    out.append(
        "file\tspeaker\tutterances\tword_tokens\tword_types\tmlu_words"
        "\tmlu_morphemes\tttr\tndw\tmattr"
    )
    diagnostics: list[Diagnostic] = []
    for path in files:
        try:
            transcript = chat.parse_chat(path.read_text("utf-8"))
        except chat.ChatError as exc:
            diagnostics.append(
                Diagnostic(code=type(exc).__name__, message=str(exc), file=str(path))
            )
            continue
        speakers = (
            [args.speaker]
            if args.speaker
            else sorted({u.speaker_code for u in transcript.utterances})
        )
        for speaker in speakers:
            try:
                report = analysis.measures(transcript, speaker, args.mattr_window)
            except analysis.NoUtterances:
                continue
            out.append("\t".join([str(path), speaker] + _measure_fields(report)))
            payload.append({"file": str(path), **report.__dict__})
        for query in queries:
            try:
                counts = analysis.freq(transcript, query)
            except analysis.MissingTier as exc:
                diagnostics.append(
                    Diagnostic(code="missing-tier", message=str(exc), file=str(path))
                )
                continue
            for term, count in counts.items():
                out.append(f"{path}\tfreq:{query.tier}:{query.facet}\t{term}\t{count}")
                payload.append(
                    {
                        "file": str(path),
                        "query": f"{query.tier}:{query.facet}",
                        "term": term,
                        "count": count,
                    }
                )
    if args.json:
        print(json.dumps(payload, ensure_ascii=False, indent=1))
    else:
        print("\n".join(out))
    for diag in diagnostics:
        print(diag.as_line(), file=sys.stderr)
    return 1 if config.strict and diagnostics else 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chatkit",
        description="Deterministic CHAT transcript pipeline: repair, segment, align, tag, analyze.",
    )
    parser.add_argument("--version", action="version", version=f"chatkit {__version__}")
    parser.add_argument("--strict", action="store_true", help="diagnostics fail the run")
    parser.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel files")
    parser.add_argument("--config", metavar="FILE", help="flat key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, output=True):
        p.add_argument("files", nargs="+", help=".cha files or directories")
        p.add_argument("--language", help="language code overriding @Languages")
        if output:
            p.add_argument("-o", "--output-dir", help="write results here instead of in place")

    p = sub.add_parser("validate", help="report format diagnostics")
    add_common(p, output=False)

    p = sub.add_parser("normalize", help="apply repetition, clitic, and eye-dialect repairs")
    add_common(p)
    p.add_argument("--repair-lexicon", metavar="FILE", help="tab-separated repair rules")

    p = sub.add_parser("segment", help="decode a labeled token stream into a .cha file")
    p.add_argument("tokens", help="plain-text token file (whitespace separated)")
    p.add_argument("--labels", metavar="FILE", help="labels sidecar (one integer per line)")
    p.add_argument("--speaker", default="SPK", help="speaker code for decoded utterances")
    p.add_argument("--language", help="language code for the @Languages header")
    p.add_argument("-o", "--output", help="output .cha path")

    p = sub.add_parser("align", help="recover utterance and word timing")
    add_common(p)
    p.add_argument(
        "--pass",
        dest="pass_name",
        choices=("utterance", "word", "both"),
        default="utterance",
    )
    p.add_argument("--pad-ms", dest="pad_ms", type=int, help="padding around utterances")
    p.add_argument("--kernel", type=int, help="median filter kernel (odd)")
    p.add_argument("--frame-ms", dest="frame_ms", type=int, help="encoder frame duration")
    p.add_argument(
        "--no-tighten",
        action="store_true",
        help="keep utterance intervals instead of tightening to word spans",
    )

    p = sub.add_parser("morphotag", help="emit %mor/%gra tiers from CONLL-U analyses")
    add_common(p)
    p.add_argument("--conllu", metavar="FILE", help="CONLL-U file (default: <name>.conllu)")
    p.add_argument("--mwt-lexicon", metavar="FILE", help="multi-word token lexicon")
    p.add_argument(
        "--english-compat",
        action="store_true",
        help="write %%umor/%%ugra to keep existing English tiers",
    )

    p = sub.add_parser("analyze", help="frequency counts and sample measures")
    add_common(p, output=False)
    p.add_argument("--speaker", help="restrict to one speaker code")
    p.add_argument("--mattr-window", type=int, default=100, metavar="N")
    p.add_argument(
        "--freq",
        action="append",
        metavar="TIER:FACET[:PATTERN]",
        help="count a facet (mor:lemma, mor:pos, mor:tag, gra:relation, main:word)",
    )
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("dot", help="export dependency graphs as DOT files")
    add_common(p)
    p.add_argument("--conllu", metavar="FILE", help="CONLL-U file (default: <name>.conllu)")

    return parser


_COMMANDS = {
    "validate": _cmd_validate,
    "normalize": _cmd_normalize,
    "segment": _cmd_segment,
    "align": _cmd_align,
    "morphotag": _cmd_morphotag,
    "analyze": _cmd_analyze,
    "dot": _cmd_dot,
}


def run_command(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        config = _merge_config(args)
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"chatkit: {exc}", file=sys.stderr)
        return 2


def batch(directory: str | Path, command: str, config: PipelineConfig) -> list[SummaryRow]:
    """Apply one pipeline stage to every .cha file in a directory.

    Programmatic mirror of the CLI: per-file diagnostics are swallowed into
    the summary, and one file failing does not stop the others.
    """
    workers = {
        "validate": lambda p: _worker_validate(p, config),
        "normalize": lambda p: _worker_normalize(p, config, None),
        "align": lambda p: _worker_align(p, config, None, "utterance", True),
        "morphotag": lambda p: _worker_morphotag(p, config, None, None),
        "dot": lambda p: _worker_dot(p, config, None, None),
    }
    if command not in workers:
        raise UsageError(f"unknown batch command {command!r}")
    rows, _ = _run_over_files([str(directory)], workers[command], jobs=1)
    return rows


def main() -> None:
    sys.exit(run_command())
