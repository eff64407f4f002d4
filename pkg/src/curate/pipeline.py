"""Stage orchestration with per-clip caching and a deterministic reduce.

Each stage reads the previous stage's ``work/<stage>/results.json`` and
writes its own, so stages can be rerun one at a time. Per-clip work runs in
a process pool; everything that looks across clips (speaker ranking, cohort
choice, split, statistics) happens afterwards in clip-id order.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import CurateError
from .audio import AudioBuffer, FrameGrid, TruncatedFile, UnsupportedFormat, read_wav, resample, write_wav
from .catalog import ClipRecord, filter_demographic, filter_validated, load_catalog, top_contributors
from .config import ConfigError, PipelineConfig, fingerprint
from .enhance import denoise
from .external import run_line_protocol
from .intonation import (
    CohortSelection,
    InsufficientVoicing,
    TooShort,
    UtteranceProsody,
    distance_matrix,
    extract_f0,
    select_cohort,
    selection_report,
    speaker_profile,
    utterance_prosody,
    zscore,
)
from .manifest import build_manifest, compute_stats, empty_stats, write_metadata, write_stats
from .quality import NoSpeech, QualityReport, ScoreSource, clip_ratio, estimate_snr, external_score, passes, pseudo_mos
from .textnorm import normalize
from .vad import SpeechSegment, apply_segments, trim

logger = logging.getLogger(__name__)

STAGES = ("ingest", "trim", "denoise", "score", "select-speakers", "normalize-text", "export")


class FatalIo(CurateError):
    pass


class StageOrder(CurateError):
    pass


# -- workspace -------------------------------------------------------------------------


class Workspace:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.root = Path(cfg.work_dir)

    def stage_dir(self, stage: str) -> Path:
        return self.root / stage

    def results_path(self, stage: str) -> Path:
        return self.stage_dir(stage) / "results.json"

    def load(self, stage: str) -> dict:
        path = self.results_path(stage)
        if not path.is_file():
            raise StageOrder(f"stage {stage!r} has no outputs in {path.parent}; run it first")
        return json.loads(path.read_text(encoding="utf-8"))

    def load_cache(self, stage: str) -> dict:
        path = self.results_path(stage)
        if not path.is_file():
            return {}
        try:
            return json.loads(path.read_text(encoding="utf-8")).get("clips", {})
        except (OSError, ValueError):
            return {}

    def save(self, stage: str, payload: dict) -> None:
        path = self.results_path(stage)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, indent=1, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)


def _ensure_writable(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise FatalIo(f"cannot write to {path}: {exc}") from None


def _pmap(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _flags_to_str(flags: np.ndarray) -> str:
    return "".join("1" if f else "0" for f in flags)


def _flags_from_str(s: str) -> np.ndarray:
    return np.array([c == "1" for c in s], dtype=bool)


def _pending(upstream: dict) -> list[str]:
    return sorted(cid for cid, r in upstream["clips"].items() if r["status"] == "ok")


def _timed(stage: str):
    def wrap(fn):
        def inner(ws: Workspace, *args, **kwargs):
            t0 = time.perf_counter()
            payload = fn(ws, *args, **kwargs)
            payload["elapsed_s"] = time.perf_counter() - t0
            ws.save(stage, payload)
            logger.info("stage %s finished in %.2f s", stage, payload["elapsed_s"])
            return payload

        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner

    return wrap


# -- ingest ------------------------------------------------------------------------------


def _resolve_audio(root: Path, rec: dict) -> Optional[Path]:
    rel = Path(rec["audio_path"])
    candidates = []
    if rel.suffix.lower() == ".wav":
        candidates.append(root / rel)
    candidates += [root / rel.with_suffix(".wav"), root / f"{rec['clip_id']}.wav"]
    for c in candidates:
        if c.is_file():
            return c
    return None


@_timed("ingest")
def stage_ingest(ws: Workspace) -> dict:
    """Parse the catalog, apply vote and demographic filters, keep top speakers."""
    cfg = ws.cfg
    try:
        catalog = load_catalog(cfg.input_catalog, cfg.delimiter)
    except UnicodeDecodeError as exc:
        raise ConfigError(f"catalog is not UTF-8: {exc}") from None
    validated = {r.clip_id for r in filter_validated(catalog, cfg.min_up_votes)}
    demographic = filter_demographic(
        catalog.replace_records(r for r in catalog if r.clip_id in validated), cfg.gender, cfg.ages
    )
    kept = {r.clip_id for r in demographic}
    top = top_contributors(demographic, cfg.intonation.top_contributors) if len(demographic) else []
    top_ids = {spk for spk, _ in top}

    clips = {}
    for order, rec in enumerate(catalog):
        if rec.clip_id not in validated:
            status, reason = "rejected", "not-validated"
        elif rec.clip_id not in kept:
            status, reason = "rejected", "demographic-mismatch"
        elif rec.speaker_id not in top_ids:
            status, reason = "rejected", "not-top-contributor"
        else:
            status, reason = "ok", None
        clips[rec.clip_id] = {**_record_dict(rec), "order": order, "status": status, "reason": reason}
    return {
        "clips": clips,
        "row_errors": [{"line": e.line_no, "reason": e.reason} for e in catalog.errors],
        "top_contributors": [[spk, n] for spk, n in top],
    }


def _record_dict(rec: ClipRecord) -> dict:
    return {
        "clip_id": rec.clip_id,
        "speaker_id": rec.speaker_id,
        "audio_path": rec.audio_path,
        "transcript": rec.transcript,
        "up_votes": rec.up_votes,
        "down_votes": rec.down_votes,
        "age": rec.age,
        "gender": rec.gender,
    }


# -- trim ------------------------------------------------------------------------------------


def _trim_one(job: tuple) -> dict:
    rec, audio_root, target_rate, vad_cfg, out_dir, cached = job
    path = _resolve_audio(Path(audio_root), rec)
    if path is None:
        return {"status": "rejected", "reason": "missing-audio"}
    digest = _sha256_file(path)
    key = fingerprint(digest, target_rate, vad_cfg)
    full_path = Path(out_dir) / "full" / f"{rec['clip_id']}.wav"
    if cached and cached.get("key") == key and (cached["status"] != "ok" or full_path.is_file()):
        return cached
    try:
        src = read_wav(path)
    except (UnsupportedFormat, TruncatedFile, OSError) as exc:
        return {"status": "rejected", "reason": "decode-error", "detail": str(exc), "key": key}
    if len(src) == 0:
        return {"status": "rejected", "reason": "decode-error", "detail": "empty audio", "key": key}
    cr = clip_ratio(src)
    buf = resample(src, target_rate)
    write_wav(buf, full_path)
    buf = read_wav(full_path)  # continue from the quantised copy so cached reruns match
    result = trim(buf, vad_cfg)
    entry = {
        "key": key,
        "source": str(path),
        "source_duration_s": src.duration,
        "clip_ratio": cr,
        "frame_len": result.grid.frame_len,
        "speech_flags": _flags_to_str(result.speech_flags),
        "segments": [[s.start_sample, s.end_sample] for s in result.segments],
        "trimmed_s": result.trimmed.duration,
        "flagged_short": bool(result.flagged_short),
    }
    if result.flagged_short and vad_cfg.reject_short:
        return {**entry, "status": "rejected", "reason": "vad-short"}
    return {**entry, "status": "ok", "reason": None}


@_timed("trim")
def stage_trim(ws: Workspace, workers: int) -> dict:
    """Resample to the target rate and find speech endpoints."""
    cfg = ws.cfg
    upstream = ws.load("ingest")
    cache = ws.load_cache("trim")
    out_dir = ws.stage_dir("trim")
    (out_dir / "full").mkdir(parents=True, exist_ok=True)
    ids = _pending(upstream)
    jobs = [
        (upstream["clips"][cid], str(cfg.audio_root), cfg.target_sample_rate, cfg.vad, str(out_dir), cache.get(cid))
        for cid in ids
    ]
    return {"clips": dict(zip(ids, _pmap(_trim_one, jobs, workers)))}


# -- denoise ------------------------------------------------------------------------------


def _segments(entry: dict) -> tuple[SpeechSegment, ...]:
    return tuple(SpeechSegment(s, e) for s, e in entry["segments"])


def _grid(entry: dict, n: int) -> FrameGrid:
    return FrameGrid.for_length(n, entry["frame_len"])


def _finish_denoise(clip_id: str, trim_entry: dict, enhanced: AudioBuffer, out_dir: Path, key: str) -> dict:
    write_wav(enhanced, out_dir / "full" / f"{clip_id}.wav")
    enhanced = read_wav(out_dir / "full" / f"{clip_id}.wav")
    trimmed = apply_segments(enhanced, _segments(trim_entry))
    write_wav(trimmed, out_dir / "trimmed" / f"{clip_id}.wav")
    return {"key": key, "status": "ok", "reason": None, "trimmed_s": trimmed.duration}


def _denoise_one(job: tuple) -> dict:
    clip_id, trim_entry, trim_dir, enhance_cfg, out_dir, cached = job
    key = fingerprint(trim_entry["key"], enhance_cfg)
    out_dir = Path(out_dir)
    if cached and cached.get("key") == key and (out_dir / "trimmed" / f"{clip_id}.wav").is_file():
        return cached
    buf = read_wav(Path(trim_dir) / "full" / f"{clip_id}.wav")
    flags = _flags_from_str(trim_entry["speech_flags"])
    enhanced = denoise(buf, flags, _grid(trim_entry, len(buf)), enhance_cfg)
    return _finish_denoise(clip_id, trim_entry, enhanced, out_dir, key)


def _conform(buf: AudioBuffer, rate: int, n: int) -> AudioBuffer:
    buf = resample(buf, rate)
    samples = np.zeros(n)
    m = min(n, len(buf))
    samples[:m] = buf.samples[:m]
    return AudioBuffer(np.clip(samples, -1.0, 1.0), rate)


@_timed("denoise")
def stage_denoise(ws: Workspace, workers: int) -> dict:
    """Gate stationary noise on the full clip, then cut it to the speech span.

    With ``enhance.external_command`` set, the gate is replaced by one batch
    call to the external enhancer.
    """
    cfg = ws.cfg
    upstream = ws.load("trim")
    cache = ws.load_cache("denoise")
    trim_dir = ws.stage_dir("trim")
    out_dir = ws.stage_dir("denoise")
    for sub in ("full", "trimmed"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    ids = _pending(upstream)
    results: dict[str, dict] = {}

    if cfg.enhance.external_command:
        todo = []
        for cid in ids:
            key = fingerprint(upstream["clips"][cid]["key"], cfg.enhance)
            c = cache.get(cid)
            if c and c.get("key") == key and (out_dir / "trimmed" / f"{cid}.wav").is_file():
                results[cid] = c
            else:
                todo.append((cid, key))
        paths = {cid: str(trim_dir / "full" / f"{cid}.wav") for cid, _ in todo}
        outputs = run_line_protocol(list(paths.values()), cfg.enhance.external_command, cfg.enhance.timeout_s)
        for cid, key in todo:
            entry = upstream["clips"][cid]
            original = read_wav(paths[cid])
            try:
                produced = read_wav(outputs[paths[cid]])
            except (OSError, UnsupportedFormat, TruncatedFile) as exc:
                results[cid] = {"key": key, "status": "rejected", "reason": "enhance-error", "detail": str(exc)}
                continue
            enhanced = _conform(produced, original.sample_rate, len(original))
            results[cid] = _finish_denoise(cid, entry, enhanced, out_dir, key)
    else:
        jobs = [
            (cid, upstream["clips"][cid], str(trim_dir), cfg.enhance, str(out_dir), cache.get(cid))
            for cid in ids
        ]
        results = dict(zip(ids, _pmap(_denoise_one, jobs, workers)))
    return {"clips": {cid: results[cid] for cid in ids}}


# -- score -------------------------------------------------------------------------------------


def _score_one(job: tuple) -> dict:
    clip_id, trim_entry, denoise_entry, denoise_dir, quality_cfg, cached = job
    key = fingerprint(denoise_entry["key"], quality_cfg)
    if cached and cached.get("key") == key:
        return cached
    enhanced = read_wav(Path(denoise_dir) / "full" / f"{clip_id}.wav")
    flags = _flags_from_str(trim_entry["speech_flags"])
    try:
        snr = estimate_snr(enhanced, flags, _grid(trim_entry, len(enhanced)))
    except NoSpeech:
        return {"key": key, "status": "rejected", "reason": "no-speech"}
    # clipping is read from the decoded source; gating smears clipped tops
    cr = trim_entry["clip_ratio"]
    sr = float(flags.mean())
    report = QualityReport(snr, cr, sr, pseudo_mos(snr, cr, sr, quality_cfg))
    return {"key": key, "quality": report.to_dict()}


def _decide(entry: dict, qcfg) -> dict:
    if "quality" not in entry:
        return entry
    ok = passes(entry["quality"]["pseudo_mos"], qcfg.threshold, qcfg.inclusive)
    return {**entry, "status": "ok" if ok else "rejected", "reason": None if ok else "low-quality"}


@_timed("score")
def stage_score(ws: Workspace, workers: int) -> dict:
    """Measure SNR, clipping and speech ratio; keep clips scoring above threshold."""
    cfg = ws.cfg
    qcfg = cfg.quality
    trim_res = ws.load("trim")
    upstream = ws.load("denoise")
    cache = ws.load_cache("score")
    denoise_dir = ws.stage_dir("denoise")
    ids = _pending(upstream)
    jobs = [
        (cid, trim_res["clips"][cid], upstream["clips"][cid], str(denoise_dir), qcfg, cache.get(cid))
        for cid in ids
    ]
    results = dict(zip(ids, _pmap(_score_one, jobs, workers)))

    if qcfg.external_command:
        todo = [cid for cid in ids if "quality" in results[cid] and results[cid]["quality"]["source"] != "external"]
        paths = {cid: str(denoise_dir / "trimmed" / f"{cid}.wav") for cid in todo}
        scores = external_score(list(paths.values()), qcfg.external_command, qcfg.timeout_s)
        for cid in todo:
            q = {**results[cid]["quality"], "pseudo_mos": scores[paths[cid]], "source": ScoreSource.EXTERNAL.value}
            results[cid] = {**results[cid], "quality": q}
    return {"clips": {cid: _decide(results[cid], qcfg) for cid in ids}, "threshold": qcfg.threshold}


# -- select-speakers ---------------------------------------------------------------------------


def _prosody_one(job: tuple) -> dict:
    clip_id, denoise_entry, denoise_dir, icfg, cached = job
    key = fingerprint(denoise_entry["key"], icfg.f_min, icfg.f_max, icfg.threshold, icfg.min_voiced_frames)
    if cached and cached.get("key") == key:
        return cached
    buf = read_wav(Path(denoise_dir) / "trimmed" / f"{clip_id}.wav")
    try:
        track = extract_f0(buf, icfg.f_min, icfg.f_max, icfg.threshold)
        p = utterance_prosody(track, icfg.min_voiced_frames)
    except (TooShort, InsufficientVoicing) as exc:
        return {"key": key, "prosody": None, "detail": str(exc)}
    return {"key": key, "prosody": dataclasses.asdict(p)}


@_timed("select-speakers")
def stage_select_speakers(ws: Workspace, workers: int) -> dict:
    """Profile each surviving speaker's pitch behaviour and pick the tightest cohort."""
    cfg = ws.cfg
    icfg = cfg.intonation
    ingest = ws.load("ingest")
    upstream = ws.load("score")
    cache = ws.load_cache("select-speakers")
    denoise_res = ws.load("denoise")
    denoise_dir = ws.stage_dir("denoise")
    ids = _pending(upstream)
    jobs = [(cid, denoise_res["clips"][cid], str(denoise_dir), icfg, cache.get(cid)) for cid in ids]
    prosody = dict(zip(ids, _pmap(_prosody_one, jobs, workers)))

    by_speaker: dict[str, list[UtteranceProsody]] = {}
    for cid in ids:
        p = prosody[cid]["prosody"]
        if p is not None:
            by_speaker.setdefault(ingest["clips"][cid]["speaker_id"], []).append(UtteranceProsody(**p))
    profiles = [
        speaker_profile(spk, ps) for spk, ps in sorted(by_speaker.items()) if len(ps) >= icfg.min_clips
    ]
    if len(profiles) >= icfg.k:
        selection = select_cohort(profiles, icfg.k)
        note = None
    else:
        chosen = tuple(p.speaker_id for p in profiles)
        diam = 0.0
        if len(profiles) >= 2:
            diam = float(distance_matrix(zscore(np.array([p.feature_vector for p in profiles]))).max())
        selection = CohortSelection(chosen, diam, "all")
        note = f"only {len(profiles)} eligible speakers for k={icfg.k}; all were kept"
        logger.warning(note)
    report = selection_report(profiles, selection)
    report["k"] = icfg.k
    report["min_clips"] = icfg.min_clips
    if note:
        report["note"] = note
    cohort = set(selection.speaker_ids)

    clips = {}
    for cid in ids:
        in_cohort = ingest["clips"][cid]["speaker_id"] in cohort
        clips[cid] = {
            **prosody[cid],
            "status": "ok" if in_cohort else "rejected",
            "reason": None if in_cohort else "speaker-not-in-cohort",
        }
    out = ws.stage_dir("select-speakers")
    out.mkdir(parents=True, exist_ok=True)
    (out / "cohort.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"clips": clips, "cohort": report}


# -- normalize-text ----------------------------------------------------------------------------


@_timed("normalize-text")
def stage_normalize_text(ws: Workspace) -> dict:
    """Normalize transcripts and drop those with too few words."""
    ingest = ws.load("ingest")
    upstream = ws.load("select-speakers")
    clips = {}
    for cid in _pending(upstream):
        outcome = normalize(ingest["clips"][cid]["transcript"], ws.cfg.textnorm)
        clips[cid] = {
            "normalized": outcome.normalized,
            "applied_rules": list(outcome.applied_rules),
            "status": "ok" if outcome.accepted else "rejected",
            "reason": None if outcome.accepted else "text-too-short",
        }
    return {"clips": clips}


# -- export ------------------------------------------------------------------------------------


def _terminal(ws: Workspace) -> tuple[dict[str, dict], dict[str, dict]]:
    """Merge stage results into one record per catalog clip."""
    stage_results = {s: ws.load(s) for s in STAGES[:-1]}
    merged = {}
    for cid, rec in stage_results["ingest"]["clips"].items():
        row = {
            "clip_id": cid,
            "speaker_id": rec["speaker_id"],
            "status": rec["status"],
            "reason": rec["reason"],
            "order": rec["order"],
        }
        for stage in STAGES[1:-1]:
            if row["status"] != "ok":
                break
            entry = stage_results[stage]["clips"].get(cid)
            if entry is None:
                raise StageOrder(f"stage {stage!r} results are stale; rerun it")
            row["status"], row["reason"] = entry["status"], entry["reason"]
            for k in ("trimmed_s", "flagged_short", "quality", "prosody", "normalized"):
                if k in entry:
                    row[k] = entry[k]
        row["status"] = "accepted" if row["status"] == "ok" else "rejected"
        merged[cid] = row
    return merged, stage_results


@_timed("export")
def stage_export(ws: Workspace) -> dict:
    """Write the manifest, audio tree, statistics and run report."""
    cfg = ws.cfg
    merged, stages = _terminal(ws)
    accepted = [r for r in merged.values() if r["status"] == "accepted"]
    manifest = build_manifest(
        ((r["clip_id"], r["speaker_id"], r["normalized"], r["trimmed_s"]) for r in accepted),
        ws.stage_dir("denoise") / "trimmed",
        cfg.split.seed,
        cfg.split.val_permille,
        cfg.target_sample_rate,
    )
    out = Path(cfg.output_dir)
    _ensure_writable(out)
    wavs = out / "wavs"
    if wavs.is_dir():
        for stale in wavs.glob("*.wav"):
            stale.unlink()
    try:
        write_metadata(manifest, out)
    except OSError as exc:
        raise FatalIo(str(exc)) from None
    stats = compute_stats(manifest) if manifest.entries else empty_stats()
    write_stats(stats, out / "stats.json")
    split_of = {e.clip_id: e.split.value for e in manifest.entries}

    clips = []
    for row in sorted(merged.values(), key=lambda r: r["order"]):
        row = {k: v for k, v in row.items() if k != "order"}
        if row["clip_id"] in split_of:
            row["split"] = split_of[row["clip_id"]]
        clips.append(row)
    counts: dict[str, int] = {}
    for row in clips:
        label = row["status"] if row["status"] == "accepted" else row["reason"]
        counts[label] = counts.get(label, 0) + 1
    report = {
        "config": cfg.to_dict(),
        "quality_threshold": cfg.quality.threshold,
        "clips": clips,
        "counts": dict(sorted(counts.items())),
        "row_errors": stages["ingest"]["row_errors"],
        "top_contributors": stages["ingest"]["top_contributors"],
        "cohort": stages["select-speakers"]["cohort"],
        "stats": stats.to_dict(),
        "timing_s": {s: stages[s].get("elapsed_s") for s in STAGES[:-1]},
    }
    # report goes last so its presence marks a complete export
    (out / "report.json").write_text(json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return {"clips": {r["clip_id"]: {"status": r["status"], "reason": r.get("reason")} for r in clips}}


# -- entry points ------------------------------------------------------------------------------


def _check_inputs(cfg: PipelineConfig) -> None:
    if not Path(cfg.input_catalog).is_file():
        raise ConfigError(f"input catalog {cfg.input_catalog} does not exist")
    if not Path(cfg.audio_root).is_dir():
        raise ConfigError(f"audio root {cfg.audio_root} is not a directory")


def run_stage(cfg: PipelineConfig, stage: str, workers: Optional[int] = None) -> dict:
    workers = workers or cfg.workers
    if stage == "ingest":
        _check_inputs(cfg)
    ws = Workspace(cfg)
    _ensure_writable(ws.root)
    if stage == "ingest":
        return stage_ingest(ws)
    if stage == "trim":
        return stage_trim(ws, workers)
    if stage == "denoise":
        return stage_denoise(ws, workers)
    if stage == "score":
        return stage_score(ws, workers)
    if stage == "select-speakers":
        return stage_select_speakers(ws, workers)
    if stage == "normalize-text":
        return stage_normalize_text(ws)
    if stage == "export":
        return stage_export(ws)
    raise ValueError(f"unknown stage {stage!r}")


def run(cfg: PipelineConfig, workers: Optional[int] = None) -> dict:
    """Run every stage in order and return the parsed run report."""
    _check_inputs(cfg)
    _ensure_writable(Path(cfg.output_dir))
    t0 = time.perf_counter()
    for stage in STAGES:
        run_stage(cfg, stage, workers)
    report_path = Path(cfg.output_dir) / "report.json"
    report = json.loads(report_path.read_text(encoding="utf-8"))
    logger.info("pipeline finished in %.2f s", time.perf_counter() - t0)
    return report
