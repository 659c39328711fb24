"""Command-line entry points.

Every command prints JSON (or plain text for ``restore``) on stdout. Errors
are reported on stderr as ``voicemask: <stage>: <message>`` with exit status
1 for processing failures and 2 for bad configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import praka, synth
from . import warp as W
from .audio import AudioClip, WavFormatError, read_wav, stft, write_wav
from .bench import benchmark
from .conversion import (ConversionConfig, attack_reverse, convert_voice, sanitize_voice,
                         spectral_log_distance)
from .keywords import (RestoreWarning, SpotterConfig, TemplateStore, confirm_hit,
                       load_keyword_config, load_safeword_bank, read_substitution_log,
                       restore_transcript, spot_keywords, substitute_keywords,
                       write_substitution_log)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


class StageError(Exception):
    def __init__(self, stage: str, message: str, status: int = EXIT_FAILURE):
        super().__init__(message)
        self.stage = stage
        self.status = status


class _Stage:
    """Context manager that tags any exception with the pipeline stage it came from."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, StageError):
            return False
        config_like = isinstance(exc, (W.ConfigurationError, FileNotFoundError, WavFormatError,
                                       json.JSONDecodeError, KeyError, ValueError))
        raise StageError(self.name, f"{type(exc).__name__}: {exc}",
                         EXIT_CONFIG if config_like else EXIT_FAILURE) from exc


def _dump(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# shared option handling
# ---------------------------------------------------------------------------

def _add_conversion_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="conversion config JSON")
    p.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    p.add_argument("--policy", choices=[k.value for k in W.KindPolicy])
    p.add_argument("--direction", choices=[d.value for d in W.Direction])
    p.add_argument("--segmented", action="store_true", help="random per-segment warps")


def _conversion_config(args) -> ConversionConfig:
    with _Stage("config"):
        d = json.loads(args.config.read_text(encoding="utf-8")) if args.config else {}
        if args.seed is not None:
            d["seed"] = args.seed
        if args.policy:
            d["policy"] = args.policy
        if args.direction:
            d["direction"] = args.direction
        if args.segmented:
            d["segment_randomization"] = True
        return ConversionConfig.from_dict(d)


def _read_clip(path: Path) -> AudioClip:
    with _Stage("read"):
        return read_wav(path)


def _load_templates(args):
    """(store, categories) from --templates and/or --keywords."""
    store, categories = TemplateStore(), {}
    with _Stage("keywords"):
        if getattr(args, "keywords", None):
            for e in load_keyword_config(args.keywords):
                categories[e.label] = e.category
                store.enroll(e.label, read_wav(e.clip))
        if getattr(args, "templates", None) and Path(args.templates).is_file():
            for t in TemplateStore.load(args.templates):
                store.put(t)
    return store, categories


def _spotter(args) -> SpotterConfig:
    with _Stage("config"):
        return SpotterConfig() if args.theta is None else SpotterConfig(theta=args.theta)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_sanitize(args) -> int:
    paths = [args.input, args.output, args.log]
    if len({Path(p).resolve() for p in paths}) != len(paths):
        raise StageError("config", "input, output and log paths must be distinct", EXIT_CONFIG)
    config = _conversion_config(args)
    store, categories = _load_templates(args)
    bank = None
    if args.safewords is not None or len(store):
        with _Stage("safewords"):
            if args.safewords is None:
                raise W.ConfigurationError("keywords given without a safeword bank (--safewords)")
            bank = load_safeword_bank(args.safewords)
    clip = _read_clip(args.input)
    spotter = _spotter(args)
    templates = store.snapshot()
    dets = []
    if templates:
        with _Stage("spot"):
            feats = stft(clip)
            dets = spot_keywords(feats, templates, spotter)
    rng = config.rng()
    with _Stage("substitute"):
        labels = {t.keyword_id: t.label for t in templates}
        subbed, records = substitute_keywords(clip, dets, categories, bank, rng,
                                              utterance_id=Path(args.input).stem, labels=labels) \
            if dets else (clip, [])
    with _Stage("convert"):
        out, segments = sanitize_voice(subbed, config, rng)
    with _Stage("write"):
        write_wav(out, args.output)
        write_substitution_log(records, args.log)
    if args.confirm_hits and dets:
        with _Stage("evolve"):
            if args.templates is None:
                raise W.ConfigurationError("--confirm-hits needs --templates to store the update")
            for d in dets:
                t = store.by_id(d.keyword_id)
                store.put(confirm_hit(t, feats, d))
            store.save(args.templates)
    summary = {
        "output": str(args.output),
        "log": str(args.log),
        "detections": [{"keyword": labels.get(d.keyword_id, d.keyword_id), "start_s": d.start_s,
                        "end_s": d.end_s, "distance": d.distance} for d in dets],
        "substitutions": len(records),
        "segments": [s.to_dict() for s in segments],
        "config": config.to_dict(),
    }
    if args.bench:
        with _Stage("bench"):
            summary["bench"] = benchmark(clip, config, templates, categories, bank, spotter,
                                         labels=labels).to_dict()
    _dump(summary)
    return EXIT_OK


def cmd_restore(args) -> int:
    with _Stage("read"):
        text = Path(args.input).read_text(encoding="utf-8")
        records = read_substitution_log(args.log)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RestoreWarning)
        out = restore_transcript(text, records)
    for w in caught:
        sys.stderr.write(f"voicemask: restore: warning: {w.message}\n")
    sys.stdout.write(out)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _conversion_config(args)
    clip = _read_clip(args.input)
    if clip.duration_s < 1.0:
        raise StageError("bench", "benchmark clip must be at least 1 s long", EXIT_CONFIG)
    store, categories = _load_templates(args)
    bank = None
    if args.safewords is not None:
        with _Stage("safewords"):
            bank = load_safeword_bank(args.safewords)
    with _Stage("bench"):
        rep = benchmark(clip, config, store.snapshot(), categories, bank, _spotter(args),
                        repeats=args.repeats,
                        labels={t.keyword_id: t.label for t in store})
    _dump(rep.to_dict())
    return EXIT_OK


def cmd_praka_simulate(args) -> int:
    with _Stage("config"):
        if not 0 < args.p < 1:
            raise ValueError("p must lie strictly between 0 and 1")
        if args.users < 1:
            raise ValueError("need at least one user")
        vocab = praka.load_vocabulary(args.vocab)
        rng = np.random.default_rng(args.seed)
        if args.model:
            model = json.loads(Path(args.model).read_text(encoding="utf-8"))
            truth = {}
            for w in vocab:
                v = model.get(w, 0)
                truth[w] = int(round(v * args.users)) if isinstance(v, float) and v <= 1 \
                    else int(v)
        else:
            truth = {w: int(rng.integers(0, args.users + 1)) for w in vocab}
    with _Stage("simulate"):
        reports = praka.simulate_reports(vocab, truth, args.users, args.p, rng)
        if args.reports:
            praka.write_reports(reports, args.reports)
        estimates = praka.aggregate(reports, args.p)
        eps_count = 0.05 * args.users
        rows = []
        for est in estimates:
            d = est.to_dict()
            d["true_count"] = truth[est.word]
            d["error_bound"] = {"eps": eps_count,
                                "probability": praka.error_bound(est.N, truth[est.word],
                                                                 args.p, eps_count)}
            rows.append(d)
    _dump({"p": args.p, "epsilon": praka.epsilon(args.p), "num_users": args.users,
           "seed": args.seed, "words": rows})
    return EXIT_OK


def cmd_praka_aggregate(args) -> int:
    with _Stage("read"):
        reports = praka.read_reports(args.input)
    with _Stage("aggregate"):
        _dump([e.to_dict() for e in praka.aggregate(reports, args.p)])
    return EXIT_OK


def _demo_clip(args) -> AudioClip:
    if args.input:
        return _read_clip(args.input)
    return AudioClip(synth.vowel(120.0, 1.0, f0_jitter=0.02, seed=args.seed or 0))


def cmd_attack_demo(args) -> int:
    if args.mode == "reverse":
        clip = _demo_clip(args)
        with _Stage("attack"):
            conv = convert_voice(clip, W.Bilinear(args.alpha))
            rev = attack_reverse(conv, args.alpha)
            wrong = attack_reverse(conv, args.wrong_alpha)
            d_conv = spectral_log_distance(clip, conv)
            d_rev = spectral_log_distance(clip, rev)
            d_wrong = spectral_log_distance(clip, wrong)
        _dump({"mode": "reverse", "alpha": args.alpha,
               "distance_converted_db": d_conv, "distance_reversed_db": d_rev,
               "recovery_ratio": d_rev / d_conv,
               "wrong_alpha": args.wrong_alpha, "distance_wrong_alpha_db": d_wrong})
    else:
        with _Stage("attack"):
            grid = W.default_search_grid(args.grid_step, args.grid_limit)
            bil = W.Bilinear(args.alpha)
            comp = W.Compound(args.alpha_compound, args.beta)
            out = {"mode": "reduce", "grid_step": args.grid_step, "grid_limit": args.grid_limit}
            for name, kind in (("bilinear", bil), ("compound", comp)):
                out[name] = {**W.kind_to_dict(kind),
                             "distortion": W.distortion_strength(kind),
                             "residual_bilinear_family": W.attack_reduce_residual(kind, grid),
                             "residual_quadratic_family":
                                 W.attack_reduce_residual(kind, grid, "quadratic")}
        _dump(out)
    return EXIT_OK


def cmd_enroll(args) -> int:
    store, categories = _load_templates(args)
    if not len(store):
        raise StageError("keywords", "no keywords to enroll", EXIT_CONFIG)
    with _Stage("write"):
        store.save(args.templates)
    _dump({"templates": str(args.templates),
           "keywords": [{"label": t.label, "category": categories.get(t.label),
                         "rows": len(t.x), "hit_count": t.hit_count} for t in store]})
    return EXIT_OK


def cmd_spot(args) -> int:
    store, _ = _load_templates(args)
    if not len(store):
        raise StageError("keywords", "no templates (use --keywords or --templates)", EXIT_CONFIG)
    clip = _read_clip(args.input)
    spotter = _spotter(args)
    with _Stage("spot"):
        dets = spot_keywords(stft(clip), store.snapshot(), spotter)
    labels = {t.keyword_id: t.label for t in store}
    _dump({"theta": spotter.theta, "window_stretch": list(spotter.window_stretch),
           "detections": [{"keyword": labels.get(d.keyword_id, d.keyword_id),
                           "start_s": d.start_s, "end_s": d.end_s, "distance": d.distance}
                          for d in dets]})
    return EXIT_OK


def cmd_convert(args) -> int:
    if Path(args.input).resolve() == Path(args.output).resolve():
        raise StageError("config", "input and output must differ", EXIT_CONFIG)
    config = _conversion_config(args)
    clip = _read_clip(args.input)
    with _Stage("convert"):
        out, segments = sanitize_voice(clip, config)
    with _Stage("write"):
        write_wav(out, args.output)
    _dump({"output": str(args.output), "segments": [s.to_dict() for s in segments],
           "config": config.to_dict()})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="voicemask", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sanitize", help="substitute keywords, then convert the voice")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--log", type=Path, required=True, help="substitution log (JSON lines)")
    p.add_argument("--keywords", type=Path, help="keyword config JSON")
    p.add_argument("--templates", type=Path, help="template store (.npz)")
    p.add_argument("--safewords", type=Path, help="safeword bank directory")
    p.add_argument("--theta", type=float)
    p.add_argument("--bench", action="store_true", help="add a per-stage CPU benchmark")
    p.add_argument("--confirm-hits", action="store_true",
                   help="fold every detection back into its template")
    _add_conversion_opts(p)
    p.set_defaults(func=cmd_sanitize)

    p = sub.add_parser("restore", help="put original keywords back into a transcript")
    p.add_argument("--input", type=Path, required=True, help="transcript text file")
    p.add_argument("--log", type=Path, required=True)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("bench", help="realtime coefficient per stage")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--keywords", type=Path)
    p.add_argument("--templates", type=Path)
    p.add_argument("--safewords", type=Path)
    p.add_argument("--theta", type=float)
    p.add_argument("--repeats", type=int, default=5)
    _add_conversion_opts(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("praka-simulate", help="simulate randomized keyword reports")
    p.add_argument("--vocab", type=Path, required=True, help="one word per line")
    p.add_argument("--users", type=int, default=10000)
    p.add_argument("--model", type=Path,
                   help="JSON word -> sensitive count (int) or fraction (float <= 1)")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reports", type=Path, help="also write the reports (JSON lines)")
    p.set_defaults(func=cmd_praka_simulate)

    p = sub.add_parser("praka-aggregate", help="estimate counts from a report file")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--p", type=float, required=True)
    p.set_defaults(func=cmd_praka_aggregate)

    p = sub.add_parser("attack-demo", help="reverse / reduce attacks on the warp")
    p.add_argument("--mode", choices=["reverse", "reduce"], required=True)
    p.add_argument("--input", type=Path, help="clip for reverse mode (default: synthetic vowel)")
    p.add_argument("--alpha", type=float, default=0.09)
    p.add_argument("--wrong-alpha", type=float, default=0.05)
    p.add_argument("--alpha-compound", type=float, default=0.06)
    p.add_argument("--beta", type=float, default=0.25)
    p.add_argument("--grid-step", type=float, default=1e-3)
    p.add_argument("--grid-limit", type=float, default=0.3)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_attack_demo)

    p = sub.add_parser("enroll", help="build a template store from a keyword config")
    p.add_argument("--keywords", type=Path, required=True)
    p.add_argument("--templates", type=Path, required=True)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("spot", help="list keyword detections in a clip")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--keywords", type=Path)
    p.add_argument("--templates", type=Path)
    p.add_argument("--theta", type=float)
    p.set_defaults(func=cmd_spot)

    p = sub.add_parser("convert", help="voice conversion only")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    _add_conversion_opts(p)
    p.set_defaults(func=cmd_convert)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        sys.stderr.write(f"voicemask: {exc.stage}: {exc}\n")
        return exc.status


if __name__ == "__main__":
    sys.exit(main())
