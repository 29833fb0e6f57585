"""Command-line entry points.

Subcommands:
  synth      generate a synthetic scenario's stream files
  replay     run detection over a scenario directory, write segments
  serve      start the annotation gateway HTTP API over a replay session
  evaluate   build a deployment report from segments plus the annotation log
  train-mm   train the multimodal fusion model on synthetic data
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import detector as det
from . import sensorstream as ss
from .audiofrontend import SyntheticEmbeddingProvider, Vocabulary
from .evaluation import PromptOutcome, added_overlap, deployment_report
from .multimodal import (
    FusionConfig,
    TrainConfig,
    run_lopocv,
    synthetic_fusion_dataset,
)


def _load_scenario_dir(directory: str):
    with open(os.path.join(directory, "scenario.json"), encoding="utf-8") as fh:
        spec = ss.parse_scenario(json.load(fh))
    streams = ss.read_streams(directory)
    duty = ss.DutyCycleConfig()
    schedule = ss.schedule_probes(spec.epoch_ms, spec.duration_ms, duty)
    probes = ss.fill_probes(streams, schedule)
    return ss.ScenarioData(spec=spec, duty=duty, probes=probes, truth=[])


def cmd_synth(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        raw = json.load(fh)
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = ss.parse_scenario(raw)
    data = ss.generate_scenario(spec)
    os.makedirs(args.out, exist_ok=True)
    ss.write_streams(args.out, data.streams())
    with open(os.path.join(args.out, "scenario.json"), "w", encoding="utf-8") as fh:
        json.dump(raw, fh, indent=1)
    with open(os.path.join(args.out, "truth.jsonl"), "w", encoding="utf-8") as fh:
        for t in data.truth:
            fh.write(json.dumps({
                "probe_index": t.probe_index, "slot_index": t.slot_index,
                "t_ms": t.t_ms, "cue": t.cue, "fg": t.fg, "class": t.class_name,
            }) + "\n")
    Vocabulary.default().save(os.path.join(args.out, "vocabulary.txt"))
    print(f"wrote {len(data.probes)} probes to {args.out}")
    return 0


def cmd_replay(args) -> int:
    data = _load_scenario_dir(args.scenario)
    cfg = det.DetectorConfig()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = det.DetectorConfig(**json.load(fh))
    provider = SyntheticEmbeddingProvider(seed=data.spec.seed)
    result = det.run_replay(data.probes, provider, det.EmbeddingSignFsd(), cfg)
    det.write_segments(args.out, result.segments)
    print(f"{len(result.segments)} segments, {len(result.rejected)} rejected, "
          f"{len(result.probe_log)} probes")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .gateway import AnnotationStore, ReplaySession
    from .gateway.api import create_app

    data = _load_scenario_dir(args.replay)
    provider = SyntheticEmbeddingProvider(seed=data.spec.seed)
    store = AnnotationStore.open(args.store or os.path.join(args.replay, "annotations",
                                                            "events.jsonl"))
    session = ReplaySession(data, provider, det.EmbeddingSignFsd(), store,
                            seed=data.spec.seed)
    app = create_app(session)
    if args.static:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=args.static, html=True),
                  name="console")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_evaluate(args) -> int:
    from .gateway import AnnotationStore

    segments = det.read_segments(args.segments)
    store = AnnotationStore.open(args.annotations)
    outcomes = []
    confirmed: list[tuple[int, int]] = []
    for row in store.intervals():
        if row["provenance"] == "user-add" or row.get("history"):
            confirmed.append((row["start_ms"], row["end_ms"]))
    for pid, prompt in sorted(store.prompts.items()):
        if prompt["kind"] != "detected-interaction":
            continue
        resp = store.latest_response(pid)
        outcomes.append(PromptOutcome(
            participant="p00",
            segment=tuple(prompt["interval"]),
            issued_at=prompt["issued_at"],
            answered_at=None if resp is None else resp.get("received_at"),
            answer=None if resp is None else resp.get("answer"),
            mode=None if resp is None else resp.get("mode"),
        ))
    report = deployment_report(outcomes, {"p00": confirmed})
    autos = [(s.start_ms, s.end_ms) for s in segments]
    adds = [(r["start_ms"], r["end_ms"]) for r in store.intervals()
            if r["provenance"] == "user-add"]
    rows = added_overlap(adds, autos)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump({
            "accuracy_by_participant": report.accuracy_by_participant,
            "overall_accuracy": report.overall_accuracy,
            "latency_buckets": report.latency_buckets,
            "duration_histogram": report.duration_histogram,
            "mode_breakdown": report.mode_breakdown,
            "reconciled": report.reconciled,
            "added_overlap": [
                {"added": list(r.added), "criterion1": r.criterion1,
                 "criterion2": r.criterion2, "overlap": r.overlap}
                for r in rows
            ],
        }, fh, indent=1)
    print(f"report written to {args.out}")
    return 0


def cmd_train_mm(args) -> int:
    modalities = tuple(m.strip() for m in args.modalities.split(",") if m.strip())
    samples = synthetic_fusion_dataset(participants=args.participants,
                                       per_participant=args.per_participant,
                                       modalities=modalities, hw=args.image_size,
                                       seed=args.seed)
    cfg = FusionConfig(modalities=modalities, seed=args.seed)
    tcfg = TrainConfig(seed=args.seed, max_epochs=args.epochs)
    if args.plan != "lopocv":
        print(f"unknown plan {args.plan!r}", file=sys.stderr)
        return 2
    only = None if args.folds is None else sorted(
        {s.participant for s in samples})[:args.folds]
    results = run_lopocv(samples, cfg, tcfg, only_tests=only)
    correct = 0
    total = 0
    for r in results:
        pred = (r.probs >= 0.5).astype(int)
        correct += int(np.sum(pred == r.labels))
        total += len(r.labels)
        print(f"fold test={r.split.test} val={r.split.val} "
              f"acc={np.mean(pred == r.labels):.3f} "
              f"epochs={r.history.stopped_epoch + 1}")
    print(f"overall accuracy {correct / total:.3f} over {total} samples")
    if args.out:
        from .multimodal import make_lopo_plan, train_fusion

        split = make_lopo_plan(samples)[0]
        train = [s for s in samples if s.participant in split.train]
        val = [s for s in samples if s.participant in split.val]
        model, _ = train_fusion(train, val, cfg, tcfg)
        model.save(args.out)
        print(f"checkpoint written to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="socialsense")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic scenario streams")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("replay", help="run detection over a scenario directory")
    p.add_argument("--scenario", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="serve the annotation gateway")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--replay", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", default=None)
    p.add_argument("--static", default=None,
                   help="directory of console assets to serve at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("evaluate", help="deployment report from segments + annotations")
    p.add_argument("--segments", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("train-mm", help="train the fusion model on synthetic data")
    p.add_argument("--modalities", default="accel,audio")
    p.add_argument("--plan", default="lopocv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--participants", type=int, default=4)
    p.add_argument("--per-participant", type=int, default=16)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--folds", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train_mm)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
