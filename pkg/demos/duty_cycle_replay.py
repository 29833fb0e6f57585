"""Walk a synthetic half-hour recording through the duty-cycled detector.

Generates a scenario with two planted conversations, prints the probe
schedule the watch would follow, then replays the probes through the
detector and shows which segments come out and when they were confirmed.
"""

from socialsense import detector as det
from socialsense import sensorstream as ss
from socialsense.audiofrontend import SyntheticEmbeddingProvider


def tod(ms: int) -> str:
    s = (ms % 86_400_000) // 1000
    return f"{s // 3600}:{s % 3600 // 60:02d}:{s % 60:02d}"


def main() -> None:
    nine_am = 9 * 3_600_000
    spec = ss.SyntheticScenario(
        duration_ms=1_800_000,
        epoch_ms=nine_am,
        seed=7,
        interactions=(
            ss.PlantedInteraction(nine_am + 300_000, nine_am + 600_000),
            ss.PlantedInteraction(nine_am + 1_200_000, nine_am + 1_400_000),
        ),
    )
    data = ss.generate_scenario(spec)
    duty = data.duty
    print(f"duty cycle: {duty.window_ms // 1000} s window every "
          f"{(duty.window_ms + duty.gap_ms) // 1000} s")
    print(f"{len(data.probes)} probes over {spec.duration_ms // 60_000} min, "
          f"first at {tod(data.probes[0].start)}, "
          f"last at {tod(data.probes[-1].start)}")
    print("planted:", ", ".join(
        f"{tod(p.start_ms)}-{tod(p.end_ms)}" for p in spec.interactions))

    provider = SyntheticEmbeddingProvider(seed=spec.seed)
    result = det.run_replay(data.probes, provider, det.EmbeddingSignFsd())

    print(f"\n{len(result.segments)} segments:")
    for seg in result.segments:
        print(f"  {tod(seg.start_ms)}-{tod(seg.end_ms)} "
              f"({(seg.end_ms - seg.start_ms) // 1000} s over {seg.probes} probes, "
              f"speech fraction {seg.fs_fraction:.2f})")
    print(f"{len(result.rejected)} rejected candidates")

    cued = [e for e in result.probe_log if e.cue_fraction >= 0.5]
    print(f"{len(cued)} of {len(result.probe_log)} probes crossed the cue bar:")
    for e in cued:
        print(f"  probe {e.index:2d} at {tod(e.start)}  "
              f"cue={e.cue_fraction:.2f}  fg_slots={e.fg_slots}")


if __name__ == "__main__":
    main()
