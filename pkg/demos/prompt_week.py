"""Simulate a week of notifications under the politeness policy.

Detected conversations arrive every three hours (plus one burst to hit
the hourly cap) while the probe schedule keeps asking whether a missed
query is due. Prompts must stay out of the 00:00-08:00 quiet window,
at most four per rolling hour, and missed queries should land 80-90
minutes apart unless quiet hours push them to 08:00 sharp.
"""

from collections import Counter

from socialsense.gateway.policy import NotificationPolicy, PromptEvent, PromptScheduler

MS_PER_DAY = 86_400_000
PERIOD = 90_000


def tod(ms: int) -> str:
    s = (ms % MS_PER_DAY) // 1000
    return f"day {ms // MS_PER_DAY} {s // 3600:02d}:{s % 3600 // 60:02d}"


def main() -> None:
    policy = NotificationPolicy()
    start = 9 * 3_600_000
    sched = PromptScheduler(policy, session_start_ms=start, seed=4)
    horizon = start + 7 * MS_PER_DAY

    segments = []
    t = start + 1_020_000
    while t < horizon:
        segments.append((t - 600_000, t))
        t += 3 * 3_600_000
    burst_at = 2 * MS_PER_DAY + 10 * 3_600_000
    segments.extend((s - 300_000, s)
                    for s in range(burst_at, burst_at + 8 * 360_000, 360_000))
    segments.sort(key=lambda ab: ab[1])

    pending = list(segments)
    t = start
    while t < horizon:
        sched.on_probe_start(t)
        while pending and pending[0][1] + 75_000 <= t:
            a, b = pending.pop(0)
            sched.on_segment(a, b, detected_at=b + 75_000)
        t += PERIOD

    kinds = Counter(p.kind for p in sched.issued)
    reasons = Counter(s.reason for s in sched.suppressed)
    print(f"{len(segments)} segments over 7 days -> "
          f"{kinds['detected-interaction']} interaction prompts, "
          f"{kinds['missed-query']} missed queries")
    print("suppressed:", dict(reasons))

    quiet = [p for p in sched.issued
             if p.issued_at % MS_PER_DAY < policy.quiet_end_ms]
    print(f"prompts inside quiet hours: {len(quiet)}")

    missed = sorted(p.issued_at for p in sched.issued
                    if p.kind == "missed-query")
    gaps = [(b - a) / 60_000 for a, b in zip(missed, missed[1:])]
    day_gaps = [g for g in gaps if g <= 90]
    print(f"missed-query gaps: {min(day_gaps):.1f}-{max(day_gaps):.1f} min daytime, "
          f"{sum(1 for g in gaps if g > 90)} overnight deferrals")
    eight_am = [m for m in missed if m % MS_PER_DAY == policy.quiet_end_ms]
    print(f"deferred queries fired exactly at 08:00 on {len(eight_am)} mornings")

    print("\nfirst prompts of day 2 (the burst day is day 2):")
    day2 = [p for p in sched.issued if p.issued_at // MS_PER_DAY == 2][:6]
    for p in day2:
        print(f"  {tod(p.issued_at)}  {p.kind}")


if __name__ == "__main__":
    main()
