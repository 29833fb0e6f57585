"""Turn prompt outcomes and a confusion matrix into the study-style tables.

The first half reproduces a headline sensitivity/specificity row from
raw counts; the second builds a small deployment report out of answered
and ignored prompts plus one manually confirmed interval.
"""

import json

from socialsense.evaluation import PromptOutcome, compute_metrics, deployment_report


def main() -> None:
    import numpy as np

    labels = np.concatenate([np.ones(10_000, int), np.zeros(10_000, int)])
    preds = labels.copy()
    preds[:1514] = 0          # misses among the positives
    preds[10_000:11_384] = 1  # false alarms among the negatives
    rep = compute_metrics(preds, labels)
    print("window-level detector metrics from counts "
          f"tp={rep.tp} fn={rep.fn} tn={rep.tn} fp={rep.fp}:")
    print(f"  accuracy {rep.accuracy:.2f}  sensitivity {rep.sensitivity:.2f}  "
          f"specificity {rep.specificity:.2f}  "
          f"balanced {rep.balanced_accuracy:.2f}")

    nine = 9 * 3_600_000
    outcomes = [
        PromptOutcome("p01", (nine, nine + 600_000), nine + 690_000,
                      answered_at=nine + 750_000, answer="yes", mode="in-person"),
        PromptOutcome("p01", (nine + 7_200_000, nine + 7_500_000),
                      nine + 7_590_000, answered_at=nine + 8_000_000,
                      answer="no", mode=None),
        PromptOutcome("p02", (nine + 3_600_000, nine + 3_900_000),
                      nine + 3_990_000, answered_at=None, answer=None, mode=None),
        PromptOutcome("p02", (nine + 10_800_000, nine + 11_700_000),
                      nine + 11_790_000, answered_at=nine + 11_800_000,
                      answer="yes", mode="virtual"),
    ]
    confirmed = {"p01": [(nine, nine + 600_000)]}
    report = deployment_report(outcomes, confirmed)
    print("\ndeployment report over 4 prompts:")
    print(json.dumps({
        "accuracy_by_participant": report.accuracy_by_participant,
        "overall_accuracy": report.overall_accuracy,
        "latency_buckets": report.latency_buckets,
        "duration_histogram": report.duration_histogram,
        "mode_breakdown": report.mode_breakdown,
        "reconciled": report.reconciled,
    }, indent=2))


if __name__ == "__main__":
    main()
