"""Train the two-branch spectrogram fusion model on one held-out person.

First verifies the hand-written backprop against finite differences,
then runs a single leave-one-participant-out fold on synthetic
spectrogram images and prints the training curve and held-out accuracy.
"""

import numpy as np

from socialsense.multimodal import (
    FusionConfig,
    TrainConfig,
    gradient_check_fusion,
    make_lopo_plan,
    run_lopocv,
    synthetic_fusion_dataset,
)


def main() -> None:
    for loss in ("focal", "bce"):
        err = gradient_check_fusion(loss=loss, hw=8, batch=8, seed=0)
        print(f"gradient check ({loss}): max relative error {err:.2e}")

    samples = synthetic_fusion_dataset(participants=5, per_participant=24,
                                       hw=24, seed=4)
    plan = make_lopo_plan(samples)
    print(f"\n{len(samples)} samples from {len(plan)} participants; "
          f"fold 0 holds out {plan[0].test} and validates on {plan[0].val}")

    cfg = FusionConfig(entry_channels=4, block_channels=(4, 8, 8),
                       block_strides=(2, 2, 2), dense1_units=16, dense2_units=8,
                       seed=0)
    tcfg = TrainConfig(batch_size=16, max_epochs=30, patience=10, seed=0,
                       augment=None)
    fold = run_lopocv(samples, cfg, tcfg, only_tests=[plan[0].test])[0]

    hist = fold.history
    print(f"stopped after epoch {hist.stopped_epoch + 1} "
          f"(best validation at epoch {hist.best_epoch + 1}, "
          f"{hist.wall_seconds:.1f} s)")
    for e in range(0, hist.stopped_epoch + 1, max(1, (hist.stopped_epoch + 1) // 5)):
        print(f"  epoch {e + 1:2d}  train {hist.train_loss[e]:.4f}  "
              f"val {hist.val_loss[e]:.4f}")

    pred = (fold.probs >= 0.5).astype(int)
    acc = float(np.mean(pred == fold.labels)) * 100
    print(f"held-out participant {fold.split.test}: "
          f"{acc:.1f}% on {len(fold.labels)} samples")


if __name__ == "__main__":
    main()
