"""Show the two spectrogram paths: 15 s audio and slow wearable channels.

A pure tone should light up the mel band whose center sits nearest its
frequency, and a slow pulse in a 6 Hz sensor series should land in the
matching FFT bin. Both checks are printed alongside the shapes the rest
of the pipeline assumes.
"""

import numpy as np

from socialsense import dsp


def main() -> None:
    cfg = dsp.AudioFeatureConfig()
    t = np.arange(int(cfg.sample_rate * 15.0)) / cfg.sample_rate

    print("log-mel over 15 s of audio:")
    for freq in (250.0, 1000.0, 3000.0):
        mel = dsp.log_mel(np.sin(2 * np.pi * freq * t).astype(np.float64), cfg)
        band = int(np.argmax(mel.frames.mean(axis=0)))
        print(f"  {freq:6.0f} Hz tone -> frames x bands {mel.frames.shape}, "
              f"peak band {band}")

    print("\nsensor spectrogram over 15 s at 6 Hz:")
    ts = np.arange(90) / 6.0
    for freq in (0.75, 1.5):
        spec = dsp.sensor_spectrogram(np.sin(2 * np.pi * freq * ts), 6.0)
        per_bin = spec.matrix.mean(axis=1)
        print(f"  {freq:.2f} Hz pulse -> bins x segments {spec.matrix.shape}, "
              f"peak bin {int(np.argmax(per_bin))} "
              f"(bin width {6.0 / 16:.3f} Hz)")

    print("\nimage normalization for the fusion model:")
    img = dsp.to_image(np.random.default_rng(0).normal(size=(9, 19))).pixels
    print(f"  {img.shape} image, range [{img.min():.3f}, {img.max():.3f}]")
    flat = dsp.to_image(np.full((9, 19), 3.7)).pixels
    print(f"  constant input stays flat: min {flat.min():.1f} max {flat.max():.1f}")

    frames = dsp.frame_signal(np.arange(64.0), win=16, hop=8, pad_final=True)
    spec = dsp.stft(np.arange(64.0), win=16, hop=8, n_fft=16,
                    window="rectangular")
    m = np.abs(spec) ** 2
    energy = (m[:, 0] + 2 * m[:, 1:-1].sum(axis=1) + m[:, -1]) / 16
    print(f"\nper-frame energy agrees with the time domain to "
          f"{np.max(np.abs(energy - (frames ** 2).sum(axis=1))):.2e}")


if __name__ == "__main__":
    main()
