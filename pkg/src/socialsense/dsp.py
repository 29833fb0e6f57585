"""Signal processing for audio and wrist-sensor streams.

Audio is reduced to log-mel spectrograms (16 kHz, 25 ms windows, 10 ms hop,
64 HTK mel bands spanning 125 Hz to 7.5 kHz). Low-rate wrist signals get a
short-window magnitude spectrogram (16-sample segments, FFT 16, overlap 12).
Either matrix can be rendered to a fixed 112x112 min-max-normalised image for
the fusion network. PPG traces are detrended and band-passed before use.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, detrend, sosfiltfilt

from .errors import (
    InsufficientSamplesError,
    InvalidConfigError,
    InvalidDataError,
    ShapeError,
)

LOG_FLOOR = 1e-6

SPGM_MAGIC = b"SPGM"
SPGM_VERSION = 1


@dataclass(frozen=True)
class AudioFeatureConfig:
    """Log-mel extraction parameters."""

    sample_rate: int = 16_000
    win_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 512
    n_mels: int = 64
    fmin: float = 125.0
    fmax: float = 7_500.0

    @property
    def win_length(self) -> int:
        return int(round(self.sample_rate * self.win_ms / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))


@dataclass(frozen=True)
class LogMelSpectrogram:
    """frames is (n_frames, n_mels); natural log of mel energies."""

    frames: np.ndarray
    sample_rate: int
    hop_ms: float


@dataclass(frozen=True)
class SensorSpectrogram:
    """matrix is (n_freq_bins, n_time_frames) of one-sided magnitudes."""

    matrix: np.ndarray
    sample_rate_hz: float
    fft_size: int


@dataclass(frozen=True)
class SpectrogramImage:
    """112x112 pixels, min-max normalised to [0, 1]."""

    pixels: np.ndarray


def hz_to_mel(f):
    """HTK mel scale."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def frame_signal(x: np.ndarray, win: int, hop: int, pad_final: bool) -> np.ndarray:
    """Slice a 1-d signal into frames of length win every hop samples.

    With pad_final the last partial frame is zero-padded so that
    n_frames = ceil((n - win) / hop) + 1; without it the remainder is dropped
    and n_frames = floor((n - win) / hop) + 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected 1-d signal, got shape {x.shape}")
    n = x.shape[0]
    if n == 0 or (not pad_final and n < win):
        raise InsufficientSamplesError(f"{n} samples is too short for win={win}")
    if pad_final:
        n_frames = max(1, int(math.ceil((n - win) / hop)) + 1)
        needed = (n_frames - 1) * hop + win
        if needed > n:
            x = np.concatenate([x, np.zeros(needed - n)])
    else:
        n_frames = (n - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def stft(x, win: int, hop: int, n_fft: int, window: str = "hann",
         pad_final: bool = True) -> np.ndarray:
    """Short-time Fourier transform, one-sided.

    Returns a complex (n_frames, n_fft // 2 + 1) matrix. Frames shorter than
    n_fft are zero-padded on the right before the transform.
    """
    if n_fft < win:
        raise InvalidConfigError(f"n_fft={n_fft} smaller than window {win}")
    frames = frame_signal(x, win, hop, pad_final)
    if window == "hann":
        frames = frames * np.hanning(win)[None, :]
    elif window != "rectangular":
        raise InvalidConfigError(f"unknown window {window!r}")
    return np.fft.rfft(frames, n=n_fft, axis=1)


def mel_filterbank(cfg: AudioFeatureConfig) -> np.ndarray:
    """Triangular HTK mel filters over one-sided FFT bin frequencies.

    Returns (n_mels, n_fft // 2 + 1).
    """
    if not 0 <= cfg.fmin < cfg.fmax <= cfg.sample_rate / 2:
        raise InvalidConfigError(
            f"mel range [{cfg.fmin}, {cfg.fmax}] invalid for fs={cfg.sample_rate}"
        )
    n_bins = cfg.n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * cfg.sample_rate / cfg.n_fft
    mel_pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    lower, center, upper = hz_pts[:-2], hz_pts[1:-1], hz_pts[2:]
    up = (bin_hz[None, :] - lower[:, None]) / (center - lower)[:, None]
    down = (upper[:, None] - bin_hz[None, :]) / (upper - center)[:, None]
    return np.maximum(0.0, np.minimum(up, down))


def log_mel(audio, cfg: AudioFeatureConfig | None = None) -> LogMelSpectrogram:
    """Log-mel spectrogram of a mono 16 kHz waveform.

    Hann-windowed STFT magnitudes pass through the mel filterbank and a
    log(x + 1e-6) compression. A trailing partial window is zero-padded, so
    15 s of 16 kHz audio yields 1499 frames.

    Args:
        audio: 1-d float waveform at cfg.sample_rate.
        cfg: extraction parameters; defaults match the deployed frontend.

    Returns:
        LogMelSpectrogram with frames of shape (n_frames, n_mels).
    """
    cfg = cfg or AudioFeatureConfig()
    spec = stft(audio, cfg.win_length, cfg.hop_length, cfg.n_fft,
                window="hann", pad_final=True)
    fb = mel_filterbank(cfg)
    energies = np.abs(spec) @ fb.T
    return LogMelSpectrogram(
        frames=np.log(energies + LOG_FLOOR),
        sample_rate=cfg.sample_rate,
        hop_ms=cfg.hop_ms,
    )


def sensor_spectrogram(series, sample_rate_hz: float, seg_len: int = 16,
                       fft_size: int = 16, overlap: int = 12) -> SensorSpectrogram:
    """Magnitude spectrogram of a rate-normalised wrist signal.

    Rectangular 16-sample segments with 12-sample overlap, one-sided FFT.
    A 90-sample series (15 s at 6 Hz) gives a 9 x 19 matrix; trailing samples
    that do not fill a segment are dropped.

    Args:
        series: 1-d signal, already at a fixed rate.
        sample_rate_hz: that rate, for frequency bookkeeping.
        seg_len: samples per segment.
        fft_size: FFT length, at least seg_len.
        overlap: samples shared by consecutive segments.

    Returns:
        SensorSpectrogram with matrix (fft_size // 2 + 1, n_frames).
    """
    if not 0 <= overlap < seg_len:
        raise InvalidConfigError(f"overlap={overlap} must lie in [0, seg_len)")
    if fft_size < seg_len:
        raise InvalidConfigError(f"fft_size={fft_size} smaller than seg_len={seg_len}")
    hop = seg_len - overlap
    frames = frame_signal(series, seg_len, hop, pad_final=False)
    mags = np.abs(np.fft.rfft(frames, n=fft_size, axis=1))
    return SensorSpectrogram(matrix=mags.T, sample_rate_hz=sample_rate_hz,
                             fft_size=fft_size)


def bilinear_resize(matrix, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with corner-aligned coordinates and edge clamping.

    Output pixel (i, j) samples the input at
    (i * (H-1) / (out_h-1), j * (W-1) / (out_w-1)); a size-1 axis replicates.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ShapeError(f"expected a non-empty 2-d matrix, got shape {m.shape}")
    if out_h < 1 or out_w < 1:
        raise InvalidConfigError("output size must be at least 1x1")

    def axis_coords(n_in, n_out):
        if n_out == 1 or n_in == 1:
            return np.zeros(n_out), np.zeros(n_out, dtype=np.int64)
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        base = np.minimum(np.floor(pos).astype(np.int64), n_in - 2)
        return pos - base, base

    wr, r0 = axis_coords(m.shape[0], out_h)
    wc, c0 = axis_coords(m.shape[1], out_w)
    r1 = np.minimum(r0 + 1, m.shape[0] - 1)
    c1 = np.minimum(c0 + 1, m.shape[1] - 1)
    # interpolation is separable: rows first, then columns
    rows = m[r0, :] * (1 - wr)[:, None] + m[r1, :] * wr[:, None]
    return rows[:, c0] * (1 - wc)[None, :] + rows[:, c1] * wc[None, :]


def to_image(matrix, out_h: int = 112, out_w: int = 112) -> SpectrogramImage:
    """Resize a spectrogram matrix to out_h x out_w and min-max normalise.

    A constant input has no range and maps to an all-zero image.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.size and m.min() == m.max():
        # constant input: resize roundoff would otherwise be normalised
        # up to full range
        return SpectrogramImage(pixels=np.zeros((out_h, out_w)))
    resized = bilinear_resize(m, out_h, out_w)
    lo = resized.min()
    span = resized.max() - lo
    if span == 0.0:
        return SpectrogramImage(pixels=np.zeros_like(resized))
    return SpectrogramImage(pixels=(resized - lo) / span)


def ppg_clean(series, fs: float = 25.0, low_hz: float = 0.5,
              high_hz: float = 8.0) -> np.ndarray:
    """Detrend a PPG trace and band-pass it to the pulsatile band.

    Linear detrend followed by a 2nd-order Butterworth band-pass applied
    forward and backward (zero phase). Requires at least 3 s of samples.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected 1-d series, got shape {x.shape}")
    if fs <= 0 or not 0 < low_hz < high_hz < fs / 2:
        raise InvalidConfigError(
            f"band [{low_hz}, {high_hz}] invalid for fs={fs}"
        )
    if x.shape[0] < int(3 * fs):
        raise InsufficientSamplesError(
            f"PPG cleaning needs >= 3 s ({int(3 * fs)} samples), got {x.shape[0]}"
        )
    sos = butter(2, [low_hz, high_hz], btype="bandpass", fs=fs, output="sos")
    return sosfiltfilt(sos, detrend(x, type="linear"))


def write_spectrogram(path: str, matrix) -> None:
    """Write a spectrogram matrix in the SPGM binary layout.

    Magic "SPGM", u16 version, u32 rows, u32 cols, then row-major float32,
    all little-endian.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected 2-d matrix, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(SPGM_MAGIC)
        fh.write(struct.pack("<HII", SPGM_VERSION, m.shape[0], m.shape[1]))
        fh.write(np.ascontiguousarray(m, dtype="<f4").tobytes())


def read_spectrogram(path: str) -> np.ndarray:
    """Read an SPGM file back as a float64 (rows, cols) matrix."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header = struct.calcsize("<HII")
    if len(blob) < 4 + header or blob[:4] != SPGM_MAGIC:
        raise InvalidDataError(f"{path}: not an SPGM file")
    version, rows, cols = struct.unpack_from("<HII", blob, 4)
    if version != SPGM_VERSION:
        raise InvalidDataError(f"{path}: unsupported SPGM version {version}")
    expect = rows * cols * 4
    payload = blob[4 + header:]
    if len(payload) != expect:
        raise InvalidDataError(
            f"{path}: payload is {len(payload)} bytes, expected {expect}"
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return data.reshape(rows, cols)
