"""Raw-recording conditioning: low-pass filter bank, mu-law companding, windowing.

The chain runs in a fixed order (filter, normalize, segment) and produces
model-ready windows whose values lie in [-1, 1].  Three causal Butterworth
low-passes of order 1, 3 and 5 (same cutoff) are applied per sensor and
stacked as channels, so each window is a sensors x samples x 3 block.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy.signal import sosfilt, sosfiltfilt, zpk2sos

__all__ = [
    "FilterSpec",
    "MuLawParams",
    "Segment",
    "PipelineConfig",
    "design_butterworth_lowpass",
    "filter_bank",
    "fit_mu_law",
    "mu_law_normalize",
    "segment_windows",
    "FILTER_ORDERS",
    "N_SENSORS",
]

FILTER_ORDERS = (1, 3, 5)
N_SENSORS = 12


@dataclass(frozen=True)
class FilterSpec:
    """Digital IIR low-pass: expanded b/a coefficients plus the factored form.

    ``b``/``a`` are the usual numerator/denominator arrays (a[0] == 1).  The
    factored zeros/poles/gain are kept as well because at 1 Hz cutoff on a
    2 kHz rate the expanded polynomials are too ill-conditioned to either
    evaluate the response or run a direct-form recursion accurately; the
    filter is therefore applied as cascaded second-order sections.
    """

    order: int
    cutoff_hz: float
    sample_rate_hz: float
    b: np.ndarray
    a: np.ndarray
    zeros: np.ndarray
    poles: np.ndarray
    gain: float

    def sos(self) -> np.ndarray:
        return zpk2sos(self.zeros, self.poles, self.gain)

    def response_at(self, freq_hz: float) -> complex:
        """Complex frequency response H(e^{jw}), evaluated from the factored form."""
        z = np.exp(1j * 2.0 * np.pi * freq_hz / self.sample_rate_hz)
        num = np.prod(z - self.zeros)
        den = np.prod(z - self.poles)
        return complex(self.gain * num / den)


def design_butterworth_lowpass(order: int, cutoff_hz: float, sample_rate_hz: float) -> FilterSpec:
    """Design a digital Butterworth low-pass via the bilinear transform.

    The analog prototype's cutoff is pre-warped so the digital magnitude
    response crosses exactly -3 dB at ``cutoff_hz``; the gain is then set for
    unit DC response.
    """
    if order not in FILTER_ORDERS:
        raise ValueError(f"filter order must be one of {FILTER_ORDERS}, got {order}")
    if not 0.0 < cutoff_hz < sample_rate_hz / 2.0:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must lie in (0, Nyquist={sample_rate_hz / 2} Hz)")

    # Analog prototype poles on the unit circle (left half-plane), scaled by
    # the pre-warped cutoff.
    k = np.arange(1, order + 1)
    prototype = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    warped = 2.0 * sample_rate_hz * np.tan(np.pi * cutoff_hz / sample_rate_hz)
    poles_s = warped * prototype

    # Bilinear map s -> z; all analog zeros (at infinity) land on z = -1.
    fs2 = 2.0 * sample_rate_hz
    poles_z = (fs2 + poles_s) / (fs2 - poles_s)
    zeros_z = -np.ones(order)
    # Unit gain at z = 1 (DC), computed in the factored form.
    gain = float(np.real(np.prod(1.0 - poles_z) / np.prod(1.0 - zeros_z)))

    a = np.real(np.poly(poles_z))
    b = gain * np.real(np.poly(zeros_z))
    b *= a.sum() / b.sum()  # pin the coefficient-array DC gain exactly

    if np.abs(poles_z).max() >= 1.0:
        raise ValueError(f"designed filter is unstable (order {order}, cutoff {cutoff_hz} Hz)")
    return FilterSpec(order=order, cutoff_hz=cutoff_hz, sample_rate_hz=sample_rate_hz,
                      b=b, a=a, zeros=zeros_z, poles=poles_z, gain=gain)


def filter_bank(raw: np.ndarray, cutoff_hz: float = 1.0, sample_rate_hz: float = 2000.0,
                zero_phase: bool = False) -> np.ndarray:
    """Stack order-1/3/5 low-passes of each sensor into a time x S x 3 array.

    Causal (forward-only) by default; ``zero_phase`` switches to a
    forward-backward pass for offline experiments.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < 1:
        raise ValueError(f"expected a time x sensors matrix, got shape {raw.shape}")
    bad = np.nonzero(~np.isfinite(raw))
    if bad[0].size:
        raise ValueError(f"non-finite sample at index {int(bad[0][0])}, sensor {int(bad[1][0])}")

    out = np.empty(raw.shape + (len(FILTER_ORDERS),), dtype=np.float64)
    for c, order in enumerate(FILTER_ORDERS):
        sos = design_butterworth_lowpass(order, cutoff_hz, sample_rate_hz).sos()
        if zero_phase:
            out[:, :, c] = sosfiltfilt(sos, raw, axis=0)
        else:
            out[:, :, c] = sosfilt(sos, raw, axis=0)
    return out


@dataclass
class MuLawParams:
    """Companding strength and the per-sensor scale fitted on training data."""

    mu: float = 255.0
    per_channel_scale: np.ndarray = field(default_factory=lambda: np.ones(N_SENSORS))

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        self.per_channel_scale = np.asarray(self.per_channel_scale, dtype=np.float64)


def fit_mu_law(filtered: np.ndarray, train_mask: np.ndarray, mu: float = 255.0) -> MuLawParams:
    """Fit per-sensor max-abs scales from training-repetition samples only.

    A sensor that is identically zero over the training samples gets scale 1
    (with a warning) so downstream division stays defined.
    """
    filtered = np.asarray(filtered)
    train_mask = np.asarray(train_mask, dtype=bool)
    if not train_mask.any():
        raise ValueError("no training samples to fit the mu-law scale on")
    scale = np.abs(filtered[train_mask]).max(axis=(0, 2) if filtered.ndim == 3 else 0)
    flat = scale == 0.0
    if flat.any():
        warnings.warn(f"flat training channel(s) {np.nonzero(flat)[0].tolist()}; using scale 1")
        scale = np.where(flat, 1.0, scale)
    return MuLawParams(mu=mu, per_channel_scale=scale)


def mu_law_normalize(x: np.ndarray, params: MuLawParams) -> np.ndarray:
    """Logarithmic companding sign(x) * ln(1 + mu|x|) / ln(1 + mu) onto [-1, 1].

    Inputs are divided by the fitted per-sensor scale and clamped to [-1, 1]
    first; the map is odd, monotone, and fixes 0 and +-1.
    """
    x = np.asarray(x, dtype=np.float64)
    scale = params.per_channel_scale
    if x.ndim == 3:  # time x S x C
        scaled = x / scale[None, :, None]
    elif x.ndim == 2:  # time x S
        scaled = x / scale[None, :]
    else:
        scaled = x / scale
    scaled = np.clip(scaled, -1.0, 1.0)
    return np.sign(scaled) * np.log1p(params.mu * np.abs(scaled)) / np.log1p(params.mu)


@dataclass
class Segment:
    """One model-ready window: sensors x samples x channels plus its labels."""

    x: np.ndarray  # S x W x C, float32, values in [-1, 1]
    label: int
    subject: int
    repetition: int

    def key_bytes(self) -> bytes:
        """Stable identity used by the split-isolation hash audit."""
        return (self.x.astype("<f4").tobytes()
                + np.array([self.label, self.subject, self.repetition], dtype="<i8").tobytes())


def segment_windows(x: np.ndarray, stimulus: np.ndarray, repetition: np.ndarray,
                    window_ms: int, step_ms: int = 10, fs_hz: float = 2000.0,
                    subject: int = 0) -> List[Segment]:
    """Slide a window over a normalized time x S x C signal and keep clean ones.

    A window is emitted only when every sample inside carries the same
    non-rest movement label; windows that straddle a label change or touch
    rest are dropped.  Returns an empty list when the recording is shorter
    than one window.
    """
    x = np.asarray(x)
    stimulus = np.asarray(stimulus)
    repetition = np.asarray(repetition)
    t = x.shape[0]
    w = int(round(window_ms * fs_hz / 1000.0))
    step = int(round(step_ms * fs_hz / 1000.0))
    if w < 1 or step < 1:
        raise ValueError(f"degenerate window ({window_ms} ms) or step ({step_ms} ms)")

    segments: List[Segment] = []
    if t < w:
        return segments
    # A window [i, i+w) is homogeneous iff no label changes inside it.
    change = np.nonzero(np.diff(stimulus) != 0)[0] + 1  # indices where a new run starts
    boundaries = np.concatenate(([0], change, [t]))
    for start, stop in zip(boundaries[:-1], boundaries[1:]):
        label = int(stimulus[start])
        if label == 0 or stop - start < w:
            continue
        rep = int(repetition[start])
        for i in range(start, stop - w + 1, step):
            win = np.transpose(x[i:i + w], (1, 0, 2)).astype(np.float32)  # S x W x C
            segments.append(Segment(x=win, label=label, subject=subject, repetition=rep))
    return segments


@dataclass
class PipelineConfig:
    """Knobs of the conditioning chain, round-trippable as key=value text."""

    cutoff_hz: float = 1.0
    mu: float = 255.0
    window_ms: int = 200
    step_ms: int = 10
    zero_phase: bool = False

    def to_text(self) -> str:
        return "".join(
            f"{k}={v}\n" for k, v in (
                ("cutoff_hz", self.cutoff_hz),
                ("mu", self.mu),
                ("window_ms", self.window_ms),
                ("step_ms", self.step_ms),
                ("zero_phase", str(self.zero_phase).lower()),
            ))

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "cutoff_hz":
                cfg.cutoff_hz = float(value)
            elif key == "mu":
                cfg.mu = float(value)
            elif key == "window_ms":
                cfg.window_ms = int(value)
            elif key == "step_ms":
                cfg.step_ms = int(value)
            elif key == "zero_phase":
                cfg.zero_phase = value.lower() in ("1", "true", "yes")
            else:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text())
