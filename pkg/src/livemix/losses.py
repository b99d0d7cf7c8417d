"""Multi-resolution STFT loss: spectral convergence plus L1 log magnitude.

Per resolution r with magnitudes P (prediction) and T (target):

    loss_r = ||P - T||_F / ||T||_F  +  mean |log(P + eps) - log(T + eps)|

and the total is the mean of loss_r over the configured resolutions
(default windows 440/884/3528, ffts 512/1024/4196, hop 25% of the window).
The magnitude spectrogram is a tape primitive here so gradients flow from
the loss back into the predicted gains.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import dsp
from .autodiff import Tensor

LOG_EPS = 1e-7
_SC_FLOOR = 1e-30  # guards the spectral-convergence ratio for silent targets


def mag_spectrogram(signal, window_size: int, hop: int, fft_size: int) -> Tensor:
    """Differentiable Hann magnitude spectrogram of a 1-D tensor.

    Backward maps bin cotangents through the magnitude (subgradient 0 at
    zero bins) and the zero-filled inverse transform, then windows and
    overlap-adds back onto the signal.
    """
    x = ad.as_tensor(signal)
    spec = dsp.stft_complex(x.value, window_size, hop, fft_size)
    mag = np.abs(spec)
    window = dsp.hann_window(window_size)
    num_frames = spec.shape[0]

    def vjp(g):
        safe = np.where(mag > 0.0, mag, 1.0)
        phase_grad = np.where(mag > 0.0, g / safe, 0.0) * spec
        full = np.zeros((num_frames, fft_size), dtype=np.complex128)
        full[:, : spec.shape[1]] = phase_grad
        frame_grads = np.real(np.fft.ifft(full, axis=1))[:, :window_size] * fft_size
        frame_grads *= window
        out = np.zeros(x.shape)
        for f in range(num_frames):
            start = f * hop
            out[start : start + window_size] += frame_grads[f]
        return (out,)

    return ad.make_op(mag, (x,), vjp)


def mrstft_loss(pred, target, config: dsp.SpectralConfig | None = None) -> Tensor:
    """Mean spectral-convergence + log-magnitude distance over resolutions.

    ``pred`` may be a tape tensor (training) or plain samples; ``target``
    is always treated as a constant. Returns a scalar tensor; use
    ``.item()`` for the value.
    """
    config = config or dsp.SpectralConfig()
    pred = ad.as_tensor(dsp.as_samples(pred) if not isinstance(pred, Tensor) else pred)
    target_samples = dsp.as_samples(target)
    if pred.shape[0] != target_samples.shape[0]:
        raise ValueError(
            f"length mismatch: prediction has {pred.shape[0]} samples, "
            f"target has {target_samples.shape[0]}"
        )
    if pred.shape[0] < config.max_window:
        raise ValueError(
            f"signals shorter ({pred.shape[0]}) than the largest window ({config.max_window})"
        )

    total = Tensor(0.0)
    for window_size, hop, fft_size in config.resolutions():
        pred_mag = mag_spectrogram(pred, window_size, hop, fft_size)
        target_mag = dsp.stft_mag(target_samples, window_size, hop, fft_size)
        diff = ad.sub(pred_mag, Tensor(target_mag))
        target_norm = max(float(np.linalg.norm(target_mag)), _SC_FLOOR)
        convergence = ad.div(ad.frobenius_norm(diff), Tensor(target_norm))
        log_l1 = ad.tmean(
            ad.absolute(
                ad.sub(
                    ad.log(ad.add(pred_mag, Tensor(LOG_EPS))),
                    Tensor(np.log(target_mag + LOG_EPS)),
                )
            )
        )
        total = ad.add(total, ad.add(convergence, log_l1))
    return ad.mul(total, Tensor(1.0 / len(config.window_sizes)))
