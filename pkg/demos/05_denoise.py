"""Train a small DAE-CNN and measure what it does to -10 dB beats.

Training mixes SNR levels from -10 to 5 dB; the held-out beats are all at
-10 dB.  A short run on a few hundred beats already gains well over
10 dB; the acceptance suite runs the full desk-scale comparison.
"""
import numpy as np

from ecgdae.datasets import synthetic_windows
from ecgdae.metrics import denoise_metrics_batch, summarize_denoise
from ecgdae.models import build, denoise
from ecgdae.nn import TrainConfig, train
from ecgdae.noise import NoiseSource, corrupt_batch
from ecgdae.preprocess import windows_to_arrays

x, _, valid = windows_to_arrays(synthetic_windows(400, seed=5)[:900])
snr = np.r_[np.random.default_rng(0).choice([-10.0, -5.0, 0.0, 5.0], 800), np.full(100, -10.0)]
noisy = corrupt_batch(x, NoiseSource("awgn"), snr, valid, seed=1)
tr, te = slice(0, 700), slice(800, 900)

net = build("DAE-CNN", seed=0)
cfg = TrainConfig(lr=1e-3, batch_size=32, max_epochs=8, patience=5, seed=0)
_, hist = train(net, (noisy[tr, :, None], x[tr, :, None]), (noisy[700:800, :, None], x[700:800, :, None]), cfg)
print(f"trained {len(hist)} epochs, final val loss {hist[-1]['val_loss']:.5f}")

summary = summarize_denoise(denoise_metrics_batch(x[te], noisy[te], denoise(net, noisy[te]), valid[te]))
for m in ("snr_improvement", "psnr", "prd", "mse"):
    print(f"{m:16s} median {summary[m]['median']:.4g}")
