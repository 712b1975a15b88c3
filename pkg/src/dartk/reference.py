"""Published reference scores, embedded for side-by-side report rendering.

These are literal published constants for the simultaneous EEG-fMRI benchmark. None of the
deep competitor models listed here is implemented; the numbers are shown next
to this toolkit's results and never used as test targets.
"""
from __future__ import annotations

# metric -> (mean, sd); sd is None where only a point value was published
DAR_VALIDATION = {
    "rmse": (0.0218, 0.0152),
    "nrmse": (0.0139, 0.0085),
    "mae": (0.00540, None),
    "pearson_r": (0.8799, 0.2238),
    "cosine": (0.9363, None),
    "ssim": (0.8885, 0.0913),
    "snr_gain_db": (14.63, None),
}

# method -> metric -> (mean, sd)
CLASSICAL_BASELINES = {
    "DAR": {"rmse": (0.0218, 0.0152), "nrmse": (0.0139, 0.0085), "pearson_r": (0.8799, 0.2238), "ssim": (0.8885, 0.0913)},
    "PCA": {"rmse": (0.1013, 0.0298), "nrmse": (0.0668, 0.0188), "pearson_r": (0.1726, 0.2512), "ssim": (0.4898, 0.1641)},
    "AAS": {"rmse": (0.0990, 0.0304), "nrmse": (0.0654, 0.0194), "pearson_r": (0.2010, 0.2500), "ssim": (0.5579, 0.1553)},
    "ICA": {"rmse": (0.0585, 0.0198), "nrmse": (0.0377, 0.0091), "pearson_r": (0.5100, 0.0820), "ssim": (0.6346, 0.1236)},
    "OBS": {"rmse": (0.0991, 0.0262), "nrmse": (0.0655, 0.0162), "pearson_r": (0.1984, 0.2293), "ssim": (0.5565, 0.1482)},
}

# model -> (mae, cosine, snr_gain_db)
DEEP_MODELS = {
    "DAR": (0.0054, 0.9363, 14.63),
    "BiLSTM": (0.0121, 0.8325, 9.24),
    "ResNet1D": (0.0102, 0.8596, 10.32),
    "Transformer": (0.0087, 0.8831, 11.56),
    "TCN": (0.0109, 0.8490, 9.98),
    "1D U-Net": (0.0061, 0.9052, 12.67),
    "MSDCNet": (0.0093, 0.8744, 10.94),
    "WaveNet Denoiser": (0.0075, 0.8905, 11.82),
    "Attention U-Net 1D": (0.0068, 0.8979, 12.13),
}

# variant -> (rmse, nrmse, pearson_r, ssim)
ABLATION = {
    "Baseline": (0.0757, 0.0391, 0.9516, 0.6895),
    "SmallKernel": (0.0568, 0.0293, 0.9734, 0.8134),
    "HalfChannels": (0.1451, 0.0749, 0.8052, 0.4528),
    "NoTanh": (0.0748, 0.0386, 0.9523, 0.6771),
}

# subject -> (rmse, pearson_r, ssim)
LOSO = {
    "0": (0.0841, 0.3898, 0.5257),
    "1": (0.0578, 0.8316, 0.6445),
    "2": (0.0686, 0.2455, 0.7442),
    "3": (0.0721, 0.1355, 0.5929),
    "4": (0.0579, 0.4729, 0.7482),
    "5": (0.0509, 0.5056, 0.6218),
    "6": (0.0532, 0.5189, 0.7837),
}
