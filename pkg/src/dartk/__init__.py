"""dartk: EEG-fMRI artifact removal with a channel-wise convolutional autoencoder."""

__version__ = "0.1.0"
