"""Mixed-noise hyperspectral denoising."""
