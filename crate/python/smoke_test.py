"""Smoke test for the ksgdiffuse_py extension module.

Builds the extension with cargo when it is not importable yet, then runs a
small reconstruction on a random phantom and checks it against the exact
Gaussian posterior.

    python python/smoke_test.py
"""

import importlib
import shutil
import subprocess
import sys
import sysconfig
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
BUILD_DIR = ROOT / "target" / "python"


def build():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "ksgdiffuse-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = ROOT / "target" / "release" / "libksgdiffuse_py.so"
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    BUILD_DIR.mkdir(parents=True, exist_ok=True)
    shutil.copy2(lib, BUILD_DIR / f"ksgdiffuse_py{suffix}")


def load():
    try:
        return importlib.import_module("ksgdiffuse_py")
    except ImportError:
        pass
    sys.path.insert(0, str(BUILD_DIR))
    try:
        return importlib.import_module("ksgdiffuse_py")
    except ImportError:
        build()
        importlib.invalidate_caches()
        return importlib.import_module("ksgdiffuse_py")


def main():
    k = load()
    rng = np.random.default_rng(0)
    h, w, s2 = 16, 16, 1.0
    yy, xx = np.mgrid[:h, :w]
    mu = 4.0 * np.exp(-((yy - h / 2) ** 2 + (xx - w / 2) ** 2) / 18.0).astype(complex)
    truth = mu + np.sqrt(s2) * (rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w)))

    mask = np.array(k.cartesian_mask(h, w, 4.0, seed=1), dtype=np.uint8)
    x_obs = np.array(k.fft2c(truth.tolist())) * mask

    out = k.reconstruct(
        x_obs.tolist(), mask.tolist(), mu=mu.tolist(), s2=s2,
        total_steps=200, respacing=4, chains=64, refine_steps=10, seed=0,
    )
    mean = np.array(out["mean"])
    oracle_mean, _ = k.gaussian_posterior(mu.tolist(), s2, mask.tolist(), x_obs.tolist())
    oracle_mean = np.array(oracle_mean)

    consistency = np.abs((np.array(k.fft2c(mean.tolist())) - x_obs)[mask == 1]).max()
    rel = np.linalg.norm(mean - oracle_mean) / np.linalg.norm(oracle_mean)
    print(f"schedule       {out['schedule']} -> {out['coarse_schedule']}")
    print(f"speed-up       {out['speedup_factor']:.4f}")
    print(f"consistency    {consistency:.2e}")
    print(f"rel. L2 oracle {rel:.4f}")
    print(f"PSNR / SSIM    {k.psnr(truth.tolist(), mean.tolist()):.2f} dB / {k.ssim(truth.tolist(), mean.tolist()):.4f}")
    assert consistency < 1e-4, consistency
    assert rel < 0.2, rel
    assert np.array(out["variance"]).shape == (h, w)
    print("ok")


if __name__ == "__main__":
    main()
