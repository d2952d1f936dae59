import subprocess
import sys
from pathlib import Path

import pytest


def synth_dataset(path: Path, kind: str, scenes: int, seed: int, noise_px: float = 0.0, extra=()):
    """Generate a dataset through the solver package's CLI (the file format
    is the contract between the two packages)."""
    cmd = [
        sys.executable, "-m", "gcpose", "synth",
        "--kind", kind, "--scenes", str(scenes), "--seed", str(seed),
        "--noise-px", str(noise_px), "--out", str(path), *extra,
    ]
    subprocess.run(cmd, check=True, capture_output=True)
    return path


@pytest.fixture(scope="session")
def upnp_small_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "upnp32.jsonl"
    return synth_dataset(path, "upnp", 32, seed=21, noise_px=1.0)


@pytest.fixture(scope="session")
def grps_small_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "grps32.jsonl"
    return synth_dataset(path, "grps", 32, seed=22, noise_px=0.5)
