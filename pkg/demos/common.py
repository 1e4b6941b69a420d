"""Shared paths for the demo scripts."""
import pathlib

import mmtransport

SCENARIOS = pathlib.Path(mmtransport.__file__).parent / "scenarios"


def scenario(name):
    return SCENARIOS / f"{name}.yaml"


def out_dir():
    p = pathlib.Path(__file__).parent / "out"
    p.mkdir(exist_ok=True)
    return p
