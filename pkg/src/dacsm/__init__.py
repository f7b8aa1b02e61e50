"""Desk-scale domain adaptation with cross-attention translation and cross-scale matching"""

from os import environ
from pathlib import Path

RUNS_DIR_PATH = Path(environ.get("DACSM_RUNS_DIR", Path.cwd() / "runs"))
