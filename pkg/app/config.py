from __future__ import annotations

from pathlib import Path
from typing import Literal

from pydantic import BaseModel

RuleName = Literal["sjf", "cp", "tetris"]

RULES: tuple[RuleName, ...] = (
    "sjf",
    "cp",
    "tetris",
)

RESOURCE_DISTRIBUTIONS: tuple[float, ...] = (1.0, 2.0 / 3.0, 1.0 / 3.0)
DEFAULT_BUCKETS: tuple[int, ...] = (5, 10, 20, 50, 100)

# Total resource capacity is one unit; comparisons allow this much float slack.
CAPACITY = 1.0
CAPACITY_EPS = 1e-9

DATA_ROOT_ENV = "DAGEDGE_DATA_ROOT"


class AppSettings(BaseModel):
    output_dir: Path = Path("out")
    data_dir: Path = Path("data")
    db_path: Path = Path("out/bench.sqlite")
    checkpoint_path: Path = Path("out/model.json")
    solver_path: str | None = None
    host: str = "127.0.0.1"
    port: int = 8000
