from __future__ import annotations

import logging
import re
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

CBC_NAME = "cbc"


class ToolResolutionError(RuntimeError):
    pass


class SolverRunError(RuntimeError):
    pass


@dataclass(slots=True)
class ResolvedTool:
    name: str
    path: str
    version: str


@dataclass(slots=True)
class SolverReport:
    status: str
    objective: float | None
    values: dict[str, float]


def resolve_and_validate_tool(name: str = CBC_NAME, configured_path: str | None = None) -> ResolvedTool:
    errors: list[str] = []
    for path in iter_candidate_paths(name=name, configured_path=configured_path):
        try:
            banner = read_version_banner(path)
        except ToolResolutionError as exc:
            errors.append(f"{path}: {exc}")
            continue
        if "cbc" not in banner.lower():
            errors.append(f"{path}: not a CBC binary")
            continue
        tool = ResolvedTool(name=name, path=path, version=extract_version(banner))
        logger.info("Using %s %s at %s", name, tool.version, path)
        return tool

    details = "\n".join(errors) if errors else "No executable candidates found."
    raise ToolResolutionError(f"Unable to validate '{name}'. Tried:\n{details}")


def iter_candidate_paths(name: str, configured_path: str | None = None) -> Iterable[str]:
    seen: set[str] = set()

    def push(path_value: str) -> str | None:
        normalized = str(Path(path_value).resolve())
        if normalized in seen:
            return None
        seen.add(normalized)
        if Path(normalized).exists():
            return normalized
        return None

    if configured_path:
        resolved = push(configured_path)
        if resolved:
            yield resolved

    which_path = shutil.which(name)
    if which_path:
        resolved = push(which_path)
        if resolved:
            yield resolved


def read_version_banner(path: str) -> str:
    try:
        completed = subprocess.run(
            [path, "-quit"],
            check=True,
            capture_output=True,
            text=True,
            timeout=15,
            encoding="utf-8",
            errors="replace",
        )
    except (OSError, subprocess.SubprocessError) as exc:
        raise ToolResolutionError(f"Failed to execute '{path} -quit': {exc}") from exc
    return (completed.stdout or "") + (completed.stderr or "")


def extract_version(output: str) -> str:
    match = re.search(r"Version:\s*([^\s]+)", output)
    if match:
        return match.group(1)
    return "unknown"


def parse_cbc_solution(text: str) -> SolverReport:
    """Read a CBC ``solu`` report: a status header, then ``index name value reduced`` rows."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise SolverRunError("Empty CBC solution report")
    header = lines[0].strip()
    status = header.split(" - ")[0].strip().lower()
    objective = None
    match = re.search(r"objective value\s+(\S+)", header)
    if match:
        objective = float(match.group(1))

    values: dict[str, float] = {}
    for number, line in enumerate(lines[1:], start=2):
        # Rows flagged "**" violate a bound in an infeasible report.
        parts = line.replace("**", " ").split()
        if len(parts) < 3:
            raise SolverRunError(f"Unexpected CBC row at line {number}: {line!r}")
        try:
            values[parts[1]] = float(parts[2])
        except ValueError:
            raise SolverRunError(f"Unexpected CBC value at line {number}: {line!r}") from None
    return SolverReport(status=status, objective=objective, values=values)


def cbc_solution_to_pairs(report: SolverReport) -> str:
    """Normalise a CBC report into the ``name value`` lines ``read_solution`` accepts."""
    return "".join(f"{name} {value:.12g}\n" for name, value in report.values.items())


def solve_with_cbc(lp_text: str, tool: ResolvedTool, timeout: float = 600) -> SolverReport:
    with tempfile.TemporaryDirectory(prefix="dagedge-cbc-") as workdir:
        model_path = Path(workdir) / "model.lp"
        solution_path = Path(workdir) / "solution.txt"
        model_path.write_text(lp_text, encoding="utf-8")
        try:
            subprocess.run(
                [tool.path, str(model_path), "solve", "solu", str(solution_path)],
                check=True,
                capture_output=True,
                text=True,
                timeout=timeout,
                encoding="utf-8",
                errors="replace",
            )
        except (subprocess.SubprocessError, OSError) as exc:
            raise SolverRunError(f"CBC failed on {model_path.name}: {exc}") from exc
        if not solution_path.exists():
            raise SolverRunError("CBC did not write a solution report")
        report = parse_cbc_solution(solution_path.read_text(encoding="utf-8"))
    if report.status != "optimal":
        raise SolverRunError(f"CBC finished with status '{report.status}'")
    return report
