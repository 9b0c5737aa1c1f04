from __future__ import annotations

import sqlite3

import pytest

from app.db import connect, delete_run, list_runs, record_table, rows_for_run


def _row(dags: str, rule: str, base: float, learned: float, lp_order: float | None = None) -> dict:
    return {
        "dags": dags,
        "rule": rule,
        "base": base,
        "learned": learned,
        "reduce_pct": (base - learned) / base * 100.0,
        "tetris": base + 1.0,
        "lp_order": lp_order,
    }


def _record(conn, run_id: str, rows: list[dict]) -> None:
    record_table(
        conn,
        run_id=run_id,
        manifest="data/corpus/manifest.json",
        rules=["sjf", "cp"],
        max_edges=5,
        beam=10,
        checkpoint=None,
        rows=rows,
    )


def test_record_and_read_back_rows_in_order(tmp_path) -> None:
    db_path = tmp_path / "bench.sqlite"
    with connect(db_path) as conn:
        rows = [_row("5", "sjf", 21.29, 18.81, 20.0), _row("10", "sjf", 40.0, 36.0), _row("average", "sjf", 30.0, 27.0)]
        _record(conn, "run-1", rows)

        stored = rows_for_run(conn, run_id="run-1")
        assert [row["dags"] for row in stored] == ["5", "10", "average"]
        assert stored[0] == rows[0]
        assert stored[1]["lp_order"] is None


def test_run_list_counts_rows(tmp_path) -> None:
    db_path = tmp_path / "bench.sqlite"
    with connect(db_path) as conn:
        _record(conn, "run-a", [_row("5", "sjf", 10.0, 9.0)])
        _record(conn, "run-b", [_row("5", "sjf", 10.0, 9.0), _row("5", "cp", 11.0, 10.0)])

        runs = {run["run_id"]: run for run in list_runs(conn)}
        assert set(runs) == {"run-a", "run-b"}
        assert runs["run-b"]["row_count"] == 2
        assert runs["run-a"]["rules"] == "sjf,cp"
        assert runs["run-a"]["max_edges"] == 5


def test_duplicate_run_is_rolled_back(tmp_path) -> None:
    db_path = tmp_path / "bench.sqlite"
    with connect(db_path) as conn:
        _record(conn, "run-1", [_row("5", "sjf", 10.0, 9.0)])
        with pytest.raises(sqlite3.IntegrityError):
            _record(conn, "run-1", [_row("5", "cp", 12.0, 11.0)])
        assert len(rows_for_run(conn, run_id="run-1")) == 1


def test_delete_run_removes_rows_and_run(tmp_path) -> None:
    db_path = tmp_path / "bench.sqlite"
    with connect(db_path) as conn:
        _record(conn, "run-del", [_row("5", "sjf", 10.0, 9.0), _row("5", "cp", 10.0, 8.0)])

        result = delete_run(conn, run_id="run-del")
        assert result == {"run_id": "run-del", "removed_rows": 2, "removed_run": True}
        assert rows_for_run(conn, run_id="run-del") == []
        assert list_runs(conn) == []

        again = delete_run(conn, run_id="run-del")
        assert again["removed_rows"] == 0
        assert again["removed_run"] is False
