from __future__ import annotations

import sqlite3
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path


@contextmanager
def connect(db_path: Path) -> Iterator[sqlite3.Connection]:
    db_path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(str(db_path))
    conn.row_factory = sqlite3.Row
    conn.execute("PRAGMA foreign_keys = ON")
    conn.execute("PRAGMA busy_timeout = 5000")
    init_schema(conn)
    try:
        yield conn
    finally:
        conn.close()


def init_schema(conn: sqlite3.Connection) -> None:
    conn.execute(
        """
        CREATE TABLE IF NOT EXISTS bench_runs (
            run_id TEXT PRIMARY KEY,
            manifest TEXT NOT NULL,
            rules TEXT NOT NULL,
            max_edges INTEGER NOT NULL,
            beam INTEGER NOT NULL,
            checkpoint TEXT,
            created_at TEXT NOT NULL DEFAULT CURRENT_TIMESTAMP
        )
        """
    )
    conn.execute(
        """
        CREATE TABLE IF NOT EXISTS bench_rows (
            run_id TEXT NOT NULL REFERENCES bench_runs(run_id) ON DELETE CASCADE,
            position INTEGER NOT NULL,
            dags TEXT NOT NULL,
            rule TEXT NOT NULL,
            base REAL NOT NULL,
            learned REAL NOT NULL,
            reduce_pct REAL NOT NULL,
            tetris REAL,
            lp_order REAL,
            PRIMARY KEY (run_id, position)
        )
        """
    )
    conn.commit()


def record_table(
    conn: sqlite3.Connection,
    *,
    run_id: str,
    manifest: str,
    rules: Sequence[str],
    max_edges: int,
    beam: int,
    checkpoint: str | None,
    rows: Sequence[dict],
) -> None:
    conn.execute("BEGIN")
    try:
        conn.execute(
            """
            INSERT INTO bench_runs (run_id, manifest, rules, max_edges, beam, checkpoint)
            VALUES (?, ?, ?, ?, ?, ?)
            """,
            [run_id, manifest, ",".join(rules), max_edges, beam, checkpoint],
        )
        if rows:
            conn.executemany(
                """
                INSERT INTO bench_rows (
                    run_id,
                    position,
                    dags,
                    rule,
                    base,
                    learned,
                    reduce_pct,
                    tetris,
                    lp_order
                )
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
                """,
                [
                    (
                        run_id,
                        position,
                        row["dags"],
                        row["rule"],
                        row["base"],
                        row["learned"],
                        row["reduce_pct"],
                        row.get("tetris"),
                        row.get("lp_order"),
                    )
                    for position, row in enumerate(rows)
                ],
            )
    except Exception:
        conn.rollback()
        raise
    else:
        conn.commit()


def list_runs(conn: sqlite3.Connection) -> list[dict]:
    rows = conn.execute(
        """
        SELECT
            r.run_id,
            r.rules,
            r.max_edges,
            r.beam,
            r.created_at,
            COUNT(b.position) AS row_count
        FROM bench_runs r
        LEFT JOIN bench_rows b ON b.run_id = r.run_id
        GROUP BY r.run_id
        ORDER BY r.created_at DESC, r.run_id ASC
        """
    ).fetchall()
    return [
        {
            "run_id": row["run_id"],
            "rules": row["rules"],
            "max_edges": int(row["max_edges"]),
            "beam": int(row["beam"]),
            "created_at": row["created_at"],
            "row_count": int(row["row_count"]),
        }
        for row in rows
    ]


def rows_for_run(conn: sqlite3.Connection, *, run_id: str) -> list[dict]:
    rows = conn.execute(
        """
        SELECT dags, rule, base, learned, reduce_pct, tetris, lp_order
        FROM bench_rows
        WHERE run_id = ?
        ORDER BY position
        """,
        [run_id],
    ).fetchall()
    return [dict(row) for row in rows]


def delete_run(conn: sqlite3.Connection, *, run_id: str) -> dict:
    conn.execute("BEGIN")
    try:
        removed_rows = conn.execute(
            "SELECT COUNT(*) FROM bench_rows WHERE run_id = ?", [run_id]
        ).fetchone()[0]
        removed_runs = conn.execute(
            "SELECT COUNT(*) FROM bench_runs WHERE run_id = ?", [run_id]
        ).fetchone()[0]
        conn.execute("DELETE FROM bench_rows WHERE run_id = ?", [run_id])
        conn.execute("DELETE FROM bench_runs WHERE run_id = ?", [run_id])
    except Exception:
        conn.rollback()
        raise
    else:
        conn.commit()
    return {
        "run_id": run_id,
        "removed_rows": int(removed_rows),
        "removed_run": bool(removed_runs),
    }
