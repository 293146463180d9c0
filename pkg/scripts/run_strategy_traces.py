#!/usr/bin/env python3
"""Print the per-strategy test tables against the honest fixture provider."""

from pathlib import Path

from fpaudit.challenge import RandomnessSource
from fpaudit.database import load_database
from fpaudit.simulator import load_sim_config, produce
from fpaudit.strategies import STRATEGIES, run_audit
from fpaudit.transport import make_loopback
from fpaudit.verdict import build_report

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    db = load_database((ROOT / "fixtures" / "php_like_db.json").read_bytes())
    sim, cfg = load_sim_config((ROOT / "fixtures" / "php_like_sim_honest.json").read_bytes())
    endpoints = make_loopback(produce(sim, cfg))

    for strategy in STRATEGIES:
        log = run_audit(db, strategy, endpoints, RandomnessSource(seed=7), budget=60)
        report = build_report(log, db)
        print(f"=== {strategy} ===")
        print(f"{'Version':<12}{'Result':<8}Testorder")
        for row in log.rows:
            print(f"{str(row.version):<12}{'pass' if row.delta else 'fail':<8}{row.testorder}")
        print(f"candidates: {report.candidate_set.labels()} "
              f"({log.exchange_count()} exchanges)\n")


if __name__ == "__main__":
    main()
