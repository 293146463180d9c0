#!/usr/bin/env python3
"""Regenerate the JSON fixtures shipped under fixtures/."""

import json
from pathlib import Path

from fpaudit.fixtures import FAKER_PROVIDER, HONEST_PROVIDER, build_db_doc, build_sim_doc

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    (FIXTURES / "php_like_db.json").write_text(
        json.dumps(build_db_doc(), indent=2) + "\n", encoding="utf-8")
    (FIXTURES / "php_like_sim_honest.json").write_text(
        json.dumps(build_sim_doc(HONEST_PROVIDER), indent=2) + "\n", encoding="utf-8")
    (FIXTURES / "php_like_sim_faker.json").write_text(
        json.dumps(build_sim_doc(FAKER_PROVIDER), indent=2) + "\n", encoding="utf-8")
    print(f"wrote fixtures to {FIXTURES}")


if __name__ == "__main__":
    main()
