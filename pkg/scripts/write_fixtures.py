#!/usr/bin/env python3
"""Regenerate the CSV fixture databases under tests/fixtures/.

Each fixture is a tiny hand-designed database with closed-form estimates;
the committed CSVs are what the tests and the command-line examples read.
Run from the repository root after changing timberline.synth:

    python scripts/write_fixtures.py
"""

from pathlib import Path
import shutil
import sys

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from timberline.io import write_database
from timberline.synth import FIXTURE_NAMES, build_fixture


def main() -> int:
    root = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    for name in FIXTURE_NAMES:
        dest = root / name
        if dest.exists():
            shutil.rmtree(dest)
        dest.mkdir(parents=True)
        files = write_database(build_fixture(name), dest)
        print(f"{name}: {len(files)} files")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
