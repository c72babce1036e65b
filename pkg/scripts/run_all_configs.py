"""Run every experiment config under configs/ and collect the rows into results/."""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from proactive_auth.cli import main as auth_sim

ROOT = Path(__file__).resolve().parent.parent


def is_audit(path: Path) -> bool:
    doc = json.loads(path.read_text(encoding="utf-8"))
    return isinstance(doc, dict) and "schedule" in doc


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", default=ROOT / "configs", type=Path)
    ap.add_argument("--out", default=ROOT / "results", type=Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    for path in sorted(args.configs.glob("*.json")):
        t0 = time.perf_counter()
        if is_audit(path):
            out = args.out / f"{path.stem}.jsonl"
            code = auth_sim(["audit-schedule", "--config", str(path), "--out", str(out)])
        else:
            out = args.out / f"{path.stem}.csv"
            code = auth_sim(["run", "--config", str(path), "--out", str(out)])
        status = {0: "pass", 1: "FAIL"}.get(code, "error")
        print(f"{path.name:32s} {status:5s} {time.perf_counter() - t0:6.1f}s -> {out.name}")


if __name__ == "__main__":
    main()
