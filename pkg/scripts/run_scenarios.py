"""Run every shipped scenario config and print the key report lines.

    python3 scripts/run_scenarios.py [configs/*.ini ...]
"""
import sys
from pathlib import Path

from wavegal.cli import cmd_run
from wavegal.config import load_config

KEYS = ("final_active_dofs", "full_dofs", "interface_temperature", "l2_error", "wall_ms")


def main(paths):
    root = Path(__file__).resolve().parent.parent
    paths = [Path(p) for p in paths] or sorted((root / "configs").glob("*.ini"))
    for path in paths:
        cfg = load_config(path)
        cmd_run(cfg)
        report = (Path(cfg.output_dir) / "report.txt").read_text()
        kv = dict(line.split("=", 1) for line in report.splitlines() if "=" in line)
        print(path.stem, " ".join(f"{k}={kv[k]}" for k in KEYS if k in kv))


if __name__ == "__main__":
    main(sys.argv[1:])
