"""Run every shipped config through the CLI and summarize exit codes."""
import sys
from pathlib import Path

from fluctlab.cli import main

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    out_root = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "results"
    codes = {}
    for cfg in sorted((ROOT / "configs").glob("*.toml")):
        codes[cfg.stem] = main(["run", str(cfg), "--output-dir", str(out_root / cfg.stem)])
    for name, code in codes.items():
        print(f"{name:28s} exit {code}")
