"""Train the 8x8 restricted toy model and report the first and last metric rows.

    python scripts/train_toy.py [--config scripts/configs/toy.json] [--seed N]
"""
import argparse
import json
import tempfile
from pathlib import Path

from chaosgen import cli

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=HERE / "configs" / "toy.json", type=Path)
    ap.add_argument("--seed", type=int, default=None, help="override the master seed (and output dir)")
    args = ap.parse_args()

    config = args.config.resolve()
    raw = json.loads(config.read_text())
    if args.seed is not None:
        raw["seed"] = args.seed
        raw["output_dir"] = f"{raw['output_dir']}_seed{args.seed}"
        tmp = tempfile.NamedTemporaryFile("w", suffix=".json", dir=config.parent, delete=False)
        json.dump(raw, tmp)
        tmp.close()
        config = Path(tmp.name)
    try:
        status = cli.main(["train", "--config", str(config)])
    finally:
        if args.seed is not None:
            config.unlink()
    if status:
        raise SystemExit(status)

    out = (config.parent / raw["output_dir"]).resolve()
    rows = (out / "metrics.csv").read_text().splitlines()
    first, last = rows[1].split(","), rows[-1].split(",")
    print(f"E2: {float(first[1]):.3e} -> {float(last[1]):.3e} ({float(first[1]) / float(last[1]):.1f}x)")
    print(f"EAAI: {float(first[4]):.4f} -> {float(last[4]):.4f}")
    print(f"outputs in {out}")


if __name__ == "__main__":
    main()
