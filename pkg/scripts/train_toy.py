"""Toy training of the micro model on synthetic shapes, over several seeds."""
import argparse
import csv
import sys
from dataclasses import asdict, dataclass

from potter.config import get_preset
from potter.harness import generate_synth, train_toy


@dataclass
class Settings:
    preset: str = "micro"
    n: int = 256
    epochs: int = 30
    lr: float = 5e-3
    batch: int = 8
    schedule: str = "cosine"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    for k, v in asdict(Settings()).items():
        ap.add_argument(f"--{k}", type=type(v), default=v)
    ap.add_argument("--seeds", type=int, nargs="*", default=[0, 1, 2])
    ap.add_argument("--csv", help="write one row per seed")
    args = ap.parse_args()
    s = Settings(**{k: getattr(args, k) for k in asdict(Settings())})
    cfg = get_preset(s.preset)
    rows = []
    for seed in args.seeds:
        data = generate_synth(seed, s.n, min(cfg.classes, 4), cfg.input_h, cfg.input_w)
        rep, _, _ = train_toy(cfg, data, epochs=s.epochs, lr=s.lr, batch=s.batch, seed=seed,
                              schedule=s.schedule)
        wall = sum(e.wall_time for e in rep.epochs)
        print(f"seed {seed}: loss {rep.final_loss:.4f}  acc {rep.final_accuracy:.3f}  "
              f"({wall:.1f}s)  {' '.join(rep.flags)}", file=sys.stderr)
        rows.append({"seed": seed, "final_loss": rep.final_loss, "final_accuracy": rep.final_accuracy,
                     "config_hash": rep.config_hash, **asdict(s)})
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
