"""Pooling vs PoolAttn and with vs without the HR stream, complexity plus toy metrics."""
import argparse

from potter.config import get_preset
from potter.harness import run_ablation


def show(title, rows):
    print(f"\n{title}")
    print(f"{'variant':<20}{'params':>10}{'MACs':>14}{'output':>12}{'loss':>9}{'acc':>7}")
    for r in rows:
        loss = f"{r['final_loss']:.4f}" if "final_loss" in r else "-"
        acc = f"{r['final_accuracy']:.3f}" if "final_accuracy" in r else "-"
        shape = "x".join(map(str, r["output_shape"]))
        print(f"{r['variant']:<20}{r['params']:>10,}{r['macs']:>14,}{shape:>12}{loss:>9}{acc:>7}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    kw = dict(epochs=args.epochs, n=args.n, lr=5e-3, batch=8, seed=args.seed)
    show("mixer ablation (micro)", run_ablation("mixer_ablation", get_preset("micro"), **kw))
    show("mixer ablation (cls_s12, complexity only)", run_ablation("mixer_ablation", get_preset("cls_s12")))
    show("HR ablation (micro_hr)", run_ablation("hr_ablation", get_preset("micro_hr")))
    show("HR ablation (potter_hmr, complexity only)", run_ablation("hr_ablation", get_preset("potter_hmr")))


if __name__ == "__main__":
    main()
