"""Params / MACs of every preset in both counting modes, next to the reference totals."""
import argparse

from potter.backbone import Potter
from potter.config import PRESETS
from potter.profiler import profile

# published totals for the two full-size layouts (params, MACs)
REFERENCE = {"cls_s12": (12.4e6, 1.84e9), "potter_hmr": (16.3e6, 7.8e9)}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--presets", nargs="*", default=sorted(PRESETS))
    args = ap.parse_args()
    print(f"{'preset':<12}{'mode':<7}{'params':>14}{'MACs':>17}{'vs ref params':>15}{'vs ref MACs':>13}")
    for name in args.presets:
        model = Potter(PRESETS[name], init=False)
        for mode in ("table", "exact"):
            rep = profile(model, None, mode)
            ref = REFERENCE.get(name)
            dp = f"{(rep.total_params / ref[0] - 1) * 100:+.1f}%" if ref else "-"
            dm = f"{(rep.total_macs / ref[1] - 1) * 100:+.1f}%" if ref else "-"
            print(f"{name:<12}{mode:<7}{rep.total_params:>14,}{rep.total_macs:>17,}{dp:>15}{dm:>13}")


if __name__ == "__main__":
    main()
