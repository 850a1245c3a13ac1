"""Write the shipped group files into configs/groups/."""
import argparse
from pathlib import Path

from horocount.groups import orthogonal_axes_schottky, save_group, sl2z_lattice_spec


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "configs" / "groups"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    groups = {
        "schottky2.json": orthogonal_axes_schottky(n=2, length=4.0, rank=2),
        "schottky3.json": orthogonal_axes_schottky(n=3, length=4.0, rank=2),
        "sl2z.json": sl2z_lattice_spec(),
    }
    for name, spec in groups.items():
        save_group(spec, out / name)
        print(out / name)


if __name__ == "__main__":
    main()
