"""Write data/wdbc.data (id,diagnosis,f1..f30) from scikit-learn's bundled copy.

scikit-learn ships the 569 WDBC records without the original patient ids, so
ids are the 1-based row numbers. Target 0 is malignant.
"""
import sys
from pathlib import Path

from sklearn.datasets import load_breast_cancer


def main(out: Path) -> None:
    ds = load_breast_cancer()
    lines = []
    for i, (row, target) in enumerate(zip(ds.data, ds.target), start=1):
        label = "M" if target == 0 else "B"
        lines.append(",".join([str(i), label] + [repr(float(v)) for v in row]))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "wdbc.data")
