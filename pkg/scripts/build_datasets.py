"""Rebuild the bundled benchmark CSVs from wheels published on PyPI.

Usage:
    pip download --no-deps -d wheels keel-ds orange3 scikit-lego
    python scripts/build_datasets.py wheels src/ginn_augment/datasets

Sources:
    ionosphere               UCI copy in the ``orange3`` test data
    tic-tac-toe              KEEL repository copy in ``keel-ds``
    wine-quality-red         rebuilt from the one-vs-rest KEEL subsets
    heart                    Cleveland heart disease table in ``orange3``
    abalone                  UCI abalone table in ``scikit-lego``
"""
import csv
import glob
import io
import json
import os
import sys
import zipfile
from collections import Counter


def _wheel(wheel_dir, prefix):
    hits = sorted(glob.glob(os.path.join(wheel_dir, prefix + "*.whl")))
    if not hits:
        sys.exit(f"no wheel matching {prefix}* in {wheel_dir}")
    return zipfile.ZipFile(hits[-1])


def _keel_rows(z, member):
    text = z.read(member).decode()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        rows.append([tok.strip() for tok in line.split(",")])
    return rows


def _write(out_dir, name, header, rows, columns):
    with open(os.path.join(out_dir, name + ".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    with open(os.path.join(out_dir, name + ".schema.json"), "w") as fh:
        json.dump({"name": name, "columns": columns}, fh, indent=2)
        fh.write("\n")
    print(f"{name}: {len(rows)} rows")


def build_ionosphere(orange, out_dir):
    lines = orange.read("Orange/tests/datasets/ionosphere.tab").decode().splitlines()
    rows = [line.split("\t") for line in lines[3:] if line.strip()]
    header = [f"a{i + 1}" for i in range(34)] + ["class"]
    cols = [{"name": h, "kind": "numerical"} for h in header[:-1]]
    cols.append({"name": "class", "kind": "label", "categories": ["b", "g"]})
    _write(out_dir, "ionosphere", header, rows, cols)


def build_tic_tac_toe(keel, out_dir):
    rows = _keel_rows(keel, "keel_ds/data/balanced/raw/tic-tac-toe.dat")
    squares = ["top_left", "top_middle", "top_right", "middle_left", "middle_middle",
               "middle_right", "bottom_left", "bottom_middle", "bottom_right"]
    cols = [{"name": s, "kind": "categorical", "categories": ["b", "o", "x"]} for s in squares]
    cols.append({"name": "class", "kind": "label", "categories": ["negative", "positive"]})
    _write(out_dir, "tic-tac-toe", squares + ["class"], rows, cols)


def build_wine_quality_red(keel, out_dir):
    base = "keel_ds/data/imbalanced/raw/winequality-red-"

    def split(member):
        pos, neg = Counter(), Counter()
        for r in _keel_rows(keel, base + member + ".dat"):
            (pos if r[-1] == "positive" else neg)[tuple(r[:-1])] += 1
        return pos, neg

    q4, _ = split("4")
    q3, q5 = split("3_vs_5")
    q8, q6 = split("8_vs_6")
    _, q67 = split("8_vs_6-7")
    q7 = q67 - q6
    pools = {"3": q3, "4": q4, "5": q5, "6": q6, "7": q7, "8": q8}

    rows = []
    for r in _keel_rows(keel, base + "4.dat"):
        key = tuple(r[:-1])
        owners = [q for q, pool in pools.items() if pool[key] > 0]
        if not owners:
            sys.exit(f"wine row {key} has no quality label")
        quality = owners[0]
        pools[quality][key] -= 1
        rows.append(list(key) + [quality])
    leftover = sum(sum(p.values()) for p in pools.values())
    if leftover:
        sys.exit(f"wine reconstruction left {leftover} unmatched rows")
    header = ["fixed_acidity", "volatile_acidity", "citric_acid", "residual_sugar",
              "chlorides", "free_sulfur_dioxide", "total_sulfur_dioxide", "density",
              "pH", "sulphates", "alcohol", "quality"]
    cols = [{"name": h, "kind": "numerical"} for h in header[:-1]]
    cols.append({"name": "quality", "kind": "label", "categories": ["3", "4", "5", "6", "7", "8"]})
    _write(out_dir, "wine-quality-red", header, rows, cols)


def build_heart(orange, out_dir):
    lines = orange.read("Orange/datasets/heart_disease.tab").decode().splitlines()
    header = ["age", "sex", "chest_pain", "rest_sbp", "cholesterol", "fasting_blood_sugar",
              "rest_ecg", "max_hr", "exercise_angina", "st_depression", "st_slope",
              "major_vessels", "thal", "diameter_narrowing"]
    cats = {
        "sex": ["female", "male"],
        "chest_pain": ["asymptomatic", "atypical ang", "non-anginal", "typical ang"],
        "rest_ecg": ["left vent hypertrophy", "normal", "ST-T abnormal"],
        "st_slope": ["downsloping", "flat", "upsloping"],
        "thal": ["fixed defect", "normal", "reversable defect"],
    }
    rows = []
    for line in lines[3:]:
        fields = line.split("\t")
        rows.append(["" if f in ("", "?") else f for f in fields])
    cols = []
    for h in header[:-1]:
        if h in cats:
            cols.append({"name": h, "kind": "categorical", "categories": cats[h]})
        else:
            cols.append({"name": h, "kind": "numerical"})
    cols.append({"name": "diameter_narrowing", "kind": "label", "categories": ["0", "1"]})
    _write(out_dir, "heart", header, rows, cols)


def build_abalone(sklego, out_dir):
    inner = zipfile.ZipFile(io.BytesIO(sklego.read("sklego/data/abalone.zip")))
    text = inner.read(inner.namelist()[0]).decode()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = []
    for r in reader:
        rings = int(r[-1])
        # three-way age bins commonly used for abalone classification
        band = "young" if rings <= 8 else ("adult" if rings <= 10 else "old")
        rows.append(r[:-1] + [band])
    cols = [{"name": "sex", "kind": "categorical", "categories": ["F", "I", "M"]}]
    cols += [{"name": h, "kind": "numerical"} for h in header[1:-1]]
    cols.append({"name": "age_band", "kind": "label", "categories": ["young", "adult", "old"]})
    _write(out_dir, "abalone", header[:-1] + ["age_band"], rows, cols)


def main(argv):
    if len(argv) != 3:
        sys.exit(__doc__)
    wheel_dir, out_dir = argv[1], argv[2]
    os.makedirs(out_dir, exist_ok=True)
    keel = _wheel(wheel_dir, "keel_ds")
    orange = _wheel(wheel_dir, "orange3")
    build_ionosphere(orange, out_dir)
    build_tic_tac_toe(keel, out_dir)
    build_wine_quality_red(keel, out_dir)
    build_heart(orange, out_dir)
    build_abalone(_wheel(wheel_dir, "scikit_lego"), out_dir)


if __name__ == "__main__":
    main(sys.argv)
