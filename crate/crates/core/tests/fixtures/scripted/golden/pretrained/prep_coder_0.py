```python
import csv
import os

COLORS = ["red", "green", "blue"]


def _read(path, limit):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows[:limit] if limit else rows


def _median(values):
    v = sorted(values)
    n = len(v)
    return v[n // 2] if n % 2 else (v[n // 2 - 1] + v[n // 2]) / 2.0


def _features(rows, fill):
    out = []
    for r in rows:
        x1 = float(r["x1"]) if r["x1"] != "" else fill
        out.append([x1, float(r["x2"])] + [1 if r["color"] == c else 0 for c in COLORS])
    return out


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def preprocess_data(data_dir, artifacts_dir, sample_limit=None, seed=0):
    os.makedirs(artifacts_dir, exist_ok=True)
    train = _read(os.path.join(data_dir, "train.csv"), sample_limit)
    test = _read(os.path.join(data_dir, "test.csv"), sample_limit)
    fill = _median([float(r["x1"]) for r in train if r["x1"] != ""])
    header = ["x1", "x2"] + ["color_" + c for c in COLORS]
    _write(os.path.join(artifacts_dir, "train_features.csv"), header, _features(train, fill))
    _write(os.path.join(artifacts_dir, "train_target.csv"), ["label"], [[int(r["label"])] for r in train])
    _write(os.path.join(artifacts_dir, "test_features.csv"), header, _features(test, fill))
```
