```python
import csv
import math
import os
import random


def _table(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        return [[float(x) for x in row] for row in r]


def _fit(X, y, shrink):
    cents = {}
    for cls in sorted(set(y)):
        rows = [x for x, v in zip(X, y) if v == cls]
        cents[cls] = [sum(c) / len(rows) * (1.0 - shrink) for c in zip(*rows)]
    return cents


def _predict(cents, X):
    out = []
    for x in X:
        d = {c: sum((a - b) ** 2 for a, b in zip(x, m)) for c, m in cents.items()}
        out.append(min(sorted(d), key=lambda c: d[c]))
    return out


def _holdout(y, fraction, seed):
    rng = random.Random(seed)
    held = []
    for cls in sorted(set(y)):
        idx = [i for i, v in enumerate(y) if v == cls]
        rng.shuffle(idx)
        held.extend(idx[: int(round(len(idx) * fraction))])
    return sorted(held)


def train_and_predict(data_dir, artifacts_dir, sample_limit=None, seed=0):
    X = _table(os.path.join(artifacts_dir, "train_features.csv"))
    y = [int(r[0]) for r in _table(os.path.join(artifacts_dir, "train_target.csv"))]
    T = _table(os.path.join(artifacts_dir, "test_features.csv"))
    with open(os.path.join(data_dir, "test.csv"), newline="") as fh:
        ids = [row["id"] for row in csv.DictReader(fh)]
    if sample_limit:
        ids = ids[:sample_limit]

    val = _holdout(y, 0.2, seed)
    held = set(val)
    fit_idx = [i for i in range(len(y)) if i not in held]
    best = None
    for shrink in [0.0, 0.5]:
        w = _fit([X[i] for i in fit_idx], [y[i] for i in fit_idx], shrink)
        pred = _predict(w, [X[i] for i in val])
        acc = sum(p == y[i] for p, i in zip(pred, val)) / float(len(val))
        if best is None or acc > best[0]:
            best = (acc, shrink, pred)
    with open(os.path.join(artifacts_dir, "validation_predictions.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "y_pred"])
        w.writerows(zip(val, best[2]))

    final = _fit(X, y, best[1])
    with open(os.path.join(artifacts_dir, "predictions.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label"])
        w.writerows(zip(ids, _predict(final, T)))
```
