#!/usr/bin/env python3
"""Independent reference for `referkit analyze`.

Recomputes the per-level table of an analysis run (point estimate, bootstrap
mean and population std, display strings and up/equal/down markers) from the
input files, using nothing but the Python standard library.

Floating-point operations are performed in the same order as the Rust code so
that results agree bit for bit; everything else (CSV parsing, the random
generator, sorting, kappa, AUC, the uncertainty measures) is written out
independently here.

    python3 scripts/reference_report.py CASE.json OUT.json

CASE.json holds the same fields as an `analyze` TOML config; relative paths
are resolved against the directory of CASE.json.
"""

import csv
import json
import math
import os
import sys

MASK = (1 << 64) - 1
ROW_SUM_TOLERANCE = 1e-6
RENORMALIZE_THRESHOLD = 1e-12
RDR_THRESHOLD = 2


# ---------------------------------------------------------------- random ----

def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK


class Xoshiro256pp:
    JUMP = (0x180EC6D33CFD0ABA, 0xD5A61266F0C9392C, 0xA9582618E03FC9AA, 0x39ABDC4529B1661C)

    def __init__(self, seed):
        state = seed & MASK
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self.s = s

    def copy(self):
        other = Xoshiro256pp.__new__(Xoshiro256pp)
        other.s = list(self.s)
        return other

    def next_u64(self):
        s = self.s
        result = (rotl((s[0] + s[3]) & MASK, 23) + s[0]) & MASK
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
        return result

    def jump(self):
        acc = [0, 0, 0, 0]
        for word in self.JUMP:
            for b in range(64):
                if word & (1 << b):
                    for k in range(4):
                        acc[k] ^= self.s[k]
                self.next_u64()
        self.s = acc

    def below(self, n):
        return (self.next_u64() * n) >> 64


def children(seed, count):
    rng = Xoshiro256pp(seed)
    out = []
    for _ in range(count):
        rng.jump()
        out.append(rng.copy())
    return out


# ------------------------------------------------------------------ data ----

def fsum_left(values):
    # Rust's `Iterator::sum` for floats: left fold starting at -0.0.
    acc = -0.0
    for v in values:
        acc += v
    return acc


def check_row(row):
    for p in row:
        if not (0.0 <= p <= 1.0):
            raise ValueError("entry %r outside [0, 1]" % p)
    total = fsum_left(row)
    if abs(total - 1.0) > ROW_SUM_TOLERANCE:
        raise ValueError("row sums to %r" % total)
    if abs(total - 1.0) > RENORMALIZE_THRESHOLD:
        row = [p / total for p in row]
    return row


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        rows = [[cell.strip() for cell in r] for r in csv.reader(f)]
    return rows[0], rows[1:]


def load_predictions(path):
    header, body = read_rows(path)
    m = len(header) - 2
    ids, labels, probs = [], [], []
    for r in body:
        ids.append(r[0])
        labels.append(int(r[1]))
        probs.append(check_row([float(x) for x in r[2:]]))
    # Rows are checked when parsed and again when the set is built.
    return {"ids": ids, "labels": labels, "m": m, "probs": [check_row(p) for p in probs]}


def load_stack(path):
    header, body = read_rows(path)
    m = len(header) - 3
    ids, labels, index, cells = [], [], {}, {}
    n_samples = 0
    for r in body:
        key, sample, label = r[0], int(r[1]), int(r[2])
        if key not in index:
            index[key] = len(ids)
            ids.append(key)
            labels.append(label)
        cells[(index[key], sample)] = check_row([float(x) for x in r[3:]])
        n_samples = max(n_samples, sample + 1)
    return ids, labels, m, [[check_row(cells[(i, s)]) for i in range(len(ids))] for s in range(n_samples)]


def aggregate(ids, labels, m, samples):
    n = len(ids)
    acc = [[0.0] * m for _ in range(n)]
    for sample in samples:
        for i in range(n):
            for k in range(m):
                acc[i][k] += sample[i][k]
    s = float(len(samples))
    probs = [[v / s for v in row] for row in acc]
    return {"ids": ids, "labels": labels, "m": m, "probs": [check_row(p) for p in probs]}


def load_confusion(path):
    with open(path, newline="", encoding="utf-8") as f:
        rows = [[int(c.strip()) for c in r] for r in csv.reader(f)]
    return len(rows), [c for r in rows for c in r]


def binarize(preds):
    probs = []
    for row in preds["probs"]:
        neg = fsum_left(row[:RDR_THRESHOLD])
        pos = fsum_left(row[RDR_THRESHOLD:])
        probs.append(check_row([neg, pos]))
    labels = [1 if l >= RDR_THRESHOLD else 0 for l in preds["labels"]]
    return {"ids": preds["ids"], "labels": labels, "m": 2, "probs": probs}


def binarize_confusion(m, counts):
    out = [0, 0, 0, 0]
    for pred in range(m):
        for truth in range(m):
            out[2 * (pred >= RDR_THRESHOLD) + (truth >= RDR_THRESHOLD)] += counts[pred * m + truth]
    return 2, out


def select(preds, indices):
    return {
        "ids": [preds["ids"][i] for i in indices],
        "labels": [preds["labels"][i] for i in indices],
        "m": preds["m"],
        "probs": [preds["probs"][i] for i in indices],
    }


# --------------------------------------------------------------- metrics ----

class MetricError(Exception):
    pass


def kappa(counts, m):
    rows = [0.0] * m
    cols = [0.0] * m
    for i in range(m):
        for j in range(m):
            rows[i] += counts[i * m + j]
            cols[j] += counts[i * m + j]
    n = fsum_left(rows)
    if n <= 0.0:
        raise MetricError("empty matrix")
    disagreement = 0.0
    chance = 0.0
    for i in range(m):
        for j in range(m):
            d = float(i) - float(j)
            w = d * d
            disagreement += w * counts[i * m + j]
            chance += w * rows[i] * cols[j]
    if chance == 0.0:
        if disagreement == 0.0:
            return 1.0
        raise MetricError("degenerate agreement")
    return 1.0 - disagreement * n / chance


def argmax(row):
    best = 0
    for i in range(1, len(row)):
        if row[i] > row[best]:
            best = i
    return best


def qwk(preds):
    m = preds["m"]
    counts = [0] * (m * m)
    for row, label in zip(preds["probs"], preds["labels"]):
        counts[argmax(row) * m + label] += 1
    return 100.0 * kappa([float(c) for c in counts], m)


def auc(preds):
    scores = [row[1] for row in preds["probs"]]
    labels = preds["labels"]
    n_pos = sum(1 for l in labels if l == 1)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("single class")
    order = sorted(range(len(scores)), key=lambda k: scores[k])
    rank_sum = 0.0
    start = 0
    while start < len(order):
        end = start + 1
        while end < len(order) and scores[order[end]] == scores[order[start]]:
            end += 1
        midrank = float(start + 1 + end) / 2.0
        for k in order[start:end]:
            if labels[k] == 1:
                rank_sum += midrank
        start = end
    p = float(n_pos)
    u = rank_sum - p * (p + 1.0) / 2.0
    return 100.0 * (u / (p * float(n_neg)))


METRICS = {"qwk": qwk, "auc": auc}


def evaluate(metric, preds):
    try:
        return METRICS[metric](preds)
    except MetricError:
        return None


# ----------------------------------------------------------- uncertainty ----

def entropy(row):
    acc = 0.0
    for p in row:
        if p > 0.0:
            acc -= p * math.log(p)
    return acc


def max_prob(row):
    return 1.0 - max(row)


def expected_risk(row, loss):
    acc = 0.0
    for i, p in enumerate(row):
        if p > 0.0:
            acc += p * loss(row, i)
    return acc


def table_loss(m, values):
    def loss(row, target):
        return fsum_left(row[j] * values[j * m + target] for j in range(m))
    return loss


def qwk_risk_table(m, counts, smoothing):
    base = [float(c) + smoothing for c in counts]
    work = list(base)
    values = [0.0] * (m * m)
    for j in range(m):
        for i in range(m):
            work[j * m + i] += 1.0
            values[j * m + i] = -kappa(work, m)
            work[j * m + i] = base[j * m + i]
    return values


def uncertainty(case, preds, confusion):
    m = preds["m"]
    measure = case["measure"]
    if measure == "entropy":
        return [entropy(r) for r in preds["probs"]]
    if measure == "max_prob":
        return [max_prob(r) for r in preds["probs"]]
    if measure == "nll_risk":
        return [expected_risk(r, lambda row, t: -math.log(row[t])) for r in preds["probs"]]
    if measure == "zero_one_risk":
        loss = table_loss(m, [0.0 if k // m == k % m else 1.0 for k in range(m * m)])
        return [expected_risk(r, loss) for r in preds["probs"]]
    if measure == "qwk_risk":
        cm, counts = confusion
        loss = table_loss(m, qwk_risk_table(cm, counts, case.get("smoothing", 0.0)))
        return [expected_risk(r, loss) for r in preds["probs"]]
    raise ValueError("unknown measure " + measure)


# -------------------------------------------------------------- referral ----

def sort_key(x):
    # Total order on finite floats where -0.0 sorts before 0.0.
    return (x, math.copysign(1.0, x))


def retained(u, level):
    n = len(u)
    keep = n - int(math.floor(level * n))
    order = sorted(range(n), key=lambda i: (sort_key(u[i]), i))
    return sorted(order[:keep])


def one_decimal(x):
    return "%.1f" % x


def marker(prev, nxt):
    if float(one_decimal(prev)) == float(one_decimal(nxt)):
        return "equal"
    return "up" if nxt > prev else "down"


def mean_std(values):
    if not values:
        return None, None
    n = float(len(values))
    total = 0.0
    for v in values:
        total += v
    mean = total / n
    sq = 0.0
    for v in values:
        d = v - mean
        sq += d * d
    return mean, math.sqrt(sq / n)


# ------------------------------------------------------------------ main ----

def run(case, base):
    path = lambda p: os.path.join(base, p)
    if case.get("predictions"):
        preds = load_predictions(path(case["predictions"]))
    else:
        preds = aggregate(*load_stack(path(case["stack"])))
    confusion = None
    if case["measure"] == "qwk_risk":
        confusion = load_confusion(path(case["confusion"]))

    scheme = case.get("scheme")
    if scheme is None:
        scheme_name = "generic%d" % preds["m"]
    elif scheme == "pirc5":
        scheme_name = "pirc5"
    else:
        scheme_name = "rdr2"
        if preds["m"] != 2:
            preds = binarize(preds)
            if confusion is not None and confusion[0] == 5:
                confusion = binarize_confusion(*confusion)

    levels = case.get("levels", [0.0, 0.3, 0.5])
    metric = case.get("metric", "qwk")
    b = case.get("bootstrap", 100)
    u = uncertainty(case, preds, confusion)
    n = len(u)

    points = [evaluate(metric, select(preds, retained(u, lv))) for lv in levels]

    order = sorted(range(n), key=lambda i: preds["ids"][i])
    cpreds = select(preds, order)
    cu = [u[i] for i in order]
    per_level = [[] for _ in levels]
    for rng in children(case["seed"], b):
        draws = [rng.below(n) for _ in range(n)]
        sample = select(cpreds, draws)
        su = [cu[i] for i in draws]
        for k, lv in enumerate(levels):
            v = evaluate(metric, select(sample, retained(su, lv)))
            if v is not None:
                per_level[k].append(v)

    stats = [mean_std(vals) for vals in per_level]
    entries = []
    for k, lv in enumerate(levels):
        mean, std = stats[k]
        mk = None
        if k > 0 and stats[k - 1][0] is not None and mean is not None:
            mk = marker(stats[k - 1][0], mean)
        entries.append({
            "level": lv,
            "retained_count": n - int(math.floor(lv * n)),
            "point_estimate": points[k],
            "mean": mean,
            "std": std,
            "n_valid": len(per_level[k]),
            "n_skipped": b - len(per_level[k]),
            "display": None if mean is None else "%s ± %s" % (one_decimal(mean), one_decimal(std)),
            "marker": mk,
        })
    return {
        "scheme": scheme_name,
        "measure": case["measure"],
        "metric": metric,
        "n_examples": n,
        "n_classes": preds["m"],
        "levels": entries,
    }


def main(argv):
    if len(argv) != 3:
        sys.exit(__doc__)
    with open(argv[1], encoding="utf-8") as f:
        case = json.load(f)
    golden = run(case, os.path.dirname(os.path.abspath(argv[1])))
    with open(argv[2], "w", encoding="utf-8") as f:
        json.dump(golden, f, indent=2, ensure_ascii=False)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv)
