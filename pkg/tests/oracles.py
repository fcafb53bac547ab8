"""Independent reference implementations used by the test suite.

Everything here is deliberately naive (math module, token-at-a-time loops,
exhaustive enumeration) and shares no code with the package internals it
checks.
"""

import itertools
import math

import numpy as np

from pucl.risk import Priors


# --- dictionary matching: exhaustive non-overlapping subset search ------------


def oracle_annotate(words, entries, label_set):
    """Enumerate every candidate match, then every non-overlapping subset;
    maximize coverage, then minimize the (start, -len, label) key sequence."""
    folded = [w.casefold() for w in words]
    candidates = []
    for surface, type_name in entries:
        toks = surface.casefold().split()
        label = label_set.id_of(type_name)
        for start in range(len(folded) - len(toks) + 1):
            if folded[start : start + len(toks)] == toks:
                candidates.append((start, len(toks), label))
    candidates = sorted(set(candidates))
    best_cov, best_key, best_subset = -1, None, []
    for r in range(len(candidates) + 1):
        for subset in itertools.combinations(candidates, r):
            spans = sorted(subset)
            ok = all(
                a_start + a_len <= b_start
                for (a_start, a_len, _), (b_start, _, _) in zip(spans, spans[1:])
            )
            if not ok:
                continue
            cov = sum(length for _, length, _ in spans)
            key = tuple((s, -length, lab) for s, length, lab in spans)
            if cov > best_cov or (cov == best_cov and key < best_key):
                best_cov, best_key, best_subset = cov, key, spans
    labels = [0] * len(words)
    for start, length, label in best_subset:
        labels[start : start + length] = [label] * length
    return labels


def count_candidates(words, matcher):
    folded = [w.casefold() for w in words]
    return sum(len(matcher.candidates_at(folded, i)) for i in range(len(words)))


# --- confidence-weighted PU estimator: direct transcription --------------------


def naive_loss(dist, target, kind):
    if kind == "ce":
        return -math.log(max(dist[target], 1e-12))
    return sum(abs((1.0 if j == target else 0.0) - p) for j, p in enumerate(dist))


def naive_conf_mpu(dists, labels, lams, pi, eps, gamma, kind):
    k = len(pi)
    positive_total = 0.0
    for i in range(1, k + 1):
        members = [j for j, lab in enumerate(labels) if lab == i]
        if not members:
            continue
        acc = 0.0
        for j in members:
            l_i = naive_loss(dists[j], i, kind)
            l_0 = naive_loss(dists[j], 0, kind)
            term = l_i - l_0
            if lams[j] > eps:
                term += l_0 / lams[j]
            acc += max(0.0, term)
        positive_total += pi[i - 1] / len(members) * acc
    unlabeled = [j for j, lab in enumerate(labels) if lab == 0]
    u_term = 0.0
    if unlabeled:
        u_term = sum(
            naive_loss(dists[j], 0, kind) for j in unlabeled if lams[j] <= eps
        ) / len(unlabeled)
    return gamma * positive_total + u_term


def random_batch(rng, k, size):
    probs = rng.random((size, k + 1)) + 0.05
    probs /= probs.sum(axis=1, keepdims=True)
    labels = rng.integers(0, k + 1, size=size)
    lam = rng.random(size)
    pi = rng.random(k) * (0.8 / k) + 0.05 / k
    return probs, labels, lam, Priors(pi)


# --- span metrics: token-at-a-time double loops --------------------------------


def oracle_metrics(pred, gold, require_type=True):
    """(strict (P,R,F1), relaxed (P,R,F1)) from span lists per sentence."""
    strict_tp = pred_n = gold_n = 0
    relaxed_tp_p = relaxed_tp_r = 0
    for p_spans, g_spans in zip(pred, gold):
        pred_n += len(p_spans)
        gold_n += len(g_spans)
        for p in p_spans:
            if any(
                p.start == g.start and p.end == g.end and p.label == g.label
                for g in g_spans
            ):
                strict_tp += 1
        for p in p_spans:
            if any(
                (set(range(p.start, p.end + 1)) & set(range(g.start, g.end + 1)))
                and (not require_type or p.label == g.label)
                for g in g_spans
            ):
                relaxed_tp_p += 1
        for g in g_spans:
            if any(
                (set(range(p.start, p.end + 1)) & set(range(g.start, g.end + 1)))
                and (not require_type or p.label == g.label)
                for p in p_spans
            ):
                relaxed_tp_r += 1

    def prf(tp_p, tp_r):
        precision = tp_p / pred_n if pred_n else 0.0
        recall = tp_r / gold_n if gold_n else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return precision, recall, f1

    return prf(strict_tp, strict_tp), prf(relaxed_tp_p, relaxed_tp_r)


# --- finite differences over model parameters -----------------------------------


def fd_param_gradients(model, risk_fn, step=1e-6):
    """Central finite differences of risk_fn(model) over every parameter."""
    grads = {}
    for name, param in model.parameters():
        g = np.zeros_like(param)
        flat = param.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = risk_fn(model)
            flat[i] = orig - step
            down = risk_fn(model)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads[name] = g
    return grads


def max_gradient_error(analytic, numeric, rtol=1e-5):
    """Largest violation of |a - n| <= rtol * max(|a|, |n|); values at or
    below the central-difference round-off floor (~1e-9) mean a match."""
    worst = 0.0
    for name, a in analytic.arrays():
        n = numeric[name]
        err = np.abs(a - n) - rtol * np.maximum(np.abs(a), np.abs(n))
        worst = max(worst, float(err.max()))
    return worst


# --- rank correlation -------------------------------------------------------------


def spearman(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty_like(v)
        r[order] = np.arange(len(v), dtype=float)
        # average ranks over ties
        for value in np.unique(v):
            mask = v == value
            r[mask] = r[mask].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx**2).sum()) * float((ry**2).sum()))
    return float((rx * ry).sum() / denom) if denom else 0.0
