"""Independent reference implementations and gradient-checking utilities.

Everything here is deliberately written as plain scalar loops (or mpmath
extended precision) so the vectorized library code is checked against a
structurally different computation, not against itself.
"""

from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np

from futureset.tensor import Tape, Tensor

# ---------------------------------------------------------------------------
# finite differences


def numeric_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar-valued f at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(x)
        flat[i] = orig - h
        f_minus = f(x)
        flat[i] = orig
        g[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray,
                  floor: float = 1e-7) -> float:
    """Worst elementwise relative error, ignoring entries where both
    gradients are tiny (finite differences are pure noise there)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    worst = 0.0
    for a, n in zip(analytic.reshape(-1), numeric.reshape(-1)):
        if abs(a) < floor and abs(n) < floor:
            continue
        worst = max(worst, abs(a - n) / max(abs(a), abs(n)))
    return worst


def autodiff_gradient(build_loss, x: np.ndarray) -> np.ndarray:
    """Gradient of build_loss(Tensor) via the tape, as a numpy array."""
    leaf = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        loss = build_loss(leaf)
        tape.backward(loss, leaves=[leaf])
    return leaf.grad


def check_gradients(build_loss, x: np.ndarray, tol: float = 1e-5,
                    h: float = 1e-5) -> float:
    """Compare tape gradients to central differences; returns the worst
    relative error (callers assert it against their tolerance)."""
    analytic = autodiff_gradient(build_loss, x)

    def value(arr):
        leaf = Tensor(np.array(arr, dtype=np.float64), requires_grad=True)
        with Tape():
            return float(build_loss(leaf).data)

    numeric = numeric_gradient(value, np.array(x, dtype=np.float64), h=h)
    err = max_rel_error(analytic, numeric)
    assert err < tol, f"gradient mismatch: relative error {err} >= {tol}"
    return err


# ---------------------------------------------------------------------------
# scalar-loop numerical references


def matmul_ref(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def softmax_ref_1d(x) -> np.ndarray:
    """Exp-normalize at 50-digit precision, rounded to float64 at the end."""
    with mpmath.workdps(50):
        exps = [mpmath.exp(mpmath.mpf(float(v))) for v in x]
        total = mpmath.fsum(exps)
        return np.array([float(e / total) for e in exps])


def layernorm_ref_row(row, gain, bias, eps: float = 1e-5) -> np.ndarray:
    n = len(row)
    mu = sum(float(v) for v in row) / n
    var = sum((float(v) - mu) ** 2 for v in row) / n
    out = []
    for i in range(n):
        out.append((float(row[i]) - mu) / math.sqrt(var + eps) * float(gain[i])
                   + float(bias[i]))
    return np.array(out)


def sinusoidal_pe_ref(length: int, dim: int) -> np.ndarray:
    """Direct per-entry formula at 50-digit precision."""
    out = np.zeros((length, dim))
    with mpmath.workdps(50):
        for t in range(length):
            for i in range(dim // 2):
                angle = mpmath.mpf(t) / mpmath.power(10000, mpmath.mpf(2 * i) / dim)
                out[t, 2 * i] = float(mpmath.sin(angle))
                out[t, 2 * i + 1] = float(mpmath.cos(angle))
    return out


def attention_ref(q, k, v, wq, bq, wk, bk, wv, bv, wo, bo, num_heads: int):
    """Per-head scalar-style attention over 2D inputs using numpy only for
    the elementary products; heads handled by explicit slicing."""
    d = q.shape[1]
    dh = d // num_heads
    qp = q @ wq + bq
    kp = k @ wk + bk
    vp = v @ wv + bv
    heads = []
    for h in range(num_heads):
        qs = qp[:, h * dh:(h + 1) * dh]
        ks = kp[:, h * dh:(h + 1) * dh]
        vs = vp[:, h * dh:(h + 1) * dh]
        scores = qs @ ks.T / math.sqrt(dh)
        weights = np.zeros_like(scores)
        for i in range(scores.shape[0]):
            row = scores[i] - scores[i].max()
            e = np.exp(row)
            weights[i] = e / e.sum()
        heads.append(weights @ vs)
    return np.concatenate(heads, axis=1) @ wo + bo


def bce_ref(pred, target, clamp: float = 1e-7) -> float:
    total = 0.0
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    for p, t in zip(pred, target):
        p = min(max(p, clamp), 1.0 - clamp)
        total += -(t * math.log(p) + (1.0 - t) * math.log(1.0 - p))
    return total / pred.size


# ---------------------------------------------------------------------------
# matcher references


def greedy_simulate(gt_spans, gt_classes, pred_spans):
    """Step-by-step simulation of the greedy correspondence rules.

    gt_spans: list of (ts, te); gt_classes: parallel class list;
    pred_spans: list of (ts, te). Returns the padded assignment array.
    Written independently of the library implementation: explicit removal
    sets and repeated full scans.
    """
    n = len(pred_spans)
    remaining_gt = list(range(len(gt_spans)))
    remaining_pred = set(range(n))
    assignment = [None] * n

    def duration(i):
        return gt_spans[i][1] - gt_spans[i][0]

    while remaining_gt:
        best = None
        for i in remaining_gt:
            key = (-duration(i), gt_spans[i][0], gt_classes[i])
            if best is None or key < best[0]:
                best = (key, i)
        i = best[1]
        remaining_gt.remove(i)
        gs, ge = gt_spans[i]
        best_j = None
        best_overlap = None
        for j in sorted(remaining_pred):
            ps, pe = pred_spans[j]
            overlap = min(ge, pe) - max(gs, ps)
            if overlap < 0:
                overlap = 0.0
            if best_overlap is None or overlap > best_overlap:
                best_overlap = overlap
                best_j = j
        if best_overlap == 0.0:
            gc = (gs + ge) / 2.0
            best_dist = None
            for j in sorted(remaining_pred):
                ps, pe = pred_spans[j]
                dist = abs((ps + pe) / 2.0 - gc)
                if best_dist is None or dist < best_dist:
                    best_dist = dist
                    best_j = j
        assignment[i] = best_j
        remaining_pred.remove(best_j)
    slot = len(gt_spans)
    for j in sorted(remaining_pred):
        assignment[slot] = j
        slot += 1
    return np.array(assignment, dtype=np.intp)


def brute_force_min_cost(cost: np.ndarray) -> float:
    """Exact assignment optimum by enumerating every permutation."""
    n = cost.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(n)):
        total = sum(cost[i, perm[i]] for i in range(n))
        best = min(best, total)
    return best


# ---------------------------------------------------------------------------
# metric references


def average_precision_ref(scores, positives) -> float:
    """Precision averaged at positive ranks, computed by explicit counting
    over a bubble-sorted ranking (ties broken by original index)."""
    order = list(range(len(scores)))
    for i in range(len(order)):
        for j in range(len(order) - 1 - i):
            a, b = order[j], order[j + 1]
            if (scores[b], -b) > (scores[a], -a):
                order[j], order[j + 1] = b, a
    hits = 0
    acc = 0.0
    total_pos = sum(1 for p in positives if p)
    for rank, idx in enumerate(order, start=1):
        if positives[idx]:
            hits += 1
            acc += hits / rank
    return acc / total_pos


def random_prediction_set(rng: np.random.Generator, n: int, num_classes: int,
                          t_obs: float, t_ant: float):
    """A valid random PredictionSet for matcher/loss tests."""
    from futureset.model import PredictionSet

    logits = rng.normal(size=(n, num_classes + 1))
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    a = t_obs + rng.random(n) * t_ant
    b = t_obs + rng.random(n) * t_ant
    starts = np.minimum(a, b)
    ends = np.maximum(a, b)
    return PredictionSet(class_probs=probs, starts=starts, ends=ends,
                         t_obs=float(t_obs), t_ant=float(t_ant))


def random_gt_instances(rng: np.random.Generator, count: int, num_classes: int,
                        t_obs: float, t_ant: float):
    from futureset.instances import ActionInstance

    out = []
    for _ in range(count):
        a = t_obs + rng.random() * t_ant
        b = t_obs + rng.random() * t_ant
        out.append(ActionInstance(int(rng.integers(num_classes)),
                                  min(a, b), max(a, b)))
    return out
