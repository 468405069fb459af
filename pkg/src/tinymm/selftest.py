"""Built-in oracle suites, runnable in the field via `tinymm selftest`.

Each suite cross-checks a fast implementation against an independent
brute-force reference on seeded random instances and prints one line per
suite. Returns the list of failed suite names.
"""

from __future__ import annotations

import math

import numpy as np

from .adapters import Adapter, apply, merge, new_adapter
from .alignment import AlignConfig, alignment_grad, alignment_loss, dist_matrix, dtw_accumulate
from .ctc import FramePosteriors, UnitSequence, collapse_units, ctc_loss, greedy_decode
from .extractor import ExtractorConfig, prune, retention_schedule
from .longaudio import ChunkConfig, SpeechStream, chunk_and_compress, compressed_length
from .modality import TokenSequence, synth_sequence
from .numerics import finite_diff_grad, matmul, softmax_row
from .oracles import (
    ctc_loss_bruteforce,
    dtw_min_cost_bruteforce,
    matmul_naive,
    topk_bruteforce,
)


def _suite_matmul(rng) -> bool:
    for _ in range(10):
        a = rng.standard_normal((5, 4))
        b = rng.standard_normal((4, 6))
        if not np.allclose(matmul(a, b), matmul_naive(a, b), rtol=1e-12, atol=1e-12):
            return False
    return True


def _suite_softmax(rng) -> bool:
    for _ in range(20):
        v = rng.standard_normal(rng.integers(1, 9))
        tau = float(rng.uniform(0.1, 4.0))
        p = softmax_row(v, tau)
        if abs(p.sum() - 1.0) > 1e-12 or np.any(p < 0):
            return False
        if not np.allclose(p, softmax_row(v / tau, 1.0), atol=1e-12):
            return False
    return True


def _suite_dtw(rng) -> bool:
    for _ in range(30):
        L, S = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        d = rng.uniform(0.0, 3.0, size=(L, S))
        cost = dtw_accumulate(d)
        brute = dtw_min_cost_bruteforce(d)
        if abs(cost.total - brute) > 1e-9 * max(1.0, abs(brute)):
            return False
        path_sum = sum(d[l, s] for l, s in cost.path)
        if abs(path_sum - cost.total) > 1e-9:
            return False
    return True


def _suite_alignment_grad(rng) -> bool:
    cfg = AlignConfig(tau=1.3)
    for _ in range(10):
        L, S, d = int(rng.integers(2, 5)), int(rng.integers(2, 5)), 4
        x = rng.standard_normal((L, d))
        y = rng.standard_normal((S, d))
        gx, gy = alignment_grad(x, y, cfg)

        def flat_loss(vec, L=L, S=S, d=d):
            return alignment_loss(vec[: L * d].reshape(L, d), vec[L * d :].reshape(S, d), cfg)

        num = finite_diff_grad(flat_loss, np.concatenate([x.ravel(), y.ravel()]), h=1e-5)
        ana = np.concatenate([gx.ravel(), gy.ravel()])
        denom = max(float(np.max(np.abs(num))), 1e-8)
        if float(np.max(np.abs(ana - num))) / denom > 1e-4:
            return False
    return True


def _suite_ctc(rng) -> bool:
    for _ in range(25):
        T = int(rng.integers(1, 5))
        K = int(rng.integers(1, 4))
        p = rng.uniform(0.05, 1.0, size=(T, K + 1))
        p /= p.sum(axis=1, keepdims=True)
        post = FramePosteriors(logprobs=np.log(p))
        tlen = int(rng.integers(0, 3))
        target = UnitSequence(
            units=tuple(int(u) for u in rng.integers(1, K + 1, size=tlen)), num_units=K
        )
        fast = ctc_loss(post, target)
        brute = ctc_loss_bruteforce(post.logprobs, target.units)
        if math.isinf(fast) != math.isinf(brute):
            return False
        if math.isfinite(fast) and abs(fast - brute) > 1e-9 * max(1.0, abs(brute)):
            return False
    decoded = greedy_decode(
        FramePosteriors(logprobs=np.log(np.array([[0.1, 0.9], [0.8, 0.2], [0.1, 0.9]])))
    )
    return decoded.units == (1, 1) and collapse_units([0, 5, 0, 5, 5, 0], 5).units == (5, 5)


def _suite_schedule(rng) -> bool:
    if retention_schedule(1024, ExtractorConfig(4, 0.8)) != [820, 656, 525, 420]:
        return False
    if retention_schedule(3, ExtractorConfig(4, 0.5)) != [2, 1, 1, 1]:
        return False
    for _ in range(20):
        L = int(rng.integers(0, 500))
        cfg = ExtractorConfig(int(rng.integers(1, 6)), float(rng.uniform(0.2, 1.0)))
        sched = retention_schedule(L, cfg)
        prev = L
        for c in sched:
            if c > prev or (prev > 0 and c < 1):
                return False
            prev = c
    return True


def _suite_prune(rng) -> bool:
    for _ in range(20):
        n = int(rng.integers(2, 30))
        seq = synth_sequence([("text", 2), ("image", n)], 6, seed=int(rng.integers(1e6)))
        scores = rng.uniform(size=n)
        k = int(rng.integers(0, n + 1))
        kept = prune(seq, scores, k)
        got = set(int(p) for p in kept.orig_pos[kept.text_mask() == False])  # noqa: E712
        want = topk_bruteforce(list(scores), list(range(2, n + 2)), k)
        if got != want or int(kept.text_mask().sum()) != 2:
            return False
    return True


def _suite_adapters(rng) -> bool:
    for _ in range(10):
        d_in, d_out, r = 6, 5, 2
        ad = Adapter(
            a=rng.standard_normal((r, d_in)),
            b=rng.standard_normal((d_out, r)),
            scale=float(rng.uniform(0.5, 2.0)),
        )
        w = rng.standard_normal((d_out, d_in))
        x = rng.standard_normal((d_in, 7))
        dense = (ad.scale * ad.b @ ad.a + w) @ x
        if not np.allclose(apply(ad, w, x), dense, rtol=1e-10, atol=1e-12):
            return False
        merged = merge(ad, w)
        zero = new_adapter(d_in, d_out, r, seed=0)
        if not np.allclose(apply(zero, merged, x), apply(ad, w, x), rtol=1e-10, atol=1e-12):
            return False
    return True


def _suite_chunk(rng) -> bool:
    cfg = ChunkConfig()
    for _ in range(50):
        T = int(rng.integers(1, 4000))
        stream = SpeechStream(frames=rng.standard_normal((T, 3)), frames_per_second=50)
        toks = chunk_and_compress(stream, cfg)
        want = math.ceil(T / cfg.window_frames) * cfg.tokens_per_window
        if len(toks) != want or compressed_length(T, cfg) != want:
            return False
    return True


_SUITES = [
    ("matmul vs triple loop", _suite_matmul),
    ("softmax properties", _suite_softmax),
    ("dtw vs path enumeration", _suite_dtw),
    ("alignment gradient vs finite differences", _suite_alignment_grad),
    ("ctc vs alignment enumeration", _suite_ctc),
    ("retention schedule", _suite_schedule),
    ("prune vs argsort", _suite_prune),
    ("adapter algebra", _suite_adapters),
    ("chunk length law", _suite_chunk),
]


def run_selftest(verbose: bool = True) -> list[str]:
    failures = []
    for name, fn in _SUITES:
        rng = np.random.default_rng(12345)
        ok = False
        try:
            ok = fn(rng)
        except Exception as e:  # a crash is a failure, keep going
            if verbose:
                print(f"[FAIL] {name}: raised {type(e).__name__}: {e}")
            failures.append(name)
            continue
        if verbose:
            print(f"[{'ok' if ok else 'FAIL'!s:>4}] {name}")
        if not ok:
            failures.append(name)
    if verbose:
        print(f"{len(_SUITES) - len(failures)}/{len(_SUITES)} suites passed")
    return failures
