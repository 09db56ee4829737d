"""Security mathematics: exact election probabilities, concentration
bounds, the worst-case credential fraction, parameter solving, and Monte
Carlo validators.

The core-election Monte Carlo deliberately runs through the same
without-replacement sampler the membership module uses for its elections,
so the measured frequencies are the frequencies of the deployed mechanism
and not of a lookalike model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from multiprocessing import get_context
import numpy as np

from .crypto import Prg, encode_int, hash_digest, tagged_hash
from .sampling import sample_without_replacement

log = logging.getLogger(__name__)

# Exact rational arithmetic below this population size; log-gamma above.
_EXACT_LIMIT = 5000

_MC_CHUNK = 2048


def _log_comb(n: int, k: int) -> float:
    if k < 0 or k > n:
        return float("-inf")
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _pmf_fraction(s: int, m: int, s_min: int, k: int) -> Fraction:
    if k < 0 or k > s_min or k > m or s_min - k > s - m:
        return Fraction(0)
    return Fraction(
        math.comb(m, k) * math.comb(s - m, s_min - k), math.comb(s, s_min)
    )


def hypergeom_pmf(s: int, m: int, s_min: int, k: int) -> float:
    """P(exactly k of the s_min sampled members are malicious) when m of
    the s shard members are malicious; sampling is without replacement."""
    if not (0 <= s_min <= s and 0 <= m <= s):
        raise ValueError("require 0 <= s_min <= s and 0 <= m <= s")
    if k < 0 or k > s_min or k > m or s_min - k > s - m:
        return 0.0
    if s <= _EXACT_LIMIT:
        return float(_pmf_fraction(s, m, s_min, k))
    log_p = (
        _log_comb(m, k)
        + _log_comb(s - m, s_min - k)
        - _log_comb(s, s_min)
    )
    return math.exp(log_p)


def exceedance_threshold(fraction: Fraction, sample_size: int) -> int:
    """Smallest integer count whose sampled fraction reaches ``fraction``."""
    return math.ceil(Fraction(fraction) * sample_size)


def exact_core_tail(s: int, m: int, s_min: int, mu_core) -> Fraction:
    """Exact P(sampled malicious fraction >= mu_core), rational arithmetic."""
    threshold = exceedance_threshold(Fraction(mu_core), s_min)
    return sum(
        (_pmf_fraction(s, m, s_min, k) for k in range(threshold, s_min + 1)),
        Fraction(0),
    )


def core_corruption_bound(mu_core, mu_shard, s_min: int) -> float:
    """Concentration bound on electing a corrupted core from a shard whose
    malicious fraction is mu_shard: exp(-2 (mu_core - mu_shard)^2 s_min)."""
    if not mu_shard < mu_core:
        raise ValueError("bound vacuous unless mu_shard < mu_core")
    gap = float(mu_core) - float(mu_shard)
    return math.exp(-2.0 * gap * gap * s_min)


def shard_tail_bound(mu_shard, mu_cred, S: int, K) -> float:
    """Union bound on any shard exceeding a mu_shard malicious fraction
    when credentials are assigned uniformly: K exp(-2 (mu_shard-mu_cred)^2 S).

    For the worst case pass S = s_min and K = N / s_min (the maximal shard
    count the overlay admits)."""
    if not mu_cred < mu_shard:
        raise ValueError("bound vacuous unless mu_cred < mu_shard")
    gap = float(mu_shard) - float(mu_cred)
    return float(K) * math.exp(-2.0 * gap * gap * S)


def _malicious_total(N: int, mu_cred) -> int:
    exact = Fraction(mu_cred) * N
    if exact.denominator != 1:
        log.info("N*mu_cred = %s not integral; rounding down", float(exact))
    return math.floor(exact)


def exact_single_shard_tail_fraction(m: int, S: int, N: int, mu_cred) -> Fraction:
    if not (0 <= m <= S <= N):
        raise ValueError("require 0 <= m <= S <= N")
    total_malicious = _malicious_total(N, mu_cred)
    denom = math.comb(N, total_malicious)
    acc = Fraction(0)
    for k in range(m, min(S, total_malicious) + 1):
        acc += Fraction(math.comb(S, k) * math.comb(N - S, total_malicious - k), denom)
    return acc


def exact_single_shard_tail(m: int, S: int, N: int, mu_cred) -> float:
    """Exact P(one fixed shard of size S holds >= m malicious credentials)
    under uniform assignment of floor(N*mu_cred) malicious among N."""
    if N <= _EXACT_LIMIT:
        return float(exact_single_shard_tail_fraction(m, S, N, mu_cred))
    total_malicious = _malicious_total(N, mu_cred)
    log_denom = _log_comb(N, total_malicious)
    acc = 0.0
    for k in range(m, min(S, total_malicious) + 1):
        acc += math.exp(
            _log_comb(S, k) + _log_comb(N - S, total_malicious - k) - log_denom
        )
    return acc


def mu_cred(mu, M: int) -> Fraction:
    """Worst-case fraction of adversary credentials given stake fraction mu
    and per-UTXO cap M: the adversary splits into 1-stake UTXOs while
    honest users hold M-stake ones."""
    mu = Fraction(mu)
    if not 0 < mu < 1:
        raise ValueError("mu must lie strictly between 0 and 1")
    if M < 1:
        raise ValueError("stake cap must be at least 1")
    return 1 / (1 + Fraction(1, M) * (1 / mu - 1))


@dataclass(frozen=True)
class SolveResult:
    feasible: bool
    s_min: int | None
    mu_shard: float | None
    report: dict


def _shard_windows(mu_cred_val: float, mu_core_val: float, kappa: float, N: int, s: int):
    """Feasible mu_shard window at core size s: the union bound pushes it
    up from mu_cred, the core bound caps it below mu_core."""
    k_worst = max(N / s, 1.0)
    lower = mu_cred_val + math.sqrt((kappa + math.log(k_worst)) / (2.0 * s))
    upper = mu_core_val - math.sqrt(kappa / (2.0 * s))
    return lower, upper


def _printed_upper(mu_cred_val: float, kappa: float, N: int, s: int) -> float | None:
    inner = kappa - math.log(max(N / s, 1.0))
    if inner < 0:
        return None
    return mu_cred_val + math.sqrt(inner / (2.0 * s))


def solve_params(
    mu,
    kappa: float,
    N: int,
    M: int,
    mu_core,
    s_cap: int = 1 << 20,
    use_printed_form: bool = False,
) -> SolveResult:
    """Smallest core size (and a matching mu_shard) meeting the kappa
    target for both the core-corruption bound and the any-shard union bound.

    ``use_printed_form`` swaps the union-bound constraint for the
    alternative published inequality (its direction is inconsistent with
    the bound derivation; it is exposed only for comparison and its output
    does not self-verify against the union bound).
    """
    mu_cred_val = float(mu_cred(mu, M))
    mu_core_val = float(Fraction(mu_core))
    if mu_cred_val >= mu_core_val:
        return SolveResult(
            feasible=False,
            s_min=None,
            mu_shard=None,
            report={"reason": "mu_cred >= mu_core", "mu_cred": mu_cred_val},
        )

    def feasible(s: int) -> bool:
        lower, upper = _shard_windows(mu_cred_val, mu_core_val, kappa, N, s)
        if use_printed_form:
            printed = _printed_upper(mu_cred_val, kappa, N, s)
            if printed is None:
                return False
            lower = mu_cred_val + 1e-12
            upper = min(upper, printed)
        return lower <= upper

    if not feasible(s_cap):
        return SolveResult(
            feasible=False,
            s_min=None,
            mu_shard=None,
            report={"reason": f"no feasible core size up to {s_cap}"},
        )
    lo, hi = 1, s_cap
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(mid):
            hi = mid
        else:
            lo = mid + 1
    s_min = lo

    lower, upper = _shard_windows(mu_cred_val, mu_core_val, kappa, N, s_min)
    if use_printed_form:
        printed = _printed_upper(mu_cred_val, kappa, N, s_min)
        lower, upper = mu_cred_val, min(upper, printed)
    mu_shard = (lower + upper) / 2.0

    core_residual = core_corruption_bound(mu_core_val, mu_shard, s_min)
    union_residual = shard_tail_bound(mu_shard, mu_cred_val, s_min, max(N / s_min, 1.0))
    target = math.exp(-kappa)
    report = {
        "mu_cred": mu_cred_val,
        "mu_core": mu_core_val,
        "kappa": kappa,
        "N": N,
        "target": target,
        "core_residual": core_residual,
        "union_residual": union_residual,
        "window": (lower, upper),
        "printed_form_upper": _printed_upper(mu_cred_val, kappa, N, s_min),
        "used_printed_form": use_printed_form,
    }
    if not use_printed_form:
        # Replay both inequalities; the search guarantees they hold.
        assert core_residual <= target * (1 + 1e-9)
        assert union_residual <= target * (1 + 1e-9)
    return SolveResult(feasible=True, s_min=s_min, mu_shard=mu_shard, report=report)


def _seed_digest(seed) -> bytes:
    if isinstance(seed, bytes):
        return seed if len(seed) == 32 else hash_digest(seed)
    return hash_digest(str(seed).encode("utf-8"))


def _chunk_sizes(trials: int) -> list[int]:
    """Fixed chunk layout; identical regardless of worker count."""
    full, rest = divmod(trials, _MC_CHUNK)
    sizes = [_MC_CHUNK] * full
    if rest:
        sizes.append(rest)
    return sizes


def _core_chunk(args) -> int:
    s, m, s_min, threshold, n_trials, chunk_seed = args
    markers = [1] * m + [0] * (s - m)
    prg = Prg(chunk_seed)
    exceed = 0
    for _ in range(n_trials):
        picked = sample_without_replacement(prg, markers, s_min)
        if sum(picked) >= threshold:
            exceed += 1
    return exceed


def _run_chunks(worker, jobs: list, workers: int) -> list:
    if workers <= 1:
        return [worker(job) for job in jobs]
    with get_context("fork").Pool(processes=workers) as pool:
        return pool.map(worker, jobs)


def monte_carlo_core(
    s: int,
    m: int,
    s_min: int,
    mu_core,
    trials: int,
    seed,
    workers: int = 1,
) -> float:
    """Empirical frequency of electing a core at or above the mu_core
    malicious fraction, sampling s_min from a shard of s members (m of
    them malicious) with the production election sampler."""
    if trials < 1:
        raise ValueError("trials must be positive")
    root = _seed_digest(seed)
    threshold = exceedance_threshold(Fraction(mu_core), s_min)
    jobs = [
        (s, m, s_min, threshold, n, tagged_hash(b"mc-core", root, encode_int(i)))
        for i, n in enumerate(_chunk_sizes(trials))
    ]
    counts = _run_chunks(_core_chunk, jobs, workers)
    return sum(counts) / trials


def _assignment_chunk(args) -> int:
    N, K, S, total_malicious, threshold, n_trials, chunk_seed = args
    rng = np.random.default_rng(int.from_bytes(chunk_seed, "big"))
    remaining_total = np.full(n_trials, N, dtype=np.int64)
    remaining_bad = np.full(n_trials, total_malicious, dtype=np.int64)
    exceeded = np.zeros(n_trials, dtype=bool)
    for _ in range(K):
        ngood = remaining_bad
        nbad = remaining_total - remaining_bad
        counts = rng.hypergeometric(ngood, nbad, S)
        exceeded |= counts >= threshold
        remaining_bad = remaining_bad - counts
        remaining_total = remaining_total - S
    return int(exceeded.sum())


def monte_carlo_assignment(
    N: int,
    K: int,
    S: int,
    mu_cred_frac,
    mu_shard,
    trials: int,
    seed,
    workers: int = 1,
) -> float:
    """Empirical frequency that any of K shards of size S receives at
    least mu_shard*S of the floor(N*mu_cred) uniformly assigned malicious
    credentials."""
    if N != K * S:
        raise ValueError("require N = K * S")
    if trials < 1:
        raise ValueError("trials must be positive")
    total_malicious = _malicious_total(N, mu_cred_frac)
    threshold = exceedance_threshold(Fraction(mu_shard), S)
    root = _seed_digest(seed)
    jobs = [
        (N, K, S, total_malicious, threshold, n, tagged_hash(b"mc-assign", root, encode_int(i)))
        for i, n in enumerate(_chunk_sizes(trials))
    ]
    counts = _run_chunks(_assignment_chunk, jobs, workers)
    return sum(counts) / trials


@dataclass(frozen=True)
class GrindComparison:
    shard_labels: tuple[str, ...]
    grind_counts: tuple[int, ...]
    passive_counts: tuple[int, ...]
    chi2: float
    p_value: float
    epochs: int


@dataclass(frozen=True)
class _SeedOnlyHeader:
    seed: bytes


def compare_grind_passive(
    n_adversary: int,
    shard_bits: int,
    epochs: int,
    seed,
    epoch_length: int = 5,
) -> GrindComparison:
    """Measure whether respending ahead of each renewal shifts where the
    adversary's credentials land.

    Both arms run the production credential derivation and prefix routing
    against a fixed 2^shard_bits directory; the grinding arm replaces every
    key before each epoch's seed is drawn (the delay rule means the new
    keys commit before the randomness they will be hashed with).
    """
    from scipy.stats import chi2_contingency

    from .credentials import derive_credential
    from .crypto import keygen
    from .overlay import route

    root = _seed_digest(seed)
    labels = ["".join(bits) for bits in _bit_strings(shard_bits)]
    directory = {label: None for label in labels}
    index = {label: i for i, label in enumerate(labels)}

    passive_keys = [
        keygen(tagged_hash(b"grind-passive", root, encode_int(i)))
        for i in range(n_adversary)
    ]
    grind_co = np.zeros(len(labels), dtype=np.int64)
    passive_co = np.zeros(len(labels), dtype=np.int64)

    for epoch in range(epochs):
        # Grinding keys are fixed before the epoch seed exists.
        grind_keys = [
            keygen(tagged_hash(b"grind-respend", root, encode_int(epoch), encode_int(i)))
            for i in range(n_adversary)
        ]
        epoch_seed = tagged_hash(b"grind-epoch", root, encode_int(epoch))
        chain = [None] * epoch_length + [_SeedOnlyHeader(seed=epoch_seed)]
        for keys, table in ((grind_keys, grind_co), (passive_keys, passive_co)):
            for kp in keys:
                cred = derive_credential(kp.pk, 0, epoch_length, chain, epoch_length)
                table[index[route(directory, cred.value)]] += 1

    chi2, p_value, _, _ = chi2_contingency(np.array([grind_co, passive_co]))
    return GrindComparison(
        shard_labels=tuple(labels),
        grind_counts=tuple(int(x) for x in grind_co),
        passive_counts=tuple(int(x) for x in passive_co),
        chi2=float(chi2),
        p_value=float(p_value),
        epochs=epochs,
    )


def _bit_strings(depth: int):
    if depth == 0:
        yield ""
        return
    for rest in _bit_strings(depth - 1):
        yield "0" + rest
        yield "1" + rest
