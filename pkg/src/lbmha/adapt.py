"""Target-side lexicon adaptation between two corpora.

Words whose usage or frequency profile differs too much between a source and
a target corpus tend to carry different semantics there, so the lexicon is
trimmed before reuse: (1) a usage filter keeps terms whose user-usage rates
agree within a factor of 10 (strict bound), (2) a frequency filter keeps
terms whose mean-frequency shift, normalized by the source standard
deviation, lies in [-bound, bound] (inclusive), (3) common first names are
dropped.  Retraining fits a fresh lexicon by ridge regression on the top
principal components of the (centered, never variance-standardized) feature
matrix.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError, ValidationError
from .scoring import Lexicon

log = logging.getLogger(__name__)

DEFAULT_USAGE_BOUND = 1.0
DEFAULT_FREQUENCY_BOUND = 0.2
DEFAULT_RIDGE_ALPHA = 0.001
DEFAULT_PCA_COMPONENTS = 500


@dataclass(slots=True)
class TermStats:
    mean_freq: float
    std_freq: float
    usage: float


@dataclass
class CorpusStats:
    """Per-term frequency/usage statistics for one corpus."""

    n_users: int
    vocab: dict[str, TermStats] = field(default_factory=dict)

    def stats(self, term: str) -> TermStats:
        return self.vocab.get(term, TermStats(0.0, 0.0, 0.0))


class FilterReason(str, Enum):
    KEPT = "kept"
    USAGE = "usage"
    FREQUENCY = "frequency"
    NAME = "name"


@dataclass(slots=True)
class FilterDecision:
    term: str
    kept: bool
    reason: FilterReason
    log_usage_ratio: float = math.nan
    freq_d: float = math.nan


def corpus_stats(
    user_term_frequencies: Iterable[Mapping[str, float]],
) -> CorpusStats:
    """Summarize per-user relative-frequency records into corpus statistics.

    For each term: the mean relative frequency over all users (zero for
    non-users), the population standard deviation over users, and the
    fraction of users who used the term at least once.
    """
    n_users = 0
    sums: dict[str, float] = {}
    sq_sums: dict[str, float] = {}
    users_with: dict[str, int] = {}
    for record in user_term_frequencies:
        n_users += 1
        total = 0.0
        for term, freq in record.items():
            total += freq
            if freq < 0:
                raise ValidationError(f"negative relative frequency for {term!r}")
            sums[term] = sums.get(term, 0.0) + freq
            sq_sums[term] = sq_sums.get(term, 0.0) + freq * freq
            if freq > 0:
                users_with[term] = users_with.get(term, 0) + 1
        if total > 1.0 + 1e-6:
            raise ValidationError(
                f"user record sums to {total:.6f} > 1; expected relative frequencies"
            )
    if n_users == 0:
        raise InsufficientDataError("corpus statistics need at least one user")

    vocab: dict[str, TermStats] = {}
    for term in sums:
        mean = sums[term] / n_users
        var = max(sq_sums[term] / n_users - mean * mean, 0.0)
        vocab[term] = TermStats(
            mean_freq=mean,
            std_freq=math.sqrt(var),
            usage=users_with.get(term, 0) / n_users,
        )
    return CorpusStats(n_users, vocab)


def usage_filter(
    source: CorpusStats,
    target: CorpusStats,
    bound: float = DEFAULT_USAGE_BOUND,
    terms: Iterable[str] | None = None,
) -> list[FilterDecision]:
    """Keep terms with -bound < log10(target usage / source usage) < bound.

    The bound is strict; terms unused in either corpus are excluded (the
    ratio is undefined).  Symmetric under swapping source and target.
    """
    if terms is None:
        terms = sorted(set(source.vocab) | set(target.vocab))
    decisions = []
    for term in terms:
        u_s = source.stats(term).usage
        u_t = target.stats(term).usage
        if u_s == 0.0 or u_t == 0.0:
            decisions.append(FilterDecision(term, False, FilterReason.USAGE))
            continue
        ratio = math.log10(u_t / u_s)
        kept = -bound < ratio < bound
        decisions.append(
            FilterDecision(
                term,
                kept,
                FilterReason.KEPT if kept else FilterReason.USAGE,
                log_usage_ratio=ratio,
            )
        )
    return decisions


def frequency_filter(
    source: CorpusStats,
    target: CorpusStats,
    bound: float = DEFAULT_FREQUENCY_BOUND,
    terms: Iterable[str] | None = None,
) -> list[FilterDecision]:
    """Keep terms with (target mean freq - source mean freq) / source std in [-bound, bound].

    Inclusive at the bounds.  A zero source standard deviation keeps the term
    only when the means agree exactly.  Normalization uses the source side
    alone, so this filter is intentionally asymmetric.
    """
    if terms is None:
        terms = sorted(set(source.vocab) | set(target.vocab))
    decisions = []
    for term in terms:
        s = source.stats(term)
        t = target.stats(term)
        if s.std_freq == 0.0:
            if t.mean_freq == s.mean_freq:
                decisions.append(
                    FilterDecision(term, True, FilterReason.KEPT, freq_d=0.0)
                )
            else:
                decisions.append(FilterDecision(term, False, FilterReason.FREQUENCY))
            continue
        d = (t.mean_freq - s.mean_freq) / s.std_freq
        kept = -bound <= d <= bound
        decisions.append(
            FilterDecision(
                term,
                kept,
                FilterReason.KEPT if kept else FilterReason.FREQUENCY,
                freq_d=d,
            )
        )
    return decisions


def drop_names(terms: Iterable[str], name_list: set[str]) -> list[FilterDecision]:
    """Exclude exact matches against a lowercase first-name list."""
    return [
        FilterDecision(
            term,
            term not in name_list,
            FilterReason.NAME if term in name_list else FilterReason.KEPT,
        )
        for term in terms
    ]


def load_name_list(path: str | Path) -> set[str]:
    """One lowercase name per line; a missing file is a configuration error."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"name list not found: {path}")
    names = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        name = line.strip().lower()
        if name:
            names.add(name)
    return names


def adapt_pipeline(
    source: CorpusStats,
    target: CorpusStats,
    base_lexicon: Lexicon,
    name_list: set[str],
    usage_bound: float = DEFAULT_USAGE_BOUND,
    frequency_bound: float = DEFAULT_FREQUENCY_BOUND,
) -> tuple[Lexicon, list[FilterDecision]]:
    """Restrict a lexicon to terms surviving usage, frequency and name filters.

    Filters run in that order over the base lexicon's vocabulary; the audit
    records, per term, the first filter that excluded it (with whichever
    statistics had been computed by then).
    """
    vocab = sorted(base_lexicon.vocabulary)
    known = set(source.vocab) | set(target.vocab)
    unknown = [t for t in vocab if t not in known]
    if unknown:
        log.warning(
            "%d lexicon terms appear in neither corpus (first: %s)",
            len(unknown),
            unknown[:5],
        )

    usage = {d.term: d for d in usage_filter(source, target, usage_bound, vocab)}
    usage_survivors = [t for t in vocab if usage[t].kept]
    freq = {
        d.term: d
        for d in frequency_filter(source, target, frequency_bound, usage_survivors)
    }
    freq_survivors = [t for t in usage_survivors if freq[t].kept]
    names = {d.term: d for d in drop_names(freq_survivors, name_list)}
    survivors = [t for t in freq_survivors if names[t].kept]

    audit: list[FilterDecision] = []
    for term in vocab:
        u = usage[term]
        if not u.kept:
            audit.append(u)
            continue
        f = freq[term]
        if not f.kept:
            f.log_usage_ratio = u.log_usage_ratio
            audit.append(f)
            continue
        n = names[term]
        n.log_usage_ratio = u.log_usage_ratio
        n.freq_d = f.freq_d
        audit.append(n)

    if not survivors:
        raise InsufficientDataError("no lexicon terms survived adaptation")
    adapted = base_lexicon.restrict(survivors, name=f"{base_lexicon.name}-adapted")
    return adapted, audit


def retrain_lexicon(
    features: np.ndarray,
    term_names: Sequence[str],
    targets: Mapping[str, Sequence[float]],
    alpha: float = DEFAULT_RIDGE_ALPHA,
    k_components: int = DEFAULT_PCA_COMPONENTS,
    name: str = "retrained",
) -> Lexicon:
    """Fit per-term weights by ridge regression on principal components.

    Parameters
    ----------
    features : (n_users, n_terms) array
        Anscombe-transformed per-user relative frequencies.  Columns are
        centered but never variance-standardized.
    term_names : names for the feature columns.
    targets : outcome name -> per-user scores (shared feature projection).
    alpha : ridge penalty applied in component space.
    k_components : number of principal components; silently reduced to the
        matrix rank when it exceeds it (logged).

    The per-outcome intercept is mean(target) - weights . feature-means, so
    predictions reproduce the fit on raw (uncentered) features.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValidationError("features must be a 2-D (users x terms) matrix")
    n_users, n_terms = X.shape
    if len(term_names) != n_terms:
        raise ValidationError("term_names length must match the feature columns")
    if k_components < 1:
        raise ValidationError("k_components must be >= 1")
    for outcome, y in targets.items():
        if len(y) != n_users or not np.all(np.isfinite(y)):
            raise ValidationError(f"targets[{outcome!r}] must be finite, length {n_users}")

    col_means = X.mean(axis=0)
    Xc = X - col_means
    U, S, Vt = np.linalg.svd(Xc, full_matrices=False)
    # Deterministic component orientation: largest-|entry| coordinate positive.
    for j in range(Vt.shape[0]):
        i = int(np.argmax(np.abs(Vt[j])))
        if Vt[j, i] < 0:
            Vt[j] = -Vt[j]
            U[:, j] = -U[:, j]
    tol = S[0] * max(X.shape) * np.finfo(float).eps if S.size else 0.0
    rank = int(np.sum(S > tol))
    if rank == 0:
        raise ValidationError("feature matrix has rank 0 after centering")
    k = min(k_components, rank)
    if k < k_components:
        log.warning("reducing k from %d to rank %d", k_components, rank)

    Uk, Sk, Vk = U[:, :k], S[:k], Vt[:k].T
    terms: dict[str, dict[str, float]] = {t: {} for t in term_names}
    intercepts: dict[str, float] = {}
    for outcome, y in targets.items():
        y = np.asarray(y, dtype=float)
        y_mean = float(y.mean())
        # Component scores are U_k S_k, so the ridge normal matrix is diagonal.
        w_components = (Sk * (Uk.T @ (y - y_mean))) / (Sk**2 + alpha)
        w = Vk @ w_components
        intercepts[outcome] = y_mean - float(col_means @ w)
        for t, weight in zip(term_names, w):
            terms[t][outcome] = float(weight)
    return Lexicon(
        name=name,
        outcomes=tuple(targets),
        terms=terms,
        intercepts=intercepts,
    )
