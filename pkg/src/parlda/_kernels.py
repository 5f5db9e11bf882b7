"""Jitted inner loops for the collapsed Gibbs sampler.

Everything here operates on flat numpy arrays owned by
``parlda.gibbs.ModelState``; the count bookkeeping must mirror the
Python-side helpers exactly. Randomness comes from a splitmix64 stream
whose state is a one-element uint64 array carried by the model state,
so sweeps are reproducible per seed and concurrent states never share
generator state.

Count arrays use float64 (values stay integral in live mode; frozen
fold-in counts may be fractional because they are sample averages).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_SM_INC = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / float(1 << 53)


@njit(cache=True, nogil=True)
def uniform_draw(rng_state):
    """Next float in [0, 1) from the splitmix64 stream in rng_state[0]."""
    rng_state[0] = rng_state[0] + _SM_INC
    z = rng_state[0]
    z = (z ^ (z >> _S30)) * _SM_M1
    z = (z ^ (z >> _S27)) * _SM_M2
    z = z ^ (z >> _S31)
    return (z >> _S11) * _INV53


@njit(cache=True, nogil=True)
def seed_stream(rng_state, seed):
    rng_state[0] = np.uint64(seed)


@njit(cache=True, nogil=True)
def sample_index(weights, n, total, u):
    """Index i < n drawn proportionally to weights[:n] given u in [0, 1)."""
    r = u * total
    acc = 0.0
    for i in range(n):
        acc += weights[i]
        if r < acc:
            return i
    # Rounding pushed r past the accumulated total; take the last
    # positive-weight index so zero-weight outcomes stay impossible.
    for i in range(n - 1, -1, -1):
        if weights[i] > 0.0:
            return i
    return 0


@njit(cache=True, nogil=True)
def general_token_weights(
    d, t, n_doc_general, n_general_term, n_general_total,
    alpha_general, beta_general, vocab_size, frozen, phi_general, out,
):
    """Fill out[:K0] with unnormalized general-topic weights for term t in doc d.

    Counts must already exclude the token being resampled. In frozen mode
    the per-topic word likelihood comes from phi_general instead of counts.
    Returns the weight total.
    """
    k0 = n_doc_general.shape[1]
    vbeta = vocab_size * beta_general
    total = 0.0
    for k in range(k0):
        if frozen:
            word_lik = phi_general[k, t]
        else:
            word_lik = (n_general_term[k, t] + beta_general) / (n_general_total[k] + vbeta)
        w = (n_doc_general[d, k] + alpha_general) * word_lik
        out[k] = w
        total += w
    return total


@njit(cache=True, nogil=True)
def specific_token_weights(
    d, t, n_doc_specific, n_specific_term, n_specific_total,
    alpha_specific, beta_specific, vocab_size, frozen, phi_specific, out,
):
    """Same as general_token_weights for the specific-topic family."""
    k1 = n_doc_specific.shape[1]
    vbeta = vocab_size * beta_specific
    total = 0.0
    for k in range(k1):
        if frozen:
            word_lik = phi_specific[k, t]
        else:
            word_lik = (n_specific_term[k, t] + beta_specific) / (n_specific_total[k] + vbeta)
        w = (n_doc_specific[d, k] + alpha_specific) * word_lik
        out[k] = w
        total += w
    return total


@njit(cache=True, nogil=True)
def joint_source_topic_weights(
    d, t,
    n_doc_general, n_doc_specific,
    n_general_term, n_general_total,
    n_specific_term, n_specific_total,
    alpha_general, alpha_specific, beta_general, beta_specific,
    specific_word_prob, vocab_size, frozen, phi_general, phi_specific, out,
):
    """Blocked (word source, topic) weights for a token in a specific paragraph.

    out[:K1] holds the specific-family outcomes scaled by the specific word
    probability; out[K1:K1+K0] holds the general family scaled by its
    complement. Returns the weight total.

    Unlike the single-family topic move, the per-document family totals do
    not cancel here: switching family changes which document-topic block
    gains the token, so each side carries its own 1/(total + K*alpha)
    factor. Leaving those out skews the source choice.
    """
    k0 = n_doc_general.shape[1]
    k1 = n_doc_specific.shape[1]
    vb_g = vocab_size * beta_general
    vb_s = vocab_size * beta_specific
    doc_total_s = 0.0
    for k in range(k1):
        doc_total_s += n_doc_specific[d, k]
    doc_total_g = 0.0
    for k in range(k0):
        doc_total_g += n_doc_general[d, k]
    scale_s = specific_word_prob / (doc_total_s + k1 * alpha_specific)
    scale_g = (1.0 - specific_word_prob) / (doc_total_g + k0 * alpha_general)
    total = 0.0
    for k in range(k1):
        if frozen:
            word_lik = phi_specific[k, t]
        else:
            word_lik = (n_specific_term[k, t] + beta_specific) / (n_specific_total[k] + vb_s)
        w = scale_s * (n_doc_specific[d, k] + alpha_specific) * word_lik
        out[k] = w
        total += w
    for k in range(k0):
        if frozen:
            word_lik = phi_general[k, t]
        else:
            word_lik = (n_general_term[k, t] + beta_general) / (n_general_total[k] + vb_g)
        w = scale_g * (n_doc_general[d, k] + alpha_general) * word_lik
        out[k1 + k] = w
        total += w
    return total


@njit(cache=True, nogil=True)
def paragraph_log_weights(
    p, token_term, par_start, par_end, par_doc,
    n_partype_term, n_partype_total, n_doc_partype, n_partype_global,
    gamma, gamma_words, vocab_size, x_prior_code,
    scratch_count, scratch_terms,
):
    """Log weights (general, specific) for the type of paragraph p.

    The caller must already have removed p from all paragraph-type counts
    (in frozen mode the type-term counts never contained it). The word
    likelihood for type s multiplies, term by term, the rising factorial
    of the type's smoothed count over the paragraph's occurrences; it is
    evaluated as log-gamma differences. x_prior_code selects the prior
    factor: 0 = per-document, 1 = corpus-wide, 2 = none.
    """
    d = par_doc[p]
    n_unique = 0
    n_par = 0.0
    for i in range(par_start[p], par_end[p]):
        t = token_term[i]
        if scratch_count[t] == 0.0:
            scratch_terms[n_unique] = t
            n_unique += 1
        scratch_count[t] += 1.0
        n_par += 1.0
    lw0 = 0.0
    lw1 = 0.0
    for j in range(n_unique):
        t = scratch_terms[j]
        c = scratch_count[t]
        base0 = n_partype_term[0, t] + gamma_words
        base1 = n_partype_term[1, t] + gamma_words
        lw0 += math.lgamma(base0 + c) - math.lgamma(base0)
        lw1 += math.lgamma(base1 + c) - math.lgamma(base1)
        scratch_count[t] = 0.0
    vg = vocab_size * gamma_words
    lw0 -= math.lgamma(n_partype_total[0] + vg + n_par) - math.lgamma(n_partype_total[0] + vg)
    lw1 -= math.lgamma(n_partype_total[1] + vg + n_par) - math.lgamma(n_partype_total[1] + vg)
    if x_prior_code == 0:
        lw0 += math.log(n_doc_partype[d, 0] + gamma)
        lw1 += math.log(n_doc_partype[d, 1] + gamma)
    elif x_prior_code == 1:
        lw0 += math.log(n_partype_global[0] + gamma)
        lw1 += math.log(n_partype_global[1] + gamma)
    return lw0, lw1


@njit(cache=True, nogil=True)
def specific_probability(lw0, lw1):
    """Stable softmax of two log weights, returning the type-1 probability."""
    if lw1 >= lw0:
        return 1.0 / (1.0 + math.exp(lw0 - lw1))
    e = math.exp(lw1 - lw0)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def resample_paragraph_kernel(
    p,
    token_term, token_par, par_start, par_end, par_doc,
    x, src, z,
    n_doc_general, n_doc_specific,
    n_general_term, n_general_total,
    n_specific_term, n_specific_total,
    n_doc_partype, n_partype_term, n_partype_total, n_partype_global,
    alpha_general, alpha_specific, beta_general, beta_specific,
    gamma, gamma_words, specific_word_prob, vocab_size, x_prior_code,
    frozen, phi_general, phi_specific,
    scratch_count, scratch_terms, weight_buf, rng_state,
):
    """Resample the type of paragraph p; on a flip, resample all its tokens.

    Returns 1 if the type changed, else 0.
    """
    d = par_doc[p]
    old = x[p]
    n_par = float(par_end[p] - par_start[p])

    # Exclude p from the paragraph-type counts. The frozen type-term
    # matrix belongs to the training corpus and never contained p.
    n_doc_partype[d, old] -= 1.0
    n_partype_global[old] -= 1.0
    if frozen == 0:
        for i in range(par_start[p], par_end[p]):
            n_partype_term[old, token_term[i]] -= 1.0
        n_partype_total[old] -= n_par

    lw0, lw1 = paragraph_log_weights(
        p, token_term, par_start, par_end, par_doc,
        n_partype_term, n_partype_total, n_doc_partype, n_partype_global,
        gamma, gamma_words, vocab_size, x_prior_code,
        scratch_count, scratch_terms,
    )
    p_spec = specific_probability(lw0, lw1)
    new = 1 if uniform_draw(rng_state) < p_spec else 0

    x[p] = new
    n_doc_partype[d, new] += 1.0
    n_partype_global[new] += 1.0
    if frozen == 0:
        for i in range(par_start[p], par_end[p]):
            n_partype_term[new, token_term[i]] += 1.0
        n_partype_total[new] += n_par

    if new == old:
        return 0

    # The paragraph changed family, so every token assignment is stale:
    # draw fresh (source, topic) pairs one token at a time.
    k1 = n_doc_specific.shape[1]
    for i in range(par_start[p], par_end[p]):
        t = token_term[i]
        s_old = src[i]
        k_old = z[i]
        if s_old == 1:
            n_doc_specific[d, k_old] -= 1.0
            if frozen == 0:
                n_specific_term[k_old, t] -= 1.0
                n_specific_total[k_old] -= 1.0
        else:
            n_doc_general[d, k_old] -= 1.0
            if frozen == 0:
                n_general_term[k_old, t] -= 1.0
                n_general_total[k_old] -= 1.0
        if new == 0:
            total = general_token_weights(
                d, t, n_doc_general, n_general_term, n_general_total,
                alpha_general, beta_general, vocab_size, frozen, phi_general,
                weight_buf,
            )
            k_new = sample_index(
                weight_buf, n_doc_general.shape[1], total, uniform_draw(rng_state)
            )
            src[i] = 0
            z[i] = k_new
            n_doc_general[d, k_new] += 1.0
            if frozen == 0:
                n_general_term[k_new, t] += 1.0
                n_general_total[k_new] += 1.0
        else:
            total = joint_source_topic_weights(
                d, t,
                n_doc_general, n_doc_specific,
                n_general_term, n_general_total,
                n_specific_term, n_specific_total,
                alpha_general, alpha_specific, beta_general, beta_specific,
                specific_word_prob, vocab_size, frozen, phi_general, phi_specific,
                weight_buf,
            )
            j = sample_index(
                weight_buf,
                k1 + n_doc_general.shape[1],
                total,
                uniform_draw(rng_state),
            )
            if j < k1:
                src[i] = 1
                z[i] = j
                n_doc_specific[d, j] += 1.0
                if frozen == 0:
                    n_specific_term[j, t] += 1.0
                    n_specific_total[j] += 1.0
            else:
                k_new = j - k1
                src[i] = 0
                z[i] = k_new
                n_doc_general[d, k_new] += 1.0
                if frozen == 0:
                    n_general_term[k_new, t] += 1.0
                    n_general_total[k_new] += 1.0
    return 1


@njit(cache=True, nogil=True)
def sweep_paragraphs_kernel(
    token_term, token_par, par_start, par_end, par_doc,
    x, src, z,
    n_doc_general, n_doc_specific,
    n_general_term, n_general_total,
    n_specific_term, n_specific_total,
    n_doc_partype, n_partype_term, n_partype_total, n_partype_global,
    alpha_general, alpha_specific, beta_general, beta_specific,
    gamma, gamma_words, specific_word_prob, vocab_size, x_prior_code,
    frozen, phi_general, phi_specific,
    scratch_count, scratch_terms, weight_buf, rng_state,
):
    """Resample every paragraph type once, in corpus order. Returns flip count."""
    flips = 0
    for p in range(par_doc.shape[0]):
        flips += resample_paragraph_kernel(
            p,
            token_term, token_par, par_start, par_end, par_doc,
            x, src, z,
            n_doc_general, n_doc_specific,
            n_general_term, n_general_total,
            n_specific_term, n_specific_total,
            n_doc_partype, n_partype_term, n_partype_total, n_partype_global,
            alpha_general, alpha_specific, beta_general, beta_specific,
            gamma, gamma_words, specific_word_prob, vocab_size, x_prior_code,
            frozen, phi_general, phi_specific,
            scratch_count, scratch_terms, weight_buf, rng_state,
        )
    return flips


@njit(cache=True, nogil=True)
def sweep_tokens_kernel(
    token_term, token_par, par_doc,
    x, src, z,
    n_doc_general, n_doc_specific,
    n_general_term, n_general_total,
    n_specific_term, n_specific_total,
    alpha_general, alpha_specific, beta_general, beta_specific,
    specific_word_prob, vocab_size,
    frozen, phi_general, phi_specific,
    weight_buf, rng_state,
):
    """Resample (source, topic) for every token once, in corpus order."""
    k1 = n_doc_specific.shape[1]
    k0 = n_doc_general.shape[1]
    for i in range(token_term.shape[0]):
        t = token_term[i]
        d = par_doc[token_par[i]]
        s_old = src[i]
        k_old = z[i]
        if s_old == 1:
            n_doc_specific[d, k_old] -= 1.0
            if frozen == 0:
                n_specific_term[k_old, t] -= 1.0
                n_specific_total[k_old] -= 1.0
        else:
            n_doc_general[d, k_old] -= 1.0
            if frozen == 0:
                n_general_term[k_old, t] -= 1.0
                n_general_total[k_old] -= 1.0
        if x[token_par[i]] == 0:
            total = general_token_weights(
                d, t, n_doc_general, n_general_term, n_general_total,
                alpha_general, beta_general, vocab_size, frozen, phi_general,
                weight_buf,
            )
            k_new = sample_index(weight_buf, k0, total, uniform_draw(rng_state))
            src[i] = 0
            z[i] = k_new
            n_doc_general[d, k_new] += 1.0
            if frozen == 0:
                n_general_term[k_new, t] += 1.0
                n_general_total[k_new] += 1.0
        else:
            total = joint_source_topic_weights(
                d, t,
                n_doc_general, n_doc_specific,
                n_general_term, n_general_total,
                n_specific_term, n_specific_total,
                alpha_general, alpha_specific, beta_general, beta_specific,
                specific_word_prob, vocab_size, frozen, phi_general, phi_specific,
                weight_buf,
            )
            j = sample_index(weight_buf, k1 + k0, total, uniform_draw(rng_state))
            if j < k1:
                src[i] = 1
                z[i] = j
                n_doc_specific[d, j] += 1.0
                if frozen == 0:
                    n_specific_term[j, t] += 1.0
                    n_specific_total[j] += 1.0
            else:
                k_new = j - k1
                src[i] = 0
                z[i] = k_new
                n_doc_general[d, k_new] += 1.0
                if frozen == 0:
                    n_general_term[k_new, t] += 1.0
                    n_general_total[k_new] += 1.0
