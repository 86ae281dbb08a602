#include "tokenlab/info.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <string>

#include "tokenlab/errors.hpp"

namespace tokenlab {

namespace {

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

std::size_t pow_u(std::uint32_t base, std::uint32_t exp) {
    std::size_t out = 1;
    for (std::uint32_t i = 0; i < exp; ++i) out *= base;
    return out;
}

void check_disjoint_sets(const SequenceDistribution& dist,
                         std::initializer_list<const std::vector<std::uint32_t>*> sets) {
    std::vector<std::uint8_t> seen(dist.k, 0);
    for (const auto* s : sets) {
        for (std::uint32_t pos : *s) {
            if (pos >= dist.k) {
                throw Error(ErrorCode::invalid_argument, "position index outside sequence");
            }
            if (seen[pos]) {
                throw Error(ErrorCode::invalid_argument, "position sets must be disjoint");
            }
            seen[pos] = 1;
        }
    }
}

// Code of the sub-outcome restricted to `set` (base-V digits in set order).
std::size_t subcode(const SequenceDistribution& dist, std::size_t idx,
                    const std::vector<std::uint32_t>& set) {
    std::size_t code = 0, mult = 1;
    for (std::uint32_t pos : set) {
        code += static_cast<std::size_t>(dist.digit(idx, pos)) * mult;
        mult *= dist.v;
    }
    return code;
}

// I(A;B) from an already-accumulated joint table stored flat (a-major).
double mi_from_flat_joint(const std::vector<double>& joint, std::size_t na, std::size_t nb) {
    std::vector<double> pa(na, 0.0), pb(nb, 0.0);
    for (std::size_t a = 0; a < na; ++a)
        for (std::size_t b = 0; b < nb; ++b) {
            pa[a] += joint[a * nb + b];
            pb[b] += joint[a * nb + b];
        }
    double mi = 0.0;
    for (std::size_t a = 0; a < na; ++a)
        for (std::size_t b = 0; b < nb; ++b) {
            const double p = joint[a * nb + b];
            if (p > 0.0) mi += p * std::log(p / (pa[a] * pb[b]));
        }
    return std::max(mi, 0.0);
}

} // namespace

Token SequenceDistribution::digit(std::size_t idx, std::uint32_t pos) const {
    std::size_t div = 1;
    for (std::uint32_t i = 0; i < pos; ++i) div *= v;
    return static_cast<Token>(idx / div % v);
}

void SequenceDistribution::validate() const {
    if (k < 1 || v < 2) {
        throw Error(ErrorCode::invalid_argument, "sequence distribution requires K >= 1, V >= 2");
    }
    if (k > kMaxK || v > kMaxV) {
        throw Error(ErrorCode::enumeration_too_large,
                    "enumeration capped at K <= " + std::to_string(kMaxK) + ", V <= " +
                        std::to_string(kMaxV));
    }
    if (probs.size() != pow_u(v, k)) {
        throw Error(ErrorCode::dimension_mismatch, "probs must have V^K entries");
    }
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) {
            throw Error(ErrorCode::invalid_argument, "negative probability");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorCode::not_normalized, "sequence distribution does not sum to 1");
    }
}

double entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs) h -= xlogx(p);
    return h;
}

double mutual_information(const std::vector<std::vector<double>>& joint) {
    if (joint.empty() || joint[0].empty()) {
        throw Error(ErrorCode::empty_input, "joint table is empty");
    }
    const std::size_t nb = joint[0].size();
    double total = 0.0;
    for (const auto& row : joint) {
        if (row.size() != nb) {
            throw Error(ErrorCode::dimension_mismatch, "joint table rows have unequal length");
        }
        for (double p : row) {
            if (!(p >= 0.0)) {
                throw Error(ErrorCode::invalid_argument, "negative probability in joint table");
            }
            total += p;
        }
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorCode::not_normalized, "joint distribution does not sum to 1 within 1e-9");
    }
    std::vector<double> flat;
    flat.reserve(joint.size() * nb);
    for (const auto& row : joint) flat.insert(flat.end(), row.begin(), row.end());
    return mi_from_flat_joint(flat, joint.size(), nb);
}

double mutual_information_sets(const SequenceDistribution& dist,
                               const std::vector<std::uint32_t>& a,
                               const std::vector<std::uint32_t>& b) {
    dist.validate();
    check_disjoint_sets(dist, {&a, &b});
    if (a.empty() || b.empty()) return 0.0;
    const std::size_t na = pow_u(dist.v, static_cast<std::uint32_t>(a.size()));
    const std::size_t nb = pow_u(dist.v, static_cast<std::uint32_t>(b.size()));
    std::vector<double> joint(na * nb, 0.0);
    for (std::size_t idx = 0; idx < dist.outcomes(); ++idx) {
        joint[subcode(dist, idx, a) * nb + subcode(dist, idx, b)] += dist.probs[idx];
    }
    return mi_from_flat_joint(joint, na, nb);
}

double conditional_mutual_information(const SequenceDistribution& dist,
                                      const std::vector<std::uint32_t>& a,
                                      const std::vector<std::uint32_t>& b,
                                      const std::vector<std::uint32_t>& c) {
    dist.validate();
    check_disjoint_sets(dist, {&a, &b, &c});
    if (a.empty() || b.empty()) return 0.0;
    if (c.empty()) return mutual_information_sets(dist, a, b);
    const std::size_t na = pow_u(dist.v, static_cast<std::uint32_t>(a.size()));
    const std::size_t nb = pow_u(dist.v, static_cast<std::uint32_t>(b.size()));
    const std::size_t nc = pow_u(dist.v, static_cast<std::uint32_t>(c.size()));
    std::vector<double> triple(na * nb * nc, 0.0);
    for (std::size_t idx = 0; idx < dist.outcomes(); ++idx) {
        const std::size_t code = (subcode(dist, idx, c) * na + subcode(dist, idx, a)) * nb +
                                 subcode(dist, idx, b);
        triple[code] += dist.probs[idx];
    }
    // I(A;B|C) = sum_c p(c) I(A;B | C=c)
    double total = 0.0;
    std::vector<double> slice(na * nb);
    for (std::size_t cc = 0; cc < nc; ++cc) {
        double pc = 0.0;
        for (std::size_t i = 0; i < na * nb; ++i) {
            slice[i] = triple[cc * na * nb + i];
            pc += slice[i];
        }
        if (pc <= 0.0) continue;
        for (double& x : slice) x /= pc;
        total += pc * mi_from_flat_joint(slice, na, nb);
    }
    return total;
}

namespace {

void masks_of_size(std::uint32_t k, std::uint32_t m,
                   const std::function<void(const std::vector<std::uint32_t>&)>& visit) {
    std::vector<std::uint32_t> mask(m);
    // Lexicographic enumeration of all m-subsets of {0..k-1}.
    for (std::uint32_t i = 0; i < m; ++i) mask[i] = i;
    while (true) {
        visit(mask);
        std::int64_t i = static_cast<std::int64_t>(m) - 1;
        while (i >= 0 && mask[static_cast<std::size_t>(i)] ==
                             k - m + static_cast<std::uint32_t>(i)) {
            --i;
        }
        if (i < 0) break;
        ++mask[static_cast<std::size_t>(i)];
        for (std::size_t j = static_cast<std::size_t>(i) + 1; j < m; ++j) {
            mask[j] = mask[j - 1] + 1;
        }
    }
}

} // namespace

ComplementarityResult complementarity_check(const SequenceDistribution& dist, double rho,
                                            double alpha, double beta, double gamma) {
    dist.validate();
    if (!(alpha > 0.0 && beta > 0.0 && gamma > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "weights must be positive");
    }
    const std::uint32_t k = dist.k;
    const auto m = static_cast<std::uint32_t>(std::floor(rho * k + 0.5));
    if (m == 0 || m >= k) {
        throw Error(ErrorCode::invalid_ratio, "masking ratio leaves no masked or no visible token");
    }

    ComplementarityResult out;

    // term_random: expectation over all masks of size m and i in M.
    double acc = 0.0;
    std::size_t pairs = 0;
    masks_of_size(k, m, [&](const std::vector<std::uint32_t>& mask) {
        std::vector<std::uint8_t> in_mask(k, 0);
        for (std::uint32_t i : mask) in_mask[i] = 1;
        std::vector<std::uint32_t> visible;
        for (std::uint32_t i = 0; i < k; ++i) {
            if (!in_mask[i]) visible.push_back(i);
        }
        for (std::uint32_t i : mask) {
            acc += mutual_information_sets(dist, {i}, visible);
            ++pairs;
        }
    });
    out.term_random = acc / static_cast<double>(pairs);

    // term_next and term_next_all over nonempty prefixes.
    for (std::uint32_t i = 1; i < k; ++i) {
        std::vector<std::uint32_t> prefix(i);
        for (std::uint32_t j = 0; j < i; ++j) prefix[j] = j;
        std::vector<std::uint32_t> suffix;
        for (std::uint32_t j = i; j < k; ++j) suffix.push_back(j);
        out.term_next += mutual_information_sets(dist, {i}, prefix);
        const double block = mutual_information_sets(dist, suffix, prefix);
        out.term_next_all += block;

        // chain rule: I(X_{>=i}; X_{<i}) = sum_{j>=i} I(x_j; X_{<i} | x_i..x_{j-1})
        double chain = 0.0;
        for (std::uint32_t j = i; j < k; ++j) {
            std::vector<std::uint32_t> between;
            for (std::uint32_t u = i; u < j; ++u) between.push_back(u);
            chain += conditional_mutual_information(dist, {j}, prefix, between);
        }
        out.max_chain_rule_dev = std::max(out.max_chain_rule_dev, std::abs(block - chain));
    }

    out.i_total = alpha * out.term_random + beta * out.term_next + gamma * out.term_next_all;
    out.i_total_unit = out.term_random + out.term_next + out.term_next_all;
    out.dominance_margin =
        out.i_total_unit - std::max({out.term_random, out.term_next, out.term_next_all});
    return out;
}

SequenceDistribution make_iid_uniform(std::uint32_t k, std::uint32_t v) {
    SequenceDistribution dist;
    dist.k = k;
    dist.v = v;
    dist.probs.assign(pow_u(v, k), 1.0 / static_cast<double>(pow_u(v, k)));
    dist.validate();
    return dist;
}

SequenceDistribution make_copy_chain(std::uint32_t k) {
    SequenceDistribution dist;
    dist.k = k;
    dist.v = 2;
    dist.probs.assign(pow_u(2, k), 0.0);
    std::size_t all_ones = 0;
    for (std::uint32_t i = 0; i < k; ++i) all_ones = all_ones * 2 + 1;
    dist.probs[0] = 0.5;
    dist.probs[all_ones] = 0.5;
    dist.validate();
    return dist;
}

SequenceDistribution make_markov_distribution(std::uint32_t k,
                                              const std::vector<double>& marginal,
                                              const std::vector<std::vector<double>>& transition) {
    SequenceDistribution dist;
    dist.k = k;
    dist.v = static_cast<std::uint32_t>(marginal.size());
    dist.probs.assign(pow_u(dist.v, k), 0.0);
    for (std::size_t idx = 0; idx < dist.probs.size(); ++idx) {
        double p = marginal[dist.digit(idx, 0)];
        for (std::uint32_t pos = 1; pos < k && p > 0.0; ++pos) {
            p *= transition[dist.digit(idx, pos - 1)][dist.digit(idx, pos)];
        }
        dist.probs[idx] = p;
    }
    dist.validate();
    return dist;
}

SequenceDistribution make_random_distribution(std::uint32_t k, std::uint32_t v, Rng& rng) {
    SequenceDistribution dist;
    dist.k = k;
    dist.v = v;
    dist.probs.resize(pow_u(v, k));
    double total = 0.0;
    for (double& p : dist.probs) {
        p = -std::log(1.0 - rng.uniform()); // Exp(1)
        total += p;
    }
    for (double& p : dist.probs) p /= total;
    dist.validate();
    return dist;
}

std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& transition) {
    const std::size_t n = transition.size();
    if (n == 0) {
        throw Error(ErrorCode::empty_input, "empty transition matrix");
    }
    for (const auto& row : transition) {
        if (row.size() != n) {
            throw Error(ErrorCode::dimension_mismatch, "transition matrix must be square");
        }
    }
    std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n);
    for (int iter = 0; iter < 100000; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * transition[i][j];
        double diff = 0.0;
        for (std::size_t j = 0; j < n; ++j) diff += std::abs(next[j] - pi[j]);
        pi.swap(next);
        if (diff < 1e-15) break;
    }
    return pi;
}

double markov_entropy_rate(const std::vector<std::vector<double>>& transition,
                           const std::vector<double>& stationary) {
    double h = 0.0;
    for (std::size_t i = 0; i < transition.size(); ++i) {
        for (double p : transition[i]) h -= stationary[i] * xlogx(p);
    }
    return h;
}

} // namespace tokenlab
