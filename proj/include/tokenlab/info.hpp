#pragma once

#include <cstdint>
#include <vector>

#include "tokenlab/rng.hpp"
#include "tokenlab/token_core.hpp"

namespace tokenlab {

// Fully enumerated distribution over length-K token sequences with vocabulary
// V. probs[idx] is the probability of the outcome whose position-p digit is
// (idx / V^p) % V. Enumeration is capped at K <= 8, V <= 4.
struct SequenceDistribution {
    std::uint32_t k = 0;
    std::uint32_t v = 0;
    std::vector<double> probs;

    static constexpr std::uint32_t kMaxK = 8;
    static constexpr std::uint32_t kMaxV = 4;

    std::size_t outcomes() const { return probs.size(); }
    Token digit(std::size_t idx, std::uint32_t pos) const;

    // Caps, size consistency, non-negativity, sum 1 within 1e-9.
    void validate() const;
};

// Entropy of a discrete distribution in nats; 0*log 0 = 0.
double entropy(const std::vector<double>& probs);

// I(X;Y) in nats from an explicit joint table p[x][y]. Validates that the
// table is non-negative and sums to 1 within 1e-9.
double mutual_information(const std::vector<std::vector<double>>& joint);

// I(A;B) between two disjoint position sets of a sequence distribution.
double mutual_information_sets(const SequenceDistribution& dist,
                               const std::vector<std::uint32_t>& a,
                               const std::vector<std::uint32_t>& b);

// I(A;B | C), conditioning on a third disjoint position set.
double conditional_mutual_information(const SequenceDistribution& dist,
                                      const std::vector<std::uint32_t>& a,
                                      const std::vector<std::uint32_t>& b,
                                      const std::vector<std::uint32_t>& c);

// The three information terms of the total-information decomposition:
//   term_random   = E_{M,i in M} [ I(x_i ; x_{M^c}) ]   over all masks of ratio rho
//   term_next     = sum_{i>=1} I(x_i ; x_{<i})
//   term_next_all = sum_{i>=1} I(X_{>=i} ; x_{<i})
// plus I_total = alpha*term_random + beta*term_next + gamma*term_next_all,
// and the worst-case deviation of the chain-rule identity
//   I(X_{>=i} ; X_{<i}) = sum_{j>=i} I(x_j ; X_{<i} | x_i..x_{j-1}).
struct ComplementarityResult {
    double term_random = 0.0;
    double term_next = 0.0;
    double term_next_all = 0.0;
    double i_total = 0.0;        // with the weights passed in
    double i_total_unit = 0.0;   // with alpha = beta = gamma = 1
    double max_chain_rule_dev = 0.0;
    double dominance_margin = 0.0; // i_total_unit - max individual term
};

ComplementarityResult complementarity_check(const SequenceDistribution& dist, double rho,
                                            double alpha, double beta, double gamma);

// Generators for tests and the CLI.
SequenceDistribution make_iid_uniform(std::uint32_t k, std::uint32_t v);
// x_0 fair over {0,1}, x_j = x_{j-1} deterministically.
SequenceDistribution make_copy_chain(std::uint32_t k);
SequenceDistribution make_markov_distribution(std::uint32_t k,
                                              const std::vector<double>& marginal,
                                              const std::vector<std::vector<double>>& transition);
// Dirichlet(1) over all V^K outcomes (normalized exponentials).
SequenceDistribution make_random_distribution(std::uint32_t k, std::uint32_t v, Rng& rng);

// Stationary distribution of a row-stochastic matrix (power iteration).
std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& transition);

// Entropy rate -sum_i pi_i sum_j P_ij ln P_ij of a stationary Markov chain.
double markov_entropy_rate(const std::vector<std::vector<double>>& transition,
                           const std::vector<double>& stationary);

} // namespace tokenlab
