#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tokenlab/token_core.hpp"

namespace tokenlab {

// One conditional query p(x_target | x_visible). `visible` holds the indices
// of the conditioning tokens in ascending order; `target` must not be in it.
struct ContextQuery {
    std::span<const Token> tokens;          // full sequence values
    std::span<const std::uint32_t> visible; // ascending visible indices
    std::uint32_t target = 0;
};

// A conditional-distribution model with a flat parameter vector and analytic
// log-likelihood gradients; the contract every loss and optimizer relies on.
class PredictorModel {
public:
    virtual ~PredictorModel() = default;

    virtual std::string kind() const = 0;
    virtual std::uint32_t vocab_size() const = 0;

    virtual std::size_t param_count() const = 0;
    virtual std::span<double> params() = 0;
    virtual std::span<const double> params() const = 0;

    // Valid categorical distribution over V (entries >= 0, sum 1 within 1e-9).
    virtual std::vector<double> predict(const ContextQuery& query) const = 0;

    // grad += scale * d log p(truth | context) / d params
    virtual void accumulate_grad_log_prob(const ContextQuery& query, Token truth,
                                          double scale, std::span<double> grad) const = 0;

    virtual std::unique_ptr<PredictorModel> clone() const = 0;
};

// log p(truth | context); throws zero_probability naming the target index
// when the model puts no mass on the observed token.
double log_prob(const PredictorModel& model, const ContextQuery& query, Token truth);

// Exactly enumerable reference model. Parameters are logits: a marginal
// vector and one transition row per conditioning value. The context rule is
// first-order: the distribution at position t conditions on the visible
// adjacent positions t-1 and t+1 (product of their transition rows,
// renormalized); with no visible neighbor it falls back to the marginal.
class TabularPredictor : public PredictorModel {
public:
    // Zero logits: uniform marginal and uniform rows.
    explicit TabularPredictor(std::uint32_t vocab_size);

    // Logits = log(p); zero probabilities become -inf logits, so exact 0/1
    // distributions are representable (oracle models). Validates that the
    // marginal and every transition row sum to 1 within 1e-9.
    static TabularPredictor from_probabilities(const std::vector<double>& marginal,
                                               const std::vector<std::vector<double>>& transition);

    std::string kind() const override { return "tabular"; }
    std::uint32_t vocab_size() const override { return v_; }
    std::size_t param_count() const override { return logits_.size(); }
    std::span<double> params() override { return logits_; }
    std::span<const double> params() const override { return logits_; }

    std::vector<double> predict(const ContextQuery& query) const override;
    void accumulate_grad_log_prob(const ContextQuery& query, Token truth,
                                  double scale, std::span<double> grad) const override;
    std::unique_ptr<PredictorModel> clone() const override;

    std::vector<double> marginal() const;               // softmax of marginal logits
    std::vector<double> transition_row(Token c) const;  // softmax of row c

private:
    // layout: [marginal logits (V)] [row 0 logits (V)] ... [row V-1 logits (V)]
    std::uint32_t v_;
    std::vector<double> logits_;
};

// Smallest trainable model with closed-form gradients. Context pooling is
// the mean over visible tokens of (token embedding + signed relative-position
// bucket embedding); logits add an output projection, a bias, and a
// per-horizon-bucket bias, where the horizon is the distance from the target
// to its nearest visible token (buckets 1, 2-3, 4-7, 8+).
class LinearSoftmaxPredictor : public PredictorModel {
public:
    static constexpr std::uint32_t kPositionBuckets = 8;
    static constexpr std::uint32_t kHorizonBuckets = 4;

    // Gaussian init (std 0.02) for embeddings and projection, zero biases.
    LinearSoftmaxPredictor(std::uint32_t vocab_size, std::uint32_t embed_dim, std::uint64_t seed);

    std::string kind() const override { return "linear"; }
    std::uint32_t vocab_size() const override { return v_; }
    std::size_t param_count() const override { return params_.size(); }
    std::span<double> params() override { return params_; }
    std::span<const double> params() const override { return params_; }

    std::vector<double> predict(const ContextQuery& query) const override;
    void accumulate_grad_log_prob(const ContextQuery& query, Token truth,
                                  double scale, std::span<double> grad) const override;
    std::unique_ptr<PredictorModel> clone() const override;

    std::uint32_t embed_dim() const { return d_; }

    // Signed relative offset (context - target) -> bucket in [0, 8).
    static std::uint32_t position_bucket(std::int64_t delta);
    // Distance to nearest visible token (0 means empty context) -> [0, 4).
    static std::uint32_t horizon_bucket(std::uint64_t distance);

private:
    // layout: [E (V x d)] [P (8 x d)] [W (d x V)] [b (V)] [H (4 x V)], row-major
    std::uint32_t v_, d_;
    std::vector<double> params_;

    double* embed(Token t) { return params_.data() + static_cast<std::size_t>(t) * d_; }
    const double* embed(Token t) const { return params_.data() + static_cast<std::size_t>(t) * d_; }
    std::size_t off_pos() const { return static_cast<std::size_t>(v_) * d_; }
    std::size_t off_w() const { return off_pos() + static_cast<std::size_t>(kPositionBuckets) * d_; }
    std::size_t off_b() const { return off_w() + static_cast<std::size_t>(d_) * v_; }
    std::size_t off_h() const { return off_b() + v_; }

    void pool_context(const ContextQuery& query, std::vector<double>& pooled,
                      std::uint32_t& hbucket) const;
    std::vector<double> logits_for(const ContextQuery& query, std::vector<double>& pooled,
                                   std::uint32_t& hbucket) const;
};

// Central-finite-difference validation of an analytic gradient.
struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
};

// Generic checker: `loss` evaluates the objective at the model's current
// parameters, `grad` writes the analytic gradient. Relative error per
// parameter is |a - f| / max(1e-8, |a| + |f|).
GradCheckReport grad_check(PredictorModel& model,
                           const std::function<double(const PredictorModel&)>& loss,
                           const std::function<void(const PredictorModel&, std::span<double>)>& grad,
                           double h);

// Checkpoints: ASCII header "TUCKPT1 <model-kind> <param-count>\n" followed
// by the parameters as little-endian float64 in the documented layout order.
// Loading requires a constructed model of matching kind and parameter count;
// a save/load round trip restores parameters bit-exactly.
void save_checkpoint(const PredictorModel& model, const std::string& path);
void load_checkpoint(PredictorModel& model, const std::string& path);

} // namespace tokenlab
