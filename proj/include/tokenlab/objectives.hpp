#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "tokenlab/predictors.hpp"
#include "tokenlab/token_core.hpp"

namespace tokenlab {

// ---------------------------------------------------------------------------
// Loss evaluation

struct LossBreakdown {
    double random = 0.0;
    double next = 0.0;
    double next_all = 0.0;
    double combined = 0.0;
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
};

// -sum_{i in M} log p(x_i | x_{M^c})
double loss_random(const PredictorModel& model, const TokenSequence& seq, const MaskPattern& mask);

// -sum_{i=0..K-1} log p(x_{pi(i)} | x_{pi(<i)}); the i=0 term conditions on
// the empty context (the model's unconditional marginal).
double loss_next(const PredictorModel& model, const TokenSequence& seq, const Path& path);

// -sum_{i=0..K-1} sum_{j=i..K-1} log p(x_{pi(j)} | x_{pi(<i)});
// exactly K(K+1)/2 conditional terms.
double loss_next_all(const PredictorModel& model, const TokenSequence& seq, const Path& path);

// ---------------------------------------------------------------------------
// Curriculum schedule

struct CurriculumConfig {
    std::int64_t total_iters = 1;
    double t1_frac = 0.3;
    double t2_frac = 0.7;
    std::vector<double> logits_phase1 = {2.0, -1.0, -2.0};
    std::vector<double> logits_phase2 = {-1.0, 2.0, -1.0};
    std::vector<double> logits_phase3 = {-2.0, -1.0, 2.0};
    double temperature = 1.0;
    // Optional tau(t); when set it overrides the constant temperature.
    std::function<double(std::int64_t)> temperature_schedule;

    std::int64_t t1() const; // floor(t1_frac * total_iters)
    std::int64_t t2() const; // floor(t2_frac * total_iters)
    void validate() const;   // 0 < t1_frac < t2_frac < 1, temperature > 0
};

struct ModulationState {
    std::int64_t t = 0;
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
};

// Phase logits selected by t < T1, T1 <= t < T2, t >= T2; returns
// softmax(v / tau(t)). Throws out-of-range for t outside [0, T_total).
ModulationState schedule_weights(std::int64_t t, const CurriculumConfig& cfg);

// All three components plus combined = alpha*random + beta*next + gamma*next_all.
LossBreakdown combined_loss(const PredictorModel& model, const TokenSequence& seq,
                            const MaskPattern& mask, const Path& path,
                            const ModulationState& state);

// ---------------------------------------------------------------------------
// Alternating protocol

struct AlternatingConfig {
    double transition_period = 1.0; // tau_alt
    double p_next_all = 0.1;

    void validate() const; // tau_alt > 0, 0 <= p_next_all <= 0.3
};

struct ModeDistribution {
    double p_mask = 0.0, p_ar = 0.0, p_next_all = 0.0;
};

// p_mask = max(0.7 - t/tau_alt, 0.3); p_ar = 1 - p_mask - p_next_all.
ModeDistribution alternating_distribution(std::int64_t t, const AlternatingConfig& cfg);

// ---------------------------------------------------------------------------
// Pretraining

struct OptimizerConfig {
    std::int64_t iters = 0;
    double learning_rate = 1e-2;
    bool inv_sqrt_decay = false;  // lr_t = lr / sqrt(1 + t)
    std::int64_t batch_size = 1;
    double mask_ratio = 0.5;
    PathKind path_kind = PathKind::raster;
    // Alternating mode only: fraction of iters spent on pure loss_random
    // before mode sampling starts.
    double warmup_frac = 0.1;
    // Fraction of prefix positions evaluated by loss_next_all during
    // training; < 1 subsamples uniformly and reweights by 1/fraction
    // (logged as approximate).
    double next_all_subsample = 1.0;

    void validate() const;
};

struct TrainLogRow {
    std::int64_t iter = 0;
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
    double loss_random = 0.0, loss_next = 0.0, loss_next_all = 0.0, loss_combined = 0.0;
    std::string mode;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;

    // CSV with header iter,alpha,beta,gamma,loss_random,loss_next,
    // loss_next_all,loss_combined,mode; %.17g doubles so identical runs
    // produce byte-identical files.
    std::string to_csv() const;
};

using ScheduleConfig = std::variant<CurriculumConfig, AlternatingConfig>;

// SGD over the corpus. Curriculum mode steps on the combined loss with
// schedule_weights(t); alternating mode samples one mode per step from
// alternating_distribution and steps on that mode's loss. Losses in the log
// are batch means. Deterministic given seed.
TrainLog pretrain(const std::vector<TokenSequence>& corpus, PredictorModel& model,
                  const ScheduleConfig& schedule, const OptimizerConfig& opt, Rng& rng);

// Convenience wrappers for gradient checking a named loss.
enum class LossKind { random, next, next_all };

double loss_value(LossKind kind, const PredictorModel& model, const TokenSequence& seq,
                  const MaskPattern& mask, const Path& path);
void loss_grad(LossKind kind, const PredictorModel& model, const TokenSequence& seq,
               const MaskPattern& mask, const Path& path, std::span<double> grad);
GradCheckReport grad_check_loss(PredictorModel& model, LossKind kind, const TokenSequence& seq,
                                const MaskPattern& mask, const Path& path, double h);

} // namespace tokenlab
