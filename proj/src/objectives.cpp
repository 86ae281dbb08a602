#include "tokenlab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tokenlab/errors.hpp"

namespace tokenlab {

namespace {

void check_lengths(const TokenSequence& seq, std::size_t other, const char* what) {
    if (seq.tokens.size() != other) {
        throw Error(ErrorCode::dimension_mismatch,
                    std::string(what) + " length does not match sequence length");
    }
}

std::vector<double> softmax3(const std::vector<double>& logits, double tau) {
    if (logits.size() != 3) {
        throw Error(ErrorCode::invalid_argument, "phase logits must have 3 entries");
    }
    double mx = logits[0] / tau;
    for (double z : logits) mx = std::max(mx, z / tau);
    double total = 0.0;
    std::vector<double> p(3);
    for (int i = 0; i < 3; ++i) {
        p[i] = std::exp(logits[i] / tau - mx);
        total += p[i];
    }
    for (double& x : p) x /= total;
    return p;
}

void append_g17(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

} // namespace

// ---------------------------------------------------------------------------
// Losses

double loss_random(const PredictorModel& model, const TokenSequence& seq, const MaskPattern& mask) {
    seq.validate();
    check_lengths(seq, mask.size(), "mask");
    mask.validate();
    const std::vector<std::uint32_t> visible = mask.visible_indices();
    double total = 0.0;
    for (std::uint32_t i = 0; i < seq.size(); ++i) {
        if (!mask.is_masked(i)) continue;
        const ContextQuery q{seq.tokens, visible, i};
        total -= log_prob(model, q, seq.tokens[i]);
    }
    if (!std::isfinite(total)) {
        throw Error(ErrorCode::non_finite, "loss_random is non-finite");
    }
    return total;
}

double loss_next(const PredictorModel& model, const TokenSequence& seq, const Path& path) {
    seq.validate();
    check_lengths(seq, path.size(), "path");
    path.validate();
    double total = 0.0;
    std::vector<std::uint32_t> visible; // pi(<i), kept sorted
    visible.reserve(seq.size());
    for (std::uint32_t i = 0; i < seq.size(); ++i) {
        const std::uint32_t target = path.order[i];
        const ContextQuery q{seq.tokens, visible, target};
        total -= log_prob(model, q, seq.tokens[target]);
        visible.insert(std::lower_bound(visible.begin(), visible.end(), target), target);
    }
    if (!std::isfinite(total)) {
        throw Error(ErrorCode::non_finite, "loss_next is non-finite");
    }
    return total;
}

double loss_next_all(const PredictorModel& model, const TokenSequence& seq, const Path& path) {
    seq.validate();
    check_lengths(seq, path.size(), "path");
    path.validate();
    const std::uint32_t k = static_cast<std::uint32_t>(seq.size());
    double total = 0.0;
    std::vector<std::uint32_t> visible; // pi(<i), kept sorted
    visible.reserve(k);
    for (std::uint32_t i = 0; i < k; ++i) {
        for (std::uint32_t j = i; j < k; ++j) {
            const std::uint32_t target = path.order[j];
            const ContextQuery q{seq.tokens, visible, target};
            total -= log_prob(model, q, seq.tokens[target]);
        }
        const std::uint32_t consumed = path.order[i];
        visible.insert(std::lower_bound(visible.begin(), visible.end(), consumed), consumed);
    }
    if (!std::isfinite(total)) {
        throw Error(ErrorCode::non_finite, "loss_next_all is non-finite");
    }
    return total;
}

// ---------------------------------------------------------------------------
// Curriculum

std::int64_t CurriculumConfig::t1() const {
    return static_cast<std::int64_t>(std::floor(t1_frac * static_cast<double>(total_iters)));
}

std::int64_t CurriculumConfig::t2() const {
    return static_cast<std::int64_t>(std::floor(t2_frac * static_cast<double>(total_iters)));
}

void CurriculumConfig::validate() const {
    if (total_iters < 1) {
        throw Error(ErrorCode::invalid_argument, "total_iters must be >= 1");
    }
    if (!(t1_frac > 0.0 && t1_frac < t2_frac && t2_frac < 1.0)) {
        throw Error(ErrorCode::invalid_argument, "need 0 < t1_frac < t2_frac < 1");
    }
    if (!temperature_schedule && !(temperature > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "temperature must be > 0");
    }
    if (logits_phase1.size() != 3 || logits_phase2.size() != 3 || logits_phase3.size() != 3) {
        throw Error(ErrorCode::invalid_argument, "phase logits must have 3 entries");
    }
}

ModulationState schedule_weights(std::int64_t t, const CurriculumConfig& cfg) {
    cfg.validate();
    if (t < 0 || t >= cfg.total_iters) {
        throw Error(ErrorCode::invalid_argument,
                    "iteration " + std::to_string(t) + " outside [0, " +
                        std::to_string(cfg.total_iters) + ")");
    }
    const std::vector<double>& v =
        t < cfg.t1() ? cfg.logits_phase1 : (t < cfg.t2() ? cfg.logits_phase2 : cfg.logits_phase3);
    const double tau = cfg.temperature_schedule ? cfg.temperature_schedule(t) : cfg.temperature;
    if (!(tau > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "temperature schedule produced tau <= 0");
    }
    const std::vector<double> w = softmax3(v, tau);
    return ModulationState{t, w[0], w[1], w[2]};
}

LossBreakdown combined_loss(const PredictorModel& model, const TokenSequence& seq,
                            const MaskPattern& mask, const Path& path,
                            const ModulationState& state) {
    LossBreakdown out;
    out.alpha = state.alpha;
    out.beta = state.beta;
    out.gamma = state.gamma;
    out.random = loss_random(model, seq, mask);
    out.next = loss_next(model, seq, path);
    out.next_all = loss_next_all(model, seq, path);
    out.combined = state.alpha * out.random + state.beta * out.next + state.gamma * out.next_all;
    return out;
}

// ---------------------------------------------------------------------------
// Alternating protocol

void AlternatingConfig::validate() const {
    if (!(transition_period > 0.0)) {
        throw Error(ErrorCode::config_error, "transition_period must be > 0");
    }
    if (!(p_next_all >= 0.0)) {
        throw Error(ErrorCode::config_error, "p_next_all must be >= 0");
    }
    if (p_next_all > 0.3) {
        throw Error(ErrorCode::config_error,
                    "p_next_all > 0.3 would make p_ar negative once p_mask saturates");
    }
}

ModeDistribution alternating_distribution(std::int64_t t, const AlternatingConfig& cfg) {
    cfg.validate();
    if (t < 0) {
        throw Error(ErrorCode::invalid_argument, "iteration must be >= 0");
    }
    ModeDistribution d;
    d.p_mask = std::max(0.7 - static_cast<double>(t) / cfg.transition_period, 0.3);
    d.p_next_all = cfg.p_next_all;
    d.p_ar = 1.0 - d.p_mask - d.p_next_all;
    return d;
}

// ---------------------------------------------------------------------------
// Pretraining

void OptimizerConfig::validate() const {
    if (iters < 0) {
        throw Error(ErrorCode::invalid_argument, "iters must be >= 0");
    }
    if (!(learning_rate > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "learning_rate must be > 0");
    }
    if (batch_size < 1) {
        throw Error(ErrorCode::invalid_argument, "batch_size must be >= 1");
    }
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
        throw Error(ErrorCode::invalid_ratio, "mask_ratio must lie in (0,1)");
    }
    if (!(warmup_frac >= 0.0 && warmup_frac <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "warmup_frac must lie in [0,1]");
    }
    if (!(next_all_subsample > 0.0 && next_all_subsample <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "next_all_subsample must lie in (0,1]");
    }
}

std::string TrainLog::to_csv() const {
    std::string out =
        "iter,alpha,beta,gamma,loss_random,loss_next,loss_next_all,loss_combined,mode\n";
    for (const TrainLogRow& r : rows) {
        out += std::to_string(r.iter);
        for (double v : {r.alpha, r.beta, r.gamma, r.loss_random, r.loss_next, r.loss_next_all,
                         r.loss_combined}) {
            out += ',';
            append_g17(out, v);
        }
        out += ',';
        out += r.mode;
        out += '\n';
    }
    return out;
}

namespace {

// Per-sequence loss evaluation plus gradient accumulation with weight
// `scale` applied to the loss (gradient of the negative log-likelihood).
double eval_with_grad(LossKind kind, const PredictorModel& model, const TokenSequence& seq,
                      const MaskPattern& mask, const Path& path, double scale,
                      std::span<double> grad) {
    double value = 0.0;
    auto term = [&](std::span<const std::uint32_t> visible, std::uint32_t target) {
        const ContextQuery q{seq.tokens, visible, target};
        value -= log_prob(model, q, seq.tokens[target]);
        if (scale != 0.0) {
            model.accumulate_grad_log_prob(q, seq.tokens[target], -scale, grad);
        }
    };
    switch (kind) {
        case LossKind::random: {
            const std::vector<std::uint32_t> visible = mask.visible_indices();
            for (std::uint32_t i = 0; i < seq.size(); ++i) {
                if (mask.is_masked(i)) term(visible, i);
            }
            break;
        }
        case LossKind::next: {
            std::vector<std::uint32_t> visible;
            visible.reserve(seq.size());
            for (std::uint32_t i = 0; i < seq.size(); ++i) {
                const std::uint32_t target = path.order[i];
                term(visible, target);
                visible.insert(std::lower_bound(visible.begin(), visible.end(), target), target);
            }
            break;
        }
        case LossKind::next_all: {
            const auto k = static_cast<std::uint32_t>(seq.size());
            std::vector<std::uint32_t> visible;
            visible.reserve(k);
            for (std::uint32_t i = 0; i < k; ++i) {
                for (std::uint32_t j = i; j < k; ++j) term(visible, path.order[j]);
                const std::uint32_t consumed = path.order[i];
                visible.insert(std::lower_bound(visible.begin(), visible.end(), consumed), consumed);
            }
            break;
        }
    }
    return value;
}

// Subsampled loss_next_all estimate: evaluates the chosen prefix positions
// and reweights by K / chosen so the expectation matches the exact loss.
double eval_next_all_subsampled(const PredictorModel& model, const TokenSequence& seq,
                                const Path& path, double fraction, double scale,
                                std::span<double> grad, Rng& rng) {
    const auto k = static_cast<std::uint32_t>(seq.size());
    const auto chosen_count =
        std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::ceil(fraction * k)));
    std::vector<std::uint32_t> chosen = rng.sample_without_replacement(k, chosen_count);
    std::sort(chosen.begin(), chosen.end());
    const double reweight = static_cast<double>(k) / static_cast<double>(chosen_count);

    double value = 0.0;
    std::vector<std::uint32_t> visible;
    visible.reserve(k);
    std::size_t next_chosen = 0;
    for (std::uint32_t i = 0; i < k; ++i) {
        if (next_chosen < chosen.size() && chosen[next_chosen] == i) {
            ++next_chosen;
            for (std::uint32_t j = i; j < k; ++j) {
                const std::uint32_t target = path.order[j];
                const ContextQuery q{seq.tokens, visible, target};
                value -= reweight * log_prob(model, q, seq.tokens[target]);
                if (scale != 0.0) {
                    model.accumulate_grad_log_prob(q, seq.tokens[target], -scale * reweight, grad);
                }
            }
        }
        const std::uint32_t consumed = path.order[i];
        visible.insert(std::lower_bound(visible.begin(), visible.end(), consumed), consumed);
    }
    return value;
}

} // namespace

TrainLog pretrain(const std::vector<TokenSequence>& corpus, PredictorModel& model,
                  const ScheduleConfig& schedule, const OptimizerConfig& opt, Rng& rng) {
    if (corpus.empty()) {
        throw Error(ErrorCode::empty_input, "pretrain requires a nonempty corpus");
    }
    opt.validate();
    const bool curriculum_mode = std::holds_alternative<CurriculumConfig>(schedule);
    CurriculumConfig cur_cfg;
    AlternatingConfig alt_cfg;
    if (curriculum_mode) {
        cur_cfg = std::get<CurriculumConfig>(schedule);
        cur_cfg.total_iters = std::max<std::int64_t>(cur_cfg.total_iters, opt.iters);
        cur_cfg.validate();
    } else {
        alt_cfg = std::get<AlternatingConfig>(schedule);
        alt_cfg.validate();
    }
    const bool approx = opt.next_all_subsample < 1.0;
    const std::int64_t warmup =
        curriculum_mode ? 0
                        : static_cast<std::int64_t>(
                              std::llround(opt.warmup_frac * static_cast<double>(opt.iters)));

    TrainLog log;
    log.rows.reserve(static_cast<std::size_t>(opt.iters));
    std::vector<double> grad(model.param_count(), 0.0);

    for (std::int64_t t = 0; t < opt.iters; ++t) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double lr = opt.inv_sqrt_decay
                              ? opt.learning_rate / std::sqrt(1.0 + static_cast<double>(t))
                              : opt.learning_rate;

        TrainLogRow row;
        row.iter = t;

        // Resolve this step's weights / mode before touching the batch.
        ModulationState weights{};
        int mode_id = -1; // alternating: 0=random, 1=ar, 2=next_all
        if (curriculum_mode) {
            weights = schedule_weights(t, cur_cfg);
            row.alpha = weights.alpha;
            row.beta = weights.beta;
            row.gamma = weights.gamma;
            row.mode = approx ? "curriculum-approx" : "curriculum";
        } else {
            const ModeDistribution dist = alternating_distribution(t, alt_cfg);
            row.alpha = dist.p_mask;
            row.beta = dist.p_ar;
            row.gamma = dist.p_next_all;
            if (t < warmup) {
                mode_id = 0;
            } else {
                const double probs[3] = {dist.p_mask, dist.p_ar, dist.p_next_all};
                mode_id = static_cast<int>(rng.categorical(std::span(probs, 3)));
            }
            row.mode = mode_id == 0 ? "random" : (mode_id == 1 ? "ar" : "next_all");
            if (approx && mode_id == 2) row.mode += "-approx";
        }

        const double inv_batch = 1.0 / static_cast<double>(opt.batch_size);
        double sum_random = 0.0, sum_next = 0.0, sum_next_all = 0.0, sum_objective = 0.0;
        for (std::int64_t b = 0; b < opt.batch_size; ++b) {
            const TokenSequence& seq = corpus[rng.below(corpus.size())];
            const auto k = static_cast<std::uint32_t>(seq.size());
            const MaskPattern mask = sample_mask(k, opt.mask_ratio, rng);
            const Path path = make_path(k, opt.path_kind, rng);

            double lr_val = 0.0, ln_val = 0.0, lna_val = 0.0;
            if (curriculum_mode) {
                lr_val = eval_with_grad(LossKind::random, model, seq, mask, path,
                                        weights.alpha * inv_batch, grad);
                ln_val = eval_with_grad(LossKind::next, model, seq, mask, path,
                                        weights.beta * inv_batch, grad);
                lna_val = approx ? eval_next_all_subsampled(model, seq, path,
                                                            opt.next_all_subsample,
                                                            weights.gamma * inv_batch, grad, rng)
                                 : eval_with_grad(LossKind::next_all, model, seq, mask, path,
                                                  weights.gamma * inv_batch, grad);
                sum_objective +=
                    weights.alpha * lr_val + weights.beta * ln_val + weights.gamma * lna_val;
            } else {
                // Log all three components; step only on the sampled mode.
                lr_val = eval_with_grad(LossKind::random, model, seq, mask, path,
                                        mode_id == 0 ? inv_batch : 0.0, grad);
                ln_val = eval_with_grad(LossKind::next, model, seq, mask, path,
                                        mode_id == 1 ? inv_batch : 0.0, grad);
                lna_val = approx && mode_id == 2
                              ? eval_next_all_subsampled(model, seq, path, opt.next_all_subsample,
                                                         inv_batch, grad, rng)
                              : eval_with_grad(LossKind::next_all, model, seq, mask, path,
                                               mode_id == 2 ? inv_batch : 0.0, grad);
                sum_objective += mode_id == 0 ? lr_val : (mode_id == 1 ? ln_val : lna_val);
            }
            sum_random += lr_val;
            sum_next += ln_val;
            sum_next_all += lna_val;
        }

        row.loss_random = sum_random * inv_batch;
        row.loss_next = sum_next * inv_batch;
        row.loss_next_all = sum_next_all * inv_batch;
        row.loss_combined = sum_objective * inv_batch;
        if (!std::isfinite(row.loss_combined)) {
            throw Error(ErrorCode::non_finite,
                        "non-finite loss at iteration " + std::to_string(t));
        }

        std::span<double> params = model.params();
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
        log.rows.push_back(std::move(row));
    }
    return log;
}

// ---------------------------------------------------------------------------
// Gradient-check wrappers

double loss_value(LossKind kind, const PredictorModel& model, const TokenSequence& seq,
                  const MaskPattern& mask, const Path& path) {
    switch (kind) {
        case LossKind::random:   return loss_random(model, seq, mask);
        case LossKind::next:     return loss_next(model, seq, path);
        case LossKind::next_all: return loss_next_all(model, seq, path);
    }
    throw Error(ErrorCode::invalid_argument, "unknown loss kind");
}

void loss_grad(LossKind kind, const PredictorModel& model, const TokenSequence& seq,
               const MaskPattern& mask, const Path& path, std::span<double> grad) {
    eval_with_grad(kind, model, seq, mask, path, 1.0, grad);
}

GradCheckReport grad_check_loss(PredictorModel& model, LossKind kind, const TokenSequence& seq,
                                const MaskPattern& mask, const Path& path, double h) {
    return grad_check(
        model, [&](const PredictorModel& m) { return loss_value(kind, m, seq, mask, path); },
        [&](const PredictorModel& m, std::span<double> g) { loss_grad(kind, m, seq, mask, path, g); },
        h);
}

} // namespace tokenlab
