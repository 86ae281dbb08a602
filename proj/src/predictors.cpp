#include "tokenlab/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "tokenlab/errors.hpp"
#include "tokenlab/io_util.hpp"
#include "tokenlab/rng.hpp"

namespace tokenlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// softmax(logits) supporting -inf entries; at least one entry must be finite.
std::vector<double> softmax(std::span<const double> logits) {
    double mx = kNegInf;
    for (double z : logits) mx = std::max(mx, z);
    if (!(mx > kNegInf)) {
        throw Error(ErrorCode::non_finite, "softmax over all -inf logits");
    }
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        total += p[i];
    }
    for (double& x : p) x /= total;
    return p;
}

double log_sum_exp(std::span<const double> logits) {
    double mx = kNegInf;
    for (double z : logits) mx = std::max(mx, z);
    if (!(mx > kNegInf)) {
        throw Error(ErrorCode::non_finite, "log-sum-exp over all -inf logits");
    }
    double total = 0.0;
    for (double z : logits) total += std::exp(z - mx);
    return mx + std::log(total);
}

void check_query(const ContextQuery& query, std::uint32_t vocab) {
    const std::size_t k = query.tokens.size();
    if (query.target >= k) {
        throw Error(ErrorCode::invalid_argument, "target index out of range");
    }
    for (std::uint32_t idx : query.visible) {
        if (idx >= k) {
            throw Error(ErrorCode::invalid_argument, "visible index out of range");
        }
        if (idx == query.target) {
            throw Error(ErrorCode::invalid_context,
                        "target index " + std::to_string(query.target) + " is in the visible set");
        }
    }
    for (Token t : query.tokens) {
        if (t >= vocab) {
            throw Error(ErrorCode::vocab_violation,
                        "token " + std::to_string(t) + " outside vocabulary");
        }
    }
}

bool contains_index(std::span<const std::uint32_t> sorted, std::uint32_t value) {
    return std::binary_search(sorted.begin(), sorted.end(), value);
}

} // namespace

double log_prob(const PredictorModel& model, const ContextQuery& query, Token truth) {
    const std::vector<double> p = model.predict(query);
    if (truth >= p.size()) {
        throw Error(ErrorCode::vocab_violation, "truth token outside vocabulary");
    }
    if (!(p[truth] > 0.0)) {
        throw Error(ErrorCode::zero_probability,
                    "model assigned probability 0 to observed token at index " +
                        std::to_string(query.target));
    }
    return std::log(p[truth]);
}

// ---------------------------------------------------------------------------
// TabularPredictor

TabularPredictor::TabularPredictor(std::uint32_t vocab_size) : v_(vocab_size) {
    if (v_ < 2) {
        throw Error(ErrorCode::invalid_argument, "tabular predictor requires V >= 2");
    }
    logits_.assign(static_cast<std::size_t>(v_) * (v_ + 1), 0.0);
}

TabularPredictor TabularPredictor::from_probabilities(
    const std::vector<double>& marginal, const std::vector<std::vector<double>>& transition) {
    const auto v = static_cast<std::uint32_t>(marginal.size());
    TabularPredictor model(v);
    if (transition.size() != v) {
        throw Error(ErrorCode::dimension_mismatch, "transition must have V rows");
    }
    auto fill = [v](std::span<double> dst, const std::vector<double>& src, const char* what) {
        if (src.size() != v) {
            throw Error(ErrorCode::dimension_mismatch, std::string(what) + " has wrong length");
        }
        double total = 0.0;
        for (double p : src) {
            if (!(p >= 0.0)) {
                throw Error(ErrorCode::invalid_argument, std::string(what) + " has negative entry");
            }
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw Error(ErrorCode::not_normalized,
                        std::string(what) + " does not sum to 1 within 1e-9");
        }
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i] = src[i] > 0.0 ? std::log(src[i]) : kNegInf;
        }
    };
    fill(std::span(model.logits_).subspan(0, v), marginal, "marginal");
    for (std::uint32_t r = 0; r < v; ++r) {
        fill(std::span(model.logits_).subspan(static_cast<std::size_t>(v) * (r + 1), v),
             transition[r], "transition row");
    }
    return model;
}

std::vector<double> TabularPredictor::marginal() const {
    return softmax(std::span(logits_).subspan(0, v_));
}

std::vector<double> TabularPredictor::transition_row(Token c) const {
    return softmax(std::span(logits_).subspan(static_cast<std::size_t>(v_) * (c + 1), v_));
}

std::vector<double> TabularPredictor::predict(const ContextQuery& query) const {
    check_query(query, v_);
    std::vector<Token> neighbors;
    if (query.target > 0 && contains_index(query.visible, query.target - 1)) {
        neighbors.push_back(query.tokens[query.target - 1]);
    }
    if (query.target + 1 < query.tokens.size() && contains_index(query.visible, query.target + 1)) {
        neighbors.push_back(query.tokens[query.target + 1]);
    }
    if (neighbors.empty()) {
        return marginal();
    }
    // Product of experts: sum the log-softmax of each neighbor's transition
    // row, then renormalize.
    std::vector<double> combined(v_, 0.0);
    for (Token c : neighbors) {
        const auto row = std::span(logits_).subspan(static_cast<std::size_t>(v_) * (c + 1), v_);
        const double lse = log_sum_exp(row);
        for (std::uint32_t u = 0; u < v_; ++u) combined[u] += row[u] - lse;
    }
    return softmax(combined);
}

void TabularPredictor::accumulate_grad_log_prob(const ContextQuery& query, Token truth,
                                                double scale, std::span<double> grad) const {
    if (grad.size() != logits_.size()) {
        throw Error(ErrorCode::dimension_mismatch, "gradient buffer size mismatch");
    }
    if (truth >= v_) {
        throw Error(ErrorCode::vocab_violation, "truth token outside vocabulary");
    }
    const std::vector<double> p = predict(query);
    // For both the marginal case and each product-of-experts occurrence the
    // chain rule collapses to d log p(truth)/d logit_u = delta(u,truth) - p_u,
    // applied once per occurrence of the corresponding logit block.
    std::vector<Token> neighbors;
    if (query.target > 0 && contains_index(query.visible, query.target - 1)) {
        neighbors.push_back(query.tokens[query.target - 1]);
    }
    if (query.target + 1 < query.tokens.size() && contains_index(query.visible, query.target + 1)) {
        neighbors.push_back(query.tokens[query.target + 1]);
    }
    if (neighbors.empty()) {
        for (std::uint32_t u = 0; u < v_; ++u) {
            grad[u] += scale * ((u == truth ? 1.0 : 0.0) - p[u]);
        }
        return;
    }
    for (Token c : neighbors) {
        const std::size_t off = static_cast<std::size_t>(v_) * (c + 1);
        for (std::uint32_t u = 0; u < v_; ++u) {
            grad[off + u] += scale * ((u == truth ? 1.0 : 0.0) - p[u]);
        }
    }
}

std::unique_ptr<PredictorModel> TabularPredictor::clone() const {
    return std::make_unique<TabularPredictor>(*this);
}

// ---------------------------------------------------------------------------
// LinearSoftmaxPredictor

LinearSoftmaxPredictor::LinearSoftmaxPredictor(std::uint32_t vocab_size, std::uint32_t embed_dim,
                                               std::uint64_t seed)
    : v_(vocab_size), d_(embed_dim) {
    if (v_ < 2 || d_ < 1) {
        throw Error(ErrorCode::invalid_argument, "linear predictor requires V >= 2 and d >= 1");
    }
    const std::size_t count = static_cast<std::size_t>(v_) * d_ +
                              static_cast<std::size_t>(kPositionBuckets) * d_ +
                              static_cast<std::size_t>(d_) * v_ + v_ +
                              static_cast<std::size_t>(kHorizonBuckets) * v_;
    params_.assign(count, 0.0);
    Rng rng(seed);
    const std::size_t gaussian_span = off_b(); // E, P and W; biases b, H stay zero
    for (std::size_t i = 0; i < gaussian_span; ++i) params_[i] = rng.gaussian(0.0, 0.02);
}

std::uint32_t LinearSoftmaxPredictor::position_bucket(std::int64_t delta) {
    const std::uint64_t mag = static_cast<std::uint64_t>(delta < 0 ? -delta : delta);
    std::uint32_t b;
    if (mag <= 1) b = 0;
    else if (mag <= 3) b = 1;
    else if (mag <= 7) b = 2;
    else b = 3;
    return delta < 0 ? b : b + 4;
}

std::uint32_t LinearSoftmaxPredictor::horizon_bucket(std::uint64_t distance) {
    if (distance == 0) return kHorizonBuckets - 1; // empty context: farthest bucket
    if (distance <= 1) return 0;
    if (distance <= 3) return 1;
    if (distance <= 7) return 2;
    return 3;
}

void LinearSoftmaxPredictor::pool_context(const ContextQuery& query, std::vector<double>& pooled,
                                          std::uint32_t& hbucket) const {
    pooled.assign(d_, 0.0);
    std::uint64_t nearest = 0;
    if (!query.visible.empty()) {
        nearest = std::numeric_limits<std::uint64_t>::max();
        const double inv_m = 1.0 / static_cast<double>(query.visible.size());
        for (std::uint32_t idx : query.visible) {
            const std::int64_t delta =
                static_cast<std::int64_t>(idx) - static_cast<std::int64_t>(query.target);
            nearest = std::min<std::uint64_t>(
                nearest, static_cast<std::uint64_t>(delta < 0 ? -delta : delta));
            const double* e = embed(query.tokens[idx]);
            const double* pb = params_.data() + off_pos() +
                               static_cast<std::size_t>(position_bucket(delta)) * d_;
            for (std::uint32_t j = 0; j < d_; ++j) pooled[j] += inv_m * (e[j] + pb[j]);
        }
    }
    hbucket = horizon_bucket(query.visible.empty() ? 0 : nearest);
}

std::vector<double> LinearSoftmaxPredictor::logits_for(const ContextQuery& query,
                                                       std::vector<double>& pooled,
                                                       std::uint32_t& hbucket) const {
    check_query(query, v_);
    pool_context(query, pooled, hbucket);
    const double* w = params_.data() + off_w();
    const double* b = params_.data() + off_b();
    const double* h = params_.data() + off_h() + static_cast<std::size_t>(hbucket) * v_;
    std::vector<double> logits(v_);
    for (std::uint32_t vtok = 0; vtok < v_; ++vtok) logits[vtok] = b[vtok] + h[vtok];
    for (std::uint32_t j = 0; j < d_; ++j) {
        const double pj = pooled[j];
        const double* wrow = w + static_cast<std::size_t>(j) * v_;
        for (std::uint32_t vtok = 0; vtok < v_; ++vtok) logits[vtok] += pj * wrow[vtok];
    }
    return logits;
}

std::vector<double> LinearSoftmaxPredictor::predict(const ContextQuery& query) const {
    std::vector<double> pooled;
    std::uint32_t hbucket = 0;
    const std::vector<double> logits = logits_for(query, pooled, hbucket);
    return softmax(logits);
}

void LinearSoftmaxPredictor::accumulate_grad_log_prob(const ContextQuery& query, Token truth,
                                                      double scale, std::span<double> grad) const {
    if (grad.size() != params_.size()) {
        throw Error(ErrorCode::dimension_mismatch, "gradient buffer size mismatch");
    }
    if (truth >= v_) {
        throw Error(ErrorCode::vocab_violation, "truth token outside vocabulary");
    }
    std::vector<double> pooled;
    std::uint32_t hbucket = 0;
    const std::vector<double> logits = logits_for(query, pooled, hbucket);
    const std::vector<double> p = softmax(logits);

    // d log p(truth)/d logits = onehot(truth) - p; backpropagate through
    // logits = W^T pooled + b + H[hbucket].
    std::vector<double> dlogits(v_);
    for (std::uint32_t vtok = 0; vtok < v_; ++vtok) {
        dlogits[vtok] = scale * ((vtok == truth ? 1.0 : 0.0) - p[vtok]);
    }
    double* gb = grad.data() + off_b();
    double* gh = grad.data() + off_h() + static_cast<std::size_t>(hbucket) * v_;
    for (std::uint32_t vtok = 0; vtok < v_; ++vtok) {
        gb[vtok] += dlogits[vtok];
        gh[vtok] += dlogits[vtok];
    }
    const double* w = params_.data() + off_w();
    double* gw = grad.data() + off_w();
    std::vector<double> dpooled(d_, 0.0);
    for (std::uint32_t j = 0; j < d_; ++j) {
        const double* wrow = w + static_cast<std::size_t>(j) * v_;
        double* gwrow = gw + static_cast<std::size_t>(j) * v_;
        double acc = 0.0;
        for (std::uint32_t vtok = 0; vtok < v_; ++vtok) {
            gwrow[vtok] += pooled[j] * dlogits[vtok];
            acc += wrow[vtok] * dlogits[vtok];
        }
        dpooled[j] = acc;
    }
    if (!query.visible.empty()) {
        const double inv_m = 1.0 / static_cast<double>(query.visible.size());
        for (std::uint32_t idx : query.visible) {
            const std::int64_t delta =
                static_cast<std::int64_t>(idx) - static_cast<std::int64_t>(query.target);
            double* ge = grad.data() + static_cast<std::size_t>(query.tokens[idx]) * d_;
            double* gp = grad.data() + off_pos() +
                         static_cast<std::size_t>(position_bucket(delta)) * d_;
            for (std::uint32_t j = 0; j < d_; ++j) {
                const double g = inv_m * dpooled[j];
                ge[j] += g;
                gp[j] += g;
            }
        }
    }
}

std::unique_ptr<PredictorModel> LinearSoftmaxPredictor::clone() const {
    return std::make_unique<LinearSoftmaxPredictor>(*this);
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckReport grad_check(PredictorModel& model,
                           const std::function<double(const PredictorModel&)>& loss,
                           const std::function<void(const PredictorModel&, std::span<double>)>& grad,
                           double h) {
    if (!(h > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "finite-difference step h must be > 0");
    }
    const std::size_t n = model.param_count();
    std::vector<double> analytic(n, 0.0);
    grad(model, analytic);
    for (double g : analytic) {
        if (!std::isfinite(g)) {
            throw Error(ErrorCode::non_finite, "analytic gradient is non-finite");
        }
    }
    GradCheckReport report;
    std::span<double> params = model.params();
    for (std::size_t i = 0; i < n; ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double up = loss(model);
        params[i] = saved - h;
        const double down = loss(model);
        params[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(fd));
        const double rel = std::abs(analytic[i] - fd) / denom;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_param = i;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const PredictorModel& model, const std::string& path) {
    std::string payload = "TUCKPT1 " + model.kind() + " " + std::to_string(model.param_count()) + "\n";
    const std::span<const double> params = model.params();
    payload.append(reinterpret_cast<const char*>(params.data()), params.size() * sizeof(double));
    write_file_atomic(path, payload);
}

void load_checkpoint(PredictorModel& model, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open checkpoint: " + path);
    }
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic, kind;
    std::size_t count = 0;
    if (!(hs >> magic >> kind >> count) || magic != "TUCKPT1") {
        throw Error(ErrorCode::parse_error, path + ": bad TUCKPT1 header");
    }
    if (kind != model.kind() || count != model.param_count()) {
        throw Error(ErrorCode::shape_mismatch,
                    path + ": checkpoint is " + kind + "/" + std::to_string(count) +
                        " but model is " + model.kind() + "/" + std::to_string(model.param_count()));
    }
    std::span<double> params = model.params();
    in.read(reinterpret_cast<char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != params.size() * sizeof(double)) {
        throw Error(ErrorCode::parse_error, path + ": truncated parameter data");
    }
}

} // namespace tokenlab
