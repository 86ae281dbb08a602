#include "tokenlab/resampler.hpp"

#include <cmath>
#include <string>

#include "tokenlab/errors.hpp"
#include "tokenlab/rng.hpp"

namespace tokenlab {

void ResamplerConfig::validate() const {
    if (num_latents < 1 || dim < 1 || ffw_hidden < 1) {
        throw Error(ErrorCode::invalid_argument,
                    "resampler config requires R >= 1, d >= 1, ffw_hidden >= 1");
    }
}

namespace {

Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.gaussian(0.0, 0.02);
    return m;
}

} // namespace

PerceiverResampler::PerceiverResampler(const ResamplerConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const auto d = static_cast<Eigen::Index>(cfg_.dim);
    const auto hidden = static_cast<Eigen::Index>(cfg_.ffw_hidden);
    layers_.reserve(cfg_.num_layers);
    for (std::uint32_t l = 0; l < cfg_.num_layers; ++l) {
        Layer layer;
        layer.wq = gaussian_matrix(rng, d, d);
        layer.wk = gaussian_matrix(rng, d, d);
        layer.wv = gaussian_matrix(rng, d, d);
        layer.wo = gaussian_matrix(rng, d, d);
        layer.ffw1 = gaussian_matrix(rng, d, hidden);
        layer.ffw_b1 = Eigen::VectorXd::Zero(hidden);
        layer.ffw2 = gaussian_matrix(rng, hidden, d);
        layer.ffw_b2 = Eigen::VectorXd::Zero(d);
        layers_.push_back(std::move(layer));
    }
}

Eigen::MatrixXd PerceiverResampler::forward(const Eigen::MatrixXd& features, std::uint32_t t_steps,
                                            std::uint32_t s_tokens, const Eigen::MatrixXd& time_emb,
                                            const Eigen::MatrixXd& latents) const {
    const auto d = static_cast<Eigen::Index>(cfg_.dim);
    const auto r = static_cast<Eigen::Index>(cfg_.num_latents);
    const auto ts = static_cast<Eigen::Index>(t_steps) * s_tokens;
    if (features.rows() != ts || features.cols() != d) {
        throw Error(ErrorCode::shape_mismatch,
                    "features must be [T*S, d] = [" + std::to_string(ts) + ", " +
                        std::to_string(d) + "]");
    }
    if (time_emb.rows() != static_cast<Eigen::Index>(t_steps) || time_emb.cols() != d) {
        throw Error(ErrorCode::shape_mismatch, "time_emb must be [T, d]");
    }
    if (latents.rows() != r || latents.cols() != d) {
        throw Error(ErrorCode::shape_mismatch, "latents must be [R, d]");
    }

    // x_f <- features + time embedding broadcast over the S axis, then the
    // [T,S,d] block is already flat as [T*S, d] rows.
    Eigen::MatrixXd xf = features;
    for (std::uint32_t t = 0; t < t_steps; ++t) {
        for (std::uint32_t s = 0; s < s_tokens; ++s) {
            xf.row(static_cast<Eigen::Index>(t) * s_tokens + s) += time_emb.row(t);
        }
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Eigen::MatrixXd x = latents;
    for (const Layer& layer : layers_) {
        // kv = concat(x_f, x) along the row axis.
        Eigen::MatrixXd kv(ts + r, d);
        kv.topRows(ts) = xf;
        kv.bottomRows(r) = x;

        const Eigen::MatrixXd q = x * layer.wq;
        const Eigen::MatrixXd k = kv * layer.wk;
        const Eigen::MatrixXd v = kv * layer.wv;

        Eigen::MatrixXd scores = (q * k.transpose()) * scale; // [R, TS+R]
        for (Eigen::Index row = 0; row < scores.rows(); ++row) {
            const double mx = scores.row(row).maxCoeff();
            Eigen::ArrayXd e = (scores.row(row).array() - mx).exp();
            scores.row(row) = (e / e.sum()).matrix();
        }
        x += (scores * v) * layer.wo;

        const Eigen::MatrixXd pre =
            ((x * layer.ffw1).rowwise() + layer.ffw_b1.transpose()).cwiseMax(0.0);
        x += (pre * layer.ffw2).rowwise() + layer.ffw_b2.transpose();
    }
    return x;
}

} // namespace tokenlab
