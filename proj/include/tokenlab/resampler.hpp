#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace tokenlab {

struct ResamplerConfig {
    std::uint32_t num_latents = 1;  // R
    std::uint32_t dim = 1;          // d
    std::uint32_t num_layers = 0;
    std::uint32_t ffw_hidden = 1;
    std::uint64_t seed = 0;

    void validate() const; // R >= 1, d >= 1, num_layers >= 0, ffw_hidden >= 1
};

// Latent cross-attention aggregator. Per layer:
//   x <- x + Attn(q = x, kv = concat(x_f, x))
//   x <- x + FFW(x)
// with single-head scaled dot-product attention (scale 1/sqrt(d), learned
// q/k/v/output projections) and a linear-relu-linear FFW. The flattened
// features x_f are the time-embedded inputs reshaped [T,S,d] -> [T*S,d].
class PerceiverResampler {
public:
    // All weights are seeded Gaussian (std 0.02), all biases zero.
    explicit PerceiverResampler(const ResamplerConfig& cfg);

    // features: T*S rows of dim d (row (t*S + s) holds features[t][s]);
    // time_emb: T rows of dim d, broadcast over s; latents: R rows of dim d.
    // Returns the transformed latents, shape [R, d].
    Eigen::MatrixXd forward(const Eigen::MatrixXd& features, std::uint32_t t_steps,
                            std::uint32_t s_tokens, const Eigen::MatrixXd& time_emb,
                            const Eigen::MatrixXd& latents) const;

    struct Layer {
        Eigen::MatrixXd wq, wk, wv, wo; // each d x d
        Eigen::MatrixXd ffw1;           // d x hidden
        Eigen::VectorXd ffw_b1;         // hidden
        Eigen::MatrixXd ffw2;           // hidden x d
        Eigen::VectorXd ffw_b2;         // d
    };

    const ResamplerConfig& config() const { return cfg_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

private:
    ResamplerConfig cfg_;
    std::vector<Layer> layers_;
};

} // namespace tokenlab
