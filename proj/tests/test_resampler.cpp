#include <cmath>
#include <cstdint>
#include <vector>

#include <doctest.h>
#include <Eigen/Dense>

#include "tokenlab/errors.hpp"
#include "tokenlab/resampler.hpp"
#include "tokenlab/rng.hpp"
#include "test_util.hpp"

using namespace tokenlab;
using tokenlab::test::expect_error;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.gaussian();
    return m;
}

// Scalar-loop reference for one layer; deliberately avoids Eigen products so
// it exercises none of the code paths used by the implementation.
Eigen::MatrixXd forward_oracle(const PerceiverResampler& model, const Eigen::MatrixXd& features,
                               std::uint32_t t_steps, std::uint32_t s_tokens,
                               const Eigen::MatrixXd& time_emb, const Eigen::MatrixXd& latents) {
    const auto d = static_cast<Eigen::Index>(model.config().dim);
    const Eigen::Index r = latents.rows();
    const Eigen::Index f = features.rows();

    // Time embedding broadcast over the S axis.
    Eigen::MatrixXd xf = features;
    for (std::uint32_t t = 0; t < t_steps; ++t)
        for (std::uint32_t s = 0; s < s_tokens; ++s)
            for (Eigen::Index c = 0; c < d; ++c)
                xf(static_cast<Eigen::Index>(t) * s_tokens + s, c) += time_emb(t, c);

    Eigen::MatrixXd x = latents;
    for (const auto& layer : model.layers()) {
        Eigen::MatrixXd kv(f + r, d);
        for (Eigen::Index i = 0; i < f; ++i)
            for (Eigen::Index c = 0; c < d; ++c) kv(i, c) = xf(i, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index c = 0; c < d; ++c) kv(f + i, c) = x(i, c);

        auto matmul = [d](const Eigen::MatrixXd& a, const Eigen::MatrixXd& w) {
            Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), w.cols());
            for (Eigen::Index i = 0; i < a.rows(); ++i)
                for (Eigen::Index jj = 0; jj < w.cols(); ++jj)
                    for (Eigen::Index kk = 0; kk < a.cols(); ++kk)
                        out(i, jj) += a(i, kk) * w(kk, jj);
            (void)d;
            return out;
        };

        const Eigen::MatrixXd q = matmul(x, layer.wq);
        const Eigen::MatrixXd k = matmul(kv, layer.wk);
        const Eigen::MatrixXd v = matmul(kv, layer.wv);

        Eigen::MatrixXd attended(r, d);
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        for (Eigen::Index i = 0; i < r; ++i) {
            std::vector<double> scores(f + r);
            double mx = -1e300;
            for (Eigen::Index jj = 0; jj < f + r; ++jj) {
                double dot = 0.0;
                for (Eigen::Index c = 0; c < d; ++c) dot += q(i, c) * k(jj, c);
                scores[jj] = dot * scale;
                mx = std::max(mx, scores[jj]);
            }
            double z = 0.0;
            for (double& sc : scores) {
                sc = std::exp(sc - mx);
                z += sc;
            }
            for (Eigen::Index c = 0; c < d; ++c) {
                double acc = 0.0;
                for (Eigen::Index jj = 0; jj < f + r; ++jj) acc += (scores[jj] / z) * v(jj, c);
                attended(i, c) = acc;
            }
        }
        x = x + matmul(attended, layer.wo);

        const Eigen::Index hidden = layer.ffw1.cols();
        Eigen::MatrixXd pre(r, hidden);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index hh = 0; hh < hidden; ++hh) {
                double acc = layer.ffw_b1(hh);
                for (Eigen::Index c = 0; c < d; ++c) acc += x(i, c) * layer.ffw1(c, hh);
                pre(i, hh) = std::max(acc, 0.0);
            }
        Eigen::MatrixXd post = x;
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index c = 0; c < d; ++c) {
                double acc = layer.ffw_b2(c);
                for (Eigen::Index hh = 0; hh < hidden; ++hh) acc += pre(i, hh) * layer.ffw2(hh, c);
                post(i, c) += acc;
            }
        x = post;
    }
    return x;
}

} // namespace

TEST_CASE("zero layers pass latents through untouched") {
    ResamplerConfig cfg;
    cfg.num_latents = 3;
    cfg.dim = 4;
    cfg.num_layers = 0;
    const PerceiverResampler model(cfg);
    Rng rng(1);
    const Eigen::MatrixXd features = random_matrix(6, 4, rng);
    const Eigen::MatrixXd time_emb = random_matrix(3, 4, rng);
    const Eigen::MatrixXd latents = random_matrix(3, 4, rng);
    const Eigen::MatrixXd out = model.forward(features, 3, 2, time_emb, latents);
    CHECK(out == latents); // bit-exact
}

TEST_CASE("forward pass matches a scalar-loop oracle") {
    ResamplerConfig cfg;
    cfg.num_latents = 2;
    cfg.dim = 3;
    cfg.num_layers = 2;
    cfg.ffw_hidden = 4;
    cfg.seed = 11;
    const PerceiverResampler model(cfg);
    Rng rng(2);
    const Eigen::MatrixXd features = random_matrix(4, 3, rng); // T=2, S=2
    const Eigen::MatrixXd time_emb = random_matrix(2, 3, rng);
    const Eigen::MatrixXd latents = random_matrix(2, 3, rng);

    const Eigen::MatrixXd got = model.forward(features, 2, 2, time_emb, latents);
    const Eigen::MatrixXd want = forward_oracle(model, features, 2, 2, time_emb, latents);
    REQUIRE(got.rows() == 2);
    REQUIRE(got.cols() == 3);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("attention keys are order-invariant") {
    // Softmax attention is a weighted sum over kv rows, so permuting the
    // feature rows within one time step cannot change the output.
    ResamplerConfig cfg;
    cfg.num_latents = 2;
    cfg.dim = 3;
    cfg.num_layers = 1;
    cfg.ffw_hidden = 5;
    cfg.seed = 7;
    const PerceiverResampler model(cfg);
    Rng rng(3);
    Eigen::MatrixXd features = random_matrix(5, 3, rng); // T=1, S=5
    const Eigen::MatrixXd time_emb = random_matrix(1, 3, rng);
    const Eigen::MatrixXd latents = random_matrix(2, 3, rng);

    const Eigen::MatrixXd base = model.forward(features, 1, 5, time_emb, latents);
    Eigen::MatrixXd shuffled = features;
    shuffled.row(0) = features.row(3);
    shuffled.row(3) = features.row(0);
    shuffled.row(1) = features.row(4);
    shuffled.row(4) = features.row(1);
    const Eigen::MatrixXd permuted = model.forward(shuffled, 1, 5, time_emb, latents);
    CHECK((base - permuted).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("permuting latents permutes outputs") {
    // Each latent row attends independently; the only coupling is through
    // the shared kv pool, which includes the latents themselves. With a
    // row-swap of the latents the kv pool is the same set, so outputs swap.
    ResamplerConfig cfg;
    cfg.num_latents = 3;
    cfg.dim = 2;
    cfg.num_layers = 2;
    cfg.ffw_hidden = 3;
    cfg.seed = 13;
    const PerceiverResampler model(cfg);
    Rng rng(4);
    const Eigen::MatrixXd features = random_matrix(4, 2, rng);
    const Eigen::MatrixXd time_emb = random_matrix(2, 2, rng);
    const Eigen::MatrixXd latents = random_matrix(3, 2, rng);

    Eigen::MatrixXd swapped = latents;
    swapped.row(0) = latents.row(2);
    swapped.row(2) = latents.row(0);

    const Eigen::MatrixXd out = model.forward(features, 2, 2, time_emb, latents);
    const Eigen::MatrixXd out_swapped = model.forward(features, 2, 2, time_emb, swapped);
    CHECK((out.row(0) - out_swapped.row(2)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((out.row(2) - out_swapped.row(0)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((out.row(1) - out_swapped.row(1)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("zeroed output projections reduce to the identity") {
    ResamplerConfig cfg;
    cfg.num_latents = 2;
    cfg.dim = 3;
    cfg.num_layers = 3;
    cfg.ffw_hidden = 4;
    cfg.seed = 21;
    PerceiverResampler model(cfg);
    for (auto& layer : model.layers()) {
        layer.wo.setZero();
        layer.ffw2.setZero();
        layer.ffw_b2.setZero();
    }
    Rng rng(5);
    const Eigen::MatrixXd features = random_matrix(2, 3, rng);
    const Eigen::MatrixXd time_emb = random_matrix(1, 3, rng);
    const Eigen::MatrixXd latents = random_matrix(2, 3, rng);
    const Eigen::MatrixXd out = model.forward(features, 1, 2, time_emb, latents);
    CHECK(out == latents); // both residual branches contribute exactly zero
}

TEST_CASE("construction is deterministic in the seed") {
    ResamplerConfig cfg;
    cfg.num_latents = 2;
    cfg.dim = 4;
    cfg.num_layers = 2;
    cfg.ffw_hidden = 3;
    cfg.seed = 99;
    const PerceiverResampler a(cfg);
    const PerceiverResampler b(cfg);
    for (std::size_t l = 0; l < a.layers().size(); ++l) {
        CHECK(a.layers()[l].wq == b.layers()[l].wq);
        CHECK(a.layers()[l].ffw2 == b.layers()[l].ffw2);
        CHECK(a.layers()[l].ffw_b1 == b.layers()[l].ffw_b1);
    }
    cfg.seed = 100;
    const PerceiverResampler c(cfg);
    CHECK(a.layers()[0].wq != c.layers()[0].wq);

    // Weight statistics: std 0.02 gaussian, bias exactly zero.
    CHECK(a.layers()[0].ffw_b1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.layers()[0].wq.cwiseAbs().maxCoeff() < 0.2);
    CHECK(a.layers()[0].wq.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("shape validation") {
    ResamplerConfig cfg;
    cfg.num_latents = 2;
    cfg.dim = 3;
    cfg.num_layers = 1;
    const PerceiverResampler model(cfg);
    Rng rng(6);
    const Eigen::MatrixXd features = random_matrix(4, 3, rng);
    const Eigen::MatrixXd time_emb = random_matrix(2, 3, rng);
    const Eigen::MatrixXd latents = random_matrix(2, 3, rng);

    // T*S mismatch with the feature row count.
    expect_error(ErrorCode::shape_mismatch, [&] {
        model.forward(features, 3, 2, time_emb, latents);
    });
    // Wrong feature width.
    expect_error(ErrorCode::shape_mismatch, [&] {
        model.forward(random_matrix(4, 2, rng), 2, 2, time_emb, latents);
    });
    // Wrong time_emb row count.
    expect_error(ErrorCode::shape_mismatch, [&] {
        model.forward(features, 2, 2, random_matrix(3, 3, rng), latents);
    });
    // Wrong latent count.
    expect_error(ErrorCode::shape_mismatch, [&] {
        model.forward(features, 2, 2, time_emb, random_matrix(1, 3, rng));
    });

    ResamplerConfig bad;
    bad.num_latents = 0;
    expect_error(ErrorCode::invalid_argument, [&] { bad.validate(); });
    bad.num_latents = 1;
    bad.ffw_hidden = 0;
    expect_error(ErrorCode::invalid_argument, [&] { bad.validate(); });
}
