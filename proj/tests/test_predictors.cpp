#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include <doctest.h>

#include "tokenlab/errors.hpp"
#include "tokenlab/objectives.hpp"
#include "tokenlab/predictors.hpp"
#include "tokenlab/rng.hpp"
#include "test_util.hpp"

using namespace tokenlab;
using tokenlab::test::expect_error;
using tokenlab::test::tmp_path;

namespace {

ContextQuery query_of(const std::vector<Token>& tokens, const std::vector<std::uint32_t>& visible,
                      std::uint32_t target) {
    return ContextQuery{std::span(tokens), std::span(visible), target};
}

} // namespace

TEST_CASE("zero-logit tabular predictor is uniform in every context") {
    const TabularPredictor model(4);
    CHECK(model.param_count() == 4 * 5);
    const std::vector<Token> tokens = {0, 1, 2, 3};
    for (const std::vector<std::uint32_t>& visible :
         {std::vector<std::uint32_t>{}, {0}, {2}, {0, 2}}) {
        const std::vector<double> p = model.predict(query_of(tokens, visible, 1));
        for (double x : p) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
    }
}

TEST_CASE("tabular context rule: adjacent visible rows, else marginal") {
    // Soft copy chain: stay with 0.9. The marginal is deliberately skewed so
    // the no-neighbor fallback is distinguishable from the rows.
    const TabularPredictor model = TabularPredictor::from_probabilities(
        {0.8, 0.2}, {{0.9, 0.1}, {0.1, 0.9}});

    const std::vector<Token> tokens = {0, 0, 0, 1};

    // No visible neighbor (position 2 sees only position 0): marginal.
    std::vector<double> p = model.predict(query_of(tokens, {0}, 2));
    CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-12));

    // Left neighbor visible with value 0: transition row 0.
    p = model.predict(query_of(tokens, {0, 1}, 2));
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-12));

    // Right neighbor visible with value 1: row 1.
    p = model.predict(query_of(tokens, {3}, 2));
    CHECK(p[0] == doctest::Approx(0.1).epsilon(1e-12));

    // Both neighbors visible (values 0 and 1): product of rows renormalized,
    // (0.9*0.1, 0.1*0.9) -> (0.5, 0.5).
    p = model.predict(query_of(tokens, {1, 3}, 2));
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK(model.marginal()[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(model.transition_row(1)[1] == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("tabular predictor represents exact zero probabilities") {
    const TabularPredictor model = TabularPredictor::from_probabilities(
        {0.5, 0.5}, {{1.0, 0.0}, {0.0, 1.0}});
    const std::vector<Token> tokens = {0, 1};
    const std::vector<double> p = model.predict(query_of(tokens, {0}, 1));
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 0.0);
    expect_error(ErrorCode::zero_probability,
                 [&] { log_prob(model, query_of(tokens, {0}, 1), 1); });

    expect_error(ErrorCode::not_normalized, [] {
        TabularPredictor::from_probabilities({0.6, 0.6}, {{0.5, 0.5}, {0.5, 0.5}});
    });
    expect_error(ErrorCode::dimension_mismatch, [] {
        TabularPredictor::from_probabilities({0.5, 0.5}, {{1.0, 0.0}});
    });
}

TEST_CASE("context queries validate indices") {
    const TabularPredictor model(3);
    const std::vector<Token> tokens = {0, 1, 2};
    expect_error(ErrorCode::invalid_context,
                 [&] { model.predict(query_of(tokens, {0, 1}, 1)); });
    expect_error(ErrorCode::invalid_argument,
                 [&] { model.predict(query_of(tokens, {5}, 1)); });
    expect_error(ErrorCode::invalid_argument,
                 [&] { model.predict(query_of(tokens, {0}, 9)); });
    const std::vector<Token> bad = {0, 7, 2};
    expect_error(ErrorCode::vocab_violation,
                 [&] { model.predict(query_of(bad, {0}, 2)); });
}

TEST_CASE("linear predictor layout and bucket maps") {
    const std::uint32_t v = 5, d = 6;
    const LinearSoftmaxPredictor model(v, d, 11);
    CHECK(model.param_count() == v * d + 8 * d + d * v + v + 4 * v);
    CHECK(model.embed_dim() == d);

    // Signed relative-position buckets: negative offsets take 0..3,
    // positive ones 4..7, split at magnitudes 1 / 2-3 / 4-7 / 8+.
    CHECK(LinearSoftmaxPredictor::position_bucket(-1) == 0);
    CHECK(LinearSoftmaxPredictor::position_bucket(-2) == 1);
    CHECK(LinearSoftmaxPredictor::position_bucket(-3) == 1);
    CHECK(LinearSoftmaxPredictor::position_bucket(-4) == 2);
    CHECK(LinearSoftmaxPredictor::position_bucket(-7) == 2);
    CHECK(LinearSoftmaxPredictor::position_bucket(-8) == 3);
    CHECK(LinearSoftmaxPredictor::position_bucket(-100) == 3);
    CHECK(LinearSoftmaxPredictor::position_bucket(1) == 4);
    CHECK(LinearSoftmaxPredictor::position_bucket(3) == 5);
    CHECK(LinearSoftmaxPredictor::position_bucket(5) == 6);
    CHECK(LinearSoftmaxPredictor::position_bucket(9) == 7);

    CHECK(LinearSoftmaxPredictor::horizon_bucket(1) == 0);
    CHECK(LinearSoftmaxPredictor::horizon_bucket(2) == 1);
    CHECK(LinearSoftmaxPredictor::horizon_bucket(3) == 1);
    CHECK(LinearSoftmaxPredictor::horizon_bucket(4) == 2);
    CHECK(LinearSoftmaxPredictor::horizon_bucket(7) == 2);
    CHECK(LinearSoftmaxPredictor::horizon_bucket(8) == 3);
    CHECK(LinearSoftmaxPredictor::horizon_bucket(0) == 3); // empty context

    // Same seed -> identical parameters; different seed -> different.
    const LinearSoftmaxPredictor again(v, d, 11);
    CHECK(std::equal(model.params().begin(), model.params().end(), again.params().begin()));
    const LinearSoftmaxPredictor other(v, d, 12);
    CHECK(!std::equal(model.params().begin(), model.params().end(), other.params().begin()));

    // Predictions are valid distributions.
    const std::vector<Token> tokens = {0, 3, 1, 4, 2};
    const std::vector<double> p = model.predict(query_of(tokens, {0, 1, 4}, 2));
    double total = 0.0;
    for (double x : p) {
        CHECK(x > 0.0);
        total += x;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("analytic gradients match finite differences on both models") {
    Rng rng(99);
    for (int inst = 0; inst < 6; ++inst) {
        const std::uint32_t k = 8, v = 5;
        TokenSequence seq;
        seq.id = "gc";
        seq.vocab_size = v;
        for (std::uint32_t i = 0; i < k; ++i)
            seq.tokens.push_back(static_cast<Token>(rng.below(v)));
        const MaskPattern mask = sample_mask(k, 0.4, rng);
        const Path path = make_path(k, PathKind::seeded_permutation, rng);

        TabularPredictor tab(v);
        for (double& z : tab.params()) z += 0.5 * rng.gaussian();
        LinearSoftmaxPredictor lin(v, 6, 7000 + static_cast<std::uint64_t>(inst));

        for (LossKind kind : {LossKind::random, LossKind::next, LossKind::next_all}) {
            CHECK(grad_check_loss(tab, kind, seq, mask, path, 1e-5).max_rel_error < 1e-4);
            CHECK(grad_check_loss(lin, kind, seq, mask, path, 1e-5).max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("gradient vanishes at the tabular optimum") {
    // For loss_next on {0,0,1,0,1,1} the per-row empirical conditionals are
    // the exact minimizer: marginal sees only x0 = 0, context 0 is followed by
    // {0,1,1}, context 1 by {0,1}. A model built from those frequencies is a
    // stationary point, so the analytic gradient must vanish.
    const TabularPredictor model = TabularPredictor::from_probabilities(
        {1.0, 0.0}, {{1.0 / 3.0, 2.0 / 3.0}, {0.5, 0.5}});
    TokenSequence seq{"plateau", 2, {0, 0, 1, 0, 1, 1}};
    Path path;
    path.order = {0, 1, 2, 3, 4, 5};
    MaskPattern mask;
    mask.masked = {0, 1, 0, 1, 0, 1};
    mask.ratio = 0.5;

    std::vector<double> grad(model.param_count(), 0.0);
    loss_grad(LossKind::next, model, seq, mask, path, grad);
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    CHECK(std::sqrt(norm) < 1e-8);
}

TEST_CASE("checkpoints round-trip bit-exactly and reject mismatches") {
    const std::string path = tmp_path("model.ckpt");
    LinearSoftmaxPredictor model(4, 3, 21);
    const std::vector<double> saved(model.params().begin(), model.params().end());
    save_checkpoint(model, path);

    for (double& p : model.params()) p = -1.25; // clobber
    load_checkpoint(model, path);
    CHECK(std::memcmp(model.params().data(), saved.data(), saved.size() * sizeof(double)) == 0);

    TabularPredictor wrong_kind(4);
    expect_error(ErrorCode::shape_mismatch, [&] { load_checkpoint(wrong_kind, path); });
    LinearSoftmaxPredictor wrong_count(4, 5, 21);
    expect_error(ErrorCode::shape_mismatch, [&] { load_checkpoint(wrong_count, path); });

    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("NOTCKPT linear 3\n", f);
        std::fclose(f);
    }
    expect_error(ErrorCode::parse_error, [&] { load_checkpoint(model, path); });
    expect_error(ErrorCode::io_error, [&] { load_checkpoint(model, tmp_path("missing.ckpt")); });
    std::remove(path.c_str());

    // Header format is pinned: "TUCKPT1 <kind> <count>\n".
    save_checkpoint(model, path);
    std::ifstream in(path, std::ios::binary);
    std::string header;
    std::getline(in, header);
    CHECK(header == "TUCKPT1 linear " + std::to_string(model.param_count()));
    std::remove(path.c_str());
}
