#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tokenlab/rng.hpp"

namespace tokenlab {

using Token = std::uint32_t;

// Length-K sequence of discrete token ids over a vocabulary of size V.
// Indices are 0-based throughout the library.
struct TokenSequence {
    std::string id;
    std::uint32_t vocab_size = 0;
    std::vector<Token> tokens;

    std::size_t size() const { return tokens.size(); }

    // Enforces K >= 1 and 0 <= token < V.
    void validate() const;
};

// Mask set M over {0..K-1}; M is nonempty and leaves at least one position
// visible. |M| = round(ratio * K) with round-half-up.
struct MaskPattern {
    std::vector<std::uint8_t> masked; // one flag per position
    double ratio = 0.0;

    std::size_t size() const { return masked.size(); }
    bool is_masked(std::size_t i) const { return masked[i] != 0; }

    std::vector<std::uint32_t> masked_indices() const;
    std::vector<std::uint32_t> visible_indices() const;

    void validate() const;
};

// Tokenization path: a permutation of {0..K-1} giving autoregressive order.
struct Path {
    std::vector<std::uint32_t> order;

    std::size_t size() const { return order.size(); }

    // Enforces that order is a bijection on {0..K-1}.
    void validate() const;

    Path inverse() const;
};

enum class PathKind { raster, seeded_permutation };

// Dense 3D intensity volume, raster order with x fastest.
struct Volume {
    std::uint32_t d = 0, h = 0, w = 0;
    std::vector<float> data;

    std::size_t voxels() const { return data.size(); }
    float at(std::uint32_t z, std::uint32_t y, std::uint32_t x) const {
        return data[(static_cast<std::size_t>(z) * h + y) * w + x];
    }
    float& at(std::uint32_t z, std::uint32_t y, std::uint32_t x) {
        return data[(static_cast<std::size_t>(z) * h + y) * w + x];
    }

    // Enforces D,H,W >= 1, size consistency and finite entries.
    void validate() const;
};

// One token per non-overlapping patch in raster order (z, then y, then x).
// token = floor(normalized patch mean * V) clamped to V-1, where
// normalization is (mean - global min) / (global max - global min);
// constant volumes map every patch to token 0.
TokenSequence tokenize_volume(const Volume& volume,
                              std::uint32_t patch_d, std::uint32_t patch_h, std::uint32_t patch_w,
                              std::uint32_t vocab_size);

// Uniform sample of round(ratio*K) masked indices, without replacement.
MaskPattern sample_mask(std::uint32_t k, double ratio, Rng& rng);

// raster -> identity permutation; seeded_permutation -> uniform shuffle.
Path make_path(std::uint32_t k, PathKind kind, Rng& rng);

// Corpus files: one JSON object per line with fields
// id (string), vocab_size (int), tokens (array of int). UTF-8, LF endings.
std::vector<TokenSequence> load_corpus(const std::string& path);
void save_corpus(const std::vector<TokenSequence>& corpus, const std::string& path);

// Volume files: ASCII header line "EMVOL1 D H W" then D*H*W little-endian
// 32-bit floats, raster order (x fastest).
Volume load_volume(const std::string& path);
void save_volume(const Volume& volume, const std::string& path);

// Draws x_0 from `marginal` and x_i ~ transition[x_{i-1}]; used to build
// synthetic corpora with a known entropy rate.
TokenSequence sample_markov_sequence(const std::vector<double>& marginal,
                                     const std::vector<std::vector<double>>& transition,
                                     std::uint32_t k, Rng& rng);

} // namespace tokenlab
