#include "tokenlab/token_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "tokenlab/errors.hpp"
#include "tokenlab/io_util.hpp"

namespace tokenlab {

void TokenSequence::validate() const {
    if (tokens.empty()) {
        throw Error(ErrorCode::invalid_argument, "token sequence must have length K >= 1");
    }
    if (vocab_size == 0) {
        throw Error(ErrorCode::invalid_argument, "vocab_size must be positive");
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= vocab_size) {
            throw Error(ErrorCode::vocab_violation,
                        "token " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
                            " outside vocabulary of size " + std::to_string(vocab_size));
        }
    }
}

std::vector<std::uint32_t> MaskPattern::masked_indices() const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < masked.size(); ++i) {
        if (masked[i]) out.push_back(i);
    }
    return out;
}

std::vector<std::uint32_t> MaskPattern::visible_indices() const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < masked.size(); ++i) {
        if (!masked[i]) out.push_back(i);
    }
    return out;
}

void MaskPattern::validate() const {
    const std::size_t m = masked_indices().size();
    if (m == 0 || m == masked.size()) {
        throw Error(ErrorCode::invalid_ratio, "mask must hide at least one and not all positions");
    }
}

void Path::validate() const {
    std::vector<std::uint8_t> seen(order.size(), 0);
    for (std::uint32_t v : order) {
        if (v >= order.size() || seen[v]) {
            throw Error(ErrorCode::invalid_argument, "path is not a permutation of {0..K-1}");
        }
        seen[v] = 1;
    }
}

Path Path::inverse() const {
    Path inv;
    inv.order.resize(order.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) inv.order[order[i]] = i;
    return inv;
}

void Volume::validate() const {
    if (d == 0 || h == 0 || w == 0) {
        throw Error(ErrorCode::empty_input, "volume dims must all be >= 1");
    }
    if (data.size() != static_cast<std::size_t>(d) * h * w) {
        throw Error(ErrorCode::dimension_mismatch, "volume data size does not match dims");
    }
    for (float v : data) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::invalid_argument, "volume contains non-finite intensity");
        }
    }
}

TokenSequence tokenize_volume(const Volume& volume,
                              std::uint32_t patch_d, std::uint32_t patch_h, std::uint32_t patch_w,
                              std::uint32_t vocab_size) {
    volume.validate();
    if (vocab_size < 2) {
        throw Error(ErrorCode::invalid_argument, "vocab_size must be >= 2");
    }
    if (patch_d == 0 || patch_h == 0 || patch_w == 0 ||
        volume.d % patch_d != 0 || volume.h % patch_h != 0 || volume.w % patch_w != 0) {
        throw Error(ErrorCode::dimension_mismatch, "patch dims must divide volume dims exactly");
    }

    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (float v : volume.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double range = static_cast<double>(hi) - static_cast<double>(lo);

    TokenSequence seq;
    seq.vocab_size = vocab_size;
    const std::uint32_t nd = volume.d / patch_d, nh = volume.h / patch_h, nw = volume.w / patch_w;
    seq.tokens.reserve(static_cast<std::size_t>(nd) * nh * nw);
    const double patch_voxels = static_cast<double>(patch_d) * patch_h * patch_w;
    for (std::uint32_t pz = 0; pz < nd; ++pz) {
        for (std::uint32_t py = 0; py < nh; ++py) {
            for (std::uint32_t px = 0; px < nw; ++px) {
                double sum = 0.0;
                for (std::uint32_t z = 0; z < patch_d; ++z)
                    for (std::uint32_t y = 0; y < patch_h; ++y)
                        for (std::uint32_t x = 0; x < patch_w; ++x)
                            sum += volume.at(pz * patch_d + z, py * patch_h + y, px * patch_w + x);
                Token tok = 0;
                if (range > 0.0) {
                    const double norm = (sum / patch_voxels - lo) / range;
                    const double q = std::floor(norm * vocab_size);
                    tok = static_cast<Token>(std::clamp(q, 0.0, static_cast<double>(vocab_size - 1)));
                }
                seq.tokens.push_back(tok);
            }
        }
    }
    return seq;
}

MaskPattern sample_mask(std::uint32_t k, double ratio, Rng& rng) {
    if (k < 2) {
        throw Error(ErrorCode::invalid_argument, "sample_mask requires K >= 2");
    }
    // round-half-up of ratio*K
    const auto m = static_cast<std::uint32_t>(std::floor(ratio * k + 0.5));
    if (!(ratio > 0.0 && ratio < 1.0) || m == 0 || m >= k) {
        throw Error(ErrorCode::invalid_ratio,
                    "masking ratio " + std::to_string(ratio) + " yields mask size " +
                        std::to_string(m) + " for K=" + std::to_string(k));
    }
    MaskPattern mask;
    mask.ratio = ratio;
    mask.masked.assign(k, 0);
    for (std::uint32_t idx : rng.sample_without_replacement(k, m)) mask.masked[idx] = 1;
    return mask;
}

Path make_path(std::uint32_t k, PathKind kind, Rng& rng) {
    if (k == 0) {
        throw Error(ErrorCode::invalid_argument, "make_path requires K >= 1");
    }
    Path path;
    path.order.resize(k);
    for (std::uint32_t i = 0; i < k; ++i) path.order[i] = i;
    if (kind == PathKind::seeded_permutation) rng.shuffle(path.order);
    return path;
}

std::vector<TokenSequence> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open corpus file: " + path);
    }
    std::vector<TokenSequence> corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() ||
            !rec.contains("id") || !rec.contains("vocab_size") || !rec.contains("tokens")) {
            throw Error(ErrorCode::parse_error,
                        path + ":" + std::to_string(lineno) + ": malformed corpus record");
        }
        TokenSequence seq;
        try {
            seq.id = rec.at("id").get<std::string>();
            seq.vocab_size = rec.at("vocab_size").get<std::uint32_t>();
            for (const auto& t : rec.at("tokens")) {
                const auto v = t.get<std::int64_t>();
                if (v < 0) {
                    throw Error(ErrorCode::vocab_violation,
                                path + ":" + std::to_string(lineno) + ": negative token " +
                                    std::to_string(v));
                }
                seq.tokens.push_back(static_cast<Token>(v));
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse_error,
                        path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            seq.validate();
        } catch (const Error& e) {
            if (e.code() == ErrorCode::vocab_violation) {
                throw Error(ErrorCode::vocab_violation,
                            path + ":" + std::to_string(lineno) + ": " + e.what());
            }
            throw Error(ErrorCode::parse_error, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        corpus.push_back(std::move(seq));
    }
    return corpus;
}

void save_corpus(const std::vector<TokenSequence>& corpus, const std::string& path) {
    std::ostringstream out;
    for (const auto& seq : corpus) {
        nlohmann::ordered_json rec;
        rec["id"] = seq.id;
        rec["vocab_size"] = seq.vocab_size;
        rec["tokens"] = seq.tokens;
        out << rec.dump() << '\n';
    }
    write_file_atomic(path, out.str());
}

Volume load_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open volume file: " + path);
    }
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic;
    Volume vol;
    if (!(hs >> magic >> vol.d >> vol.h >> vol.w) || magic != "EMVOL1") {
        throw Error(ErrorCode::parse_error, path + ": bad EMVOL1 header");
    }
    const std::size_t n = static_cast<std::size_t>(vol.d) * vol.h * vol.w;
    vol.data.resize(n);
    in.read(reinterpret_cast<char*>(vol.data.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(float)) {
        throw Error(ErrorCode::parse_error, path + ": truncated voxel data");
    }
    vol.validate();
    return vol;
}

void save_volume(const Volume& volume, const std::string& path) {
    volume.validate();
    std::string payload = "EMVOL1 " + std::to_string(volume.d) + " " + std::to_string(volume.h) +
                          " " + std::to_string(volume.w) + "\n";
    payload.append(reinterpret_cast<const char*>(volume.data.data()),
                   volume.data.size() * sizeof(float));
    write_file_atomic(path, payload);
}

TokenSequence sample_markov_sequence(const std::vector<double>& marginal,
                                     const std::vector<std::vector<double>>& transition,
                                     std::uint32_t k, Rng& rng) {
    const std::size_t v = marginal.size();
    if (k == 0 || v == 0 || transition.size() != v) {
        throw Error(ErrorCode::invalid_argument, "bad markov generator spec");
    }
    for (const auto& row : transition) {
        if (row.size() != v) {
            throw Error(ErrorCode::dimension_mismatch, "transition matrix must be square V x V");
        }
    }
    TokenSequence seq;
    seq.vocab_size = static_cast<std::uint32_t>(v);
    seq.tokens.reserve(k);
    Token cur = static_cast<Token>(rng.categorical(marginal));
    seq.tokens.push_back(cur);
    for (std::uint32_t i = 1; i < k; ++i) {
        cur = static_cast<Token>(rng.categorical(transition[cur]));
        seq.tokens.push_back(cur);
    }
    return seq;
}

} // namespace tokenlab
