#include "tokenlab/seg_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tokenlab/errors.hpp"
#include "tokenlab/io_util.hpp"

namespace tokenlab {

void LabelVolume::validate() const {
    if (d == 0 || h == 0 || w == 0) {
        throw Error(ErrorCode::dimension_mismatch, "label volume has a zero dimension");
    }
    const std::size_t expect = static_cast<std::size_t>(d) * h * w;
    if (labels.size() != expect) {
        throw Error(ErrorCode::dimension_mismatch,
                    "label volume holds " + std::to_string(labels.size()) + " voxels, dims say " +
                        std::to_string(expect));
    }
}

ContingencyTable contingency(const LabelVolume& pred, const LabelVolume& gt) {
    pred.validate();
    gt.validate();
    if (pred.d != gt.d || pred.h != gt.h || pred.w != gt.w) {
        throw Error(ErrorCode::dimension_mismatch, "prediction and ground truth dims differ");
    }
    ContingencyTable table;
    table.total = pred.size();
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        ++table.counts[{pred.labels[i], gt.labels[i]}];
        ++table.pred_sizes[pred.labels[i]];
        ++table.gt_sizes[gt.labels[i]];
    }
    return table;
}

VoiResult voi(const LabelVolume& pred, const LabelVolume& gt) {
    const ContingencyTable table = contingency(pred, gt);
    const double n = static_cast<double>(table.total);
    VoiResult result;
    for (const auto& [key, count] : table.counts) {
        const double nij = static_cast<double>(count);
        const double ai = static_cast<double>(table.pred_sizes.at(key.first));
        const double bj = static_cast<double>(table.gt_sizes.at(key.second));
        result.split += (nij / n) * std::log(bj / nij); // H(pred|gt)
        result.merge += (nij / n) * std::log(ai / nij); // H(gt|pred)
    }
    // Guard against -0.0 and tiny negative rounding residue.
    result.split = std::max(result.split, 0.0);
    result.merge = std::max(result.merge, 0.0);
    result.total = result.split + result.merge;
    return result;
}

double arand(const LabelVolume& pred, const LabelVolume& gt) {
    const ContingencyTable table = contingency(pred, gt);
    if (table.total < 2) {
        throw Error(ErrorCode::invalid_argument, "arand needs at least 2 voxels");
    }
    auto pairs = [](std::uint64_t n) {
        return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    };
    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, count] : table.counts) sum_ij += pairs(count);
    for (const auto& [label, count] : table.pred_sizes) sum_a += pairs(count);
    for (const auto& [label, count] : table.gt_sizes) sum_b += pairs(count);

    const double total_pairs = pairs(table.total);
    const double expected = sum_a * sum_b / total_pairs;
    const double max_index = 0.5 * (sum_a + sum_b);
    const double denom = max_index - expected;
    if (denom == 0.0) {
        // Both partitions are all-singletons or single-segment: the index is
        // undefined, but the partitions can only agree. Treat as ARI = 1.
        return 0.0;
    }
    const double ari = (sum_ij - expected) / denom;
    return std::clamp(1.0 - ari, 0.0, 1.0);
}

LabelVolume load_label_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open label volume file: " + path);
    }
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic;
    LabelVolume vol;
    if (!(hs >> magic >> vol.d >> vol.h >> vol.w) || magic != "EMSEG1") {
        throw Error(ErrorCode::parse_error, path + ": bad EMSEG1 header");
    }
    const std::size_t n = static_cast<std::size_t>(vol.d) * vol.h * vol.w;
    vol.labels.resize(n);
    in.read(reinterpret_cast<char*>(vol.labels.data()),
            static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(std::uint32_t)) {
        throw Error(ErrorCode::parse_error, path + ": truncated label data");
    }
    vol.validate();
    return vol;
}

void save_label_volume(const LabelVolume& volume, const std::string& path) {
    volume.validate();
    std::string payload = "EMSEG1 " + std::to_string(volume.d) + " " + std::to_string(volume.h) +
                          " " + std::to_string(volume.w) + "\n";
    payload.append(reinterpret_cast<const char*>(volume.labels.data()),
                   volume.labels.size() * sizeof(std::uint32_t));
    write_file_atomic(path, payload);
}

} // namespace tokenlab
