#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace tokenlab {

// 3D segment-label volume, raster order (z outermost, then y, then x).
struct LabelVolume {
    std::uint32_t d = 0, h = 0, w = 0;
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return labels.size(); }
    std::uint32_t at(std::uint32_t z, std::uint32_t y, std::uint32_t x) const {
        return labels[(static_cast<std::size_t>(z) * h + y) * w + x];
    }
    void validate() const; // dims consistent, at least one voxel
};

// Joint voxel counts n_ij between prediction segments (rows) and
// ground-truth segments (columns). Segment ids need not be contiguous.
struct ContingencyTable {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> counts;
    std::map<std::uint32_t, std::uint64_t> pred_sizes; // a_i
    std::map<std::uint32_t, std::uint64_t> gt_sizes;   // b_j
    std::uint64_t total = 0;
};

ContingencyTable contingency(const LabelVolume& pred, const LabelVolume& gt);

struct VoiResult {
    double split = 0.0; // H(pred | gt): over-segmentation error
    double merge = 0.0; // H(gt | pred): under-segmentation error
    double total = 0.0;
};

// Conditional entropies in nats; 0*log(0) contributes nothing.
VoiResult voi(const LabelVolume& pred, const LabelVolume& gt);

// 1 - adjusted Rand index, clamped to [0,1]; a degenerate chance-correction
// denominator (both partitions trivial) counts as perfect agreement.
double arand(const LabelVolume& pred, const LabelVolume& gt);

// "EMSEG1 D H W\n" header then D*H*W little-endian u32 labels, raster order.
LabelVolume load_label_volume(const std::string& path);
void save_label_volume(const LabelVolume& volume, const std::string& path);

} // namespace tokenlab
