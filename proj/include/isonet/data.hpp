#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "isonet/rng.hpp"
#include "isonet/tensor.hpp"

namespace isonet {

/// Version tag of the synthetic generator; bumped whenever its output changes.
inline constexpr const char* kSynthGeneratorVersion = "synth-v1";

struct Dataset {
    Signal images;            // N x C x H x W
    std::vector<int> labels;  // one per image, in [0, classes)
    int classes = 0;
    std::string split;
    std::string source;

    int size() const { return static_cast<int>(labels.size()); }
    bool empty() const { return labels.empty(); }
    /// Copy the listed examples into one batch.
    Signal gather(std::span<const int> indices) const;
    std::vector<int> gather_labels(std::span<const int> indices) const;
};

class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary: 3073-byte records, 1 label byte then R, G, B planes of
// 32 x 32 bytes each (row-major). Pixels are mapped to [0, 1] by /255.

inline constexpr int kCifarSide = 32;
inline constexpr int kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;

Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& paths);
/// Writes `ds` in the same layout, quantising pixels with round(255 * v).
/// Requires 3 x 32 x 32 images with labels below 256.
void write_cifar10_binary(const std::filesystem::path& path, const Dataset& ds);
/// data_batch_1..5.bin (train) or test_batch.bin (eval) under `dir`.
std::vector<std::filesystem::path> cifar10_files(const std::filesystem::path& dir, bool train);

// ---------------------------------------------------------------------------
// Synthetic task. Class k has a fixed template: per channel, a coarse
// `grid` x `grid` array of N(0, template_scale^2) values bilinearly upsampled
// to size x size. Example i is template[label] + N(0, sigma^2) per pixel with
// label = i mod classes. Templates draw from Rng(derive_seed(seed, 0)) in
// (class, channel, row, col) order; example i draws its noise from
// Rng(derive_seed(seed, 1 + i)) in (channel, row, col) order.

struct SynthOptions {
    std::uint64_t seed = 7;
    int n = 2048;
    int first_index = 0;  // offset into the example stream (eval splits use n_train)
    int classes = 4;
    int size = 16;
    int channels = 3;
    double sigma = 0.5;
    double template_scale = 0.1;
    int grid = 4;
};

Dataset synth_dataset(const SynthOptions& options);
/// The class templates, C x H x W each, as an N=classes signal.
Signal synth_templates(const SynthOptions& options);
/// Fraction of `ds` whose nearest template (Euclidean) is its label.
double nearest_template_accuracy(const Dataset& ds, const Signal& templates);

// ---------------------------------------------------------------------------
// Normalisation and augmentation.

/// Per-channel standardisation fitted on one split and applied unchanged to others.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> stddev;
    static constexpr double kEpsilon = 1e-8;

    static Normalizer fit(const Dataset& train);
    void apply(Dataset& ds) const;
};

Dataset normalize(const Dataset& ds);

struct AugmentFlags {
    bool flip = false;
    bool crop = false;
    int pad = 4;
};

Signal flip_horizontal(const Signal& example);
/// Zero-pad by `pad` then take the H x W window starting at (pad + di, pad + dj).
Signal crop_with_offset(const Signal& example, int pad, int di, int dj);
/// Random flip (p = 0.5) and random pad-crop, each per flag.
Signal augment(const Signal& example, Rng& rng, const AugmentFlags& flags);

}  // namespace isonet
