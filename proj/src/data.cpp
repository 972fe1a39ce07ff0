#include "isonet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace isonet {

Signal Dataset::gather(std::span<const int> indices) const {
    Signal out(static_cast<int>(indices.size()), images.channels(), images.height(), images.width());
    const std::size_t per = static_cast<std::size_t>(images.channels()) * images.plane_size();
    for (std::size_t b = 0; b < indices.size(); ++b) {
        std::memcpy(out.plane(static_cast<int>(b), 0), images.plane(indices[b], 0), sizeof(double) * per);
    }
    return out;
}

std::vector<int> Dataset::gather_labels(std::span<const int> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(labels[static_cast<std::size_t>(i)]);
    return out;
}

// ---------------------------------------------------------------------------
// CIFAR-10

Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& paths) {
    std::vector<unsigned char> bytes;
    std::vector<int> labels;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path.string());
        std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (file.size() % kCifarRecordBytes != 0) {
            const std::uint64_t complete = file.size() / kCifarRecordBytes * kCifarRecordBytes;
            throw FormatError(path.string() + ": length " + std::to_string(file.size()) +
                                  " is not a multiple of " + std::to_string(kCifarRecordBytes),
                              complete);
        }
        for (std::size_t off = 0; off < file.size(); off += kCifarRecordBytes) {
            if (file[off] > 9) {
                throw FormatError(path.string() + ": label " + std::to_string(file[off]) + " out of range", off);
            }
            labels.push_back(file[off]);
            bytes.insert(bytes.end(), file.begin() + static_cast<long>(off) + 1,
                         file.begin() + static_cast<long>(off) + kCifarRecordBytes);
        }
    }
    Dataset ds;
    ds.classes = 10;
    ds.source = "cifar10";
    ds.labels = std::move(labels);
    if (ds.labels.empty()) return ds;
    ds.images = Signal(ds.size(), 3, kCifarSide, kCifarSide);
    auto dst = ds.images.values();
    for (std::size_t i = 0; i < bytes.size(); ++i) dst[i] = static_cast<double>(bytes[i]) / 255.0;
    return ds;
}

void write_cifar10_binary(const std::filesystem::path& path, const Dataset& ds) {
    if (!ds.empty() && (ds.images.channels() != 3 || ds.images.height() != kCifarSide || ds.images.width() != kCifarSide)) {
        throw std::invalid_argument("write_cifar10_binary: images must be 3 x 32 x 32");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::size_t per = 3 * kCifarSide * kCifarSide;
    std::vector<unsigned char> record(kCifarRecordBytes);
    for (int n = 0; n < ds.size(); ++n) {
        const int label = ds.labels[static_cast<std::size_t>(n)];
        if (label < 0 || label > 255) throw std::invalid_argument("write_cifar10_binary: label does not fit a byte");
        record[0] = static_cast<unsigned char>(label);
        const double* src = ds.images.plane(n, 0);
        for (std::size_t e = 0; e < per; ++e) {
            const double v = std::lround(std::clamp(src[e], 0.0, 1.0) * 255.0);
            record[e + 1] = static_cast<unsigned char>(v);
        }
        out.write(reinterpret_cast<const char*>(record.data()), static_cast<std::streamsize>(record.size()));
    }
}

std::vector<std::filesystem::path> cifar10_files(const std::filesystem::path& dir, bool train) {
    std::vector<std::filesystem::path> out;
    if (train) {
        for (int i = 1; i <= 5; ++i) out.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
        out.push_back(dir / "test_batch.bin");
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic task

Signal synth_templates(const SynthOptions& o) {
    if (o.classes < 2) throw std::invalid_argument("synth_dataset: classes must be >= 2");
    if (o.grid < 2) throw std::invalid_argument("synth_dataset: grid must be >= 2");
    Rng rng(derive_seed(o.seed, 0));
    Signal templates(o.classes, o.channels, o.size, o.size);
    std::vector<double> coarse(static_cast<std::size_t>(o.grid) * o.grid);
    for (int k = 0; k < o.classes; ++k) {
        for (int c = 0; c < o.channels; ++c) {
            for (double& v : coarse) v = rng.normal(0.0, o.template_scale);
            // Bilinear upsampling with grid corners on the image corners.
            const double step = static_cast<double>(o.grid - 1) / std::max(1, o.size - 1);
            for (int i = 0; i < o.size; ++i) {
                const double gi = i * step;
                const int i0 = std::min(static_cast<int>(gi), o.grid - 2);
                const double ti = gi - i0;
                for (int j = 0; j < o.size; ++j) {
                    const double gj = j * step;
                    const int j0 = std::min(static_cast<int>(gj), o.grid - 2);
                    const double tj = gj - j0;
                    auto g = [&](int a, int b) { return coarse[static_cast<std::size_t>(a) * o.grid + b]; };
                    templates.at(k, c, i, j) = (1 - ti) * ((1 - tj) * g(i0, j0) + tj * g(i0, j0 + 1)) +
                                               ti * ((1 - tj) * g(i0 + 1, j0) + tj * g(i0 + 1, j0 + 1));
                }
            }
        }
    }
    return templates;
}

Dataset synth_dataset(const SynthOptions& o) {
    if (o.n < 0) throw std::invalid_argument("synth_dataset: n must be >= 0");
    const Signal templates = synth_templates(o);
    Dataset ds;
    ds.classes = o.classes;
    ds.source = kSynthGeneratorVersion;
    if (o.n == 0) return ds;
    ds.images = Signal(o.n, o.channels, o.size, o.size);
    ds.labels.resize(static_cast<std::size_t>(o.n));
    const std::size_t per = static_cast<std::size_t>(o.channels) * o.size * o.size;
    for (int e = 0; e < o.n; ++e) {
        const int index = o.first_index + e;
        const int label = index % o.classes;
        ds.labels[static_cast<std::size_t>(e)] = label;
        Rng rng(derive_seed(o.seed, 1 + static_cast<std::uint64_t>(index)));
        const double* t = templates.plane(label, 0);
        double* dst = ds.images.plane(e, 0);
        for (std::size_t p = 0; p < per; ++p) dst[p] = t[p] + (o.sigma > 0.0 ? rng.normal(0.0, o.sigma) : 0.0);
    }
    return ds;
}

double nearest_template_accuracy(const Dataset& ds, const Signal& templates) {
    if (ds.empty()) return 0.0;
    const std::size_t per = static_cast<std::size_t>(templates.channels()) * templates.plane_size();
    int correct = 0;
    for (int n = 0; n < ds.size(); ++n) {
        const double* x = ds.images.plane(n, 0);
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int k = 0; k < templates.batch(); ++k) {
            const double* t = templates.plane(k, 0);
            double d = 0.0;
            for (std::size_t p = 0; p < per; ++p) d += (x[p] - t[p]) * (x[p] - t[p]);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        correct += best == ds.labels[static_cast<std::size_t>(n)];
    }
    return static_cast<double>(correct) / ds.size();
}

// ---------------------------------------------------------------------------
// normalisation

Normalizer Normalizer::fit(const Dataset& train) {
    Normalizer out;
    if (train.empty()) throw std::invalid_argument("Normalizer::fit: empty dataset");
    const int channels = train.images.channels();
    const long hw = static_cast<long>(train.images.plane_size());
    const double count = static_cast<double>(train.size()) * hw;
    out.mean.assign(channels, 0.0);
    out.stddev.assign(channels, 0.0);
    for (int c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (int n = 0; n < train.size(); ++n) {
            const double* p = train.images.plane(n, c);
            for (long e = 0; e < hw; ++e) sum += p[e];
        }
        const double mean = sum / count;
        double sq = 0.0;
        for (int n = 0; n < train.size(); ++n) {
            const double* p = train.images.plane(n, c);
            for (long e = 0; e < hw; ++e) sq += (p[e] - mean) * (p[e] - mean);
        }
        out.mean[c] = mean;
        out.stddev[c] = std::sqrt(sq / count);
    }
    return out;
}

void Normalizer::apply(Dataset& ds) const {
    if (ds.empty()) return;
    if (static_cast<int>(mean.size()) != ds.images.channels()) {
        throw std::invalid_argument("Normalizer::apply: channel count mismatch");
    }
    const long hw = static_cast<long>(ds.images.plane_size());
    for (int c = 0; c < ds.images.channels(); ++c) {
        const double denom = stddev[c] < kEpsilon ? stddev[c] + kEpsilon : stddev[c];
        for (int n = 0; n < ds.size(); ++n) {
            double* p = ds.images.plane(n, c);
            for (long e = 0; e < hw; ++e) p[e] = (p[e] - mean[c]) / denom;
        }
    }
}

Dataset normalize(const Dataset& ds) {
    Dataset out = ds;
    Normalizer::fit(ds).apply(out);
    return out;
}

// ---------------------------------------------------------------------------
// augmentation

Signal flip_horizontal(const Signal& example) {
    Signal out(example.batch(), example.channels(), example.height(), example.width());
    for (int n = 0; n < example.batch(); ++n)
        for (int c = 0; c < example.channels(); ++c)
            for (int i = 0; i < example.height(); ++i)
                for (int j = 0; j < example.width(); ++j)
                    out.at(n, c, i, j) = example.at(n, c, i, example.width() - 1 - j);
    return out;
}

Signal crop_with_offset(const Signal& example, int pad, int di, int dj) {
    if (pad < 0 || di < -pad || di > pad || dj < -pad || dj > pad) {
        throw std::invalid_argument("crop_with_offset: offset outside padding");
    }
    Signal out(example.batch(), example.channels(), example.height(), example.width());
    for (int n = 0; n < example.batch(); ++n)
        for (int c = 0; c < example.channels(); ++c)
            for (int i = 0; i < example.height(); ++i)
                for (int j = 0; j < example.width(); ++j)
                    out.at(n, c, i, j) = example.sample_extended(n, c, i + di, j + dj);
    return out;
}

Signal augment(const Signal& example, Rng& rng, const AugmentFlags& flags) {
    Signal out = example;
    if (flags.flip && rng.uniform() < 0.5) out = flip_horizontal(out);
    if (flags.crop && flags.pad > 0) {
        const int span = 2 * flags.pad + 1;
        const int di = static_cast<int>(rng.below(span)) - flags.pad;
        const int dj = static_cast<int>(rng.below(span)) - flags.pad;
        out = crop_with_offset(out, flags.pad, di, dj);
    }
    return out;
}

}  // namespace isonet
