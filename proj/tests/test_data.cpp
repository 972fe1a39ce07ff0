#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "isonet/data.hpp"
#include "support.hpp"

using namespace isonet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("isonet_test_data_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("CIFAR-10 loader examples") {
    const fs::path dir = scratch_dir("cifar");
    write_bytes(dir / "empty.bin", {});
    const Dataset empty = load_cifar10_binary({dir / "empty.bin"});
    CHECK(empty.empty());

    std::vector<unsigned char> record(3073, 255);
    record[0] = 7;
    write_bytes(dir / "one.bin", record);
    const Dataset one = load_cifar10_binary({dir / "one.bin"});
    REQUIRE(one.size() == 1);
    CHECK(one.labels[0] == 7);
    CHECK(one.images.channels() == 3);
    CHECK(one.images.height() == 32);
    for (double v : one.images.values()) CHECK(v == 1.0);

    write_bytes(dir / "short.bin", std::vector<unsigned char>(3072, 0));
    CHECK_THROWS_AS(load_cifar10_binary({dir / "short.bin"}), FormatError);

    std::vector<unsigned char> two(2 * 3073, 0);
    two[3073] = 10;
    write_bytes(dir / "badlabel.bin", two);
    try {
        load_cifar10_binary({dir / "badlabel.bin"});
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 3073);
    }
    CHECK_THROWS(load_cifar10_binary({dir / "missing.bin"}));
}

TEST_CASE("CIFAR-10 plane layout") {
    const fs::path dir = scratch_dir("layout");
    std::vector<unsigned char> record(3073);
    record[0] = 2;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) record[1 + c * 1024 + i * 32 + j] = static_cast<unsigned char>((c * 80 + i + j) % 256);
    write_bytes(dir / "r.bin", record);
    const Dataset ds = load_cifar10_binary({dir / "r.bin"});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) CHECK(ds.images.at(0, c, i, j) == ((c * 80 + i + j) % 256) / 255.0);
}

TEST_CASE("CIFAR-10 round trip is bit-exact") {
    const fs::path dir = scratch_dir("roundtrip");
    SynthOptions o;
    o.n = 12;
    o.size = 32;
    o.classes = 10;
    Dataset ds = synth_dataset(o);
    // Quantise to the byte grid so the round trip is exact.
    for (double& v : ds.images.values()) v = std::round(std::clamp(0.5 + 0.2 * v, 0.0, 1.0) * 255.0) / 255.0;
    write_cifar10_binary(dir / "data_batch_1.bin", ds);
    const Dataset back = load_cifar10_binary({dir / "data_batch_1.bin"});
    CHECK(back.labels == ds.labels);
    CHECK(testing::rel_diff(back.images.values(), ds.images.values()) == 0.0);

    const auto files = cifar10_files(dir, true);
    CHECK(files.size() == 5);
    CHECK(files[0].filename() == "data_batch_1.bin");
    CHECK(cifar10_files(dir, false).at(0).filename() == "test_batch.bin");
}

TEST_CASE("synthetic task") {
    SynthOptions o;
    o.n = 64;
    const Dataset a = synth_dataset(o);
    const Dataset b = synth_dataset(o);
    CHECK(a.labels == b.labels);
    CHECK(testing::rel_diff(a.images.values(), b.images.values()) == 0.0);
    CHECK(a.source == kSynthGeneratorVersion);
    for (int i = 0; i < a.size(); ++i) CHECK(a.labels[static_cast<std::size_t>(i)] == i % o.classes);

    SynthOptions other = o;
    other.seed = 8;
    CHECK(testing::rel_diff(synth_dataset(other).images.values(), a.images.values()) > 0.0);

    // Offsetting the stream reproduces the tail of a longer draw.
    SynthOptions tail = o;
    tail.n = 16;
    tail.first_index = 48;
    const Dataset t = synth_dataset(tail);
    std::vector<int> idx(16);
    for (int i = 0; i < 16; ++i) idx[static_cast<std::size_t>(i)] = 48 + i;
    CHECK(testing::rel_diff(t.images.values(), a.gather(idx).values()) == 0.0);

    SynthOptions clean = o;
    clean.sigma = 0.0;
    const Dataset c = synth_dataset(clean);
    const Signal templates = synth_templates(clean);
    for (int i = 0; i < c.size(); ++i) {
        const std::vector<int> one{i};
        const std::vector<int> label{c.labels[static_cast<std::size_t>(i)]};
        CHECK(testing::rel_diff(c.gather(one).values(), templates.values().subspan(
                                    static_cast<std::size_t>(label[0]) * c.gather(one).size(), c.gather(one).size())) ==
              0.0);
    }
    CHECK(nearest_template_accuracy(c, templates) == 1.0);

    SynthOptions bad = o;
    bad.classes = 1;
    CHECK_THROWS_AS(synth_dataset(bad), std::invalid_argument);
}

TEST_CASE("synthetic task skyline at the default noise level") {
    SynthOptions o;
    o.n = 2048;
    const Dataset ds = synth_dataset(o);
    const double acc = nearest_template_accuracy(ds, synth_templates(o));
    MESSAGE("nearest-template accuracy at sigma 0.5, template_scale ", o.template_scale, ": ", acc);
    // nontrivial (below 100%) but well above chance
    CHECK(acc > 0.9);
    CHECK(acc < 1.0);
}

TEST_CASE("normalization") {
    SynthOptions o;
    o.n = 40;
    const Dataset train = synth_dataset(o);
    const Dataset n = normalize(train);
    const int hw = 16 * 16;
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int e = 0; e < n.size(); ++e)
            for (int p = 0; p < hw; ++p) mean += n.images.plane(e, c)[p];
        mean /= n.size() * hw;
        for (int e = 0; e < n.size(); ++e)
            for (int p = 0; p < hw; ++p) var += std::pow(n.images.plane(e, c)[p] - mean, 2);
        var /= n.size() * hw;
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(var - 1.0) < 1e-10);
    }

    // statistics come from the train split only and apply unchanged to eval
    SynthOptions eo = o;
    eo.first_index = 40;
    eo.n = 10;
    const Dataset eval = synth_dataset(eo);
    const Normalizer norm = Normalizer::fit(train);
    Dataset ev = eval;
    norm.apply(ev);
    for (int c = 0; c < 3; ++c)
        CHECK(ev.images.at(3, c, 5, 7) == (eval.images.at(3, c, 5, 7) - norm.mean[c]) / norm.stddev[c]);

    Dataset flat = train;
    for (int e = 0; e < flat.size(); ++e)
        for (int p = 0; p < hw; ++p) flat.images.plane(e, 1)[p] = 2.0;
    const Dataset fn = normalize(flat);
    for (double v : fn.images.values()) CHECK(std::isfinite(v));
    CHECK(fn.images.at(0, 1, 0, 0) == 0.0);
}

TEST_CASE("augmentation") {
    Rng rng(81);
    const Signal x = testing::random_signal(rng, 1, 3, 6, 5);
    CHECK(testing::rel_diff(flip_horizontal(flip_horizontal(x)).values(), x.values()) == 0.0);
    CHECK(flip_horizontal(x).at(0, 1, 2, 0) == x.at(0, 1, 2, 4));
    CHECK(testing::rel_diff(crop_with_offset(x, 4, 0, 0).values(), x.values()) == 0.0);
    const Signal shifted = crop_with_offset(x, 2, 1, -2);
    CHECK(shifted.at(0, 0, 0, 2) == x.at(0, 0, 1, 0));
    CHECK(shifted.at(0, 0, 5, 2) == 0.0);
    CHECK(shifted.at(0, 0, 0, 1) == 0.0);
    CHECK_THROWS_AS(crop_with_offset(x, 2, 3, 0), std::invalid_argument);

    const AugmentFlags off;
    CHECK(testing::rel_diff(augment(x, rng, off).values(), x.values()) == 0.0);

    AugmentFlags flip_only;
    flip_only.flip = true;
    int flipped = 0;
    for (int t = 0; t < 400; ++t) flipped += augment(x, rng, flip_only).at(0, 0, 0, 0) != x.at(0, 0, 0, 0);
    CHECK(flipped > 140);
    CHECK(flipped < 260);

    AugmentFlags both{true, true, 4};
    Rng r1(5), r2(5);
    CHECK(testing::rel_diff(augment(x, r1, both).values(), augment(x, r2, both).values()) == 0.0);
}
