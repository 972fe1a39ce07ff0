#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "isonet/config.hpp"

using namespace isonet;

TEST_CASE("presets encode the recipe defaults") {
    CHECK(preset_names().size() == 8);
    for (const auto& name : preset_names()) {
        const RunConfig c = preset_config(name);
        CHECK(c.preset == name);
        CHECK_NOTHROW(c.net.validate());
        CHECK_NOTHROW(c.train.validate());
        CHECK(c.train.gamma == 1e-4);
        CHECK(c.train.momentum == 0.9);
        CHECK(c.train.weight_decay == 1e-4);
        CHECK(c.train.warmup_epochs == 5);
        CHECK(c.train.batch_size == 64);
    }
    const RunConfig iso = preset_config("isonet-s");
    CHECK(iso.train.lr == 0.02);
    CHECK(iso.net.dropout_p == 0.1);
    CHECK(iso.net.stages == std::vector<StageSpec>{{2, 16}, {2, 32}});
    CHECK(iso.train.ablation == AblationSwitches{true, true, true});

    const RunConfig res = preset_config("r-isonet-deep");
    CHECK(res.train.lr == 0.1);
    CHECK(res.net.dropout_p == 0.4);
    CHECK(res.net.variant == Variant::RISONet);

    const RunConfig deep = preset_config("vanilla-deep");
    CHECK(deep.train.ablation == AblationSwitches{false, false, false});
    CHECK(deep.net.conv_layer_count() == 25);  // stem + 24 trunk convolutions

    CHECK_THROWS_AS(preset_config("isonet"), ConfigError);
    CHECK_THROWS_AS(preset_config("resnet-s"), ConfigError);
    CHECK_THROWS_AS(preset_config("isonet-xl"), ConfigError);
}

TEST_CASE("settings and errors") {
    RunConfig c = preset_config("isonet-s");
    apply_config_text(c, "# comment\n train.lr = 0.5 \n\nnet.stages=1x8,1x16  # trailing\ntrain.decay_epochs=3,6\n"
                         "ablation.srelu=off\ndata.sigma=0.25\ntrain.augment.flip=true\n");
    CHECK(c.train.lr == 0.5);
    CHECK(c.net.stages == std::vector<StageSpec>{{1, 8}, {1, 16}});
    CHECK(c.train.decay_epochs == std::vector<int>{3, 6});
    CHECK_FALSE(c.train.ablation.srelu);
    CHECK(c.data.sigma == 0.25);
    CHECK(c.train.augment.flip);

    try {
        apply_setting(c, "train.learning_rate", "1");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "train.learning_rate");
    }
    CHECK_THROWS_AS(apply_setting(c, "train.lr", "fast"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "train.epochs", "2.5"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "ablation.srelu", "maybe"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "net.variant", "resnet"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "net.stages", "2by16"), ConfigError);
    CHECK_THROWS_AS(apply_setting(c, "data.source", "imagenet"), ConfigError);
    CHECK_THROWS_AS(apply_config_text(c, "train.lr 0.1\n"), ConfigError);

    apply_setting(c, "preset", "r-vanilla-s");
    CHECK(c.net.variant == Variant::RVanilla);
    CHECK(c.train.lr == 0.1);
}

TEST_CASE("canonical config round-trips and hashes stably") {
    RunConfig c = preset_config("r-isonet-s");
    apply_setting(c, "train.lr", "0.0123456789");
    apply_setting(c, "train.seed", "42");
    RunConfig back = preset_config("isonet-deep");
    apply_config_text(back, canonical_config(c));
    CHECK(canonical_config(back) == canonical_config(c));
    CHECK(config_hash(back) == config_hash(c));
    CHECK(hex_hash(config_hash(c)).size() == 16);

    RunConfig other = c;
    apply_setting(other, "train.seed", "43");
    CHECK(config_hash(other) != config_hash(c));
    CHECK(hex_hash(0xabcULL) == "0000000000000abc");
}

TEST_CASE("config files") {
    const auto path = std::filesystem::temp_directory_path() / "isonet_test_config.cfg";
    {
        std::ofstream out(path);
        out << "preset=isonet-s\ntrain.epochs=2\n";
    }
    RunConfig c;
    apply_config_file(c, path);
    CHECK(c.preset == "isonet-s");
    CHECK(c.train.epochs == 2);
    CHECK_THROWS_AS(apply_config_file(c, path.string() + ".missing"), ConfigError);
}

TEST_CASE("load_data") {
    RunConfig c = preset_config("isonet-s");
    apply_config_text(c, "data.n_train=40\ndata.n_eval=12\ndata.classes=3\ndata.channels=2\ndata.size=8\n");
    const auto [tr, ev] = load_data(c);
    CHECK(tr.size() == 40);
    CHECK(ev.size() == 12);
    CHECK(tr.split == "train");
    CHECK(ev.split == "eval");
    CHECK(c.net.input_channels == 2);
    CHECK(c.net.classes == 3);
    // eval continues the example stream after the train split
    CHECK(ev.labels[0] == 40 % 3);

    RunConfig cifar = preset_config("isonet-s");
    apply_setting(cifar, "data.source", "cifar10");
    CHECK_THROWS_AS(load_data(cifar), ConfigError);
    apply_setting(cifar, "data.path", "/nonexistent/isonet");
    CHECK_THROWS_AS(load_data(cifar), ConfigError);
}
