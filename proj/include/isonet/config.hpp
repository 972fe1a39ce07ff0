#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "isonet/data.hpp"
#include "isonet/network.hpp"
#include "isonet/optim.hpp"

namespace isonet {

enum class DataSource { Synth, Cifar10 };

struct DataConfig {
    DataSource source = DataSource::Synth;
    std::filesystem::path path;  // CIFAR-10 directory
    std::uint64_t seed = 7;
    int n_train = 2048;
    int n_eval = 512;
    int classes = 4;
    int size = 16;
    int channels = 3;
    double sigma = 0.5;
    double template_scale = 0.1;
    bool normalize = true;
};

struct RunConfig {
    std::string preset;
    NetworkSpec net;
    TrainConfig train;
    DataConfig data;
};

class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& key, const std::string& message)
        : std::invalid_argument("config key '" + key + "': " + message), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

std::vector<std::string> preset_names();
/// Throws ConfigError (key "preset") for an unknown name.
RunConfig preset_config(std::string_view name);

/// Sets one dotted key (e.g. "train.lr", "net.stages"). Throws ConfigError.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
/// Applies "key=value" lines; '#' starts a comment, blank lines are ignored.
void apply_config_text(RunConfig& cfg, std::string_view text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Every setting as sorted "key=value" lines; feeding it back reproduces the config.
std::string canonical_config(const RunConfig& cfg);
/// 64-bit FNV-1a of canonical_config.
std::uint64_t config_hash(const RunConfig& cfg);
std::string hex_hash(std::uint64_t h);

/// The configured train/eval splits, normalised with train statistics.
/// Also fixes net.input_channels and net.classes to match the data.
std::pair<Dataset, Dataset> load_data(RunConfig& cfg);

}  // namespace isonet
