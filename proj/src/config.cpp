#include "isonet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace isonet {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError(std::string(key), "cannot parse '" + std::string(value) + "' as a number");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
    if (value == "0" || value == "false" || value == "off" || value == "no") return false;
    throw ConfigError(std::string(key), "expected a boolean, got '" + std::string(value) + "'");
}

std::vector<int> parse_int_list(std::string_view key, std::string_view value) {
    std::vector<int> out;
    while (!value.empty()) {
        const auto comma = value.find(',');
        const std::string_view item = trim(value.substr(0, comma));
        if (!item.empty()) out.push_back(parse_number<int>(key, item));
        value.remove_prefix(comma == std::string_view::npos ? value.size() : comma + 1);
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

template <class F>
auto rethrow_as_config(std::string_view key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string(key), e.what());
    }
}

RunConfig base_preset(Variant variant, std::vector<StageSpec> stages) {
    RunConfig cfg;
    cfg.net.variant = variant;
    cfg.net.stages = std::move(stages);
    cfg.net.kernel_size = 3;
    const bool residual = is_residual(variant);
    cfg.train.lr = residual ? 0.1 : 0.02;
    cfg.net.dropout_p = residual ? 0.4 : 0.1;
    cfg.train.gamma = 1e-4;
    cfg.train.epochs = 30;
    cfg.train.warmup_epochs = 5;
    cfg.train.decay_epochs = {15, 25};
    cfg.train.batch_size = 64;
    const bool iso = is_isometric(variant);
    cfg.train.ablation = {iso, iso, iso};
    return cfg;
}

}  // namespace

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const char* v : {"isonet", "r-isonet", "vanilla", "r-vanilla"})
        for (const char* size : {"-s", "-deep"}) out.push_back(std::string(v) + size);
    return out;
}

RunConfig preset_config(std::string_view name) {
    const auto dash = name.rfind('-');
    if (dash == std::string_view::npos) throw ConfigError("preset", "unknown preset '" + std::string(name) + "'");
    const std::string_view size = name.substr(dash + 1);
    Variant variant;
    try {
        variant = parse_variant(name.substr(0, dash));
    } catch (const std::invalid_argument&) {
        throw ConfigError("preset", "unknown preset '" + std::string(name) + "'");
    }
    std::vector<StageSpec> stages;
    if (size == "s") stages = {{2, 16}, {2, 32}};
    else if (size == "deep") stages = {{12, 16}};  // 24 trunk convolutions at width 16
    else throw ConfigError("preset", "unknown preset '" + std::string(name) + "'");
    RunConfig cfg = base_preset(variant, std::move(stages));
    cfg.preset = std::string(name);
    return cfg;
}

void apply_setting(RunConfig& cfg, std::string_view key_in, std::string_view value_in) {
    const std::string_view key = trim(key_in), value = trim(value_in);
    const std::string k(key);
    NetworkSpec& n = cfg.net;
    TrainConfig& t = cfg.train;
    DataConfig& d = cfg.data;
    auto num_d = [&] { return parse_number<double>(key, value); };
    auto num_i = [&] { return parse_number<int>(key, value); };
    auto num_u = [&] { return parse_number<std::uint64_t>(key, value); };
    auto flag = [&] { return parse_bool(key, value); };

    if (k == "preset") {
        cfg = preset_config(value);
    } else if (k == "net.variant") {
        n.variant = rethrow_as_config(key, [&] { return parse_variant(value); });
    } else if (k == "net.stages") {
        n.stages = rethrow_as_config(key, [&] { return parse_stages(value); });
    } else if (k == "net.kernel_size") {
        n.kernel_size = num_i();
    } else if (k == "net.dropout") {
        n.dropout_p = num_d();
    } else if (k == "net.residual_scale") {
        n.residual_scale = rethrow_as_config(key, [&] { return parse_residual_scale(value); });
    } else if (k == "train.lr") {
        t.lr = num_d();
    } else if (k == "train.momentum") {
        t.momentum = num_d();
    } else if (k == "train.weight_decay") {
        t.weight_decay = num_d();
    } else if (k == "train.gamma") {
        t.gamma = num_d();
    } else if (k == "train.epochs") {
        t.epochs = num_i();
    } else if (k == "train.warmup_epochs") {
        t.warmup_epochs = num_i();
    } else if (k == "train.decay_epochs") {
        t.decay_epochs = parse_int_list(key, value);
    } else if (k == "train.decay_factor") {
        t.decay_factor = num_d();
    } else if (k == "train.batch_size") {
        t.batch_size = num_i();
    } else if (k == "train.eval_batch_size") {
        t.eval_batch_size = num_i();
    } else if (k == "train.seed") {
        t.seed = num_u();
    } else if (k == "train.augment.flip") {
        t.augment.flip = flag();
    } else if (k == "train.augment.crop") {
        t.augment.crop = flag();
    } else if (k == "train.augment.pad") {
        t.augment.pad = num_i();
    } else if (k == "ablation.srelu") {
        t.ablation.srelu = flag();
    } else if (k == "ablation.delta_init") {
        t.ablation.delta_init = flag();
    } else if (k == "ablation.ortho_reg") {
        t.ablation.ortho_reg = flag();
    } else if (k == "data.source") {
        if (value == "synth") d.source = DataSource::Synth;
        else if (value == "cifar10") d.source = DataSource::Cifar10;
        else throw ConfigError(k, "expected synth|cifar10, got '" + std::string(value) + "'");
    } else if (k == "data.path") {
        d.path = std::string(value);
    } else if (k == "data.seed") {
        d.seed = num_u();
    } else if (k == "data.n_train") {
        d.n_train = num_i();
    } else if (k == "data.n_eval") {
        d.n_eval = num_i();
    } else if (k == "data.classes") {
        d.classes = num_i();
    } else if (k == "data.size") {
        d.size = num_i();
    } else if (k == "data.channels") {
        d.channels = num_i();
    } else if (k == "data.sigma") {
        d.sigma = num_d();
    } else if (k == "data.template_scale") {
        d.template_scale = num_d();
    } else if (k == "data.normalize") {
        d.normalize = flag();
    } else {
        throw ConfigError(k, "unknown key");
    }
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
    int line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(std::string(line), "line " + std::to_string(line_no) + " has no '='");
        }
        apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str());
}

std::string canonical_config(const RunConfig& cfg) {
    const NetworkSpec& n = cfg.net;
    const TrainConfig& t = cfg.train;
    const DataConfig& d = cfg.data;
    std::map<std::string, std::string> kv{
        {"net.variant", to_string(n.variant)},
        {"net.stages", format_stages(n.stages)},
        {"net.kernel_size", std::to_string(n.kernel_size)},
        {"net.dropout", fmt(n.dropout_p)},
        {"net.residual_scale", to_string(n.residual_scale)},
        {"train.lr", fmt(t.lr)},
        {"train.momentum", fmt(t.momentum)},
        {"train.weight_decay", fmt(t.weight_decay)},
        {"train.gamma", fmt(t.gamma)},
        {"train.epochs", std::to_string(t.epochs)},
        {"train.warmup_epochs", std::to_string(t.warmup_epochs)},
        {"train.decay_epochs", join(t.decay_epochs)},
        {"train.decay_factor", fmt(t.decay_factor)},
        {"train.batch_size", std::to_string(t.batch_size)},
        {"train.eval_batch_size", std::to_string(t.eval_batch_size)},
        {"train.seed", std::to_string(t.seed)},
        {"train.augment.flip", t.augment.flip ? "1" : "0"},
        {"train.augment.crop", t.augment.crop ? "1" : "0"},
        {"train.augment.pad", std::to_string(t.augment.pad)},
        {"ablation.srelu", t.ablation.srelu ? "1" : "0"},
        {"ablation.delta_init", t.ablation.delta_init ? "1" : "0"},
        {"ablation.ortho_reg", t.ablation.ortho_reg ? "1" : "0"},
        {"data.source", d.source == DataSource::Synth ? "synth" : "cifar10"},
        {"data.path", d.path.string()},
        {"data.seed", std::to_string(d.seed)},
        {"data.n_train", std::to_string(d.n_train)},
        {"data.n_eval", std::to_string(d.n_eval)},
        {"data.classes", std::to_string(d.classes)},
        {"data.size", std::to_string(d.size)},
        {"data.channels", std::to_string(d.channels)},
        {"data.sigma", fmt(d.sigma)},
        {"data.template_scale", fmt(d.template_scale)},
        {"data.normalize", d.normalize ? "1" : "0"},
    };
    std::string out;
    for (const auto& [key, value] : kv) out += key + "=" + value + "\n";
    return out;
}

std::uint64_t config_hash(const RunConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_config(cfg)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex_hash(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::pair<Dataset, Dataset> load_data(RunConfig& cfg) {
    const DataConfig& d = cfg.data;
    Dataset train_set, eval_set;
    if (d.source == DataSource::Synth) {
        SynthOptions o;
        o.seed = d.seed;
        o.classes = d.classes;
        o.size = d.size;
        o.channels = d.channels;
        o.sigma = d.sigma;
        o.template_scale = d.template_scale;
        o.n = d.n_train;
        o.first_index = 0;
        train_set = synth_dataset(o);
        o.n = d.n_eval;
        o.first_index = d.n_train;
        eval_set = synth_dataset(o);
    } else {
        if (d.path.empty()) throw ConfigError("data.path", "required for data.source=cifar10");
        if (!std::filesystem::is_directory(d.path)) throw ConfigError("data.path", "no such directory: " + d.path.string());
        train_set = load_cifar10_binary(cifar10_files(d.path, true));
        eval_set = load_cifar10_binary(cifar10_files(d.path, false));
    }
    train_set.split = "train";
    eval_set.split = "eval";
    if (train_set.empty()) throw ConfigError("data.n_train", "training split is empty");
    if (d.normalize) {
        const Normalizer norm = Normalizer::fit(train_set);
        norm.apply(train_set);
        norm.apply(eval_set);
    }
    cfg.net.input_channels = train_set.images.channels();
    cfg.net.classes = train_set.classes;
    return {std::move(train_set), std::move(eval_set)};
}

}  // namespace isonet
