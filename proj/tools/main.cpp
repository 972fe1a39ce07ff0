#include <malloc.h>

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "commands.hpp"
#include "isonet/data.hpp"

namespace {

using namespace isonet;

struct ConfigArgs {
    std::string preset = "isonet-s";
    std::string config_file;
    std::vector<std::string> settings;
    std::string data;
    std::string data_path;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
};

void add_config_options(CLI::App* cmd, ConfigArgs& a) {
    cmd->add_option("--preset", a.preset, "Named configuration")->capture_default_str();
    cmd->add_option("--config", a.config_file, "File of key=value lines applied after the preset");
    cmd->add_option("--set", a.settings, "Override one key, e.g. --set train.gamma=0 (repeatable)");
    cmd->add_option("--data", a.data, "Data source")->check(CLI::IsMember({"synth", "cifar10"}));
    cmd->add_option("--data-path", a.data_path, "CIFAR-10 binary directory");
    cmd->add_option("--epochs", a.epochs, "Training epochs");
    cmd->add_option("--seed", a.seed, "Training seed");
    cmd->add_option("--lr", a.lr, "Peak learning rate");
}

RunConfig resolve(const ConfigArgs& a) {
    RunConfig cfg = preset_config(a.preset);
    if (!a.config_file.empty()) apply_config_file(cfg, a.config_file);
    for (const std::string& kv : a.settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError(kv, "expected key=value");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!a.data.empty()) apply_setting(cfg, "data.source", a.data);
    if (!a.data_path.empty()) apply_setting(cfg, "data.path", a.data_path);
    if (a.epochs) apply_setting(cfg, "train.epochs", std::to_string(*a.epochs));
    if (a.seed) apply_setting(cfg, "train.seed", std::to_string(*a.seed));
    if (a.lr) cfg.train.lr = *a.lr;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    // Per-batch buffers are large; keep them out of mmap so they are reused.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    CLI::App app{"Isometric convolutional networks: train, evaluate and inspect"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "isonet 1.0");

    ConfigArgs train_args, eval_args, ablate_args, grad_args;
    std::string out_dir = "run";
    std::string checkpoint;
    std::string ablate_out = "ablation.csv";
    std::vector<double> lrs;
    bool baseline_grid = false;
    std::string diag_out = ".";
    double bin_width = 0.125;
    int spectrum_iters = 200;
    int probes = 10;
    std::optional<double> h;
    std::string loss = "ce";
    bool inject_fault = false;
    bool linear = false;

    auto* train_cmd = app.add_subcommand("train", "Train a network and write metrics.csv and model.ckpt");
    add_config_options(train_cmd, train_args);
    train_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();

    auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a checkpoint on the configured data");
    add_config_options(eval_cmd, eval_args);
    eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

    auto* ablate_cmd = app.add_subcommand("ablate", "Train all eight switch combinations");
    add_config_options(ablate_cmd, ablate_args);
    ablate_cmd->add_option("--lrs", lrs, "Learning rates per cell (default: the preset lr)")->delimiter(',');
    ablate_cmd->add_flag("--lr-grid", baseline_grid, "Use the baseline grid 0.1,0.02,0.004");
    ablate_cmd->add_option("--out", ablate_out, "Output CSV")->capture_default_str();

    auto* diag_cmd = app.add_subcommand("diagnose", "Per-layer isometry residuals, spectra and shift histogram");
    diag_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    diag_cmd->add_option("--out", diag_out, "Output directory")->capture_default_str();
    diag_cmd->add_option("--bin-width", bin_width, "Histogram bin width")->capture_default_str();
    diag_cmd->add_option("--iterations", spectrum_iters, "Power iterations per layer")->capture_default_str();

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradients");
    // "--h" names the step; the subcommand keeps only the long help flag.
    grad_cmd->set_help_flag("--help", "Print this help message and exit");
    add_config_options(grad_cmd, grad_args);
    grad_cmd->add_option("--probes", probes, "Probes per parameter class")->capture_default_str();
    grad_cmd->add_option("--h", h, "Central-difference step (default 1e-5, 0.1 with --linear)");
    grad_cmd->add_option("--loss", loss, "Loss")->check(CLI::IsMember({"ce", "squared"}))->capture_default_str();
    grad_cmd->add_flag("--inject-fault", inject_fault, "Corrupt one analytic entry (self-test)");
    grad_cmd->add_flag("--linear", linear, "Set every shift to -1e9 so all activations are linear");

    app.footer("Presets: " + CLI::detail::join(preset_names(), ", "));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kBadInput;
    }

    try {
        if (*train_cmd) return cli::cmd_train(resolve(train_args), out_dir, std::cout, std::cerr);
        if (*eval_cmd) return cli::cmd_eval(resolve(eval_args), checkpoint, std::cout, std::cerr);
        if (*ablate_cmd) {
            cli::AblateOptions o;
            o.lrs = baseline_grid ? cli::kBaselineLrGrid : lrs;
            o.out_csv = ablate_out;
            return cli::cmd_ablate(resolve(ablate_args), o, std::cout, std::cerr);
        }
        if (*diag_cmd) {
            cli::DiagnoseOptions o;
            o.out_dir = diag_out;
            o.bin_width = bin_width;
            o.spectrum.iterations = spectrum_iters;
            return cli::cmd_diagnose(checkpoint, o, std::cout, std::cerr);
        }
        if (*grad_cmd) {
            const RunConfig cfg = resolve(grad_args);
            NetworkSpec spec = effective_spec(cfg.net, cfg.train.ablation);
            spec.input_channels = cfg.data.channels;
            spec.classes = cfg.data.classes;
            GradCheckOptions o;
            o.n_probes = probes;
            o.loss = loss == "squared" ? LossKind::Squared : LossKind::CrossEntropy;
            o.inject_fault = inject_fault;
            o.seed = cfg.train.seed + 1;
            if (linear) o.shift_override = -1e9;
            o.h = h ? *h : (linear ? 0.1 : 1e-5);
            return cli::cmd_gradcheck(spec, effective_init(cfg.train.ablation), o, std::cout, std::cerr);
        }
    } catch (const std::exception& e) {
        // ConfigError, FormatError and invalid arguments all land here.
        std::cerr << "error: " << e.what() << "\n";
        return cli::kBadInput;
    }
    return cli::kBadInput;
}
