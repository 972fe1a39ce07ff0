#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "isonet/checkpoint.hpp"
#include "isonet/data.hpp"

namespace isonet::cli {

namespace {

namespace fs = std::filesystem;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string short_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string data_generator(const DataConfig& d) {
    if (d.source == DataSource::Cifar10) return "cifar10-binary";
    return std::string(kSynthGeneratorVersion) + " seed=" + std::to_string(d.seed);
}

void validate(const RunConfig& cfg) {
    try {
        cfg.net.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("net", e.what());
    }
    try {
        cfg.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("train", e.what());
    }
}

std::string epoch_line(const EpochMetrics& m) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "epoch %3d  loss %.4f  train_acc %.4f  eval_acc %.4f  iso %.4f  lr %.4g", m.epoch,
                  m.train_loss, m.train_acc, m.eval_acc, m.mean_iso_residual, m.lr);
    return buf;
}

}  // namespace

std::string run_comments(const RunConfig& cfg) {
    std::string out;
    out += "# isonet metrics\n";
    if (!cfg.preset.empty()) out += "# preset=" + cfg.preset + "\n";
    out += "# config_hash=" + hex_hash(config_hash(cfg)) + "\n";
    out += "# seed=" + std::to_string(cfg.train.seed) + "\n";
    out += "# data_generator=" + data_generator(cfg.data) + "\n";
    out += "# checkpoint_format=" + std::to_string(kCheckpointVersion) + "\n";
    return out;
}

std::string metrics_csv(const RunConfig& cfg, const std::vector<EpochMetrics>& log) {
    std::string out = run_comments(cfg);
    out += kMetricsHeader;
    out += '\n';
    for (const EpochMetrics& m : log) {
        out += std::to_string(m.epoch) + "," + num(m.train_loss) + "," + num(m.train_acc) + "," + num(m.eval_acc) + "," +
               num(m.mean_iso_residual) + "," + num(m.lr) + "\n";
    }
    return out;
}

TrainOutcome run_training(RunConfig& cfg, std::ostream& progress) {
    validate(cfg);
    auto [train_set, eval_set] = load_data(cfg);
    validate(cfg);
    TrainOutcome out;
    try {
        TrainResult r = train(cfg.net, cfg.train, train_set, eval_set, [&](const EpochMetrics& m) {
            progress << epoch_line(m) << std::endl;
        });
        out.log = std::move(r.log);
        out.params = std::move(r.params);
    } catch (const DivergenceError& e) {
        out.diverged = true;
        out.log = e.log();
        out.divergence = "epoch " + std::to_string(e.epoch()) + " step " + std::to_string(e.step()) + " loss " +
                         short_num(e.loss());
    }
    return out;
}

// ---------------------------------------------------------------------------
// train / eval

int cmd_train(RunConfig cfg, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
    TrainOutcome r = run_training(cfg, err);
    std::string csv = metrics_csv(cfg, r.log);
    if (r.diverged) csv += "# status=diverged " + r.divergence + "\n";
    fs::create_directories(out_dir);
    write_file(out_dir / "metrics.csv", csv);
    write_file(out_dir / "config.txt", canonical_config(cfg));
    if (r.diverged) {
        err << "diverged at " << r.divergence << "\n";
        out << "status=diverged\n";
        return kDiverged;
    }
    save_checkpoint(out_dir / "model.ckpt", r.params);
    out << "status=ok epochs=" << r.log.size();
    if (!r.log.empty()) out << " train_acc=" << short_num(r.log.back().train_acc) << " eval_acc=" << short_num(r.log.back().eval_acc);
    out << "\nwrote " << (out_dir / "metrics.csv").string() << " and " << (out_dir / "model.ckpt").string() << "\n";
    return kOk;
}

int cmd_eval(RunConfig cfg, const fs::path& checkpoint, std::ostream& out, std::ostream&) {
    const NetworkParams params = load_checkpoint(checkpoint);
    auto [train_set, eval_set] = load_data(cfg);
    if (train_set.images.channels() != params.spec.input_channels || train_set.classes != params.spec.classes) {
        throw ConfigError("data", "data has " + std::to_string(train_set.images.channels()) + " channels and " +
                                      std::to_string(train_set.classes) + " classes; checkpoint expects " +
                                      std::to_string(params.spec.input_channels) + " and " +
                                      std::to_string(params.spec.classes));
    }
    out << "split,examples,accuracy\n";
    out << "train," << train_set.size() << "," << num(accuracy(params, train_set, cfg.train.eval_batch_size)) << "\n";
    out << "eval," << eval_set.size() << "," << num(accuracy(params, eval_set, cfg.train.eval_batch_size)) << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// ablate

std::string ablation_header() {
    return "srelu,delta_init,ortho_reg,lr,status,epochs,train_loss,train_acc,eval_acc,mean_iso_residual";
}

int cmd_ablate(const RunConfig& base, const AblateOptions& options, std::ostream& out, std::ostream& err) {
    validate(base);
    const std::vector<double> lrs = options.lrs.empty() ? std::vector<double>{base.train.lr} : options.lrs;
    std::string csv = run_comments(base) + ablation_header() + "\n";
    write_file(options.out_csv, csv);
    for (int bits = 0; bits < 8; ++bits) {
        const AblationSwitches sw{(bits & 4) != 0, (bits & 2) != 0, (bits & 1) != 0};
        for (double lr : lrs) {
            RunConfig cfg = base;
            cfg.train.ablation = sw;
            cfg.train.lr = lr;
            err << "cell srelu=" << sw.srelu << " delta_init=" << sw.delta_init << " ortho_reg=" << sw.ortho_reg
                << " lr=" << short_num(lr) << "\n";
            const TrainOutcome r = run_training(cfg, err);
            std::string row = std::to_string(sw.srelu) + "," + std::to_string(sw.delta_init) + "," +
                              std::to_string(sw.ortho_reg) + "," + num(lr) + "," + (r.diverged ? "diverged" : "ok") +
                              "," + std::to_string(r.log.size());
            if (r.log.empty()) {
                row += ",nan,nan,nan,nan";
            } else {
                const EpochMetrics& m = r.log.back();
                row += "," + num(m.train_loss) + "," + num(m.train_acc) + "," + num(m.eval_acc) + "," +
                       num(m.mean_iso_residual);
            }
            csv += row + "\n";
            // Rewritten after every cell so a long grid leaves partial results behind.
            write_file(options.out_csv, csv);
        }
    }
    out << "wrote " << options.out_csv.string() << " (" << 8 * lrs.size() << " cells)\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// diagnose

std::vector<LayerDiagnostics> diagnose_layers(const NetworkParams& params, const SpectrumOptions& options) {
    std::vector<LayerDiagnostics> rows;
    int layer = 0;
    for (int idx : params.kernel_indices()) {
        const Kernel a = params.kernel(idx);
        LayerDiagnostics d;
        d.layer = layer++;
        d.name = params.params[static_cast<std::size_t>(idx)].name;
        d.out_channels = a.out_channels();
        d.in_channels = a.in_channels();
        d.kernel_size = a.size();
        d.residual = isometry_residual(a);
        d.residual_same = isometry_residual_same(a);
        d.spectrum = extreme_singular_values(a, options);
        rows.push_back(d);
    }
    return rows;
}

std::string layers_csv(const std::vector<LayerDiagnostics>& rows) {
    std::string out = "layer,name,out_channels,in_channels,kernel_size,residual,residual_same,sigma_max,sigma_min_lower\n";
    for (const auto& d : rows) {
        out += std::to_string(d.layer) + "," + d.name + "," + std::to_string(d.out_channels) + "," +
               std::to_string(d.in_channels) + "," + std::to_string(d.kernel_size) + "," + num(d.residual) + "," +
               num(d.residual_same) + "," + num(d.spectrum.sigma_max) + "," + num(d.spectrum.sigma_min_lower) + "\n";
    }
    return out;
}

std::string shift_histogram_csv(const NetworkParams& params, double width) {
    if (!(width > 0.0)) throw std::invalid_argument("histogram bin width must be > 0");
    const auto stages = params.shifts_by_stage();
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& stage : stages)
        for (int idx : stage)
            for (double b : params.params[static_cast<std::size_t>(idx)].value)
                if (std::isfinite(b)) {
                    lo = std::min(lo, b);
                    hi = std::max(hi, b);
                }

    std::string out = "stage,bin_lo,bin_hi,count\n";
    long first = 0, last = -1;
    if (lo <= hi) {
        // Coarsen until the shared range fits in a readable number of bins.
        while ((std::floor(hi / width) - std::floor(lo / width)) > 1000) width *= 2.0;
        first = static_cast<long>(std::floor(lo / width));
        last = static_cast<long>(std::floor(hi / width));
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
        std::map<long, long> counts;
        long nonfinite = 0;
        for (int idx : stages[s])
            for (double b : params.params[static_cast<std::size_t>(idx)].value) {
                if (!std::isfinite(b)) {
                    ++nonfinite;
                    continue;
                }
                ++counts[static_cast<long>(std::floor(b / width))];
            }
        for (long bin = first; bin <= last; ++bin) {
            out += std::to_string(s) + "," + num(static_cast<double>(bin) * width) + "," +
                   num(static_cast<double>(bin + 1) * width) + "," + std::to_string(counts[bin]) + "\n";
        }
        if (nonfinite > 0) out += std::to_string(s) + ",nan,nan," + std::to_string(nonfinite) + "\n";
    }
    return out;
}

int cmd_diagnose(const fs::path& checkpoint, const DiagnoseOptions& options, std::ostream& out, std::ostream&) {
    const NetworkParams params = load_checkpoint(checkpoint);
    const auto rows = diagnose_layers(params, options.spectrum);
    fs::create_directories(options.out_dir);
    write_file(options.out_dir / "layers.csv", layers_csv(rows));
    write_file(options.out_dir / "shift_histogram.csv", shift_histogram_csv(params, options.bin_width));
    double worst = 0.0;
    for (const auto& d : rows) worst = std::max(worst, d.residual);
    out << "layers=" << rows.size() << " max_residual=" << short_num(worst) << "\nwrote "
        << (options.out_dir / "layers.csv").string() << " and " << (options.out_dir / "shift_histogram.csv").string()
        << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(const NetworkSpec& spec, InitScheme init, const GradCheckOptions& options, std::ostream& out,
                  std::ostream&) {
    const GradCheckReport r = grad_check(spec, init, options);
    out << "param,kind,index,analytic,numeric,rel_error\n";
    for (const ProbeResult& p : r.probes) {
        out << p.param << "," << to_string(p.kind) << "," << p.index << "," << num(p.analytic) << "," << num(p.numeric)
            << "," << num(p.rel_error) << "\n";
    }
    const bool pass = r.max_rel_error < 1e-5;
    out << "# probes=" << r.probes.size() << " skipped_kinks=" << r.skipped_kinks
        << " max_rel_error=" << short_num(r.max_rel_error) << "\n";
    if (!pass) {
        out << "# FAIL worst coordinate " << r.worst.param << "[" << r.worst.index << "] analytic "
            << short_num(r.worst.analytic) << " numeric " << short_num(r.worst.numeric) << "\n";
    }
    return pass ? kOk : kGradCheckFailed;
}

}  // namespace isonet::cli
