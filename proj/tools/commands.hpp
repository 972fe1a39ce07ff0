#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "isonet/config.hpp"
#include "isonet/isometry.hpp"
#include "isonet/network.hpp"
#include "isonet/optim.hpp"

namespace isonet::cli {

enum ExitCode : int { kOk = 0, kBadInput = 1, kDiverged = 2, kGradCheckFailed = 3 };

inline constexpr const char* kMetricsHeader = "epoch,train_loss,train_acc,eval_acc,mean_iso_residual,lr";

/// Comment lines identifying a run: config hash, seed and generator versions.
std::string run_comments(const RunConfig& cfg);
/// Full metrics CSV: run comments, header, one row per epoch.
std::string metrics_csv(const RunConfig& cfg, const std::vector<EpochMetrics>& log);

struct TrainOutcome {
    bool diverged = false;
    std::string divergence;  // "epoch E step S loss L" when diverged
    std::vector<EpochMetrics> log;
    NetworkParams params;  // empty when diverged
};

/// Loads the configured data and trains; never throws DivergenceError.
TrainOutcome run_training(RunConfig& cfg, std::ostream& progress);

/// Writes metrics.csv, config.txt and (unless diverged) model.ckpt under out_dir.
int cmd_train(RunConfig cfg, const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);

int cmd_eval(RunConfig cfg, const std::filesystem::path& checkpoint, std::ostream& out, std::ostream& err);

struct AblateOptions {
    std::vector<double> lrs;  // empty: the preset lr only
    std::filesystem::path out_csv = "ablation.csv";
};
inline const std::vector<double> kBaselineLrGrid{0.1, 0.02, 0.004};

/// One row per (switch combination, lr), columns ablation_header().
int cmd_ablate(const RunConfig& cfg, const AblateOptions& options, std::ostream& out, std::ostream& err);
std::string ablation_header();

struct DiagnoseOptions {
    std::filesystem::path out_dir = ".";
    SpectrumOptions spectrum;
    double bin_width = 0.125;
};

struct LayerDiagnostics {
    int layer = 0;
    std::string name;
    int out_channels = 0;
    int in_channels = 0;
    int kernel_size = 0;
    double residual = 0.0;
    double residual_same = 0.0;
    SpectrumEstimate spectrum;
};
std::vector<LayerDiagnostics> diagnose_layers(const NetworkParams& params, const SpectrumOptions& options);
std::string layers_csv(const std::vector<LayerDiagnostics>& rows);

/// Binned counts of the SReLU shifts per stage. All stages share bins of
/// `width` aligned to multiples of it, covering [min b, max b].
std::string shift_histogram_csv(const NetworkParams& params, double width);

/// Writes layers.csv and shift_histogram.csv under options.out_dir.
int cmd_diagnose(const std::filesystem::path& checkpoint, const DiagnoseOptions& options, std::ostream& out,
                 std::ostream& err);

/// Exit 0 iff the maximum relative error is below 1e-5, 3 otherwise.
int cmd_gradcheck(const NetworkSpec& spec, InitScheme init, const GradCheckOptions& options, std::ostream& out,
                  std::ostream& err);

}  // namespace isonet::cli
