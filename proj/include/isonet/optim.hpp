#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "isonet/data.hpp"
#include "isonet/network.hpp"

namespace isonet {

/// The three isometric ingredients toggled by the ablation grid.
struct AblationSwitches {
    bool srelu = true;       // SReLU with learnable b (init -1); off: ReLU, b fixed at 0
    bool delta_init = true;  // Delta kernels; off: Kaiming Gaussian
    bool ortho_reg = true;   // orthogonality penalty with coefficient gamma; off: gamma = 0
    friend bool operator==(const AblationSwitches&, const AblationSwitches&) = default;
};

struct TrainConfig {
    double lr = 0.02;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double gamma = 1e-4;
    int epochs = 30;
    int warmup_epochs = 5;
    std::vector<int> decay_epochs;
    double decay_factor = 0.1;
    int batch_size = 64;
    std::uint64_t seed = 0;
    AblationSwitches ablation;
    AugmentFlags augment;
    int eval_batch_size = 256;

    void validate() const;
    double effective_gamma() const { return ablation.ortho_reg ? gamma : 0.0; }
};

/// Linear per-step warmup over warmup_epochs, then step decay.
double lr_at(const TrainConfig& cfg, long step, long steps_per_epoch);

/// v <- momentum * v + g + wd * theta (wd on kernels and classifier weight);
/// theta <- theta - lr * v. Non-trainable parameters are left untouched.
void sgd_step(NetworkParams& params, const Gradients& grads, const TrainConfig& cfg, double lr);

/// Adds the orthogonality penalty gradient of every kernel into `grads` and
/// returns the summed penalty.
double add_ortho_penalty(const NetworkParams& params, double gamma, Gradients& grads);

double mean_isometry_residual(const NetworkParams& params);
double accuracy(const NetworkParams& params, const Dataset& ds, int batch_size = 256);
/// Index of the largest logit per row (first one on ties).
std::vector<int> argmax_rows(const Signal& logits);

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double eval_acc = 0.0;
    double mean_iso_residual = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    NetworkParams params;
    std::vector<EpochMetrics> log;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int epoch, long step, double loss, std::vector<EpochMetrics> log);
    int epoch() const { return epoch_; }
    long step() const { return step_; }
    double loss() const { return loss_; }
    const std::vector<EpochMetrics>& log() const { return log_; }

private:
    int epoch_;
    long step_;
    double loss_;
    std::vector<EpochMetrics> log_;
};

/// Network spec and init scheme after applying the ablation switches.
NetworkSpec effective_spec(const NetworkSpec& spec, const AblationSwitches& ablation);
InitScheme effective_init(const AblationSwitches& ablation);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Seeded SGD training. `eval` may be empty (eval_acc is then 0). Throws
/// DivergenceError on a non-finite batch loss, epoch loss or isometry residual.
TrainResult train(const NetworkSpec& spec, const TrainConfig& cfg, const Dataset& train_set, const Dataset& eval_set,
                  const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// finite-difference gradient check

enum class LossKind { CrossEntropy, Squared };

struct GradCheckOptions {
    int n_probes = 10;  // per parameter class
    double h = 1e-5;
    LossKind loss = LossKind::CrossEntropy;
    std::uint64_t seed = 1;
    int batch = 4;
    int height = 8;
    int width = 8;
    /// Random offset added to the initial parameters so the check is not run
    /// at a symmetric point (zero residual scales, exact deltas).
    double perturb = 0.05;
    /// Denominator floor in |a - n| / max(|a|, |n|, floor).
    double abs_floor = 1e-4;
    /// Double one analytic gradient entry before comparing (harness self-test).
    bool inject_fault = false;
    /// Override every SReLU shift (e.g. -1e9 for the linear regime); NaN keeps init.
    double shift_override = std::numeric_limits<double>::quiet_NaN();
};

struct ProbeResult {
    std::string param;
    ParamKind kind = ParamKind::Kernel;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    ProbeResult worst;
    std::vector<ProbeResult> probes;
    int skipped_kinks = 0;
};

GradCheckReport grad_check(const NetworkSpec& spec, InitScheme init, const GradCheckOptions& options);

}  // namespace isonet
