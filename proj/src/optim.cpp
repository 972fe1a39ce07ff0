#include "isonet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "isonet/isometry.hpp"
#include "isonet/rng.hpp"

namespace isonet {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("train.lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train.momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("train.weight_decay must be >= 0");
    if (gamma < 0.0) throw std::invalid_argument("train.gamma must be >= 0");
    if (epochs < 0) throw std::invalid_argument("train.epochs must be >= 0");
    if (warmup_epochs < 0) throw std::invalid_argument("train.warmup_epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
    for (std::size_t i = 1; i < decay_epochs.size(); ++i) {
        if (decay_epochs[i] <= decay_epochs[i - 1]) throw std::invalid_argument("train.decay_epochs must be strictly increasing");
    }
}

double lr_at(const TrainConfig& cfg, long step, long steps_per_epoch) {
    if (step < 0) throw std::invalid_argument("lr_at: step must be >= 0");
    if (steps_per_epoch < 1) throw std::invalid_argument("lr_at: steps_per_epoch must be >= 1");
    const long warmup_steps = static_cast<long>(cfg.warmup_epochs) * steps_per_epoch;
    if (step < warmup_steps) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    const long epoch = step / steps_per_epoch;
    const auto passed = std::count_if(cfg.decay_epochs.begin(), cfg.decay_epochs.end(), [&](int e) { return epoch >= e; });
    return cfg.lr * std::pow(cfg.decay_factor, static_cast<double>(passed));
}

void sgd_step(NetworkParams& params, const Gradients& grads, const TrainConfig& cfg, double lr) {
    if (grads.size() != params.params.size()) throw std::invalid_argument("sgd_step: gradient count mismatch");
    for (std::size_t i = 0; i < params.params.size(); ++i) {
        Param& p = params.params[i];
        if (!p.trainable) continue;
        const std::vector<double>& g = grads[i];
        std::vector<double>& v = params.velocity[i];
        if (g.size() != p.value.size()) throw std::invalid_argument("sgd_step: gradient size mismatch for " + p.name);
        const double wd = p.decayed() ? cfg.weight_decay : 0.0;
        for (std::size_t e = 0; e < p.value.size(); ++e) {
            v[e] = cfg.momentum * v[e] + g[e] + wd * p.value[e];
            p.value[e] -= lr * v[e];
        }
    }
    ++params.version;
}

double add_ortho_penalty(const NetworkParams& params, double gamma, Gradients& grads) {
    if (gamma == 0.0) return 0.0;
    double total = 0.0;
    for (int idx : params.kernel_indices()) {
        const PenaltyResult pen = ortho_penalty(params.kernel(idx), gamma);
        total += pen.loss;
        auto& g = grads[static_cast<std::size_t>(idx)];
        const auto pg = pen.grad.values();
        for (std::size_t e = 0; e < g.size(); ++e) g[e] += pg[e];
    }
    return total;
}

double mean_isometry_residual(const NetworkParams& params) {
    const auto kernels = params.kernel_indices();
    if (kernels.empty()) return 0.0;
    double sum = 0.0;
    for (int idx : kernels) sum += isometry_residual(params.kernel(idx));
    return sum / static_cast<double>(kernels.size());
}

std::vector<int> argmax_rows(const Signal& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.batch()));
    for (int n = 0; n < logits.batch(); ++n) {
        const double* z = logits.plane(n, 0);
        out[static_cast<std::size_t>(n)] = static_cast<int>(std::max_element(z, z + logits.channels()) - z);
    }
    return out;
}

double accuracy(const NetworkParams& params, const Dataset& ds, int batch_size) {
    if (ds.empty()) return 0.0;
    int correct = 0;
    std::vector<int> idx;
    for (int start = 0; start < ds.size(); start += batch_size) {
        const int stop = std::min(ds.size(), start + batch_size);
        idx.resize(static_cast<std::size_t>(stop - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto pred = argmax_rows(predict(params, ds.gather(idx)));
        for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == ds.labels[static_cast<std::size_t>(idx[i])];
    }
    return static_cast<double>(correct) / ds.size();
}

DivergenceError::DivergenceError(int epoch, long step, double loss, std::vector<EpochMetrics> log)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                         " (loss " + std::to_string(loss) + ")"),
      epoch_(epoch),
      step_(step),
      loss_(loss),
      log_(std::move(log)) {}

NetworkSpec effective_spec(const NetworkSpec& spec, const AblationSwitches& ablation) {
    NetworkSpec out = spec;
    out.activation = ablation.srelu ? Activation::SReLU : Activation::ReLU;
    return out;
}

InitScheme effective_init(const AblationSwitches& ablation) {
    return ablation.delta_init ? InitScheme::Delta : InitScheme::Gaussian;
}

namespace {

// Stream identifiers for derive_seed(cfg.seed, ...).
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kShuffleStream = 3;
constexpr std::uint64_t kAugmentStream = 4;

}  // namespace

TrainResult train(const NetworkSpec& spec, const TrainConfig& cfg, const Dataset& train_set, const Dataset& eval_set,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: training set is empty");
    const NetworkSpec net_spec = effective_spec(spec, cfg.ablation);
    TrainResult result{build(net_spec, effective_init(cfg.ablation), derive_seed(cfg.seed, kInitStream)), {}};
    NetworkParams& params = result.params;
    if (train_set.images.channels() != net_spec.input_channels) {
        throw std::invalid_argument("train: data has " + std::to_string(train_set.images.channels()) +
                                    " channels, network expects " + std::to_string(net_spec.input_channels));
    }

    const double gamma = cfg.effective_gamma();
    const int n = train_set.size();
    const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const bool augmenting = cfg.augment.flip || cfg.augment.crop;
    const std::uint64_t dropout_seed = derive_seed(cfg.seed, kDropoutStream);
    std::vector<int> order(static_cast<std::size_t>(n));
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(derive_seed(cfg.seed, kShuffleStream), static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double loss_sum = 0.0;
        int correct = 0;
        double lr = cfg.lr;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int stop = std::min(n, start + cfg.batch_size);
            const std::span<const int> batch_idx(order.data() + start, static_cast<std::size_t>(stop - start));
            Signal x = train_set.gather(batch_idx);
            if (augmenting) {
                for (int b = 0; b < x.batch(); ++b) {
                    Rng rng(derive_seed(derive_seed(cfg.seed, kAugmentStream),
                                        static_cast<std::uint64_t>(step) * cfg.batch_size + b));
                    Signal one(1, x.channels(), x.height(), x.width(),
                               std::vector<double>(x.plane(b, 0), x.plane(b, 0) + x.channels() * x.plane_size()));
                    const Signal aug = augment(one, rng, cfg.augment);
                    std::copy(aug.values().begin(), aug.values().end(), x.plane(b, 0));
                }
            }
            const std::vector<int> labels = train_set.gather_labels(batch_idx);

            ForwardResult fw = forward(params, x, Mode::Train, dropout_seed, static_cast<std::uint64_t>(step));
            LossResult loss = loss_cross_entropy(fw.logits, labels);
            if (!std::isfinite(loss.loss)) throw DivergenceError(epoch, step, loss.loss, result.log);
            const auto pred = argmax_rows(fw.logits);
            for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
            loss_sum += loss.loss * static_cast<double>(labels.size());

            BackwardResult bw = backward(params, fw.cache, loss.grad);
            fw.cache = {};
            add_ortho_penalty(params, gamma, bw.grads);
            lr = lr_at(cfg, step, steps_per_epoch);
            sgd_step(params, bw.grads, cfg, lr);
            ++step;
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / n;
        m.train_acc = static_cast<double>(correct) / n;
        m.eval_acc = accuracy(params, eval_set, cfg.eval_batch_size);
        m.mean_iso_residual = mean_isometry_residual(params);
        m.lr = lr;
        // Parameters can grow large enough to overflow the epoch statistics
        // while every batch loss stays finite; that is divergence too.
        if (!std::isfinite(m.train_loss) || !std::isfinite(m.mean_iso_residual))
            throw DivergenceError(epoch, step - 1, m.train_loss, result.log);
        result.log.push_back(m);
        if (on_epoch) on_epoch(m);
    }
    return result;
}

// ---------------------------------------------------------------------------
// gradient check

namespace {

double probe_loss(const NetworkParams& net, const Signal& x, LossKind kind, const std::vector<int>& labels,
                  const Signal& target, std::uint64_t dropout_seed, ForwardCache* keep = nullptr) {
    ForwardResult fw = forward(net, x, Mode::Train, dropout_seed, 0);
    const double loss = kind == LossKind::CrossEntropy ? loss_cross_entropy(fw.logits, labels).loss
                                                       : loss_squared(fw.logits, target).loss;
    if (keep) *keep = std::move(fw.cache);
    return loss;
}

// Which side of every activation kink each pre-activation lies on.
std::vector<bool> activation_pattern(const NetworkParams& net, const ForwardCache& cache) {
    std::vector<bool> out;
    auto append = [&](const Signal& pre, int shift_index) {
        const auto& b = net.params[static_cast<std::size_t>(shift_index)].value;
        for (int n = 0; n < pre.batch(); ++n)
            for (int c = 0; c < pre.channels(); ++c) {
                const double* p = pre.plane(n, c);
                for (std::size_t e = 0; e < pre.plane_size(); ++e) out.push_back(p[e] >= b[c]);
            }
    };
    append(cache.stem_pre, net.layout.stem_shift);
    for (std::size_t s = 0; s < net.layout.stages.size(); ++s)
        for (std::size_t b = 0; b < net.layout.stages[s].blocks.size(); ++b) {
            append(cache.stages[s].blocks[b].pre_a, net.layout.stages[s].blocks[b].shift_a);
            append(cache.stages[s].blocks[b].pre_b, net.layout.stages[s].blocks[b].shift_b);
        }
    return out;
}

}  // namespace

GradCheckReport grad_check(const NetworkSpec& spec, InitScheme init, const GradCheckOptions& o) {
    if (o.n_probes < 1) throw std::invalid_argument("grad_check: n_probes must be >= 1");
    if (!(o.h > 0.0)) throw std::invalid_argument("grad_check: h must be > 0");
    NetworkParams net = build(spec, init, derive_seed(o.seed, 1));
    Rng rng(derive_seed(o.seed, 2));
    for (Param& p : net.params) {
        if (p.kind == ParamKind::Shift) {
            if (!std::isnan(o.shift_override)) std::fill(p.value.begin(), p.value.end(), o.shift_override);
            if (!p.trainable) continue;
        }
        for (double& v : p.value) v += o.perturb * rng.normal();
    }

    Signal x(o.batch, spec.input_channels, o.height, o.width);
    for (double& v : x.values()) v = rng.normal();
    std::vector<int> labels(static_cast<std::size_t>(o.batch));
    for (int& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.classes)));
    Signal target(o.batch, spec.classes, 1, 1);
    for (double& v : target.values()) v = rng.normal();
    const std::uint64_t dropout_seed = derive_seed(o.seed, 3);

    ForwardResult fw = forward(net, x, Mode::Train, dropout_seed, 0);
    const LossResult loss = o.loss == LossKind::CrossEntropy ? loss_cross_entropy(fw.logits, labels)
                                                              : loss_squared(fw.logits, target);
    Gradients analytic = backward(net, fw.cache, loss.grad).grads;

    GradCheckReport report;
    const ParamKind kinds[] = {ParamKind::Kernel, ParamKind::Shift, ParamKind::Scale, ParamKind::ClassifierWeight,
                               ParamKind::ClassifierBias};
    bool fault_pending = o.inject_fault;
    for (ParamKind kind : kinds) {
        std::vector<std::pair<std::size_t, std::size_t>> coords;  // (param, entry)
        for (std::size_t i = 0; i < net.params.size(); ++i) {
            if (net.params[i].kind != kind || !net.params[i].trainable) continue;
            for (std::size_t e = 0; e < net.params[i].value.size(); ++e) coords.emplace_back(i, e);
        }
        if (coords.empty()) continue;
        int done = 0, attempts = 0;
        while (done < o.n_probes && attempts < 20 * o.n_probes) {
            ++attempts;
            const auto [pi, e] = coords[rng.below(coords.size())];
            double& theta = net.params[pi].value[e];
            const double saved = theta;
            ForwardCache plus_cache, minus_cache;
            theta = saved + o.h;
            const double lp = probe_loss(net, x, o.loss, labels, target, dropout_seed, &plus_cache);
            theta = saved - o.h;
            const double lm = probe_loss(net, x, o.loss, labels, target, dropout_seed, &minus_cache);
            theta = saved;
            if (activation_pattern(net, plus_cache) != activation_pattern(net, minus_cache)) {
                ++report.skipped_kinks;
                continue;
            }
            ProbeResult pr;
            pr.param = net.params[pi].name;
            pr.kind = kind;
            pr.index = e;
            pr.analytic = analytic[pi][e];
            if (fault_pending) {
                pr.analytic *= 2.0;
                fault_pending = false;
            }
            pr.numeric = (lp - lm) / (2.0 * o.h);
            pr.rel_error = std::abs(pr.analytic - pr.numeric) /
                           std::max({std::abs(pr.analytic), std::abs(pr.numeric), o.abs_floor});
            if (pr.rel_error > report.max_rel_error || report.probes.empty()) {
                report.max_rel_error = std::max(report.max_rel_error, pr.rel_error);
                if (pr.rel_error >= report.max_rel_error) report.worst = pr;
            }
            report.probes.push_back(pr);
            ++done;
        }
    }
    return report;
}

}  // namespace isonet
