// Acceptance suite: one PASS/FAIL line per criterion.

#include <malloc.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "isonet/convops.hpp"
#include "isonet/isometry.hpp"
#include "support.hpp"

using namespace isonet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. adjoint identity

Outcome adjoint_identity() {
    Rng rng(1001);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(8)), c = 1 + static_cast<int>(rng.below(8));
        const int k = 1 + 2 * static_cast<int>(rng.below(3));
        const int h = 1 + static_cast<int>(rng.below(12)), w = 1 + static_cast<int>(rng.below(12));
        const Kernel a = testing::random_kernel(rng, m, c, k);
        const Signal x = testing::random_signal(rng, 1, c, h, w);
        const Signal y = testing::random_signal(rng, 1, m, h, w);
        const Signal ax = apply_operator(a, x);
        const Signal aty = apply_adjoint(a, y);
        const double lhs = testing::dot(ax.values(), y.values());
        const double rhs = testing::dot(x.values(), aty.values());
        const double scale = frobenius_norm(ax) * frobenius_norm(y) + frobenius_norm(x) * frobenius_norm(aty);
        worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
    return {worst < 1e-10, "max relative gap " + fmt("%.3g", worst) + " over 100 triples"};
}

// ---------------------------------------------------------------------------
// 2. orthogonality conditions

// Signal that vanishes within `margin` of every border.
Signal interior_signal(Rng& rng, int c, int h, int w, int margin) {
    Signal s(1, c, h, w);
    for (int ch = 0; ch < c; ++ch)
        for (int i = margin; i < h - margin; ++i)
            for (int j = margin; j < w - margin; ++j) s.at(0, ch, i, j) = rng.normal();
    return s;
}

// Largest relative change of inner products <Ax, Ay> vs <x, y> over a few pairs.
double preservation_error(const Kernel& a, Rng& rng) {
    double worst = 0.0;
    const int h = 9, w = 11, margin = a.radius();
    for (int t = 0; t < 3; ++t) {
        const Signal x = interior_signal(rng, a.in_channels(), h, w, margin);
        const Signal y = interior_signal(rng, a.in_channels(), h, w, margin);
        const Signal ax = reference::apply_operator(a, x), ay = reference::apply_operator(a, y);
        const double scale = frobenius_norm(x) * frobenius_norm(y);
        worst = std::max(worst, std::abs(testing::dot(ax.values(), ay.values()) - testing::dot(x.values(), y.values())) / scale);
        const double nx = frobenius_norm(x);
        worst = std::max(worst, std::abs(testing::dot(ax.values(), ax.values()) - nx * nx) / (nx * nx));
    }
    return worst;
}

std::vector<Kernel> orthogonal_kernels(Rng& rng) {
    std::vector<Kernel> out;
    // deltas, including the M > C embeddings
    for (auto [m, c, k] : std::vector<std::array<int, 3>>{{1, 1, 1}, {3, 3, 3}, {4, 4, 5}, {6, 3, 3}, {8, 8, 3}, {5, 2, 1}, {7, 7, 5}})
        out.push_back(delta_kernel(m, c, k));
    // 1 x 1 rotations from the QR factor of a Gaussian matrix
    for (int n : {2, 3, 4, 5, 6, 7, 8}) {
        Eigen::MatrixXd g(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
        Kernel a(n, n, 1);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a.at(i, j, 0, 0) = q(i, j);
        out.push_back(a);
    }
    // signed channel permutations composed with per-channel spatial shifts
    for (auto [m, c, k] : std::vector<std::array<int, 3>>{{3, 3, 3}, {4, 4, 3}, {5, 5, 5}, {6, 4, 3}, {8, 8, 5}, {8, 5, 3}}) {
        std::vector<int> perm(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) perm[static_cast<std::size_t>(i)] = i;
        for (int i = m; i > 1; --i) std::swap(perm[static_cast<std::size_t>(i - 1)], perm[rng.below(static_cast<std::uint64_t>(i))]);
        Kernel a(m, c, k);
        const int r = k / 2;
        for (int ch = 0; ch < c; ++ch) {
            const int p = static_cast<int>(rng.below(static_cast<std::uint64_t>(k))) - r;
            const int q = static_cast<int>(rng.below(static_cast<std::uint64_t>(k))) - r;
            a.at(perm[static_cast<std::size_t>(ch)], ch, p, q) = rng.uniform() < 0.5 ? -1.0 : 1.0;
        }
        out.push_back(a);
    }
    return out;
}

Outcome orthogonality_conditions() {
    Rng rng(1002);
    const std::vector<Kernel> kernels = orthogonal_kernels(rng);
    double worst_residual = 0.0, worst_preservation = 0.0;
    double min_perturbed_residual = INFINITY, min_perturbed_violation = INFINITY;
    for (const Kernel& a : kernels) {
        worst_residual = std::max(worst_residual, isometry_residual(a));
        worst_preservation = std::max(worst_preservation, preservation_error(a, rng));
        Kernel b = a;
        for (double& v : b.values()) v += rng.normal(0.0, 0.05);
        min_perturbed_residual = std::min(min_perturbed_residual, isometry_residual(b));
        min_perturbed_violation = std::min(min_perturbed_violation, preservation_error(b, rng));
    }
    const bool pass = kernels.size() == 20 && worst_residual < 1e-12 && worst_preservation < 1e-10 &&
                      min_perturbed_residual > 1e-3 && min_perturbed_violation > 1e-6;
    return {pass, std::to_string(kernels.size()) + " kernels: residual " + fmt("%.3g", worst_residual) +
                      ", preservation " + fmt("%.3g", worst_preservation) + "; perturbed: min residual " +
                      fmt("%.3g", min_perturbed_residual) + ", min violation " + fmt("%.3g", min_perturbed_violation)};
}

// ---------------------------------------------------------------------------
// 3. optimized vs naive

Outcome oracle_equivalence() {
    Rng rng(1003);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(9)), c = 1 + static_cast<int>(rng.below(9));
        const int k = 1 + 2 * static_cast<int>(rng.below(3));
        const int n = 1 + static_cast<int>(rng.below(3));
        const int h = 1 + static_cast<int>(rng.below(14)), w = 1 + static_cast<int>(rng.below(14));
        const Kernel a = testing::random_kernel(rng, m, c, k);
        const Signal x = testing::random_signal(rng, n, c, h, w);
        const Signal y = testing::random_signal(rng, n, m, h, w);
        worst = std::max(worst, testing::rel_diff(apply_operator(a, x).values(), reference::apply_operator(a, x).values()));
        worst = std::max(worst, testing::rel_diff(apply_adjoint(a, y).values(), reference::apply_adjoint(a, y).values()));
        worst = std::max(worst, testing::rel_diff(conv_weight_gradient(x, y, k).values(),
                                                  reference::conv_weight_gradient(x, y, k).values()));
    }
    return {worst < 1e-12, "operator, adjoint and weight gradient: max rel err " + fmt("%.3g", worst) + " over 50 cases"};
}

// ---------------------------------------------------------------------------
// 4. whole-network gradients

Outcome gradient_completeness() {
    double worst = 0.0;
    std::size_t probes = 0;
    bool enough = true;
    std::string where;
    for (Variant v : {Variant::ISONet, Variant::RISONet})
        for (LossKind loss : {LossKind::CrossEntropy, LossKind::Squared}) {
            NetworkSpec spec;
            spec.variant = v;
            spec.stages = {{1, 4}, {2, 6}};  // 3 blocks, one transition
            spec.input_channels = 3;
            spec.classes = 4;
            GradCheckOptions o;
            o.n_probes = 10;
            o.loss = loss;
            const GradCheckReport r = grad_check(spec, InitScheme::Delta, o);
            std::map<ParamKind, int> per_kind;
            for (const ProbeResult& p : r.probes) ++per_kind[p.kind];
            for (const auto& [kind, count] : per_kind) enough = enough && count >= 10;
            probes += r.probes.size();
            if (r.max_rel_error >= worst) {
                worst = r.max_rel_error;
                where = to_string(v) + "/" + r.worst.param;
            }
        }
    return {enough && worst < 1e-5,
            std::to_string(probes) + " probes, max rel err " + fmt("%.3g", worst) + " (" + where + ")"};
}

// ---------------------------------------------------------------------------
// 5. penalty contraction

Outcome regularizer_contraction() {
    Rng rng(1005);
    Kernel a = testing::random_kernel(rng, 8, 8, 3, 0.1);
    const double before = isometry_residual_same(a);
    for (int step = 0; step < 2000; ++step) {
        const PenaltyResult r = ortho_penalty(a, 1.0);
        for (std::size_t i = 0; i < a.count(); ++i) a.values()[i] -= 0.1 * r.grad.values()[i];
    }
    const double after = isometry_residual_same(a);
    return {after < 1e-3, "Same-support residual " + fmt("%.3g", before) + " -> " + fmt("%.3g", after)};
}

// ---------------------------------------------------------------------------
// 6. identity at init

Outcome identity_at_init() {
    NetworkSpec spec;
    spec.variant = Variant::RISONet;
    spec.stages = {{4, 8}};
    spec.input_channels = 3;
    spec.classes = 4;
    const NetworkParams net = build(spec, InitScheme::Delta, 6);
    Rng rng(1006);
    const Signal x = testing::random_signal(rng, 4, 3, 12, 12);
    const ForwardResult r = forward(net, x, Mode::Eval);
    std::size_t mismatched = 0;
    const auto a = r.cache.trunk_out.values(), b = r.cache.stem_out.values();
    for (std::size_t i = 0; i < a.size(); ++i) mismatched += a[i] != b[i];
    return {a.size() == b.size() && mismatched == 0,
            std::to_string(mismatched) + " of " + std::to_string(a.size()) + " trunk outputs differ from the stem output"};
}

// ---------------------------------------------------------------------------
// 7 - 10: training cells on the deep synthetic task

struct Cell {
    std::string label;
    AblationSwitches switches;
    double lr = 0.0;
    double gamma = 1e-4;
};

struct CellResult {
    cli::TrainOutcome outcome;
    std::string csv;
    double seconds = 0.0;
    double train_acc() const { return outcome.diverged || outcome.log.empty() ? 0.0 : outcome.log.back().train_acc; }
    double eval_acc() const { return outcome.diverged || outcome.log.empty() ? 0.0 : outcome.log.back().eval_acc; }
};

class Cells {
public:
    explicit Cells(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_ / "cells"); }

    const CellResult& get(const Cell& cell) {
        auto it = done_.find(cell.label);
        if (it != done_.end()) return it->second;
        return done_[cell.label] = run(cell);
    }

    CellResult run(const Cell& cell) {
        RunConfig cfg = preset_config("isonet-deep");
        cfg.train.ablation = cell.switches;
        cfg.train.lr = cell.lr;
        cfg.train.gamma = cell.gamma;
        std::ofstream progress(dir_ / "cells" / (cell.label + ".log"));
        std::cerr << "  training " << cell.label << " ..." << std::flush;
        const auto t0 = std::chrono::steady_clock::now();
        CellResult r;
        r.outcome = cli::run_training(cfg, progress);
        r.seconds = seconds_since(t0);
        r.csv = cli::metrics_csv(cfg, r.outcome.log);
        if (r.outcome.diverged) r.csv += "# status=diverged " + r.outcome.divergence + "\n";
        std::ofstream(dir_ / "cells" / (cell.label + ".csv")) << r.csv;
        std::cerr << (r.outcome.diverged ? " diverged" : " train_acc " + fmt("%.4f", r.train_acc()))
                  << fmt(" (%.0f s)", r.seconds) << std::endl;
        return r;
    }

    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::map<std::string, CellResult> done_;
};

const Cell kFull{"isonet", {true, true, true}, 0.02};
const Cell kNoSrelu{"isonet-no-srelu", {false, true, true}, 0.02};
const Cell kNoDelta{"isonet-no-delta", {true, false, true}, 0.02};
const Cell kNoOrtho{"isonet-no-ortho", {true, true, false}, 0.02};
Cell vanilla(double lr) { return {"vanilla-lr" + fmt("%g", lr), {false, false, false}, lr}; }

std::string acc_text(const CellResult& r, bool eval = false) {
    if (r.outcome.diverged) return "diverged";
    return fmt("%.4f", eval ? r.eval_acc() : r.train_acc());
}

Outcome trainability(Cells& cells) {
    const CellResult& full = cells.get(kFull);
    bool pass = !full.outcome.diverged && full.train_acc() >= 0.9;
    std::string detail = "ISONet " + acc_text(full);
    for (double lr : cli::kBaselineLrGrid) {
        const CellResult& v = cells.get(vanilla(lr));
        pass = pass && full.train_acc() > v.train_acc();
        detail += ", Vanilla@" + fmt("%g", lr) + " " + acc_text(v);
    }
    for (const Cell& c : {kNoSrelu, kNoDelta, kNoOrtho}) {
        const CellResult& r = cells.get(c);
        pass = pass && r.train_acc() < full.train_acc();
        detail += ", " + c.label.substr(7) + " " + acc_text(r);
    }
    // Held-out accuracy is reported alongside but does not decide the criterion.
    detail += " (train accuracy; eval: ISONet " + acc_text(full, true);
    for (const Cell& c : {kNoSrelu, kNoDelta, kNoOrtho}) detail += ", " + c.label.substr(7) + " " + acc_text(cells.get(c), true);
    return {pass, detail + ")"};
}

Outcome gamma_sensitivity(Cells& cells) {
    // gamma = 0 is the same run as the no-ortho ablation.
    const CellResult& g4 = cells.get(kFull);
    const CellResult& g0 = cells.get(kNoOrtho);
    Cell c5 = kFull, c2 = kFull;
    c5.label = "isonet-gamma1e-5";
    c5.gamma = 1e-5;
    c2.label = "isonet-gamma1e-2";
    c2.gamma = 1e-2;
    const CellResult& g5 = cells.get(c5);
    const CellResult& g2 = cells.get(c2);
    const bool pass = std::abs(g5.eval_acc() - g4.eval_acc()) < 0.03 && g0.eval_acc() < g4.eval_acc() &&
                      g2.eval_acc() < g4.eval_acc();
    return {pass, "eval accuracy at gamma 0: " + acc_text(g0, true) + ", 1e-5: " + acc_text(g5, true) +
                      ", 1e-4: " + acc_text(g4, true) + ", 1e-2: " + acc_text(g2, true)};
}

Outcome shift_histogram(Cells& cells) {
    const CellResult& full = cells.get(kFull);
    if (full.outcome.diverged) return {false, "ISONet run diverged"};
    const NetworkParams& trained = full.outcome.params;
    const fs::path diag = cells.dir() / "diagnose";
    fs::create_directories(diag);
    const auto layers = cli::diagnose_layers(trained, {});
    std::ofstream(diag / "layers.csv") << cli::layers_csv(layers);
    const std::string hist = cli::shift_histogram_csv(trained, 0.125);
    std::ofstream(diag / "shift_histogram.csv") << hist;

    std::size_t shifts = 0, nonfinite = 0;
    for (const auto& stage : trained.shifts_by_stage())
        for (int idx : stage)
            for (double b : trained.params[static_cast<std::size_t>(idx)].value) {
                ++shifts;
                nonfinite += !std::isfinite(b);
            }
    bool residuals_finite = true;
    for (const auto& d : layers) residuals_finite = residuals_finite && std::isfinite(d.residual);
    const bool has_nan = hist.find("nan") != std::string::npos;

    // fresh init: every count in a single bin that contains -1
    const RunConfig cfg = preset_config("isonet-deep");
    NetworkSpec spec = cfg.net;
    spec.input_channels = 3;
    spec.classes = 4;
    const NetworkParams fresh = build(effective_spec(spec, kFull.switches), InitScheme::Delta, 0);
    std::istringstream in(cli::shift_histogram_csv(fresh, 0.125));
    std::string line;
    std::getline(in, line);
    int occupied = 0;
    bool at_minus_one = true;
    while (std::getline(in, line)) {
        double lo, hi;
        long count;
        int stage;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%ld", &stage, &lo, &hi, &count) != 4) return {false, "bad row " + line};
        if (count == 0) continue;
        ++occupied;
        at_minus_one = at_minus_one && lo <= -1.0 && -1.0 < hi;
    }
    const bool pass = nonfinite == 0 && !has_nan && residuals_finite && occupied == 1 && at_minus_one;
    return {pass, std::to_string(shifts) + " trained shifts, " + std::to_string(nonfinite) +
                      " non-finite; fresh init occupies " + std::to_string(occupied) + " bin" +
                      (at_minus_one ? " at -1" : " (not at -1)")};
}

Outcome determinism(Cells& cells) {
    const CellResult& first = cells.get(kFull);
    Cell again = kFull;
    again.label = "isonet-repeat";
    const CellResult& second = cells.get(again);
    const bool same = first.csv == second.csv;
    return {same && !first.csv.empty(), same ? "metric CSVs identical" : "metric CSVs differ"};
}

}  // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    CLI::App app{"Acceptance suite"};
    std::vector<int> only;
    std::string out = "acceptance_out";
    app.add_option("--only", only, "Run just these criteria (1-10)")->delimiter(',')->check(CLI::Range(1, 10));
    app.add_option("--out", out, "Directory for training logs and diagnostics")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    const std::set<int> selected(only.begin(), only.end());

    Cells cells(out);
    struct Criterion {
        int id;
        std::string name;
        double max_seconds;  // 0: no runtime bound
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "adjoint identity", 5, adjoint_identity},
        {2, "orthogonality conditions", 5, orthogonality_conditions},
        {3, "oracle equivalence", 10, oracle_equivalence},
        {4, "gradient completeness", 60, gradient_completeness},
        {5, "regularizer contraction", 30, regularizer_contraction},
        {6, "identity at init", 0, identity_at_init},
        {7, "trainability ordering", 0, [&] { return trainability(cells); }},
        {8, "gamma sensitivity", 0, [&] { return gamma_sensitivity(cells); }},
        {9, "shift histogram", 0, [&] { return shift_histogram(cells); }},
        {10, "determinism", 0, [&] { return determinism(cells); }},
    };

    int failed = 0;
    for (const Criterion& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = seconds_since(t0);
        if (c.max_seconds > 0 && secs >= c.max_seconds) {
            o.pass = false;
            o.detail += "; over the " + fmt("%g", c.max_seconds) + " s budget";
        }
        failed += !o.pass;
        std::printf("%s  %2d  %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
