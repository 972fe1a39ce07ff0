#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "commands.hpp"
#include "isonet/checkpoint.hpp"

using namespace isonet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("isonet_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args, const fs::path& log, const std::string& threads = "") {
    const std::string env = threads.empty() ? "" : "OMP_NUM_THREADS=" + threads + " ";
    const std::string cmd = env + std::string(ISONET_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kTiny = "--set data.n_train=128 --set data.n_eval=64 --set net.stages=1x8,1x8";

}  // namespace

TEST_CASE("train writes metrics, config and a loadable checkpoint") {
    const fs::path dir = scratch("train");
    REQUIRE(run(std::string("train --epochs 2 ") + kTiny + " --out " + (dir / "run").string(), dir / "log") == 0);
    const std::string csv = slurp(dir / "run" / "metrics.csv");
    CHECK(csv.find("# config_hash=") != std::string::npos);
    CHECK(csv.find("# seed=0") != std::string::npos);
    CHECK(csv.find("# data_generator=synth-v1") != std::string::npos);
    CHECK(csv.find(std::string(cli::kMetricsHeader) + "\n0,") != std::string::npos);
    CHECK(csv.find("\n1,") != std::string::npos);
    const NetworkParams net = load_checkpoint(dir / "run" / "model.ckpt");
    CHECK(net.spec.stages.size() == 2);

    REQUIRE(run("eval " + std::string(kTiny) + " --checkpoint " + (dir / "run" / "model.ckpt").string(), dir / "eval") == 0);
    CHECK(slurp(dir / "eval").find("split,examples,accuracy\ntrain,128,") != std::string::npos);

    REQUIRE(run("diagnose --checkpoint " + (dir / "run" / "model.ckpt").string() + " --out " + (dir / "d").string(),
                dir / "diag") == 0);
    CHECK(slurp(dir / "d" / "layers.csv").rfind("layer,name,", 0) == 0);
    CHECK(slurp(dir / "d" / "shift_histogram.csv").rfind("stage,bin_lo,bin_hi,count\n", 0) == 0);
    fs::remove_all(dir);
}

TEST_CASE("two identical runs produce identical metrics") {
    const fs::path dir = scratch("det");
    for (const char* name : {"a", "b"})
        REQUIRE(run(std::string("train --epochs 1 ") + kTiny + " --out " + (dir / name).string(), dir / "log") == 0);
    CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
    fs::remove_all(dir);
}

TEST_CASE("metrics do not depend on the thread count") {
    const fs::path dir = scratch("threads");
    for (const char* threads : {"1", "3"})
        REQUIRE(run(std::string("train --epochs 1 ") + kTiny + " --out " + (dir / threads).string(), dir / "log",
                    threads) == 0);
    CHECK(slurp(dir / "1" / "metrics.csv") == slurp(dir / "3" / "metrics.csv"));
    CHECK(slurp(dir / "1" / "model.ckpt") == slurp(dir / "3" / "model.ckpt"));
    fs::remove_all(dir);
}

TEST_CASE("bad input exits 1") {
    const fs::path dir = scratch("bad");
    CHECK(run("train --data cifar10 --data-path " + (dir / "missing").string(), dir / "log") == 1);
    CHECK(slurp(dir / "log").find("data.path") != std::string::npos);
    CHECK(run("train --set net.bogus=3", dir / "log") == 1);
    CHECK(slurp(dir / "log").find("net.bogus") != std::string::npos);
    CHECK(run("train --set train.lr=-1", dir / "log") == 1);
    CHECK(run("train --preset nope", dir / "log") == 1);
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
    CHECK(run("diagnose --checkpoint " + (dir / "junk.ckpt").string(), dir / "log") == 1);
    CHECK(slurp(dir / "log").find("offset") != std::string::npos);
    CHECK(run("", dir / "log") == 1);
    fs::remove_all(dir);
}

TEST_CASE("divergence exits 2 and keeps the partial log") {
    const fs::path dir = scratch("div");
    CHECK(run(std::string("train --preset vanilla-s --lr 1e6 --epochs 3 ") + kTiny + " --out " + (dir / "run").string(),
              dir / "log") == 2);
    const std::string csv = slurp(dir / "run" / "metrics.csv");
    CHECK(csv.find("# status=diverged") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "run" / "model.ckpt"));
    fs::remove_all(dir);
}

TEST_CASE("gradcheck exit codes") {
    const fs::path dir = scratch("grad");
    CHECK(run("gradcheck --probes 4", dir / "log") == 0);
    CHECK(run("gradcheck --preset r-isonet-s --probes 4", dir / "log") == 0);
    CHECK(run("gradcheck --preset r-isonet-s --linear --loss squared --probes 4", dir / "log") == 0);
    CHECK(run("gradcheck --probes 4 --inject-fault", dir / "log") == 3);
    CHECK(slurp(dir / "log").find("# FAIL worst coordinate") != std::string::npos);
    CHECK(run("gradcheck --probes 0", dir / "log") == 1);
    fs::remove_all(dir);
}

TEST_CASE("ablation grid covers eight cells per learning rate") {
    RunConfig cfg = preset_config("isonet-s");
    apply_config_text(cfg, "train.epochs=3\ntrain.warmup_epochs=0\ndata.n_train=64\ndata.n_eval=32\nnet.stages=1x4\n");
    const fs::path dir = scratch("ablate");
    cli::AblateOptions o;
    o.lrs = {0.02, 1e30};
    o.out_csv = dir / "ablation.csv";
    std::ostringstream out, err;
    REQUIRE(cli::cmd_ablate(cfg, o, out, err) == 0);
    std::istringstream csv(slurp(o.out_csv));
    std::string line;
    int rows = 0, diverged = 0;
    while (std::getline(csv, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("srelu,", 0) == 0) continue;
        ++rows;
        diverged += line.find(",diverged,") != std::string::npos;
    }
    CHECK(rows == 16);
    CHECK(diverged == 8);
    fs::remove_all(dir);
}

TEST_CASE("shift histogram uses shared aligned bins") {
    NetworkSpec s;
    s.stages = {{1, 2}, {1, 2}};
    s.classes = 2;
    NetworkParams net = build(s, InitScheme::Delta, 3);
    const auto stages = net.shifts_by_stage();
    for (int idx : stages[0]) net.params[static_cast<std::size_t>(idx)].value = {-1.0, -0.3};
    for (int idx : stages[1]) net.params[static_cast<std::size_t>(idx)].value = {0.2, 0.2};
    const std::string csv = cli::shift_histogram_csv(net, 0.5);
    // bins [-1,-0.5), [-0.5,0), [0,0.5) for both stages
    std::istringstream in(csv);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) rows += !line.empty();
    CHECK(rows == 1 + 2 * 3);
    const int n0 = static_cast<int>(stages[0].size()), n1 = static_cast<int>(stages[1].size());
    CHECK(csv.find("0,-1,-0.5," + std::to_string(n0) + "\n") != std::string::npos);
    CHECK(csv.find("0,-0.5,0," + std::to_string(n0) + "\n") != std::string::npos);
    CHECK(csv.find("1,0,0.5," + std::to_string(2 * n1) + "\n") != std::string::npos);
    CHECK(csv.find("1,-1,-0.5,0\n") != std::string::npos);
    CHECK_THROWS(cli::shift_histogram_csv(net, 0.0));
}

TEST_CASE("layer diagnostics of a delta network are isometric") {
    NetworkSpec s;
    s.stages = {{1, 4}, {1, 8}};
    s.classes = 2;
    const NetworkParams net = build(s, InitScheme::Delta, 3);
    SpectrumOptions o;
    o.iterations = 50;
    o.height = 6;
    o.width = 6;
    const auto rows = cli::diagnose_layers(net, o);
    CHECK(rows.size() == net.kernel_indices().size());
    for (const auto& d : rows) {
        CHECK(d.residual == doctest::Approx(0.0));
        CHECK(d.spectrum.sigma_max == doctest::Approx(1.0).epsilon(1e-6));
    }
}
