#include "isonet/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "isonet/rng.hpp"

namespace isonet {

// ---------------------------------------------------------------------------
// enum <-> text

std::string to_string(Variant v) {
    switch (v) {
        case Variant::ISONet: return "isonet";
        case Variant::RISONet: return "r-isonet";
        case Variant::Vanilla: return "vanilla";
        case Variant::RVanilla: return "r-vanilla";
    }
    return "?";
}

std::string to_string(Activation a) { return a == Activation::SReLU ? "srelu" : "relu"; }
std::string to_string(InitScheme s) { return s == InitScheme::Delta ? "delta" : "gaussian"; }
std::string to_string(ResidualScaleMode m) { return m == ResidualScaleMode::PerChannel ? "per_channel" : "scalar"; }

std::string to_string(ParamKind k) {
    switch (k) {
        case ParamKind::Kernel: return "kernel";
        case ParamKind::Shift: return "shift";
        case ParamKind::Scale: return "scale";
        case ParamKind::ClassifierWeight: return "classifier_weight";
        case ParamKind::ClassifierBias: return "classifier_bias";
    }
    return "?";
}

Variant parse_variant(std::string_view s) {
    if (s == "isonet") return Variant::ISONet;
    if (s == "r-isonet") return Variant::RISONet;
    if (s == "vanilla") return Variant::Vanilla;
    if (s == "r-vanilla") return Variant::RVanilla;
    throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
    if (s == "srelu") return Activation::SReLU;
    if (s == "relu") return Activation::ReLU;
    throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

InitScheme parse_init(std::string_view s) {
    if (s == "delta") return InitScheme::Delta;
    if (s == "gaussian") return InitScheme::Gaussian;
    throw std::invalid_argument("unknown init '" + std::string(s) + "'");
}

ResidualScaleMode parse_residual_scale(std::string_view s) {
    if (s == "per_channel") return ResidualScaleMode::PerChannel;
    if (s == "scalar") return ResidualScaleMode::Scalar;
    throw std::invalid_argument("unknown residual_scale '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// spec

void NetworkSpec::validate() const {
    if (stages.empty()) throw std::invalid_argument("network spec: stages must be nonempty");
    for (const auto& st : stages) {
        if (st.channels < 1) throw std::invalid_argument("network spec: stage channels must be >= 1");
        if (st.blocks < 0) throw std::invalid_argument("network spec: stage block count must be >= 0");
    }
    if (input_channels < 1) throw std::invalid_argument("network spec: input_channels must be >= 1");
    if (classes < 1) throw std::invalid_argument("network spec: classes must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("network spec: kernel_size must be odd");
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw std::invalid_argument("network spec: dropout must be in [0, 1)");
}

int NetworkSpec::conv_layer_count() const {
    int count = 1;
    for (std::size_t s = 0; s < stages.size(); ++s) count += (s > 0 ? 1 : 0) + 2 * stages[s].blocks;
    return count;
}

std::string format_stages(const std::vector<StageSpec>& stages) {
    std::string out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(stages[i].blocks) + "x" + std::to_string(stages[i].channels);
    }
    return out;
}

namespace {

int parse_int(std::string_view s, const char* what) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::invalid_argument(std::string("invalid integer for ") + what + ": '" + std::string(s) + "'");
    }
    return v;
}

double parse_double(std::string_view s, const char* what) {
    // from_chars for double is not available in every libstdc++ we target.
    std::string tmp(s);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(tmp, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != tmp.size() || tmp.empty()) {
        throw std::invalid_argument(std::string("invalid number for ") + what + ": '" + tmp + "'");
    }
    return v;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<StageSpec> parse_stages(std::string_view text) {
    std::vector<StageSpec> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        const std::string_view item = trim(text.substr(0, comma));
        const auto x = item.find('x');
        if (x == std::string_view::npos) throw std::invalid_argument("stage '" + std::string(item) + "' is not BLOCKSxCHANNELS");
        out.push_back({parse_int(item.substr(0, x), "stage blocks"), parse_int(item.substr(x + 1), "stage channels")});
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    if (out.empty()) throw std::invalid_argument("stages must be nonempty");
    return out;
}

std::string serialize_spec(const NetworkSpec& spec) {
    std::ostringstream os;
    os.precision(17);
    os << "variant=" << to_string(spec.variant) << '\n'
       << "stages=" << format_stages(spec.stages) << '\n'
       << "input_channels=" << spec.input_channels << '\n'
       << "classes=" << spec.classes << '\n'
       << "kernel_size=" << spec.kernel_size << '\n'
       << "dropout=" << spec.dropout_p << '\n'
       << "residual_scale=" << to_string(spec.residual_scale) << '\n'
       << "activation=" << to_string(spec.activation) << '\n';
    return os.str();
}

NetworkSpec parse_spec(std::string_view text) {
    NetworkSpec spec;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        const std::string_view line = trim(text.substr(0, nl));
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw std::invalid_argument("spec line without '=': " + std::string(line));
        const std::string_view key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key == "variant") spec.variant = parse_variant(value);
        else if (key == "stages") spec.stages = parse_stages(value);
        else if (key == "input_channels") spec.input_channels = parse_int(value, "input_channels");
        else if (key == "classes") spec.classes = parse_int(value, "classes");
        else if (key == "kernel_size") spec.kernel_size = parse_int(value, "kernel_size");
        else if (key == "dropout") spec.dropout_p = parse_double(value, "dropout");
        else if (key == "residual_scale") spec.residual_scale = parse_residual_scale(value);
        else if (key == "activation") spec.activation = parse_activation(value);
        else throw std::invalid_argument("unknown spec key '" + std::string(key) + "'");
    }
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// parameters

Kernel NetworkParams::kernel(int index) const {
    const Param& p = params.at(static_cast<std::size_t>(index));
    if (p.kind != ParamKind::Kernel) throw std::invalid_argument("parameter " + p.name + " is not a kernel");
    return Kernel(p.shape[0], p.shape[1], p.shape[2], p.value);
}

std::vector<int> NetworkParams::kernel_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].kind == ParamKind::Kernel) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<std::vector<int>> NetworkParams::shifts_by_stage() const {
    std::vector<std::vector<int>> out(layout.stages.size());
    out[0].push_back(layout.stem_shift);
    for (std::size_t s = 0; s < layout.stages.size(); ++s)
        for (const auto& b : layout.stages[s].blocks) {
            out[s].push_back(b.shift_a);
            out[s].push_back(b.shift_b);
        }
    return out;
}

std::size_t NetworkParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
}

Gradients zero_gradients(const NetworkParams& params) {
    Gradients g;
    g.reserve(params.params.size());
    for (const auto& p : params.params) g.emplace_back(p.value.size(), 0.0);
    return g;
}

namespace {

class ParamBuilder {
public:
    ParamBuilder(NetworkParams& net, InitScheme init, std::uint64_t seed) : net_(net), init_(init), rng_(seed) {}

    int kernel(const std::string& name, int m, int c, int k) {
        Param p{name, ParamKind::Kernel, {m, c, k, k}, {}, true};
        if (init_ == InitScheme::Delta) {
            p.value = delta_kernel(m, c, k).storage();
        } else {
            // Kaiming: N(0, 2 / fan_in)
            const double sd = std::sqrt(2.0 / (static_cast<double>(c) * k * k));
            p.value.resize(static_cast<std::size_t>(m) * c * k * k);
            for (double& v : p.value) v = rng_.normal(0.0, sd);
        }
        return push(std::move(p));
    }

    int shift(const std::string& name, int channels) {
        const bool srelu = net_.spec.activation == Activation::SReLU;
        Param p{name, ParamKind::Shift, {channels}, std::vector<double>(channels, srelu ? -1.0 : 0.0), srelu};
        return push(std::move(p));
    }

    int scale(const std::string& name, int channels) {
        const int count = net_.spec.residual_scale == ResidualScaleMode::Scalar ? 1 : channels;
        // Zero-initialised branch scale for R-ISONet; plain residual addition for R-Vanilla.
        const double init = net_.spec.variant == Variant::RISONet ? 0.0 : 1.0;
        Param p{name, ParamKind::Scale, {count}, std::vector<double>(count, init), true};
        return push(std::move(p));
    }

    void classifier(int classes, int features) {
        Param w{"head.weight", ParamKind::ClassifierWeight, {classes, features}, {}, true};
        const double sd = std::sqrt(1.0 / features);
        w.value.resize(static_cast<std::size_t>(classes) * features);
        for (double& v : w.value) v = rng_.normal(0.0, sd);
        net_.layout.classifier_weight = push(std::move(w));
        Param b{"head.bias", ParamKind::ClassifierBias, {classes}, std::vector<double>(classes, 0.0), true};
        net_.layout.classifier_bias = push(std::move(b));
    }

private:
    int push(Param p) {
        net_.params.push_back(std::move(p));
        return static_cast<int>(net_.params.size()) - 1;
    }

    NetworkParams& net_;
    InitScheme init_;
    Rng rng_;
};

}  // namespace

NetworkParams build(const NetworkSpec& spec, InitScheme init, std::uint64_t seed) {
    spec.validate();
    NetworkParams net;
    net.spec = spec;
    ParamBuilder pb(net, init, seed);
    const int k = spec.kernel_size;
    const bool residual = is_residual(spec.variant);

    int width = spec.stages[0].channels;
    net.layout.stem = pb.kernel("stem.conv", width, spec.input_channels, k);
    net.layout.stem_shift = pb.shift("stem.shift", width);
    for (std::size_t s = 0; s < spec.stages.size(); ++s) {
        StageLayout stage;
        const std::string prefix = "stage" + std::to_string(s);
        if (s > 0) {
            stage.transition = pb.kernel(prefix + ".transition", spec.stages[s].channels, width, 1);
            width = spec.stages[s].channels;
        }
        for (int b = 0; b < spec.stages[s].blocks; ++b) {
            const std::string bp = prefix + ".block" + std::to_string(b);
            BlockLayout block;
            block.conv_a = pb.kernel(bp + ".conv_a", width, width, k);
            block.shift_a = pb.shift(bp + ".shift_a", width);
            block.conv_b = pb.kernel(bp + ".conv_b", width, width, k);
            if (residual) block.scale = pb.scale(bp + ".scale", width);
            block.shift_b = pb.shift(bp + ".shift_b", width);
            stage.blocks.push_back(block);
        }
        net.layout.stages.push_back(std::move(stage));
    }
    pb.classifier(spec.classes, width);

    for (const auto& p : net.params) net.velocity.emplace_back(p.value.size(), 0.0);
    return net;
}

// ---------------------------------------------------------------------------
// forward / backward

namespace {

std::span<const double> values_of(const NetworkParams& net, int index) {
    return net.params[static_cast<std::size_t>(index)].value;
}

LinearView head_view(const NetworkParams& net) {
    const auto& w = net.params[static_cast<std::size_t>(net.layout.classifier_weight)];
    const auto& b = net.params[static_cast<std::size_t>(net.layout.classifier_bias)];
    return {w.value, b.value, w.shape[0], w.shape[1]};
}

Signal conv(const NetworkParams& net, int index, const Signal& x, ConvRecord* record) {
    const Kernel a = net.kernel(index);
    if (a.in_channels() != x.channels()) {
        throw std::invalid_argument("forward: layer " + net.params[static_cast<std::size_t>(index)].name + " expects " +
                                    std::to_string(a.in_channels()) + " channels, got " + std::to_string(x.channels()));
    }
    PaddedSignal padded(x, a.radius());
    Signal y = apply_operator(a, padded);
    if (record) record->input = std::move(padded);
    return y;
}

Signal forward_impl(const NetworkParams& net, const Signal& x, Mode mode, std::uint64_t dropout_seed,
                    std::uint64_t stream, ForwardCache* cache) {
    const auto& spec = net.spec;
    if (x.channels() != spec.input_channels) {
        throw std::invalid_argument("forward: input has " + std::to_string(x.channels()) + " channels, network expects " +
                                    std::to_string(spec.input_channels));
    }
    if (cache) {
        cache->version = net.version;
        cache->input_height = x.height();
        cache->input_width = x.width();
        cache->stages.assign(spec.stages.size(), {});
    }

    Signal y = conv(net, net.layout.stem, x, cache ? &cache->stem : nullptr);
    Signal h = srelu_forward(y, values_of(net, net.layout.stem_shift));
    if (cache) {
        cache->stem_pre = std::move(y);
        cache->stem_out = h;
    }

    for (std::size_t s = 0; s < net.layout.stages.size(); ++s) {
        const StageLayout& stage = net.layout.stages[s];
        StageRecord* srec = cache ? &cache->stages[s] : nullptr;
        if (stage.transition >= 0) {
            Signal t = conv(net, stage.transition, h, srec ? &srec->transition : nullptr);
            if (srec) {
                srec->pre_pool_height = t.height();
                srec->pre_pool_width = t.width();
            }
            h = avg_pool2(t);
        }
        for (const BlockLayout& block : stage.blocks) {
            BlockRecord rec;
            const bool keep = srec != nullptr;
            Signal ya = conv(net, block.conv_a, h, keep ? &rec.conv_a : nullptr);
            Signal ha = srelu_forward(ya, values_of(net, block.shift_a));
            Signal yb = conv(net, block.conv_b, ha, keep ? &rec.conv_b : nullptr);
            Signal z = block.scale >= 0 ? residual_combine_forward(h, yb, values_of(net, block.scale)) : yb;
            Signal out = srelu_forward(z, values_of(net, block.shift_b));
            if (keep) {
                rec.pre_a = std::move(ya);
                rec.branch = std::move(yb);
                rec.pre_b = std::move(z);
                srec->blocks.push_back(std::move(rec));
            }
            h = std::move(out);
        }
    }

    Signal pooled = global_avg_pool(h);
    DropoutResult dropped = dropout_forward(pooled, {spec.dropout_p, dropout_seed}, mode == Mode::Train, stream);
    Signal logits = linear_forward(dropped.out, head_view(net));
    if (cache) {
        cache->trunk_out = std::move(h);
        cache->pooled = std::move(pooled);
        cache->dropout_mask = std::move(dropped.mask);
        cache->head_input = std::move(dropped.out);
        cache->valid = true;
    }
    return logits;
}

void add_into(std::vector<double>& dst, std::span<const double> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

ForwardResult forward(const NetworkParams& params, const Signal& x, Mode mode, std::uint64_t dropout_seed,
                      std::uint64_t stream) {
    ForwardResult out;
    out.logits = forward_impl(params, x, mode, dropout_seed, stream, &out.cache);
    return out;
}

Signal predict(const NetworkParams& params, const Signal& x) {
    return forward_impl(params, x, Mode::Eval, 0, 0, nullptr);
}

BackwardResult backward(const NetworkParams& net, const ForwardCache& cache, const Signal& upstream) {
    if (!cache.valid) throw StaleCacheError("backward: cache was not produced by forward");
    if (cache.version != net.version) {
        throw StaleCacheError("backward: parameters changed since forward (cache version " +
                              std::to_string(cache.version) + ", params version " + std::to_string(net.version) + ")");
    }
    if (upstream.batch() != cache.head_input.batch() || upstream.channels() != net.spec.classes) {
        throw std::invalid_argument("backward: upstream must be N x classes");
    }

    BackwardResult out{zero_gradients(net), {}};
    Gradients& g = out.grads;
    auto grad_of = [&](int index) -> std::vector<double>& { return g[static_cast<std::size_t>(index)]; };
    auto trainable = [&](int index) { return net.params[static_cast<std::size_t>(index)].trainable; };

    // Returns d loss / d input of a conv and accumulates its weight gradient.
    auto conv_back = [&](int index, const ConvRecord& rec, const Signal& gy) {
        const Kernel a = net.kernel(index);
        add_into(grad_of(index), conv_weight_gradient(rec.input, gy).values());
        return conv_input_gradient(a, gy);
    };
    auto shift_back = [&](int index, const Signal& pre, const Signal& gy) {
        SReLUGrad sg = srelu_backward(pre, values_of(net, index), gy);
        if (trainable(index)) add_into(grad_of(index), sg.grad_b);
        return std::move(sg.grad_y);
    };

    LinearGrad lg = linear_backward(cache.head_input, head_view(net), upstream);
    add_into(grad_of(net.layout.classifier_weight), lg.grad_weight);
    add_into(grad_of(net.layout.classifier_bias), lg.grad_bias);
    Signal gpool = dropout_backward(lg.grad_features, cache.dropout_mask);
    Signal gh = global_avg_pool_backward(gpool, cache.trunk_out.height(), cache.trunk_out.width());

    for (std::size_t s = net.layout.stages.size(); s-- > 0;) {
        const StageLayout& stage = net.layout.stages[s];
        const StageRecord& srec = cache.stages[s];
        for (std::size_t b = stage.blocks.size(); b-- > 0;) {
            const BlockLayout& block = stage.blocks[b];
            const BlockRecord& rec = srec.blocks[b];
            Signal gz = shift_back(block.shift_b, rec.pre_b, gh);
            Signal gskip;
            Signal gbranch;
            if (block.scale >= 0) {
                ResidualGrad rg = residual_combine_backward(rec.branch, values_of(net, block.scale), gz);
                add_into(grad_of(block.scale), rg.grad_s);
                gskip = std::move(rg.grad_x);
                gbranch = std::move(rg.grad_r);
            } else {
                gbranch = std::move(gz);
            }
            Signal gha = conv_back(block.conv_b, rec.conv_b, gbranch);
            Signal gya = shift_back(block.shift_a, rec.pre_a, gha);
            Signal gin = conv_back(block.conv_a, rec.conv_a, gya);
            if (block.scale >= 0) {
                auto dst = gin.values();
                const auto src = gskip.values();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            }
            gh = std::move(gin);
        }
        if (stage.transition >= 0) {
            Signal gt = avg_pool2_backward(gh);
            gh = conv_back(stage.transition, srec.transition, gt);
        }
    }

    Signal gstem = shift_back(net.layout.stem_shift, cache.stem_pre, gh);
    out.grad_input = conv_back(net.layout.stem, cache.stem, gstem);
    return out;
}

// ---------------------------------------------------------------------------
// losses

LossResult loss_cross_entropy(const Signal& logits, std::span<const int> labels) {
    const int n = logits.batch(), k = logits.channels();
    if (logits.height() != 1 || logits.width() != 1) throw std::invalid_argument("loss_cross_entropy: logits must be N x K x 1 x 1");
    if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("loss_cross_entropy: label count mismatch");
    LossResult out{0.0, Signal(n, k, 1, 1)};
    for (int i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || label >= k) {
            throw std::invalid_argument("loss_cross_entropy: label " + std::to_string(label) + " out of range [0, " +
                                        std::to_string(k) + ")");
        }
        const double* z = logits.plane(i, 0);
        const double zmax = *std::max_element(z, z + k);
        double sum = 0.0;
        for (int j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
        const double lse = zmax + std::log(sum);
        out.loss += lse - z[label];
        double* gz = out.grad.plane(i, 0);
        for (int j = 0; j < k; ++j) gz[j] = (std::exp(z[j] - lse) - (j == label ? 1.0 : 0.0)) / n;
    }
    out.loss /= n;
    return out;
}

LossResult loss_squared(const Signal& output, const Signal& target) {
    if (!output.same_shape(target)) throw std::invalid_argument("loss_squared: shape mismatch");
    LossResult out{0.0, Signal(output.batch(), output.channels(), output.height(), output.width())};
    for (std::size_t i = 0; i < output.size(); ++i) {
        const double d = output.values()[i] - target.values()[i];
        out.loss += 0.5 * d * d;
        out.grad.values()[i] = d;
    }
    return out;
}

}  // namespace isonet
