#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "isonet/convops.hpp"
#include "isonet/layers.hpp"
#include "isonet/tensor.hpp"

namespace isonet {

enum class Variant { ISONet, RISONet, Vanilla, RVanilla };
enum class Activation { SReLU, ReLU };
enum class InitScheme { Delta, Gaussian };
enum class ResidualScaleMode { PerChannel, Scalar };
enum class Mode { Train, Eval };

std::string to_string(Variant v);
std::string to_string(Activation a);
std::string to_string(InitScheme s);
std::string to_string(ResidualScaleMode m);
Variant parse_variant(std::string_view s);
Activation parse_activation(std::string_view s);
InitScheme parse_init(std::string_view s);
ResidualScaleMode parse_residual_scale(std::string_view s);

inline bool is_residual(Variant v) { return v == Variant::RISONet || v == Variant::RVanilla; }
inline bool is_isometric(Variant v) { return v == Variant::ISONet || v == Variant::RISONet; }

struct StageSpec {
    int blocks = 1;
    int channels = 16;
    friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

/// Architecture description. Layout:
///   stem:  k x k conv (input_channels -> stages[0].channels), activation
///   stage: [1x1 transition conv + avg_pool2 when not first] then `blocks` blocks
///   block: conv, act, conv, [x + s * branch], act
///   head:  global average pool, dropout, linear
struct NetworkSpec {
    Variant variant = Variant::ISONet;
    std::vector<StageSpec> stages{{2, 16}};
    int input_channels = 3;
    int classes = 10;
    int kernel_size = 3;
    double dropout_p = 0.0;
    ResidualScaleMode residual_scale = ResidualScaleMode::PerChannel;
    Activation activation = Activation::SReLU;

    void validate() const;
    int conv_layer_count() const;
    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Canonical "key=value" lines; round-trips through parse_spec.
std::string serialize_spec(const NetworkSpec& spec);
NetworkSpec parse_spec(std::string_view text);
/// "2x16,2x32" <-> stages
std::string format_stages(const std::vector<StageSpec>& stages);
std::vector<StageSpec> parse_stages(std::string_view text);

enum class ParamKind { Kernel, Shift, Scale, ClassifierWeight, ClassifierBias };
std::string to_string(ParamKind k);

struct Param {
    std::string name;
    ParamKind kind = ParamKind::Kernel;
    std::vector<int> shape;
    std::vector<double> value;
    bool trainable = true;
    /// Weight decay applies to kernels and the classifier weight only.
    bool decayed() const { return kind == ParamKind::Kernel || kind == ParamKind::ClassifierWeight; }
};

struct BlockLayout {
    int conv_a = -1;
    int shift_a = -1;
    int conv_b = -1;
    int scale = -1;  // -1 for plain (non-residual) blocks
    int shift_b = -1;
};

struct StageLayout {
    int transition = -1;  // -1 for the first stage
    std::vector<BlockLayout> blocks;
};

struct NetworkLayout {
    int stem = -1;
    int stem_shift = -1;
    std::vector<StageLayout> stages;
    int classifier_weight = -1;
    int classifier_bias = -1;
};

/// Every learnable appears exactly once in `params`, in declaration order.
struct NetworkParams {
    NetworkSpec spec;
    NetworkLayout layout;
    std::vector<Param> params;
    std::vector<std::vector<double>> velocity;
    /// Bumped by every in-place mutation; caches from older versions are stale.
    std::uint64_t version = 0;

    Kernel kernel(int index) const;
    std::vector<int> kernel_indices() const;
    /// Shift parameters grouped by stage (the stem belongs to stage 0).
    std::vector<std::vector<int>> shifts_by_stage() const;
    std::size_t scalar_count() const;
};

using Gradients = std::vector<std::vector<double>>;
Gradients zero_gradients(const NetworkParams& params);

NetworkParams build(const NetworkSpec& spec, InitScheme init, std::uint64_t seed);

struct ConvRecord {
    PaddedSignal input;  // padded forward input, reused by the weight gradient
};

struct BlockRecord {
    ConvRecord conv_a;
    Signal pre_a;  // y entering the first activation
    ConvRecord conv_b;
    Signal branch;  // second conv output
    Signal pre_b;   // y entering the second activation
};

struct StageRecord {
    ConvRecord transition;
    int pre_pool_height = 0;
    int pre_pool_width = 0;
    std::vector<BlockRecord> blocks;
};

struct ForwardCache {
    std::uint64_t version = 0;
    bool valid = false;
    int input_height = 0;
    int input_width = 0;
    ConvRecord stem;
    Signal stem_pre;
    Signal stem_out;
    std::vector<StageRecord> stages;
    Signal trunk_out;
    Signal pooled;
    std::vector<double> dropout_mask;
    Signal head_input;
};

struct ForwardResult {
    Signal logits;
    ForwardCache cache;
};

/// `stream` selects the dropout mask (one stream per optimizer step).
ForwardResult forward(const NetworkParams& params, const Signal& x, Mode mode, std::uint64_t dropout_seed = 0,
                      std::uint64_t stream = 0);
/// Logits in Eval mode without keeping a cache.
Signal predict(const NetworkParams& params, const Signal& x);

struct BackwardResult {
    Gradients grads;
    Signal grad_input;
};

class StaleCacheError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

BackwardResult backward(const NetworkParams& params, const ForwardCache& cache, const Signal& upstream);

struct LossResult {
    double loss = 0.0;
    Signal grad;
};

/// Softmax cross-entropy averaged over the batch; logits are N x K x 1 x 1.
LossResult loss_cross_entropy(const Signal& logits, std::span<const int> labels);
/// 0.5 * ||target - output||^2 with gradient output - target.
LossResult loss_squared(const Signal& output, const Signal& target);

}  // namespace isonet
