#include "isonet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "isonet/data.hpp"

namespace isonet {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'I', 'S', 'O', 'N'};

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string text(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const NetworkParams& params) {
    std::string out(kMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string spec = serialize_spec(params.spec);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(spec.size()));
    out += spec;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.params.size()));
    for (const Param& p : params.params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
        for (int d : p.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (double v : p.value) put<double>(out, v);
    }
    return out;
}

NetworkParams decode_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (in.text(4, "magic") != std::string(kMagic, 4)) throw FormatError("bad checkpoint magic", 0);
    const std::size_t version_at = in.pos();
    const auto version = in.get<std::uint32_t>("format version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
    }
    const auto spec_len = in.get<std::uint32_t>("spec length");
    const std::size_t spec_at = in.pos();
    NetworkSpec spec;
    try {
        spec = parse_spec(in.text(spec_len, "spec text"));
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("bad spec in checkpoint: ") + e.what(), spec_at);
    }
    NetworkParams net = build(spec, InitScheme::Delta, 0);

    const std::size_t count_at = in.pos();
    const auto count = in.get<std::uint32_t>("parameter count");
    if (count != net.params.size()) {
        throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, spec implies " +
                              std::to_string(net.params.size()),
                          count_at);
    }
    for (Param& p : net.params) {
        const std::size_t record_at = in.pos();
        const auto name_len = in.get<std::uint32_t>("parameter name length");
        const std::string name = in.text(name_len, "parameter name");
        if (name != p.name) throw FormatError("expected parameter " + p.name + ", found " + name, record_at);
        const std::size_t shape_at = in.pos();
        const auto rank = in.get<std::uint32_t>("parameter rank");
        std::vector<int> shape;
        for (std::uint32_t r = 0; r < rank && r < 8; ++r) shape.push_back(static_cast<int>(in.get<std::uint32_t>("dimension")));
        if (shape != p.shape) throw FormatError("shape mismatch for " + p.name, shape_at);
        for (double& v : p.value) v = in.get<double>("parameter values");
    }
    if (in.remaining() != 0) throw FormatError("trailing bytes after checkpoint", in.pos());
    return net;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const std::string bytes = encode_checkpoint(params);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace isonet
