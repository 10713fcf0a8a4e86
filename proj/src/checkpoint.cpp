#include "hebbseed/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "hebbseed/error.hpp"

namespace hebbseed {

namespace {

constexpr char kMagic[8] = {'H', 'E', 'B', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw FormatError("checkpoint truncated: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}

double read_f64(std::istream& is, const std::string& path) {
    std::uint64_t bits = read_u64(is, path);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

} // namespace

void save_checkpoint(Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    write_u64(os, kVersion);

    const std::string spec_text = net.spec.to_text();
    write_u64(os, spec_text.size());
    os.write(spec_text.data(), static_cast<std::streamsize>(spec_text.size()));

    std::vector<ParamRef> params = net.params();
    write_u64(os, params.size());
    for (const ParamRef& p : params) {
        write_u64(os, p.name.size());
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u64(os, p.tensor->rank());
        for (std::size_t d : p.tensor->shape()) write_u64(os, d);
        for (std::size_t i = 0; i < p.tensor->size(); ++i) write_f64(os, (*p.tensor)[i]);
    }
    if (!os) throw FormatError("failed writing checkpoint: " + path);
}

Network load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("not a hebbseed checkpoint: " + path);
    if (read_u64(is, path) != kVersion) throw FormatError("unsupported checkpoint version: " + path);

    std::uint64_t spec_len = read_u64(is, path);
    std::string spec_text(spec_len, '\0');
    if (!is.read(spec_text.data(), static_cast<std::streamsize>(spec_len)))
        throw FormatError("checkpoint truncated reading spec: " + path);

    Rng init_rng(0);
    Network net = Network::build(NetworkSpec::from_text(spec_text), init_rng);
    std::vector<ParamRef> params = net.params();

    std::uint64_t count = read_u64(is, path);
    if (count != params.size())
        throw FormatError("checkpoint/spec mismatch: expected " + std::to_string(params.size()) +
                          " tensors, file has " + std::to_string(count));
    for (ParamRef& p : params) {
        std::uint64_t name_len = read_u64(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), static_cast<std::streamsize>(name_len)))
            throw FormatError("checkpoint truncated reading name: " + path);
        if (name != p.name)
            throw FormatError("checkpoint/spec mismatch: expected tensor '" + p.name +
                              "', file has '" + name + "'");
        std::uint64_t rank = read_u64(is, path);
        std::vector<std::size_t> shape(rank);
        for (std::uint64_t i = 0; i < rank; ++i)
            shape[i] = static_cast<std::size_t>(read_u64(is, path));
        if (shape != p.tensor->shape())
            throw FormatError("checkpoint/spec mismatch: tensor '" + name + "' shape differs");
        for (std::size_t i = 0; i < p.tensor->size(); ++i) (*p.tensor)[i] = read_f64(is, path);
    }
    return net;
}

} // namespace hebbseed
