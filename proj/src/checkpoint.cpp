#include "mgpf/checkpoint.hpp"

#include <cstdint>
#include <fstream>

namespace mgpf {

namespace {
constexpr char kMagic[8] = {'M', 'G', 'P', 'F', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}
}  // namespace

Checkpoint Checkpoint::from(ParamList<float>& list, nlohmann::json header) {
    Checkpoint c;
    c.header = std::move(header);
    for (auto& [name, p] : list) {
        if (c.params.count(name)) throw CheckpointError("duplicate parameter name " + name);
        c.params[name] = p->value;
    }
    return c;
}

void Checkpoint::apply(ParamList<float>& list) const {
    if (list.size() != params.size())
        throw CheckpointError("parameter count mismatch: model has " + std::to_string(list.size()) +
                              ", checkpoint has " + std::to_string(params.size()));
    for (auto& [name, p] : list) {
        auto it = params.find(name);
        if (it == params.end()) throw CheckpointError("missing parameter " + name);
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
            throw CheckpointError("shape mismatch for " + name);
        p->value = it->second;
    }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot write " + path);
    os.write(kMagic, sizeof(kMagic));
    std::string header = ckpt.header.dump();
    write_pod<std::uint64_t>(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    write_pod<std::uint64_t>(os, ckpt.params.size());
    for (const auto& [name, m] : ckpt.params) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::int64_t>(os, m.rows());
        write_pod<std::int64_t>(os, m.cols());
        os.write(reinterpret_cast<const char*>(m.data()),
                 static_cast<std::streamsize>(sizeof(float) * m.size()));
    }
    if (!os) throw CheckpointError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingCheckpointError(path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("bad magic in " + path);
    auto hlen = read_pod<std::uint64_t>(is);
    std::string header(hlen, '\0');
    is.read(header.data(), static_cast<std::streamsize>(hlen));
    Checkpoint c;
    c.header = nlohmann::json::parse(header);
    auto n = read_pod<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < n; ++i) {
        auto nlen = read_pod<std::uint32_t>(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        auto rows = read_pod<std::int64_t>(is);
        auto cols = read_pod<std::int64_t>(is);
        MatF m(rows, cols);
        is.read(reinterpret_cast<char*>(m.data()),
                static_cast<std::streamsize>(sizeof(float) * m.size()));
        if (!is) throw CheckpointError("truncated checkpoint " + path);
        c.params[name] = std::move(m);
    }
    return c;
}

std::string file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingCheckpointError(path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (is) {
        is.read(buf, sizeof(buf));
        std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return std::string(out);
}

}  // namespace mgpf
