#include "adgen/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "adgen/errors.hpp"

namespace adgen {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'G', 'N'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kDtypeF64 = 0;

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("archive: truncated file");
    return v;
}

}  // namespace

void save_archive(const std::string& path, const std::map<std::string, const Tensor*>& entries) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("archive: cannot open for writing: " + path);
    os.write(kMagic, 4);
    put(os, kVersion);
    put(os, static_cast<uint64_t>(entries.size()));
    for (const auto& [name, tensor] : entries) {
        put(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put(os, kDtypeF64);
        put(os, static_cast<uint32_t>(tensor->shape.size()));
        for (int d : tensor->shape) put(os, static_cast<int64_t>(d));
        os.write(reinterpret_cast<const char*>(tensor->data.data()),
                 static_cast<std::streamsize>(tensor->data.size() * sizeof(double)));
    }
    if (!os) throw IoError("archive: write failed: " + path);
}

std::map<std::string, Tensor> load_archive(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("archive: cannot open for reading: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("archive: bad magic in " + path);
    const uint32_t version = get<uint32_t>(is);
    if (version != kVersion) throw IoError("archive: unsupported version");
    const uint64_t count = get<uint64_t>(is);
    std::map<std::string, Tensor> out;
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t name_len = get<uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const uint8_t dtype = get<uint8_t>(is);
        if (dtype != kDtypeF64) throw IoError("archive: unsupported dtype");
        const uint32_t ndim = get<uint32_t>(is);
        std::vector<int> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d)
            shape[d] = static_cast<int>(get<int64_t>(is));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw IoError("archive: truncated payload in " + path);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

void save_params(const std::string& path, const ad::ParamStore& params) {
    std::map<std::string, const Tensor*> entries;
    for (const ad::Parameter* p : params.ordered()) entries[p->name] = &p->value;
    save_archive(path, entries);
}

void load_params(const std::string& path, ad::ParamStore& params) {
    std::map<std::string, Tensor> loaded = load_archive(path);
    for (ad::Parameter* p : params.ordered()) {
        auto it = loaded.find(p->name);
        if (it == loaded.end()) throw IoError("archive: missing parameter " + p->name);
        if (it->second.shape != p->value.shape)
            throw IoError("archive: shape mismatch for " + p->name);
        p->value = std::move(it->second);
        loaded.erase(it);
    }
    if (!loaded.empty())
        throw IoError("archive: unexpected extra parameter " + loaded.begin()->first);
}

uint64_t fnv1a64(const void* data, size_t n) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    uint64_t h = 14695981039346656037ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t file_checksum(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checksum: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    const std::string buf = ss.str();
    return fnv1a64(buf.data(), buf.size());
}

std::string checksum_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace adgen
