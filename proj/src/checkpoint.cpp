#include "cprl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

namespace cprl {

namespace {

constexpr char kMagic[8] = {'C', 'P', 'R', 'L', 'C', 'K', 'P', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw std::runtime_error("checkpoint: truncated file");
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");

    os.write(kMagic, sizeof kMagic);
    put_u32(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& rec : records) {
        put_u32(os, static_cast<std::uint32_t>(rec.name.size()));
        os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
        put_u32(os, static_cast<std::uint32_t>(rec.shape.size()));
        std::size_t numel = 1;
        for (std::size_t d : rec.shape) {
            put_u64(os, d);
            numel *= d;
        }
        if (numel != rec.values.size())
            throw std::runtime_error("checkpoint: record '" + rec.name + "' shape/value mismatch");
        os.write(reinterpret_cast<const char*>(rec.values.data()),
                 static_cast<std::streamsize>(rec.values.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::vector<CheckpointRecord> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);

    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);

    const std::uint32_t count = get_u32(is);
    std::vector<CheckpointRecord> records;
    records.reserve(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        CheckpointRecord rec;
        const std::uint32_t name_len = get_u32(is);
        if (name_len > 4096) throw std::runtime_error("checkpoint: implausible name length");
        rec.name.resize(name_len);
        if (!is.read(rec.name.data(), name_len))
            throw std::runtime_error("checkpoint: truncated file");
        const std::uint32_t ndim = get_u32(is);
        if (ndim > 8) throw std::runtime_error("checkpoint: implausible rank");
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            const std::uint64_t dim = get_u64(is);
            if (dim == 0 || numel > std::numeric_limits<std::size_t>::max() / dim)
                throw std::runtime_error("checkpoint: bad dimension");
            rec.shape.push_back(static_cast<std::size_t>(dim));
            numel *= dim;
        }
        rec.values.resize(numel);
        if (!is.read(reinterpret_cast<char*>(rec.values.data()),
                     static_cast<std::streamsize>(numel * sizeof(double))))
            throw std::runtime_error("checkpoint: truncated file");
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace cprl
