#include "scunetpp/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace scunet {

namespace {

void put_u32_le(std::ostream& os, uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("TSR1: truncated extent field");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_u64_le(std::ostream& os, uint64_t v) {
    put_u32_le(os, static_cast<uint32_t>(v & 0xffffffffu));
    put_u32_le(os, static_cast<uint32_t>(v >> 32));
}

uint64_t get_u64_le(std::istream& is) {
    const uint64_t lo = get_u32_le(is);
    const uint64_t hi = get_u32_le(is);
    return lo | (hi << 32);
}

}  // namespace

void write_tsr1(std::ostream& os, const Tensor& t, Tsr1Dtype dtype) {
    os.write("TSR1", 4);
    const uint8_t dcode = static_cast<uint8_t>(dtype);
    os.write(reinterpret_cast<const char*>(&dcode), 1);
    const uint8_t rank = static_cast<uint8_t>(t.rank());
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (int64_t d : t.shape()) put_u32_le(os, static_cast<uint32_t>(d));
    if (dtype == Tsr1Dtype::F32) {
        for (double v : t.data()) {
            const float f = static_cast<float>(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32_le(os, bits);
        }
    } else {
        for (double v : t.data()) {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_u64_le(os, bits);
        }
    }
    if (!os) throw FormatError("TSR1: write failed");
}

Tensor read_tsr1(std::istream& is, Tsr1Dtype* dtype_out) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TSR1", 4) != 0) {
        throw FormatError("TSR1: bad magic bytes");
    }
    uint8_t dcode = 0, rank = 0;
    is.read(reinterpret_cast<char*>(&dcode), 1);
    is.read(reinterpret_cast<char*>(&rank), 1);
    if (!is) throw FormatError("TSR1: truncated header");
    if (dcode > 1) throw FormatError("TSR1: unknown dtype code " + std::to_string(dcode));
    Shape shape(rank);
    for (uint8_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(get_u32_le(is));
    const int64_t n = shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    if (dcode == 0) {
        for (int64_t i = 0; i < n; ++i) {
            const uint32_t bits = get_u32_le(is);
            float f;
            std::memcpy(&f, &bits, 4);
            data[static_cast<size_t>(i)] = static_cast<double>(f);
        }
    } else {
        for (int64_t i = 0; i < n; ++i) {
            const uint64_t bits = get_u64_le(is);
            double v;
            std::memcpy(&v, &bits, 8);
            data[static_cast<size_t>(i)] = v;
        }
    }
    if (!is) throw FormatError("TSR1: truncated payload");
    if (dtype_out) *dtype_out = static_cast<Tsr1Dtype>(dcode);
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tsr1(const std::filesystem::path& path, const Tensor& t, Tsr1Dtype dtype) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    write_tsr1(os, t, dtype);
}

Tensor load_tsr1(const std::filesystem::path& path, Tsr1Dtype* dtype_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string());
    try {
        return read_tsr1(is, dtype_out);
    } catch (const FormatError& e) {
        throw FormatError(std::string(e.what()) + " in " + path.string());
    }
}

}  // namespace scunet
