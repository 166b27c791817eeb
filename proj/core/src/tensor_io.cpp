#include "dsgate/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <limits>

namespace dsgate {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'T', '1'};
constexpr std::size_t kHeaderBytes = 21;  // magic(4) + dtype(1) + 4 * uint32

void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t offset,
                       const std::string& what) {
    throw FormatError(path.string() + ": " + what + " at byte offset " + std::to_string(offset));
}

}  // namespace

void save_tensor(const Tensor4& x, const std::filesystem::path& path, DType dtype) {
    const Dims d = x.dims();
    for (std::int64_t e : {d.b, d.c, d.h, d.w}) {
        if (e > static_cast<std::int64_t>(std::numeric_limits<std::uint32_t>::max())) {
            throw FormatError(path.string() + ": extent " + std::to_string(e) +
                              " exceeds the 32-bit header field");
        }
    }
    std::string buf;
    buf.reserve(kHeaderBytes + x.size() * 8);
    buf.append(kMagic, 4);
    buf.push_back(static_cast<char>(dtype));
    put_u32le(buf, static_cast<std::uint32_t>(d.b));
    put_u32le(buf, static_cast<std::uint32_t>(d.c));
    put_u32le(buf, static_cast<std::uint32_t>(d.h));
    put_u32le(buf, static_cast<std::uint32_t>(d.w));
    if (dtype == DType::f64) {
        for (double v : x.data()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
    } else {
        for (double v : x.data()) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path.string() + ": cannot open for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError(path.string() + ": write failed");
}

Tensor4 load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string() + ": cannot open for reading");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());

    if (buf.size() < kHeaderBytes) fail(path, buf.size(), "truncated header");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) fail(path, 0, "bad magic (expected \"DST1\")");
    const unsigned char dtype = p[4];
    if (dtype != static_cast<unsigned char>(DType::f32) &&
        dtype != static_cast<unsigned char>(DType::f64)) {
        fail(path, 4, "unknown dtype tag " + std::to_string(dtype));
    }
    std::uint32_t ext[4];
    for (int i = 0; i < 4; ++i) ext[i] = get_u32le(p + 5 + 4 * i);
    std::uint64_t count = 1;
    for (int i = 0; i < 4; ++i) {
        if (ext[i] == 0) fail(path, 5 + 4 * static_cast<std::size_t>(i), "extent must be >= 1");
        if (count > std::numeric_limits<std::uint64_t>::max() / ext[i]) {
            fail(path, 5 + 4 * static_cast<std::size_t>(i), "extent overflow");
        }
        count *= ext[i];
    }
    const std::size_t elem = (dtype == static_cast<unsigned char>(DType::f64)) ? 8 : 4;
    if (count > (std::numeric_limits<std::size_t>::max() - kHeaderBytes) / elem) {
        fail(path, 5, "extent overflow");
    }
    const std::size_t want = kHeaderBytes + static_cast<std::size_t>(count) * elem;
    if (buf.size() < want) {
        fail(path, buf.size(),
             "truncated payload (expected " + std::to_string(want) + " bytes total)");
    }

    std::vector<double> data(static_cast<std::size_t>(count));
    const unsigned char* q = p + kHeaderBytes;
    if (dtype == static_cast<unsigned char>(DType::f64)) {
        for (std::size_t i = 0; i < data.size(); ++i, q += 8) {
            std::uint64_t bits = 0;
            for (int j = 0; j < 8; ++j) bits |= static_cast<std::uint64_t>(q[j]) << (8 * j);
            double v;
            std::memcpy(&v, &bits, 8);
            data[i] = v;
        }
    } else {
        for (std::size_t i = 0; i < data.size(); ++i, q += 4) {
            std::uint32_t bits = 0;
            for (int j = 0; j < 4; ++j) bits |= static_cast<std::uint32_t>(q[j]) << (8 * j);
            float f;
            std::memcpy(&f, &bits, 4);
            data[i] = static_cast<double>(f);
        }
    }
    return Tensor4({static_cast<std::int64_t>(ext[0]), static_cast<std::int64_t>(ext[1]),
                    static_cast<std::int64_t>(ext[2]), static_cast<std::int64_t>(ext[3])},
                   std::move(data));
}

void save_bundle(const std::filesystem::path& dir,
                 const std::vector<std::pair<std::string, const Tensor4*>>& params) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    if (!manifest) throw FormatError((dir / "manifest.txt").string() + ": cannot open for writing");
    for (const auto& [name, tensor] : params) {
        const std::string file = name + ".dst";
        save_tensor(*tensor, dir / file);
        manifest << name << "=" << file << "\n";
    }
}

NamedTensors load_bundle(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.txt";
    std::ifstream manifest(manifest_path);
    if (!manifest) throw FormatError(manifest_path.string() + ": cannot open for reading");
    NamedTensors out;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(manifest_path.string() + ": malformed line '" + line + "'");
        }
        out.emplace_back(line.substr(0, eq), load_tensor(dir / line.substr(eq + 1)));
    }
    return out;
}

}  // namespace dsgate
