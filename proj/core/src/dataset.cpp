#include "tpool/dataset.hpp"

#include <cstring>
#include <fstream>

#include "tpool/errors.hpp"
#include "tpool/rng.hpp"

namespace tpool {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'F', '1'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v & 0xff));
    out.push_back(std::uint8_t(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    void need(std::size_t n, const char* what) const {
        if (pos_ + n > bytes_.size())
            throw TruncationError(std::string(what) + " needs " + std::to_string(pos_ + n) +
                                  " bytes, file has " + std::to_string(bytes_.size()));
    }

    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = std::uint16_t(bytes_[pos_]) | std::uint16_t(bytes_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[pos_++];
    }

    float f32(const char* what) {
        std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::size_t pos() const { return pos_; }
    std::size_t size() const { return bytes_.size(); }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

const char* task_name(TaskKind k) {
    return k == TaskKind::kOrder ? "order" : "bag";
}

double SyntheticDataset::class_balance() const {
    if (labels.empty()) return 0.0;
    std::size_t zeros = 0;
    for (std::uint32_t l : labels) zeros += l == 0;
    return double(zeros) / double(labels.size());
}

std::vector<float> marker_a(std::size_t d) {
    std::vector<float> v(d, 0.0f);
    v[0] = kMarkerScale;
    return v;
}

std::vector<float> marker_b(std::size_t d) {
    std::vector<float> v(d, 0.0f);
    v[1] = kMarkerScale;
    return v;
}

namespace {

void check_dims(std::size_t n, std::size_t T, std::size_t D) {
    if (n == 0) throw ConfigError("dataset: n must be positive");
    if (T < 3) throw ConfigError("dataset: T must be >= 3, got " + std::to_string(T));
    if (D < 4) throw ConfigError("dataset: D must be >= 4, got " + std::to_string(D));
}

void fill_noise(float* row, std::size_t d, Rng& rng) {
    for (std::size_t j = 0; j < d; ++j) row[j] = float(rng.normal());
}

}  // namespace

SyntheticDataset gen_order_task(std::size_t n, std::size_t T, std::size_t D,
                                std::uint64_t seed) {
    check_dims(n, T, D);
    SyntheticDataset ds;
    ds.n = std::uint32_t(n);
    ds.T = std::uint32_t(T);
    ds.D = std::uint32_t(D);
    ds.n_classes = 2;
    ds.task = TaskKind::kOrder;
    ds.seed = seed;
    ds.labels.resize(n);
    ds.features.resize(n * T * D);

    const std::vector<float> a = marker_a(D), b = marker_b(D);
    Rng rng = Rng(seed).child("order");
    for (std::size_t i = 0; i < n; ++i) {
        // distinct positions, uniform over ordered pairs
        const std::size_t pos_a = rng.index(T);
        std::size_t pos_b = rng.index(T - 1);
        if (pos_b >= pos_a) ++pos_b;
        ds.labels[i] = pos_a < pos_b ? 0 : 1;
        float* sample = ds.features.data() + i * T * D;
        for (std::size_t t = 0; t < T; ++t) {
            float* row = sample + t * D;
            if (t == pos_a)
                std::memcpy(row, a.data(), D * sizeof(float));
            else if (t == pos_b)
                std::memcpy(row, b.data(), D * sizeof(float));
            else
                fill_noise(row, D, rng);
        }
    }
    return ds;
}

SyntheticDataset gen_bag_task(std::size_t n, std::size_t T, std::size_t D, std::uint64_t seed) {
    check_dims(n, T, D);
    SyntheticDataset ds;
    ds.n = std::uint32_t(n);
    ds.T = std::uint32_t(T);
    ds.D = std::uint32_t(D);
    ds.n_classes = 2;
    ds.task = TaskKind::kBag;
    ds.seed = seed;
    ds.labels.resize(n);
    ds.features.resize(n * T * D);

    const std::vector<float> a = marker_a(D), b = marker_b(D);
    Rng rng = Rng(seed).child("bag");
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t label = std::uint32_t(rng.index(2));
        const std::size_t pos = rng.index(T);
        ds.labels[i] = label;
        const std::vector<float>& marker = label == 0 ? a : b;
        float* sample = ds.features.data() + i * T * D;
        for (std::size_t t = 0; t < T; ++t) {
            float* row = sample + t * D;
            if (t == pos)
                std::memcpy(row, marker.data(), D * sizeof(float));
            else
                fill_noise(row, D, rng);
        }
    }
    return ds;
}

std::vector<std::uint8_t> serialize_dataset(const SyntheticDataset& ds) {
    std::vector<std::uint8_t> out;
    out.reserve(24 + 4 * ds.labels.size() + 4 * ds.features.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kVersion);
    put_u32(out, ds.n);
    put_u32(out, ds.T);
    put_u32(out, ds.D);
    put_u32(out, ds.n_classes);
    out.push_back(kDtypeF32);
    out.push_back(std::uint8_t(ds.task));
    for (std::uint32_t l : ds.labels) put_u32(out, l);
    for (float f : ds.features) put_f32(out, f);
    return out;
}

SyntheticDataset deserialize_dataset(const std::vector<std::uint8_t>& bytes) {
    Reader body(bytes);
    body.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw BadMagicError("expected 'TPF1'");
    SyntheticDataset ds;
    body.u32("magic");  // past the checked magic
    const std::uint16_t version = body.u16("version");
    if (version != kVersion)
        throw VersionError("file version " + std::to_string(version) + ", reader supports " +
                           std::to_string(kVersion));
    ds.n = body.u32("n");
    ds.T = body.u32("T");
    ds.D = body.u32("D");
    ds.n_classes = body.u32("n_classes");
    const std::uint8_t dtype = body.u8("dtype");
    if (dtype != kDtypeF32)
        throw VersionError("dtype code " + std::to_string(dtype) + " not supported");
    ds.task = TaskKind(body.u8("task"));

    const std::size_t n = ds.n, ntd = std::size_t(ds.n) * ds.T * ds.D;
    const std::size_t expected = body.pos() + 4 * n + 4 * ntd;
    if (bytes.size() != expected)
        throw TruncationError("payload expects " + std::to_string(expected) +
                              " bytes, file has " + std::to_string(bytes.size()));
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = body.u32("label");
    ds.features.resize(ntd);
    for (std::size_t i = 0; i < ntd; ++i) ds.features[i] = body.f32("feature");
    return ds;
}

void write_dataset(const SyntheticDataset& ds, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_dataset(ds);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
    if (!out) throw IoError("short write to '" + path + "'");
}

SyntheticDataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    const std::streamsize size = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError("short read from '" + path + "'");
    return deserialize_dataset(bytes);
}

}  // namespace tpool
