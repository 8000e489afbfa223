#include "lorentzfm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "lorentzfm/errors.hpp"

namespace lfm {

namespace {

constexpr char kMagic[4] = {'L', 'F', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    write_bytes(out, &v, sizeof(T));
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw DataError("checkpoint " + path + " is truncated");
    }
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v;
    read_bytes(in, &v, sizeof(T), path);
    return v;
}

void write_matrix(std::ofstream& out, const RowMatrix& m) {
    write_bytes(out, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void read_matrix(std::ifstream& in, RowMatrix& m, const std::string& path) {
    read_bytes(in, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), path);
}

void write_vector(std::ofstream& out, const Eigen::VectorXd& v) {
    write_bytes(out, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

void read_vector(std::ifstream& in, Eigen::VectorXd& v, const std::string& path) {
    read_bytes(in, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()), path);
}

}  // namespace

std::string to_string(ModelKind kind) {
    return kind == ModelKind::kLorentzFm ? "lorentzfm" : "fm";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "lorentzfm") return ModelKind::kLorentzFm;
    if (s == "fm") return ModelKind::kFm;
    throw ConfigError("unknown model '" + s + "' (expected lorentzfm|fm)");
}

Eigen::Index Checkpoint::count() const {
    return kind == ModelKind::kLorentzFm ? table.count() : fm.count();
}

Eigen::Index Checkpoint::dim() const {
    return kind == ModelKind::kLorentzFm ? table.dim() : fm.dim();
}

std::int64_t Checkpoint::free_parameters() const {
    return kind == ModelKind::kLorentzFm ? table.free_parameters() : fm.free_parameters();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    write_bytes(out, kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint8_t>(ckpt.kind));
    write_pod(out, static_cast<std::uint64_t>(ckpt.count()));
    write_pod(out, static_cast<std::uint64_t>(ckpt.dim()));
    write_pod(out, ckpt.seed);
    write_pod(out, ckpt.epoch);
    write_pod(out, static_cast<std::uint8_t>(ckpt.adam.has_value() ? 1 : 0));

    if (ckpt.kind == ModelKind::kLorentzFm) {
        write_matrix(out, ckpt.table.rows);
    } else {
        write_pod(out, ckpt.fm.bias);
        write_vector(out, ckpt.fm.linear);
        write_matrix(out, ckpt.fm.factors);
    }
    if (ckpt.adam) {
        write_pod(out, ckpt.adam->step);
        write_pod(out, ckpt.adam->m_bias);
        write_pod(out, ckpt.adam->v_bias);
        write_vector(out, ckpt.adam->m_linear);
        write_vector(out, ckpt.adam->v_linear);
        write_matrix(out, ckpt.adam->m_factors);
        write_matrix(out, ckpt.adam->v_factors);
    }
    if (!out) throw DataError("short write on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    const std::string p = path.string();

    char magic[4];
    read_bytes(in, magic, 4, p);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("checkpoint " + p + " has a bad magic string");
    }
    const auto version = read_pod<std::uint32_t>(in, p);
    if (version != kVersion) {
        throw DataError("checkpoint " + p + " has unsupported version " +
                        std::to_string(version));
    }
    Checkpoint ckpt;
    const auto kind = read_pod<std::uint8_t>(in, p);
    if (kind > 1) throw DataError("checkpoint " + p + " has an unknown model kind");
    ckpt.kind = static_cast<ModelKind>(kind);
    const auto count = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in, p));
    const auto dim = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in, p));
    if (count < 1 || dim < 1 || count > (1ll << 32) || dim > (1 << 16)) {
        throw DataError("checkpoint " + p + " has implausible dimensions");
    }
    ckpt.seed = read_pod<std::uint64_t>(in, p);
    ckpt.epoch = read_pod<std::uint64_t>(in, p);
    const bool has_adam = read_pod<std::uint8_t>(in, p) != 0;

    if (ckpt.kind == ModelKind::kLorentzFm) {
        ckpt.table.seed = ckpt.seed;
        ckpt.table.rows.resize(count, dim);
        read_matrix(in, ckpt.table.rows, p);
        if (ckpt.table.max_manifold_residual() > kManifoldTol) {
            throw DataError("checkpoint " + p + " rows are off the hyperboloid (residual " +
                            std::to_string(ckpt.table.max_manifold_residual()) + ")");
        }
    } else {
        ckpt.fm.seed = ckpt.seed;
        ckpt.fm.bias = read_pod<double>(in, p);
        ckpt.fm.linear.resize(count);
        read_vector(in, ckpt.fm.linear, p);
        ckpt.fm.factors.resize(count, dim);
        read_matrix(in, ckpt.fm.factors, p);
    }
    if (has_adam) {
        AdamState adam = make_adam_state(count, dim);
        adam.step = read_pod<std::int64_t>(in, p);
        adam.m_bias = read_pod<double>(in, p);
        adam.v_bias = read_pod<double>(in, p);
        read_vector(in, adam.m_linear, p);
        read_vector(in, adam.v_linear, p);
        read_matrix(in, adam.m_factors, p);
        read_matrix(in, adam.v_factors, p);
        ckpt.adam = std::move(adam);
    }
    return ckpt;
}

}  // namespace lfm
