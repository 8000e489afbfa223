#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "lorentzfm/model.hpp"
#include "lorentzfm/optim.hpp"

namespace lfm {

enum class ModelKind : std::uint8_t { kLorentzFm = 0, kFm = 1 };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct Checkpoint {
    ModelKind kind = ModelKind::kLorentzFm;
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    EmbeddingTable table;           // kLorentzFm payload
    FmParameters fm;                // kFm payload
    std::optional<AdamState> adam;  // kFm optimizer state

    Eigen::Index count() const;
    Eigen::Index dim() const;
    std::int64_t free_parameters() const;
};

// Binary container, native endian. Header: magic "LFM1", version, model
// kind, |V|, k, seed, epoch; then the row-major parameter payload and the
// optional Adam moments. Write/read round-trips are bit-exact.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lfm
