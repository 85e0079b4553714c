#pragma once

// PBNN checkpoint files (all integers little-endian):
//
//   "PBNN"                      4 bytes magic
//   version                     u16 (currently 1)
//   metadata length             u32, followed by that many bytes of UTF-8 JSON
//                               {arch, placement, seed, step, extra}
//   tensor count                u32
//   per tensor:
//     name length u32, name bytes
//     dtype tag   u8 (1 = float32)
//     rank        u32, then rank × u32 dims
//     payload     numel × float32 (IEEE-754, little-endian)

#include <cstdint>
#include <filesystem>
#include <json.hpp>

#include "pbcnn/model.hpp"

namespace pbcnn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  Model model;
  nlohmann::json metadata;
};

/// `extra` is stored verbatim under metadata["extra"].
void save_checkpoint(Model& model, const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object());

/// Throws CheckpointError; never returns a partially filled model.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pbcnn
