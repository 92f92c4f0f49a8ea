#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stcnn/tensor.hpp"

namespace stcnn {

// Version-tagged binary checkpoint: a key-value meta block followed by a
// shape table and flat little-endian parameter payloads. Layout in
// docs/formats.md.
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values from src into the same-named destination tensors; every
// destination name must be present with a matching shape.
void load_state(std::vector<std::pair<std::string, Tensor>> dst, const Checkpoint& src,
                const std::string& prefix);

}  // namespace stcnn
