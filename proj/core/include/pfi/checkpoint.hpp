#pragma once

#include <string>

#include "pfi/model.hpp"

namespace pfi {

// Versioned binary checkpoint: magic "PFCK", format version u32, the
// ModelConfig as eight u32 fields, then a u32 block count followed by named
// parameter blocks (u32 name length, UTF-8 name, u32 dim count, u32 dims,
// little-endian IEEE-754 doubles). Round-tripping reproduces bitwise
// identical parameters.
void save_checkpoint(const TransformerLM& model, const std::string& path);
TransformerLM load_checkpoint(const std::string& path);

}  // namespace pfi
