#pragma once

#include <iosfwd>
#include <string>

#include "wmx2/model.hpp"

namespace wmx2 {

// Weight file, little-endian:
//   magic "WMX2" | version u32 = 1
//   config: S u32, L u32, C u32, mlp_mult f32, dropout f32, upsample_mode u8
//   tensor table: count u32, then per tensor
//     name_len u16 | name bytes | rank u8 | dims u32[rank] | payload f32[...]
// Tensors appear in the canonical order of for_each_tensor (stage-major:
// stem, per-block convs then BN, head). Running statistics are stored so a
// reloaded model evaluates identically.

void save_weights(const Model& model, std::ostream& out);
void save_weights(const Model& model, const std::string& path);

Model load_weights(std::istream& in);
Model load_weights(const std::string& path);

}  // namespace wmx2
