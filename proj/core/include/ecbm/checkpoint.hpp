// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Binary checkpoint container:
//
//   "ECBM"                 4 bytes magic
//   version                u32
//   K, M, feature_dim, embed_dim             u32 x 4
//   dropout, lambda_c, lambda_g, lambda_c_inf, lambda_g_inf   f64 x 5
//   record count           u32
//   per record: name length u32, name bytes, rank u32, extents u32 x rank,
//               values f64 x prod(extents)
//
// Every integer and double is little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "ecbm/model.hpp"

namespace ecbm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Theta& theta);
/// Throws ParseError on bad magic, version, truncation or shape mismatch.
Theta decode_checkpoint(std::string_view bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const Theta& theta, const std::filesystem::path& path);
Theta load_checkpoint(const std::filesystem::path& path);

/// Atomic whole-file write used by every on-disk artifact.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace ecbm
