// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace promptbound {

/// 64-bit FNV-1a. Stable across platforms; used for short identifiers.
std::uint64_t fnv1a64(std::string_view data);

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

std::string hex64(std::uint64_t value);

}  // namespace promptbound
