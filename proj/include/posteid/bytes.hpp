//
// bytes.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace posteid {

using Bytes = std::vector<uint8_t>;
using Digest = std::array<uint8_t, 32>;

/// SHA-256 of an arbitrary byte span.
Digest sha256(std::span<const uint8_t> data);
Digest sha256(std::string_view data);

Bytes to_bytes(std::string_view s);
std::string to_string(std::span<const uint8_t> b);

/// Lowercase hex, no separators.
std::string to_hex(std::span<const uint8_t> b);
std::optional<Bytes> from_hex(std::string_view hex);

/// Standard-alphabet base64 with padding. Decoding is strict: any
/// character outside the alphabet, bad length, or bad padding fails.
std::string base64_encode(std::span<const uint8_t> b);
std::optional<Bytes> base64_decode(std::string_view b64);

}  // namespace posteid
