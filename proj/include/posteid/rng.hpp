//
// rng.hpp
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

#include <cstdio>
#include <random>

#include "posteid/bytes.hpp"
#include "posteid/envelope.hpp"

namespace posteid {

/// Single seeded generator behind every random value in a scenario
/// (uuids, keys, nonces, eph values, otps). Consumption order is fixed
/// by the call sites, which makes whole transcripts reproducible.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    Bytes bytes(size_t n) {
        Bytes out;
        out.reserve(n);
        for (size_t i = 0; i < n; ++i)
            out.push_back(static_cast<uint8_t>(std::uniform_int_distribution<int>(0, 255)(gen_)));
        return out;
    }

    std::array<uint8_t, 32> bytes32() {
        std::array<uint8_t, 32> out{};
        Bytes b = bytes(32);
        std::copy(b.begin(), b.end(), out.begin());
        return out;
    }

    Nonce nonce() {
        Nonce out{};
        Bytes b = bytes(12);
        std::copy(b.begin(), b.end(), out.begin());
        return out;
    }

    std::string uuid() { return format_uuid(bytes(16)); }

    /// Uniform 6-decimal-digit code, zero-padded.
    std::string otp6() {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%06u",
                      std::uniform_int_distribution<uint32_t>(0, 999999)(gen_));
        return buf;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace posteid
