//
// envelope.hpp
//
// Cryptographic envelopes for the device-activation wire protocol: the
// TOY_V1 deterministic cipher suite, key material, simplified
// certificates, and the canonical JSON wire format.
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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>

#include "posteid/bytes.hpp"

namespace posteid {

enum class CipherSuiteId { ToyV1 };

struct SymmetricKey {
    std::array<uint8_t, 32> bytes{};
};

/// Toy keypair: public = H("pk" || secret), secret = H("sk" || seed).
struct KeyPair {
    std::array<uint8_t, 32> secret{};
    std::array<uint8_t, 32> public_key{};
};

KeyPair derive_keypair(const std::array<uint8_t, 32>& seed);

using Nonce = std::array<uint8_t, 12>;

// --- TOY_V1 authenticated encryption -------------------------------------
//
// seal output = nonce || ct || tag
//   keystream block i = SHA-256(key || nonce || i as 4-byte big-endian)
//   tag = first 16 bytes of SHA-256(key || nonce || ct)
// Deterministic by construction; the suite models the {.}_k notation of
// the protocol diagram, it is not real cryptography.

inline constexpr size_t kSealOverhead = 28;  // 12 nonce + 16 tag

Bytes seal(CipherSuiteId suite, const std::array<uint8_t, 32>& key, const Nonce& nonce,
           std::span<const uint8_t> plaintext);

enum class OpenError { TagMismatch, Truncated };

using OpenResult = std::variant<Bytes, OpenError>;

OpenResult open(CipherSuiteId suite, const std::array<uint8_t, 32>& key,
                std::span<const uint8_t> sealed);

// --- Toy hybrid sealing ----------------------------------------------------
//
// kek = SHA-256(recipient_public || eph); output = eph || seal(kek, ...).
// The eph value travels in clear, so this binds ciphertexts to the
// recipient key deterministically without providing public-key security.

inline constexpr size_t kHybridOverhead = 60;  // 32 eph + kSealOverhead

Bytes hybrid_seal(const std::array<uint8_t, 32>& recipient_public,
                  const std::array<uint8_t, 32>& eph, const Nonce& nonce,
                  std::span<const uint8_t> plaintext);

OpenResult hybrid_open(const std::array<uint8_t, 32>& recipient_public,
                       std::span<const uint8_t> sealed);

// --- Certificates ----------------------------------------------------------

enum class CertRole : uint8_t { Server = 0x01, App = 0x02, Reg = 0x03 };

/// MAC-style toy certificate: the signature is keyed on the issuer
/// secret, so only the issuer can verify. Clients pin instead.
struct Certificate {
    std::string subject_id;
    std::array<uint8_t, 32> subject_public{};
    std::string issuer_id;
    std::array<uint8_t, 32> signature{};
    CertRole role = CertRole::Server;

    bool operator==(const Certificate&) const = default;
};

Certificate issue_certificate(const KeyPair& issuer, const std::string& issuer_id,
                              const std::string& subject_id,
                              const std::array<uint8_t, 32>& subject_public, CertRole role);

bool verify_certificate(const KeyPair& issuer, const Certificate& cert);

/// Certificates cross the wire inside payloads as canonical JSON.
std::string certificate_to_json(const Certificate& cert);
std::optional<Certificate> certificate_from_json(const std::string& json);

// --- Client identity -------------------------------------------------------

/// uuid rendered 8-4-4-4-12 lowercase hex; uuid_hash = SHA-256 of the
/// UTF-8 bytes of that string.
struct ClientIdentity {
    std::string uuid;
    Digest uuid_hash{};
};

ClientIdentity make_identity(const std::string& uuid);
std::string format_uuid(std::span<const uint8_t> raw16);

// --- Envelope --------------------------------------------------------------

enum class Direction { Request, Response };
enum class EncBinding { Codk, Srvk, Appk, Plain };

/// One wire message. seq follows the protocol diagram numbering
/// (1..15, message 11 being the out-of-band SMS); seqs 16..19 are the
/// device-management and level-2 action extensions.
struct Envelope {
    int version = 1;
    int seq = 0;
    std::string endpoint;
    Direction dir = Direction::Request;
    std::optional<int> status;  // responses only
    EncBinding enc = EncBinding::Plain;
    Bytes payload;

    bool operator==(const Envelope&) const = default;
};

/// Fixed (seq, endpoint, direction, enc) binding table. Error responses
/// downgrade enc to PLAIN; the table row applies to requests and to
/// 200 responses.
struct WireRule {
    int seq;
    const char* endpoint;
    Direction dir;
    EncBinding enc;
};

std::span<const WireRule> wire_rules();
const WireRule* find_wire_rule(int seq);

bool is_valid_status(int status);

/// Envelope invariants: version 1, seq known, endpoint/direction match
/// the table, enc matches the table or is PLAIN on an error response,
/// requests carry no status, responses carry a known status.
bool envelope_is_valid(const Envelope& e);

struct InvalidEnvelope : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Canonical encoding: JSON object, keys sorted, no whitespace, payload
/// base64. Byte-stable for equal inputs. Throws InvalidEnvelope.
std::string encode_envelope(const Envelope& e);

enum class DecodeError { ParseError, SchemaError };

using DecodeResult = std::variant<Envelope, DecodeError>;

/// Strict inverse of encode_envelope: anything that does not re-encode
/// to the exact input bytes is rejected.
DecodeResult decode_envelope(std::string_view bytes);

}  // namespace posteid
