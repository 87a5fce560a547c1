//
// envelope.cpp
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

#include "posteid/envelope.hpp"

#include <algorithm>
#include <cstring>

#include "json.hpp"

namespace posteid {

using nlohmann::json;

KeyPair derive_keypair(const std::array<uint8_t, 32>& seed) {
    Bytes sk_input = to_bytes("sk");
    sk_input.insert(sk_input.end(), seed.begin(), seed.end());
    KeyPair kp;
    kp.secret = sha256(sk_input);
    Bytes pk_input = to_bytes("pk");
    pk_input.insert(pk_input.end(), kp.secret.begin(), kp.secret.end());
    kp.public_key = sha256(pk_input);
    return kp;
}

static Bytes keystream(const std::array<uint8_t, 32>& key, const Nonce& nonce, size_t len) {
    Bytes out;
    out.reserve(len + 32);
    uint32_t block = 0;
    while (out.size() < len) {
        Bytes input(key.begin(), key.end());
        input.insert(input.end(), nonce.begin(), nonce.end());
        input.push_back(static_cast<uint8_t>(block >> 24));
        input.push_back(static_cast<uint8_t>(block >> 16));
        input.push_back(static_cast<uint8_t>(block >> 8));
        input.push_back(static_cast<uint8_t>(block));
        Digest d = sha256(input);
        out.insert(out.end(), d.begin(), d.end());
        ++block;
    }
    out.resize(len);
    return out;
}

static std::array<uint8_t, 16> compute_tag(const std::array<uint8_t, 32>& key, const Nonce& nonce,
                                           std::span<const uint8_t> ct) {
    Bytes input(key.begin(), key.end());
    input.insert(input.end(), nonce.begin(), nonce.end());
    input.insert(input.end(), ct.begin(), ct.end());
    Digest d = sha256(input);
    std::array<uint8_t, 16> tag{};
    std::copy_n(d.begin(), 16, tag.begin());
    return tag;
}

Bytes seal(CipherSuiteId, const std::array<uint8_t, 32>& key, const Nonce& nonce,
           std::span<const uint8_t> plaintext) {
    Bytes ks = keystream(key, nonce, plaintext.size());
    Bytes out(nonce.begin(), nonce.end());
    for (size_t i = 0; i < plaintext.size(); ++i) out.push_back(plaintext[i] ^ ks[i]);
    auto tag = compute_tag(key, nonce, std::span<const uint8_t>(out).subspan(12));
    out.insert(out.end(), tag.begin(), tag.end());
    return out;
}

OpenResult open(CipherSuiteId, const std::array<uint8_t, 32>& key,
                std::span<const uint8_t> sealed) {
    if (sealed.size() < kSealOverhead) return OpenError::Truncated;
    Nonce nonce;
    std::copy_n(sealed.begin(), 12, nonce.begin());
    auto ct = sealed.subspan(12, sealed.size() - kSealOverhead);
    auto tag = sealed.subspan(sealed.size() - 16);
    auto expect = compute_tag(key, nonce, ct);
    if (!std::equal(tag.begin(), tag.end(), expect.begin())) return OpenError::TagMismatch;
    Bytes ks = keystream(key, nonce, ct.size());
    Bytes pt;
    pt.reserve(ct.size());
    for (size_t i = 0; i < ct.size(); ++i) pt.push_back(ct[i] ^ ks[i]);
    return pt;
}

Bytes hybrid_seal(const std::array<uint8_t, 32>& recipient_public,
                  const std::array<uint8_t, 32>& eph, const Nonce& nonce,
                  std::span<const uint8_t> plaintext) {
    Bytes kek_input(recipient_public.begin(), recipient_public.end());
    kek_input.insert(kek_input.end(), eph.begin(), eph.end());
    Digest kek = sha256(kek_input);
    Bytes out(eph.begin(), eph.end());
    Bytes inner = seal(CipherSuiteId::ToyV1, kek, nonce, plaintext);
    out.insert(out.end(), inner.begin(), inner.end());
    return out;
}

OpenResult hybrid_open(const std::array<uint8_t, 32>& recipient_public,
                       std::span<const uint8_t> sealed) {
    if (sealed.size() < kHybridOverhead) return OpenError::Truncated;
    Bytes kek_input(recipient_public.begin(), recipient_public.end());
    kek_input.insert(kek_input.end(), sealed.begin(), sealed.begin() + 32);
    Digest kek = sha256(kek_input);
    return open(CipherSuiteId::ToyV1, kek, sealed.subspan(32));
}

static Digest cert_signature(const KeyPair& issuer, const std::string& subject_id,
                             const std::array<uint8_t, 32>& subject_public, CertRole role) {
    Bytes input(issuer.secret.begin(), issuer.secret.end());
    input.insert(input.end(), subject_id.begin(), subject_id.end());
    input.insert(input.end(), subject_public.begin(), subject_public.end());
    input.push_back(static_cast<uint8_t>(role));
    return sha256(input);
}

Certificate issue_certificate(const KeyPair& issuer, const std::string& issuer_id,
                              const std::string& subject_id,
                              const std::array<uint8_t, 32>& subject_public, CertRole role) {
    Certificate cert;
    cert.subject_id = subject_id;
    cert.subject_public = subject_public;
    cert.issuer_id = issuer_id;
    cert.role = role;
    cert.signature = cert_signature(issuer, subject_id, subject_public, role);
    return cert;
}

bool verify_certificate(const KeyPair& issuer, const Certificate& cert) {
    return cert.signature == cert_signature(issuer, cert.subject_id, cert.subject_public,
                                            cert.role);
}

static const char* role_name(CertRole role) {
    switch (role) {
        case CertRole::Server: return "SERVER";
        case CertRole::App: return "APP";
        case CertRole::Reg: return "REG";
    }
    return "?";
}

static std::optional<CertRole> role_from_name(const std::string& s) {
    if (s == "SERVER") return CertRole::Server;
    if (s == "APP") return CertRole::App;
    if (s == "REG") return CertRole::Reg;
    return std::nullopt;
}

std::string certificate_to_json(const Certificate& cert) {
    json j;
    j["subject_id"] = cert.subject_id;
    j["subject_public"] = to_hex(cert.subject_public);
    j["issuer_id"] = cert.issuer_id;
    j["signature"] = to_hex(cert.signature);
    j["role"] = role_name(cert.role);
    return j.dump();
}

static std::optional<std::array<uint8_t, 32>> hex32(const std::string& s) {
    auto b = from_hex(s);
    if (!b || b->size() != 32) return std::nullopt;
    std::array<uint8_t, 32> out{};
    std::copy(b->begin(), b->end(), out.begin());
    return out;
}

std::optional<Certificate> certificate_from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    if (!j.contains("subject_id") || !j["subject_id"].is_string()) return std::nullopt;
    if (!j.contains("issuer_id") || !j["issuer_id"].is_string()) return std::nullopt;
    if (!j.contains("subject_public") || !j["subject_public"].is_string()) return std::nullopt;
    if (!j.contains("signature") || !j["signature"].is_string()) return std::nullopt;
    if (!j.contains("role") || !j["role"].is_string()) return std::nullopt;
    Certificate cert;
    cert.subject_id = j["subject_id"].get<std::string>();
    cert.issuer_id = j["issuer_id"].get<std::string>();
    auto pub = hex32(j["subject_public"].get<std::string>());
    auto sig = hex32(j["signature"].get<std::string>());
    auto role = role_from_name(j["role"].get<std::string>());
    if (!pub || !sig || !role) return std::nullopt;
    cert.subject_public = *pub;
    cert.signature = *sig;
    cert.role = *role;
    return cert;
}

ClientIdentity make_identity(const std::string& uuid) {
    ClientIdentity id;
    id.uuid = uuid;
    id.uuid_hash = sha256(uuid);
    return id;
}

std::string format_uuid(std::span<const uint8_t> raw16) {
    std::string hex = to_hex(raw16.first(16));
    return hex.substr(0, 8) + "-" + hex.substr(8, 4) + "-" + hex.substr(12, 4) + "-" +
           hex.substr(16, 4) + "-" + hex.substr(20, 12);
}

// (seq, endpoint, direction, enc), arrow-by-arrow. Message 11 is the
// out-of-band SMS, so it has no row. 16..19 cover the device-management
// screen and the level-2 action endpoint.
static constexpr WireRule kWireRules[] = {
    {1, "/registerinit", Direction::Request, EncBinding::Codk},
    {2, "/registerinit", Direction::Response, EncBinding::Codk},
    {3, "/register", Direction::Request, EncBinding::Srvk},
    {4, "/register", Direction::Response, EncBinding::Appk},
    {5, "/activation", Direction::Request, EncBinding::Srvk},
    {6, "/activation", Direction::Response, EncBinding::Plain},
    {7, "/xmobileauth", Direction::Request, EncBinding::Srvk},
    {8, "/xmobileauth", Direction::Response, EncBinding::Plain},
    {9, "/xmobileauth", Direction::Request, EncBinding::Srvk},
    {10, "/xmobileauth", Direction::Response, EncBinding::Plain},
    {12, "/xmobileauth", Direction::Request, EncBinding::Srvk},
    {13, "/xmobileauth", Direction::Response, EncBinding::Appk},
    {14, "/registerapp", Direction::Request, EncBinding::Srvk},
    {15, "/registerapp", Direction::Response, EncBinding::Appk},
    {16, "/disableapp", Direction::Request, EncBinding::Srvk},
    {17, "/disableapp", Direction::Response, EncBinding::Plain},
    {18, "/level2action", Direction::Request, EncBinding::Srvk},
    {19, "/level2action", Direction::Response, EncBinding::Plain},
};

std::span<const WireRule> wire_rules() {
    return kWireRules;
}

const WireRule* find_wire_rule(int seq) {
    for (const auto& rule : kWireRules) {
        if (rule.seq == seq) return &rule;
    }
    return nullptr;
}

bool is_valid_status(int status) {
    switch (status) {
        case 200:
        case 400:
        case 401:
        case 403:
        case 409:
        case 423: return true;
        default: return false;
    }
}

bool envelope_is_valid(const Envelope& e) {
    if (e.version != 1) return false;
    const WireRule* rule = find_wire_rule(e.seq);
    if (!rule) return false;
    if (e.endpoint != rule->endpoint || e.dir != rule->dir) return false;
    if (e.dir == Direction::Request) {
        if (e.status.has_value()) return false;
        if (e.enc != rule->enc) return false;
    } else {
        if (!e.status || !is_valid_status(*e.status)) return false;
        // error responses carry no sealed content and fall back to plain
        if (*e.status == 200 ? e.enc != rule->enc
                             : (e.enc != rule->enc && e.enc != EncBinding::Plain))
            return false;
    }
    return true;
}

static const char* enc_name(EncBinding enc) {
    switch (enc) {
        case EncBinding::Codk: return "codk";
        case EncBinding::Srvk: return "srvk";
        case EncBinding::Appk: return "appk";
        case EncBinding::Plain: return "plain";
    }
    return "?";
}

static std::optional<EncBinding> enc_from_name(const std::string& s) {
    if (s == "codk") return EncBinding::Codk;
    if (s == "srvk") return EncBinding::Srvk;
    if (s == "appk") return EncBinding::Appk;
    if (s == "plain") return EncBinding::Plain;
    return std::nullopt;
}

std::string encode_envelope(const Envelope& e) {
    if (!envelope_is_valid(e)) throw InvalidEnvelope("envelope invariants violated");
    json j;  // nlohmann objects serialize with sorted keys
    j["v"] = e.version;
    j["seq"] = e.seq;
    j["endpoint"] = e.endpoint;
    j["dir"] = e.dir == Direction::Request ? "req" : "rsp";
    if (e.status) j["status"] = *e.status;
    j["enc"] = enc_name(e.enc);
    j["payload"] = base64_encode(e.payload);
    return j.dump();
}

DecodeResult decode_envelope(std::string_view bytes) {
    json j = json::parse(bytes, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return DecodeError::ParseError;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (key != "v" && key != "seq" && key != "endpoint" && key != "dir" && key != "status" &&
            key != "enc" && key != "payload")
            return DecodeError::SchemaError;
    }
    if (!j.contains("v") || !j["v"].is_number_integer()) return DecodeError::SchemaError;
    if (!j.contains("seq") || !j["seq"].is_number_integer()) return DecodeError::SchemaError;
    if (!j.contains("endpoint") || !j["endpoint"].is_string()) return DecodeError::SchemaError;
    if (!j.contains("dir") || !j["dir"].is_string()) return DecodeError::SchemaError;
    if (!j.contains("enc") || !j["enc"].is_string()) return DecodeError::SchemaError;
    if (!j.contains("payload") || !j["payload"].is_string()) return DecodeError::SchemaError;
    if (j.contains("status") && !j["status"].is_number_integer()) return DecodeError::SchemaError;

    Envelope e;
    e.version = j["v"].get<int>();
    e.seq = j["seq"].get<int>();
    e.endpoint = j["endpoint"].get<std::string>();
    std::string dir = j["dir"].get<std::string>();
    if (dir == "req")
        e.dir = Direction::Request;
    else if (dir == "rsp")
        e.dir = Direction::Response;
    else
        return DecodeError::SchemaError;
    if (j.contains("status")) e.status = j["status"].get<int>();
    auto enc = enc_from_name(j["enc"].get<std::string>());
    if (!enc) return DecodeError::SchemaError;
    e.enc = *enc;
    auto payload = base64_decode(j["payload"].get<std::string>());
    if (!payload) return DecodeError::ParseError;
    e.payload = std::move(*payload);
    if (!envelope_is_valid(e)) return DecodeError::SchemaError;
    // canonical form is unique: duplicates, reordered keys and loose
    // whitespace all fail the re-encode comparison
    if (encode_envelope(e) != bytes) return DecodeError::SchemaError;
    return e;
}

}  // namespace posteid
