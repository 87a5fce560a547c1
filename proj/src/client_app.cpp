//
// client_app.cpp
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

#include "posteid/client_app.hpp"

#include <algorithm>

#include "json.hpp"

namespace posteid {

using nlohmann::json;

std::string Fingerprint::canonical() const {
    return "os=" + os_version + ";rooted=" + (rooted ? "1" : "0") + ";model=" + model;
}

std::optional<Fingerprint> Fingerprint::parse(const std::string& canonical) {
    auto take = [](std::string_view& rest, std::string_view prefix,
                   char sep) -> std::optional<std::string> {
        if (rest.substr(0, prefix.size()) != prefix) return std::nullopt;
        rest.remove_prefix(prefix.size());
        size_t end = sep ? rest.find(sep) : rest.size();
        if (sep && end == std::string_view::npos) return std::nullopt;
        std::string value(rest.substr(0, end));
        rest.remove_prefix(sep ? end + 1 : rest.size());
        return value;
    };
    std::string_view rest = canonical;
    auto os = take(rest, "os=", ';');
    auto rooted = take(rest, "rooted=", ';');
    auto model = take(rest, "model=", '\0');
    if (!os || !rooted || !model) return std::nullopt;
    if (*rooted != "0" && *rooted != "1") return std::nullopt;
    return Fingerprint{*os, *rooted == "1", *model};
}

Fingerprint generate_fingerprint(const Device& device) {
    return Fingerprint{device.os_version, device.rooted, device.model};
}

static Envelope make_request(int seq, const std::string& endpoint, EncBinding enc, Bytes payload) {
    Envelope e;
    e.seq = seq;
    e.endpoint = endpoint;
    e.dir = Direction::Request;
    e.enc = enc;
    e.payload = std::move(payload);
    return e;
}

static Envelope srvk_request(int seq, const std::string& endpoint, const ClientSession& session,
                             const json& body, Rng& rng) {
    Bytes payload = hybrid_seal(session.server_cert->subject_public, rng.bytes32(), rng.nonce(),
                                to_bytes(body.dump()));
    return make_request(seq, endpoint, EncBinding::Srvk, std::move(payload));
}

static std::optional<std::string> open_appk(const ClientSession& session,
                                            const Envelope& response) {
    auto opened = hybrid_open(session.keys.public_key, response.payload);
    if (std::holds_alternative<OpenError>(opened)) return std::nullopt;
    return to_string(std::get<Bytes>(opened));
}

FlowResult run_registration(World& world, const std::string& app_id, ClientSession& session,
                            const AppPackage& package, const Fingerprint& fingerprint, Rng& rng) {
    const std::string hash_hex = to_hex(session.identity.uuid_hash);

    // 1/2: hello under the hard-coded key, pin the server certificate
    json m1;
    m1["uuid_hash"] = hash_hex;
    Envelope r1 = make_request(1, "/registerinit", EncBinding::Codk,
                               seal(CipherSuiteId::ToyV1, package.codk.bytes, rng.nonce(),
                                    to_bytes(m1.dump())));
    Envelope rsp = world.send_http(app_id, r1);
    if (rsp.status != 200) return {false, 1, *rsp.status};
    auto opened = open(CipherSuiteId::ToyV1, package.codk.bytes, rsp.payload);
    if (std::holds_alternative<OpenError>(opened)) return {false, 2, 0};
    auto server_cert = certificate_from_json(to_string(std::get<Bytes>(opened)));
    if (!server_cert || server_cert->role != CertRole::Server) return {false, 2, 0};
    session.server_cert = *server_cert;

    // 3/4: uuid hash, app public key and fingerprint
    json m3;
    m3["uuid_hash"] = hash_hex;
    m3["appk"] = to_hex(session.keys.public_key);
    m3["fing"] = fingerprint.canonical();
    rsp = world.send_http(app_id, srvk_request(3, "/register", session, m3, rng));
    if (rsp.status != 200) return {false, 3, *rsp.status};
    auto app_cert_json = open_appk(session, rsp);
    auto app_cert = app_cert_json ? certificate_from_json(*app_cert_json) : std::nullopt;
    if (!app_cert || app_cert->role != CertRole::App) return {false, 4, 0};
    session.app_cert = *app_cert;

    // 5/6: activation echo
    json m5;
    m5["uuid_hash"] = hash_hex;
    m5["echo"] = hash_hex;
    rsp = world.send_http(app_id, srvk_request(5, "/activation", session, m5, rng));
    if (rsp.status != 200) return {false, 5, *rsp.status};
    return {true, 0, 0};
}

FlowResult run_enrollment(World& world, const std::string& app_id, ClientSession& session,
                          const std::string& usr, const std::string& pwd,
                          const OtpSource& otp_source, const std::string& pid, Rng& rng) {
    const std::string hash_hex = to_hex(session.identity.uuid_hash);

    // 7/8: basic credentials
    json m7;
    m7["level"] = "lvl0";
    m7["usr"] = usr;
    m7["pwd"] = pwd;
    m7["uuid_hash"] = hash_hex;
    Envelope rsp = world.send_http(app_id, srvk_request(7, "/xmobileauth", session, m7, rng));
    if (rsp.status != 200) return {false, 7, *rsp.status};

    // 9/10: elevation request, triggers the out-of-band step
    json m9;
    m9["level"] = "lvl2";
    m9["usr"] = usr;
    m9["uuid"] = session.identity.uuid;
    rsp = world.send_http(app_id, srvk_request(9, "/xmobileauth", session, m9, rng));
    if (rsp.status != 200) return {false, 9, *rsp.status};

    // 12/13: submit the otp until a token comes back or attempts run out
    std::string token_hex;
    for (;;) {
        std::optional<std::string> otp = otp_source();
        json m12;
        m12["level"] = "lvl2";
        m12["otp"] = otp.value_or("");
        m12["uuid"] = session.identity.uuid;
        rsp = world.send_http(app_id, srvk_request(12, "/xmobileauth", session, m12, rng));
        if (rsp.status == 200) {
            auto body = open_appk(session, rsp);
            if (!body) return {false, 13, 0};
            json j = json::parse(*body, nullptr, false);
            if (j.is_discarded() || !j.contains("token")) return {false, 13, 0};
            token_hex = j["token"].get<std::string>();
            break;
        }
        bool wrong_otp = *rsp.status == 401 &&
                         to_string(rsp.payload) == "WRONG_OTP";
        if (!wrong_otp) return {false, 12, *rsp.status};
    }

    // 14/15: redeem the token for the long-lived code
    json m14;
    m14["uuid_hash"] = hash_hex;
    m14["token"] = token_hex;
    m14["pid"] = pid;
    rsp = world.send_http(app_id, srvk_request(14, "/registerapp", session, m14, rng));
    if (rsp.status != 200) return {false, 14, *rsp.status};
    auto reg_cert_json = open_appk(session, rsp);
    auto reg_cert = reg_cert_json ? certificate_from_json(*reg_cert_json) : std::nullopt;
    if (!reg_cert || reg_cert->role != CertRole::Reg) return {false, 15, 0};
    session.reg_cert = *reg_cert;
    session.pid = pid;
    return {true, 0, 0};
}

std::optional<std::string> parse_otp_sms(const std::string& body) {
    const std::string prefix = kOtpSmsPrefix;
    if (body.size() != prefix.size() + 6 || body.compare(0, prefix.size(), prefix) != 0)
        return std::nullopt;
    std::string code = body.substr(prefix.size());
    if (!std::all_of(code.begin(), code.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return std::nullopt;
    return code;
}

OtpSource make_inbox_otp_source(World& world, const std::string& app_id, int64_t since,
                                int64_t ttl_ticks) {
    return [&world, app_id, since, ttl_ticks]() -> std::optional<std::string> {
        for (int64_t waited = 0; waited <= ttl_ticks; ++waited) {
            auto inbox = world.read_sms(app_id, since);
            for (auto it = inbox.rbegin(); it != inbox.rend(); ++it) {
                if (auto code = parse_otp_sms(it->body)) return code;
            }
            world.advance_clock(1);
        }
        return std::nullopt;
    };
}

Envelope make_level2_action_request(const ClientSession& session, const std::string& action,
                                    Rng& rng) {
    json body;
    body["pid"] = session.pid.value_or("");
    body["action"] = action;
    return srvk_request(18, "/level2action", session, body, rng);
}

Envelope make_disable_app_request(const ClientSession& session, const std::string& target_hash,
                                  Rng& rng) {
    json body;
    body["pid"] = session.pid.value_or("");
    body["target"] = target_hash;
    return srvk_request(16, "/disableapp", session, body, rng);
}

int level2_login(World& world, const std::string& app_id, ClientSession& session, Rng& rng) {
    if (!session.pid) throw std::logic_error("level2_login requires an enrolled session");
    Envelope rsp =
        world.send_http(app_id, make_level2_action_request(session, "READ_PRIVATE_DATA", rng));
    return *rsp.status;
}

}  // namespace posteid
