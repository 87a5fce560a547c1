//
// identity_server.cpp
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

#include "posteid/identity_server.hpp"

#include <algorithm>

#include "json.hpp"
#include "posteid/client_app.hpp"

namespace posteid {

using nlohmann::json;

const char* reg_state_name(RegState s) {
    switch (s) {
        case RegState::RegisterInit: return "REGISTER_INIT";
        case RegState::Registered: return "REGISTERED";
        case RegState::Activated: return "ACTIVATED";
        case RegState::Lvl0Auth: return "LVL0_AUTH";
        case RegState::OtpPending: return "OTP_PENDING";
        case RegState::Lvl2Granted: return "LVL2_GRANTED";
        case RegState::Enrolled: return "ENROLLED";
        case RegState::Disabled: return "DISABLED";
    }
    return "?";
}

const char* policy_mode_name(PolicyMode m) {
    switch (m) {
        case PolicyMode::Baseline: return "baseline";
        case PolicyMode::Restrict: return "restrict";
        case PolicyMode::Fix: return "fix";
    }
    return "?";
}

std::optional<PolicyMode> policy_mode_from_name(const std::string& s) {
    if (s == "baseline") return PolicyMode::Baseline;
    if (s == "restrict") return PolicyMode::Restrict;
    if (s == "fix") return PolicyMode::Fix;
    return std::nullopt;
}

IdentityServer::IdentityServer(PolicyConfig policy, SymmetricKey codk, KeyPair keys, World& world,
                               Rng& rng)
    : policy_(policy), codk_(codk), keys_(keys), world_(world), rng_(rng) {
    server_cert_ =
        issue_certificate(keys_, "posteid-ca", "posteid-server", keys_.public_key,
                          CertRole::Server);
}

void IdentityServer::add_account(AccountRecord account) {
    if (accounts_.count(account.usr)) throw std::invalid_argument("usr not unique");
    accounts_.emplace(account.usr, std::move(account));
}

const DeviceRegistration* IdentityServer::registration(const std::string& uuid_hash) const {
    auto it = regs_.find(uuid_hash);
    return it == regs_.end() ? nullptr : &it->second;
}

const AccountRecord* IdentityServer::account(const std::string& usr) const {
    auto it = accounts_.find(usr);
    return it == accounts_.end() ? nullptr : &it->second;
}

DeviceRegistration* IdentityServer::find_by_pid(const std::string& pid) {
    for (auto& hash : reg_order_) {
        DeviceRegistration& reg = regs_.at(hash);
        if (reg.state == RegState::Enrolled && reg.pid == pid) return &reg;
    }
    return nullptr;
}

const DeviceRegistration* IdentityServer::find_by_pid(const std::string& pid) const {
    return const_cast<IdentityServer*>(this)->find_by_pid(pid);
}

bool IdentityServer::account_has_enrolled(const std::string& usr) const {
    for (const auto& [hash, reg] : regs_)
        if (reg.account == usr && reg.state == RegState::Enrolled) return true;
    return false;
}

Envelope IdentityServer::plain_response(int seq, const std::string& endpoint, int status,
                                        const std::string& body) {
    Envelope e;
    e.seq = seq;
    e.endpoint = endpoint;
    e.dir = Direction::Response;
    e.status = status;
    e.enc = EncBinding::Plain;
    e.payload = to_bytes(body);
    return e;
}

Envelope IdentityServer::sealed_response(int seq, const std::string& endpoint, EncBinding enc,
                                         const std::array<uint8_t, 32>& key_or_public,
                                         const std::string& body) {
    Envelope e;
    e.seq = seq;
    e.endpoint = endpoint;
    e.dir = Direction::Response;
    e.status = 200;
    e.enc = enc;
    Bytes plaintext = to_bytes(body);
    if (enc == EncBinding::Codk) {
        e.payload = seal(CipherSuiteId::ToyV1, key_or_public, rng_.nonce(), plaintext);
    } else {
        e.payload = hybrid_seal(key_or_public, rng_.bytes32(), rng_.nonce(), plaintext);
    }
    return e;
}

static std::optional<json> parse_object(const Bytes& plaintext) {
    json j = json::parse(plaintext.begin(), plaintext.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

static std::optional<std::string> get_string(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_string()) return std::nullopt;
    return j[key].get<std::string>();
}

static bool is_hex_digest(const std::string& s) {
    auto b = from_hex(s);
    return b && b->size() == 32;
}

Envelope IdentityServer::handle(const Envelope& req) {
    switch (req.seq) {
        case 1: return handle_register_init(req);
        case 3: return handle_register(req);
        case 5: return handle_activation(req);
        case 7:
        case 9:
        case 12: return handle_xmobileauth(req);
        case 14: return handle_register_app(req);
        case 16: return handle_disable_app(req);
        case 18: return handle_level2_action(req);
        default: return plain_response(req.seq + 1, req.endpoint, 400, "BAD_SEQ");
    }
}

Envelope IdentityServer::handle_register_init(const Envelope& req) {
    auto opened = open(CipherSuiteId::ToyV1, codk_.bytes, req.payload);
    if (std::holds_alternative<OpenError>(opened))
        return plain_response(2, req.endpoint, 400, "TAG_MISMATCH");
    auto j = parse_object(std::get<Bytes>(opened));
    if (!j) return plain_response(2, req.endpoint, 400, "BAD_PAYLOAD");
    auto uuid_hash = get_string(*j, "uuid_hash");
    if (!uuid_hash || !is_hex_digest(*uuid_hash))
        return plain_response(2, req.endpoint, 400, "BAD_PAYLOAD");
    if (regs_.count(*uuid_hash)) return plain_response(2, req.endpoint, 409, "UUID_ACTIVE");

    DeviceRegistration reg;
    reg.uuid_hash = *uuid_hash;
    reg.state = RegState::RegisterInit;
    regs_.emplace(*uuid_hash, std::move(reg));
    reg_order_.push_back(*uuid_hash);

    return sealed_response(2, req.endpoint, EncBinding::Codk, codk_.bytes,
                           certificate_to_json(server_cert_));
}

Envelope IdentityServer::handle_register(const Envelope& req) {
    auto opened = hybrid_open(keys_.public_key, req.payload);
    if (std::holds_alternative<OpenError>(opened))
        return plain_response(4, req.endpoint, 400, "TAG_MISMATCH");
    auto j = parse_object(std::get<Bytes>(opened));
    if (!j) return plain_response(4, req.endpoint, 400, "BAD_PAYLOAD");
    auto uuid_hash = get_string(*j, "uuid_hash");
    auto app_public_hex = get_string(*j, "appk");
    auto fing = get_string(*j, "fing");
    if (!uuid_hash || !app_public_hex || !fing)
        return plain_response(4, req.endpoint, 400, "BAD_PAYLOAD");
    auto app_public = from_hex(*app_public_hex);
    if (!is_hex_digest(*uuid_hash) || !app_public || app_public->size() != 32)
        return plain_response(4, req.endpoint, 400, "BAD_PAYLOAD");
    // the fingerprint only has to parse; the server cannot tell a
    // synthesized one from a genuine one, which is the vulnerability
    if (!Fingerprint::parse(*fing)) return plain_response(4, req.endpoint, 400, "BAD_FINGERPRINT");

    auto it = regs_.find(*uuid_hash);
    if (it == regs_.end() || it->second.state != RegState::RegisterInit)
        return plain_response(4, req.endpoint, 409, "WRONG_STATE");

    DeviceRegistration& reg = it->second;
    std::copy(app_public->begin(), app_public->end(), reg.app_public.begin());
    reg.fingerprint = *fing;
    reg.state = RegState::Registered;

    Certificate app_cert = issue_certificate(keys_, "posteid-server", reg.uuid_hash,
                                             reg.app_public, CertRole::App);
    return sealed_response(4, req.endpoint, EncBinding::Appk, reg.app_public,
                           certificate_to_json(app_cert));
}

Envelope IdentityServer::handle_activation(const Envelope& req) {
    auto opened = hybrid_open(keys_.public_key, req.payload);
    if (std::holds_alternative<OpenError>(opened))
        return plain_response(6, req.endpoint, 400, "TAG_MISMATCH");
    auto j = parse_object(std::get<Bytes>(opened));
    if (!j) return plain_response(6, req.endpoint, 400, "BAD_PAYLOAD");
    auto uuid_hash = get_string(*j, "uuid_hash");
    auto echo = get_string(*j, "echo");
    if (!uuid_hash || !echo) return plain_response(6, req.endpoint, 400, "BAD_PAYLOAD");

    auto it = regs_.find(*uuid_hash);
    if (it == regs_.end() || it->second.state != RegState::Registered)
        return plain_response(6, req.endpoint, 409, "WRONG_STATE");
    if (*echo != *uuid_hash) return plain_response(6, req.endpoint, 400, "ECHO_MISMATCH");

    it->second.state = RegState::Activated;
    return plain_response(6, req.endpoint, 200);
}

Envelope IdentityServer::handle_xmobileauth(const Envelope& req) {
    int rsp_seq = req.seq + 1;
    auto opened = hybrid_open(keys_.public_key, req.payload);
    if (std::holds_alternative<OpenError>(opened))
        return plain_response(rsp_seq, req.endpoint, 400, "TAG_MISMATCH");
    auto j = parse_object(std::get<Bytes>(opened));
    if (!j) return plain_response(rsp_seq, req.endpoint, 400, "BAD_PAYLOAD");
    auto level = get_string(*j, "level");
    if (!level) return plain_response(rsp_seq, req.endpoint, 400, "BAD_PAYLOAD");

    if (req.seq == 7) {
        auto usr = get_string(*j, "usr");
        auto pwd = get_string(*j, "pwd");
        auto uuid_hash = get_string(*j, "uuid_hash");
        if (*level != "lvl0" || !usr || !pwd || !uuid_hash)
            return plain_response(rsp_seq, req.endpoint, 400, "BAD_PAYLOAD");
        auto it = regs_.find(*uuid_hash);
        if (it == regs_.end() || it->second.state != RegState::Activated)
            return plain_response(rsp_seq, req.endpoint, 409, "WRONG_STATE");
        return handle_xmobileauth_lvl0(req, it->second, *usr, *pwd);
    }

    // 9 and 12 identify the registration by the full uuid
    auto uuid = get_string(*j, "uuid");
    if (!uuid) return plain_response(rsp_seq, req.endpoint, 400, "BAD_PAYLOAD");
    std::string uuid_hash = to_hex(sha256(*uuid));
    auto it = regs_.find(uuid_hash);
    if (it == regs_.end()) return plain_response(rsp_seq, req.endpoint, 401, "UUID_MISMATCH");

    if (req.seq == 9) {
        auto usr = get_string(*j, "usr");
        if (*level != "lvl2" || !usr)
            return plain_response(rsp_seq, req.endpoint, 400, "BAD_PAYLOAD");
        return handle_xmobileauth_lvl2_request(req, it->second, *usr);
    }

    auto otp = get_string(*j, "otp");
    if (*level != "lvl2" || !otp) return plain_response(rsp_seq, req.endpoint, 400, "BAD_PAYLOAD");
    return handle_xmobileauth_otp(req, it->second, *otp);
}

Envelope IdentityServer::handle_xmobileauth_lvl0(const Envelope& req, DeviceRegistration& reg,
                                                 const std::string& usr, const std::string& pwd) {
    auto acc = accounts_.find(usr);
    if (acc == accounts_.end() || acc->second.pwd != pwd) {
        if (++reg.lvl0_failures >= kLvl0Attempts) {
            reg.state = RegState::Disabled;
            return plain_response(8, req.endpoint, 423, "LOCKED");
        }
        return plain_response(8, req.endpoint, 401, "BAD_CREDENTIALS");
    }
    reg.lvl0_failures = 0;
    reg.account = usr;
    reg.state = RegState::Lvl0Auth;
    return plain_response(8, req.endpoint, 200);
}

Envelope IdentityServer::handle_xmobileauth_lvl2_request(const Envelope& req,
                                                         DeviceRegistration& reg,
                                                         const std::string& usr) {
    if (reg.state != RegState::Lvl0Auth || reg.approval_pending)
        return plain_response(10, req.endpoint, 409, "WRONG_STATE");
    if (reg.account != usr) return plain_response(10, req.endpoint, 401, "ACCOUNT_MISMATCH");
    const AccountRecord& account = accounts_.at(usr);

    if (policy_.mode == PolicyMode::Fix && account_has_enrolled(usr)) {
        // SMS OTP is replaced by in-app approval from an already
        // enrolled device; only the bootstrap case below still uses SMS
        reg.approval_pending = true;
        for (const auto& [hash, other] : regs_) {
            if (other.account == usr && other.state == RegState::Enrolled) {
                world_.queue_event({world_.now(), "sms", "server", hash, "notify", std::nullopt,
                                    "PosteID notice: new device enrollment pending approval"});
            }
        }
        return plain_response(10, req.endpoint, 200, "{\"approval\":\"required\"}");
    }

    Otp otp;
    otp.code = rng_.otp6();
    otp.issued_at = world_.now();
    otp.attempts_left = kOtpAttempts;
    reg.otp = otp;
    reg.state = RegState::OtpPending;
    world_.queue_sms(account.phone_number, otp_sms_body(otp.code));
    return plain_response(10, req.endpoint, 200);
}

Envelope IdentityServer::handle_xmobileauth_otp(const Envelope& req, DeviceRegistration& reg,
                                                const std::string& otp) {
    if (reg.approval_pending) return plain_response(13, req.endpoint, 403, "APPROVAL_PENDING");

    if (reg.state == RegState::Lvl2Granted && reg.approved) {
        if (otp != "approved") return plain_response(13, req.endpoint, 401, "WRONG_OTP");
        reg.approved = false;
    } else if (reg.state == RegState::OtpPending) {
        Otp& pending = *reg.otp;
        if (pending.used) return plain_response(13, req.endpoint, 409, "OTP_USED");
        if (world_.now() - pending.issued_at > policy_.otp_ttl_ticks)
            return plain_response(13, req.endpoint, 401, "EXPIRED");
        if (otp != pending.code) {
            if (--pending.attempts_left <= 0) {
                reg.state = RegState::Disabled;
                reg.otp.reset();
                return plain_response(13, req.endpoint, 423, "LOCKED");
            }
            return plain_response(13, req.endpoint, 401, "WRONG_OTP");
        }
        pending.used = true;
        reg.state = RegState::Lvl2Granted;
    } else {
        return plain_response(13, req.endpoint, 409, "WRONG_STATE");
    }

    AuthToken token;
    token.value = rng_.bytes32();
    token.bound_uuid_hash = reg.uuid_hash;
    token.issued_at = world_.now();
    reg.token = token;

    json body;
    body["token"] = to_hex(token.value);
    return sealed_response(13, req.endpoint, EncBinding::Appk, reg.app_public, body.dump());
}

Envelope IdentityServer::handle_register_app(const Envelope& req) {
    auto opened = hybrid_open(keys_.public_key, req.payload);
    if (std::holds_alternative<OpenError>(opened))
        return plain_response(15, req.endpoint, 400, "TAG_MISMATCH");
    auto j = parse_object(std::get<Bytes>(opened));
    if (!j) return plain_response(15, req.endpoint, 400, "BAD_PAYLOAD");
    auto uuid_hash = get_string(*j, "uuid_hash");
    auto token_hex = get_string(*j, "token");
    auto pid = get_string(*j, "pid");
    if (!uuid_hash || !token_hex || !pid)
        return plain_response(15, req.endpoint, 400, "BAD_PAYLOAD");

    auto it = regs_.find(*uuid_hash);
    if (it == regs_.end() || it->second.state != RegState::Lvl2Granted)
        return plain_response(15, req.endpoint, 409, "WRONG_STATE");
    DeviceRegistration& reg = it->second;
    if (!reg.token || to_hex(reg.token->value) != *token_hex ||
        reg.token->bound_uuid_hash != reg.uuid_hash)
        return plain_response(15, req.endpoint, 401, "BAD_TOKEN");
    if (pid->size() < kPidMinLen || pid->size() > kPidMaxLen)
        return plain_response(15, req.endpoint, 400, "BAD_PID");

    reg.pid = *pid;
    reg.state = RegState::Enrolled;
    reg.enrolled_at = world_.now();
    reg.token.reset();  // single use

    Certificate reg_cert = issue_certificate(keys_, "posteid-server", reg.uuid_hash,
                                             reg.app_public, CertRole::Reg);
    return sealed_response(15, req.endpoint, EncBinding::Appk, reg.app_public,
                           certificate_to_json(reg_cert));
}

Envelope IdentityServer::handle_disable_app(const Envelope& req) {
    auto opened = hybrid_open(keys_.public_key, req.payload);
    if (std::holds_alternative<OpenError>(opened))
        return plain_response(17, req.endpoint, 400, "TAG_MISMATCH");
    auto j = parse_object(std::get<Bytes>(opened));
    if (!j) return plain_response(17, req.endpoint, 400, "BAD_PAYLOAD");
    auto pid = get_string(*j, "pid");
    auto target_hash = get_string(*j, "target");
    if (!pid || !target_hash) return plain_response(17, req.endpoint, 400, "BAD_PAYLOAD");

    DeviceRegistration* caller = find_by_pid(*pid);
    if (!caller) return plain_response(17, req.endpoint, 401, "UNKNOWN_PID");
    auto it = regs_.find(*target_hash);
    if (it == regs_.end()) return plain_response(17, req.endpoint, 401, "UNKNOWN_TARGET");
    DeviceRegistration& target = it->second;
    if (target.account != caller->account)
        return plain_response(17, req.endpoint, 403, "CROSS_ACCOUNT");
    if (target.state == RegState::Disabled)
        return plain_response(17, req.endpoint, 409, "ALREADY_DISABLED");
    if (policy_.mode == PolicyMode::Restrict) {
        if (world_.now() - *caller->enrolled_at < policy_.grace_ticks)
            return plain_response(17, req.endpoint, 403, "GRACE_PERIOD");
        for (const auto& [hash, other] : regs_) {
            if (other.account == caller->account && other.state == RegState::Enrolled &&
                hash != target.uuid_hash) {
                world_.queue_event({world_.now(), "sms", "server", hash, "notify", std::nullopt,
                                    "PosteID notice: device " + target.uuid_hash.substr(0, 8) +
                                        " was disabled"});
            }
        }
    }

    target.state = RegState::Disabled;
    target.pid.reset();  // revoke
    target.otp.reset();
    target.token.reset();
    return plain_response(17, req.endpoint, 200);
}

Envelope IdentityServer::handle_level2_action(const Envelope& req) {
    auto opened = hybrid_open(keys_.public_key, req.payload);
    if (std::holds_alternative<OpenError>(opened))
        return plain_response(19, req.endpoint, 400, "TAG_MISMATCH");
    auto j = parse_object(std::get<Bytes>(opened));
    if (!j) return plain_response(19, req.endpoint, 400, "BAD_PAYLOAD");
    auto pid = get_string(*j, "pid");
    auto action = get_string(*j, "action");
    if (!pid || !action || (*action != "READ_PRIVATE_DATA" && *action != "MONEY_TRANSFER"))
        return plain_response(19, req.endpoint, 400, "BAD_PAYLOAD");

    DeviceRegistration* reg = find_by_pid(*pid);
    if (!reg) return plain_response(19, req.endpoint, 401, "UNKNOWN_PID");

    world_.queue_event({world_.now(), "http", reg->uuid_hash, "server", "action:" + *action,
                        std::nullopt, std::nullopt});
    return plain_response(19, req.endpoint, 200);
}

int IdentityServer::approve_enrollment(const std::string& approver_pid,
                                       const std::string& pending_uuid_hash, bool decision) {
    DeviceRegistration* approver = find_by_pid(approver_pid);
    if (!approver) return 403;
    auto it = regs_.find(pending_uuid_hash);
    if (it == regs_.end() || !it->second.approval_pending) return 404;
    DeviceRegistration& pending = it->second;
    if (pending.account != approver->account) return 403;

    pending.approval_pending = false;
    if (decision) {
        pending.approved = true;
        pending.state = RegState::Lvl2Granted;
    } else {
        pending.state = RegState::Disabled;
    }
    return 200;
}

std::vector<std::string> IdentityServer::list_registrations(const std::string& caller_pid) const {
    const DeviceRegistration* caller = find_by_pid(caller_pid);
    std::vector<std::string> out;
    if (!caller) return out;
    for (const auto& hash : reg_order_)
        if (regs_.at(hash).account == caller->account) out.push_back(hash);
    return out;
}

std::vector<std::string> IdentityServer::pending_approvals(const std::string& pid) const {
    const DeviceRegistration* caller = find_by_pid(pid);
    std::vector<std::string> out;
    if (!caller) return out;
    for (const auto& hash : reg_order_) {
        const DeviceRegistration& reg = regs_.at(hash);
        if (reg.account == caller->account && reg.approval_pending) out.push_back(hash);
    }
    return out;
}

std::string IdentityServer::snapshot_json() const {
    json snapshot;
    snapshot["accounts"] = json::array();
    for (const auto& [usr, account] : accounts_) {
        json a;
        a["usr"] = account.usr;
        a["pwd"] = account.pwd;
        a["phone_number"] = account.phone_number;
        a["devices"] = json::array();
        a["pids"] = json::object();
        for (const auto& hash : reg_order_) {
            const DeviceRegistration& reg = regs_.at(hash);
            if (reg.account != usr) continue;
            json d;
            d["uuid_hash"] = reg.uuid_hash;
            d["app_public"] = to_hex(reg.app_public);
            d["fingerprint"] = reg.fingerprint;
            d["state"] = reg_state_name(reg.state);
            if (reg.enrolled_at) d["enrolled_at"] = *reg.enrolled_at;
            a["devices"].push_back(d);
            if (reg.pid) a["pids"][*reg.pid] = reg.uuid_hash;
        }
        snapshot["accounts"].push_back(a);
    }
    return snapshot.dump(2);
}

}  // namespace posteid
