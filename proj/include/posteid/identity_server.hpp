//
// identity_server.hpp
//
// The identity-provider server: account store, a per-registration state
// machine over the activation endpoints plus device management and a
// level-2 action endpoint, parameterized by a security policy.
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

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "posteid/device_world.hpp"
#include "posteid/envelope.hpp"
#include "posteid/rng.hpp"

namespace posteid {

enum class RegState {
    RegisterInit,
    Registered,
    Activated,
    Lvl0Auth,
    OtpPending,
    Lvl2Granted,
    Enrolled,
    Disabled,
};

const char* reg_state_name(RegState s);

struct Otp {
    std::string code;  // 6 decimal digits
    int64_t issued_at = 0;
    int attempts_left = 3;
    bool used = false;
};

struct AuthToken {
    std::array<uint8_t, 32> value{};
    std::string bound_uuid_hash;  // hex
    int64_t issued_at = 0;
};

struct DeviceRegistration {
    std::string uuid_hash;  // lowercase hex of the 32-byte digest
    std::array<uint8_t, 32> app_public{};
    std::string fingerprint;
    RegState state = RegState::RegisterInit;
    std::optional<std::string> account;  // bound at lvl0 auth
    std::optional<int64_t> enrolled_at;
    std::optional<Otp> otp;          // set iff OTP_PENDING
    std::optional<AuthToken> token;  // set iff LVL2_GRANTED
    std::optional<std::string> pid;  // set iff ENROLLED
    int lvl0_failures = 0;
    bool approval_pending = false;  // FIX: waiting for an enrolled device
    bool approved = false;          // FIX: approval granted, token not yet issued
};

struct AccountRecord {
    std::string usr;
    std::string pwd;
    std::string phone_number;
};

enum class PolicyMode { Baseline, Restrict, Fix };

const char* policy_mode_name(PolicyMode m);
std::optional<PolicyMode> policy_mode_from_name(const std::string& s);

struct PolicyConfig {
    PolicyMode mode = PolicyMode::Baseline;
    int64_t grace_ticks = 1440;  // RESTRICT: minimum enrollment age for /disableapp
    int64_t otp_ttl_ticks = 120;
};

inline constexpr int kOtpAttempts = 3;
inline constexpr int kLvl0Attempts = 3;
inline constexpr size_t kPidMinLen = 6;
inline constexpr size_t kPidMaxLen = 12;

class IdentityServer {
public:
    IdentityServer(PolicyConfig policy, SymmetricKey codk, KeyPair keys, World& world, Rng& rng);

    /// Routes one request envelope to its handler; never throws on
    /// protocol-level problems, those become 4xx responses.
    Envelope handle(const Envelope& request);

    /// FIX-policy in-app approval, invoked from an enrolled device.
    /// Returns 200, 403 (approver not enrolled / other account) or 404
    /// (no pending approval).
    int approve_enrollment(const std::string& approver_pid, const std::string& pending_uuid_hash,
                           bool decision);

    /// The device-management screen: registrations of the approver's
    /// account, insertion order. Empty if the pid is unknown.
    std::vector<std::string> list_registrations(const std::string& caller_pid) const;

    void add_account(AccountRecord account);

    const std::array<uint8_t, 32>& server_public() const { return keys_.public_key; }
    const Certificate& server_certificate() const { return server_cert_; }
    const KeyPair& server_keys() const { return keys_; }

    const DeviceRegistration* registration(const std::string& uuid_hash) const;
    const AccountRecord* account(const std::string& usr) const;

    /// Pending FIX approvals for the account owning `pid`.
    std::vector<std::string> pending_approvals(const std::string& pid) const;

    /// Account snapshot (JSON text) for scenario replay; digests in
    /// lowercase hex.
    std::string snapshot_json() const;

private:
    Envelope handle_register_init(const Envelope& req);
    Envelope handle_register(const Envelope& req);
    Envelope handle_activation(const Envelope& req);
    Envelope handle_xmobileauth(const Envelope& req);
    Envelope handle_xmobileauth_lvl0(const Envelope& req, DeviceRegistration& reg,
                                     const std::string& usr, const std::string& pwd);
    Envelope handle_xmobileauth_lvl2_request(const Envelope& req, DeviceRegistration& reg,
                                             const std::string& usr);
    Envelope handle_xmobileauth_otp(const Envelope& req, DeviceRegistration& reg,
                                    const std::string& otp);
    Envelope handle_register_app(const Envelope& req);
    Envelope handle_disable_app(const Envelope& req);
    Envelope handle_level2_action(const Envelope& req);

    Envelope plain_response(int seq, const std::string& endpoint, int status,
                            const std::string& body = "");
    Envelope sealed_response(int seq, const std::string& endpoint, EncBinding enc,
                             const std::array<uint8_t, 32>& key_or_public,
                             const std::string& body);

    DeviceRegistration* find_by_pid(const std::string& pid);
    const DeviceRegistration* find_by_pid(const std::string& pid) const;
    bool account_has_enrolled(const std::string& usr) const;

    PolicyConfig policy_;
    SymmetricKey codk_;
    KeyPair keys_;
    Certificate server_cert_;
    World& world_;
    Rng& rng_;

    std::map<std::string, AccountRecord> accounts_;       // by usr
    std::map<std::string, DeviceRegistration> regs_;      // by uuid_hash hex
    std::vector<std::string> reg_order_;                  // insertion order
};

}  // namespace posteid
