//
// client_app.hpp
//
// The legitimate client app: fingerprint generation and the two-phase
// device-activation flow (registration, enrollment) as replayable
// scripts, plus level-2 usage.
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

#include <functional>
#include <optional>
#include <string>

#include "posteid/device_world.hpp"
#include "posteid/envelope.hpp"
#include "posteid/rng.hpp"

namespace posteid {

/// Device fingerprint, built from publicly observable properties only.
/// Canonical form: "os=<os_version>;rooted=<0|1>;model=<model>".
struct Fingerprint {
    std::string os_version;
    bool rooted = false;
    std::string model;

    std::string canonical() const;
    static std::optional<Fingerprint> parse(const std::string& canonical);

    bool operator==(const Fingerprint&) const = default;
};

Fingerprint generate_fingerprint(const Device& device);

/// The shipped app package; codk is identical across installations.
struct AppPackage {
    SymmetricKey codk;
    std::string app_version = "1.0";
};

struct ClientSession {
    ClientIdentity identity;
    KeyPair keys;
    std::optional<Certificate> server_cert;  // pinned from message 2
    std::optional<Certificate> app_cert;
    std::optional<Certificate> reg_cert;
    std::optional<std::string> pid;
};

/// A flow stops at the first non-200; the failing message number and
/// status are recorded.
struct FlowResult {
    bool ok = false;
    int failing_seq = 0;
    int status = 0;
};

/// Messages 1..6. The fingerprint is a parameter so the attack module
/// can inject a synthesized one through the identical code path.
FlowResult run_registration(World& world, const std::string& app_id, ClientSession& session,
                            const AppPackage& package, const Fingerprint& fingerprint, Rng& rng);

/// Supplies the OTP string after message 10; empty optional means no
/// code could be obtained. May throw PermissionDenied.
using OtpSource = std::function<std::optional<std::string>()>;

/// Messages 7..15. otp_source is consulted after message 10 and again
/// after each wrong-OTP rejection.
FlowResult run_enrollment(World& world, const std::string& app_id, ClientSession& session,
                          const std::string& usr, const std::string& pwd,
                          const OtpSource& otp_source, const std::string& pid, Rng& rng);

/// The genuine app's OTP source: polls its own inbox once per tick, up
/// to ttl_ticks, for the OTP SMS template. Newest message wins.
OtpSource make_inbox_otp_source(World& world, const std::string& app_id, int64_t since,
                                int64_t ttl_ticks);

std::optional<std::string> parse_otp_sms(const std::string& body);

/// Exercises the long-lived credential; returns the response status.
int level2_login(World& world, const std::string& app_id, ClientSession& session, Rng& rng);

/// Shared request builder for the level-2 action endpoint (seq 18).
Envelope make_level2_action_request(const ClientSession& session, const std::string& action,
                                    Rng& rng);

/// Shared request builder for the device-management endpoint (seq 16).
Envelope make_disable_app_request(const ClientSession& session, const std::string& target_hash,
                                  Rng& rng);

}  // namespace posteid
