//
// trojan.hpp
//
// The attacker-in-the-device: a malicious app that holds the victim's
// basic credentials, the key extracted from the shipped package, and
// SMS read access, and runs the four-phase privilege escalation.
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
#include <vector>

#include "posteid/client_app.hpp"
#include "posteid/identity_server.hpp"

namespace posteid {

struct TrojanConfig {
    std::string stolen_usr;
    std::string stolen_pwd;
    SymmetricKey extracted_codk;
    std::string attack_pid = "posteid-evil";
    std::string host_device;  // must be the victim's device
    std::string app_id = "app-trojan";
};

enum class AttackPhase { FakeRegistration, FakeEnrollment, DeRegistration, Finalization };

const char* attack_phase_name(AttackPhase p);

struct PhaseResult {
    AttackPhase phase;
    bool success = false;
    std::optional<std::string> failing_seq_or_endpoint;
    std::optional<int> status;
};

struct AttackReport {
    std::vector<PhaseResult> phase_results;  // execution order; stops at first failure
    bool overall = false;

    std::string to_json() const;
};

/// Offline APK analysis, modeled as a direct read of the package.
SymmetricKey extract_codk(const AppPackage& package);

/// Byte-identical to what the genuine app would emit for the same
/// public inputs; that equality is the exploited weakness.
Fingerprint synthesize_fingerprint(const std::string& os_version, bool rooted,
                                   const std::string& model);

/// Checked after the de-registration phase: the victim's own level-2
/// login, run by the harness on the victim's behalf (expected 401).
using VictimLoginCheck = std::function<int()>;

/// Runs the four phases in order; every failure is captured in the
/// report, nothing is thrown. The trojan touches the world only through
/// send_http and read_sms.
AttackReport run_attack(const TrojanConfig& cfg, World& world, IdentityServer& server, Rng& rng,
                        const VictimLoginCheck& victim_login);

}  // namespace posteid
