//
// scenario.hpp
//
// Scenario orchestration: world construction, policy selection,
// transcript and report emission, and transcript re-verification.
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

#include <optional>
#include <string>
#include <vector>

#include "posteid/identity_server.hpp"
#include "posteid/trojan.hpp"

namespace posteid {

enum class ScenarioName {
    LegitEnroll,
    LegitReinstall,
    Attack,
    AttackNoSmsPerm,
    AttackBadCreds,
};

const char* scenario_name_str(ScenarioName n);
std::optional<ScenarioName> scenario_from_str(const std::string& s);

struct ScenarioConfig {
    ScenarioName name = ScenarioName::LegitEnroll;
    PolicyMode policy = PolicyMode::Baseline;
    uint64_t seed = 0;
    std::string transcript_path;
    std::string report_path;
};

enum class Outcome { Success, Failed };

Outcome expected_outcome(ScenarioName name, PolicyMode policy);

struct ScenarioReport {
    ScenarioName scenario;
    PolicyMode policy;
    uint64_t seed = 0;
    Outcome outcome = Outcome::Failed;
    Outcome expected = Outcome::Failed;
    std::optional<AttackReport> phases;  // ATTACK* scenarios only
    std::string transcript_digest;       // lowercase hex sha-256 of the file bytes

    bool matches_expectation() const { return outcome == expected; }
    std::string to_json() const;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Builds the world, runs the flows, writes transcript (JSONL) and
/// report (JSON). Deterministic for a fixed (name, policy, seed).
/// Throws IoError on unwritable paths.
ScenarioReport run_scenario(const ScenarioConfig& cfg);

struct VerifyResult {
    bool ok = true;
    std::vector<std::string> violations;
};

/// Re-validates a transcript file: seq ordering, enc bindings, request/
/// response pairing, SMS template shape, and scenario-specific checks.
/// Content problems land in the violation list, never in exceptions.
VerifyResult verify_transcript(const std::string& path, ScenarioName name, PolicyMode policy);

// Fixed world configuration shared by all scenarios.
inline constexpr const char* kVictimUsr = "alice";
inline constexpr const char* kVictimPwd = "rosebud-2024";
inline constexpr const char* kVictimPhone = "+391234500001";
inline constexpr const char* kVictimDevice = "dev-victim";
inline constexpr const char* kSecondDevice = "dev-victim-2";
inline constexpr const char* kGenuineAppId = "app-posteid";
inline constexpr const char* kSecondAppId = "app-posteid-2";
inline constexpr const char* kTrojanAppId = "app-trojan";
inline constexpr const char* kLegitPid = "posteid-main";

}  // namespace posteid
