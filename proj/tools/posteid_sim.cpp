//
// posteid_sim.cpp
//
// CLI entry point: run a scenario (writing transcript and report) or
// re-verify an existing transcript.
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

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "posteid/scenario.hpp"

using namespace posteid;

int main(int argc, char** argv) {
    CLI::App app{"Deterministic simulator of the PosteID device-activation protocol"};
    app.require_subcommand(1);

    std::string scenario_str, policy_str = "baseline", transcript_path, report_path;
    uint64_t seed = 0;

    CLI::App* run = app.add_subcommand("run", "Run a scenario and write transcript + report");
    run->add_option("--scenario", scenario_str,
                    "LEGIT_ENROLL|LEGIT_REINSTALL|ATTACK|ATTACK_NO_SMS_PERM|ATTACK_BAD_CREDS")
        ->required();
    run->add_option("--policy", policy_str, "baseline|restrict|fix");
    run->add_option("--seed", seed, "64-bit scenario seed");
    run->add_option("--transcript", transcript_path, "transcript output path (JSONL)");
    run->add_option("--report", report_path, "report output path (JSON)");

    CLI::App* verify = app.add_subcommand("verify", "Re-check a transcript against expectations");
    verify->add_option("--transcript", transcript_path, "transcript path")->required();
    verify->add_option("--scenario", scenario_str, "scenario name")->required();
    verify->add_option("--policy", policy_str, "baseline|restrict|fix");

    CLI11_PARSE(app, argc, argv);

    auto scenario = scenario_from_str(scenario_str);
    auto policy = policy_mode_from_name(policy_str);
    if (!scenario || !policy) {
        std::fprintf(stderr, "error: unknown scenario or policy\n");
        return 2;
    }

    if (app.got_subcommand(run)) {
        ScenarioConfig cfg;
        cfg.name = *scenario;
        cfg.policy = *policy;
        cfg.seed = seed;
        cfg.transcript_path = transcript_path;
        cfg.report_path = report_path;
        try {
            ScenarioReport report = run_scenario(cfg);
            std::printf("%s\n", report.to_json().c_str());
            return report.matches_expectation() ? 0 : 1;
        } catch (const IoError& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return 2;
        }
    }

    VerifyResult result = verify_transcript(transcript_path, *scenario, *policy);
    if (result.ok) {
        std::printf("ok\n");
        return 0;
    }
    for (const auto& v : result.violations) std::printf("violation %s\n", v.c_str());
    return 1;
}
