//
// scenario.cpp
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

#include "posteid/scenario.hpp"

#include <fstream>
#include <memory>

#include "json.hpp"

namespace posteid {

using nlohmann::json;

const char* scenario_name_str(ScenarioName n) {
    switch (n) {
        case ScenarioName::LegitEnroll: return "LEGIT_ENROLL";
        case ScenarioName::LegitReinstall: return "LEGIT_REINSTALL";
        case ScenarioName::Attack: return "ATTACK";
        case ScenarioName::AttackNoSmsPerm: return "ATTACK_NO_SMS_PERM";
        case ScenarioName::AttackBadCreds: return "ATTACK_BAD_CREDS";
    }
    return "?";
}

std::optional<ScenarioName> scenario_from_str(const std::string& s) {
    if (s == "LEGIT_ENROLL") return ScenarioName::LegitEnroll;
    if (s == "LEGIT_REINSTALL") return ScenarioName::LegitReinstall;
    if (s == "ATTACK") return ScenarioName::Attack;
    if (s == "ATTACK_NO_SMS_PERM") return ScenarioName::AttackNoSmsPerm;
    if (s == "ATTACK_BAD_CREDS") return ScenarioName::AttackBadCreds;
    return std::nullopt;
}

Outcome expected_outcome(ScenarioName name, PolicyMode policy) {
    switch (name) {
        case ScenarioName::LegitEnroll:
        case ScenarioName::LegitReinstall: return Outcome::Success;
        case ScenarioName::Attack:
            return policy == PolicyMode::Baseline ? Outcome::Success : Outcome::Failed;
        case ScenarioName::AttackNoSmsPerm:
        case ScenarioName::AttackBadCreds: return Outcome::Failed;
    }
    return Outcome::Failed;
}

static const char* outcome_str(Outcome o) {
    return o == Outcome::Success ? "SUCCESS" : "FAILED";
}

std::string ScenarioReport::to_json() const {
    json j;
    j["scenario"] = scenario_name_str(scenario);
    j["policy"] = policy_mode_name(policy);
    j["seed"] = seed;
    j["outcome"] = outcome_str(outcome);
    j["expected_outcome"] = outcome_str(expected);
    if (phases) j["phases"] = json::parse(phases->to_json());
    j["transcript_digest"] = transcript_digest;
    return j.dump(2);
}

namespace {

struct Scene {
    World world;
    Rng rng;
    AppPackage package;
    std::unique_ptr<IdentityServer> server;

    explicit Scene(uint64_t seed, PolicyMode policy) : rng(seed) {
        package.codk.bytes = rng.bytes32();
        KeyPair server_keys = derive_keypair(rng.bytes32());
        PolicyConfig policy_cfg;
        policy_cfg.mode = policy;
        server = std::make_unique<IdentityServer>(policy_cfg, package.codk, server_keys, world,
                                                  rng);
        server->add_account({kVictimUsr, kVictimPwd, kVictimPhone});
        world.set_dispatcher([this](const Envelope& req) { return server->handle(req); });

        Device victim;
        victim.id = kVictimDevice;
        victim.phone_number = kVictimPhone;
        victim.os_version = "14";
        victim.model = "PX-1";
        world.add_device(victim);

        AppInstance genuine;
        genuine.app_id = kGenuineAppId;
        genuine.host_device = kVictimDevice;
        genuine.perm_network = true;
        genuine.perm_read_sms = true;
        genuine.kind = AppKind::GenuinePosteid;
        world.install_app(genuine);
    }

    ClientSession fresh_session() {
        ClientSession session;
        session.identity = make_identity(rng.uuid());
        session.keys = derive_keypair(rng.bytes32());
        return session;
    }

    /// Full genuine activation of `app_id` on `device_id`. The otp is
    /// read from the victim device inbox (the user's phone); under FIX
    /// with an already enrolled device, `approver_pid` approves in-app.
    bool enroll_genuine(const std::string& app_id, const std::string& device_id,
                        ClientSession& session, const std::string& pid,
                        const std::string& approver_pid = "") {
        Fingerprint fing = generate_fingerprint(world.device(device_id));
        if (!run_registration(world, app_id, session, package, fing, rng).ok) return false;
        int64_t since = world.now();
        std::string pending_hash = to_hex(session.identity.uuid_hash);
        OtpSource inbox = make_inbox_otp_source(world, kGenuineAppId, since, 120);
        OtpSource source = [this, inbox, pending_hash, approver_pid]()
            -> std::optional<std::string> {
            if (!approver_pid.empty()) {
                for (const auto& hash : server->pending_approvals(approver_pid)) {
                    if (hash == pending_hash) {
                        server->approve_enrollment(approver_pid, hash, true);
                        return "approved";
                    }
                }
            }
            return inbox();
        };
        return run_enrollment(world, app_id, session, kVictimUsr, kVictimPwd, source, pid, rng)
            .ok;
    }
};

}  // namespace

ScenarioReport run_scenario(const ScenarioConfig& cfg) {
    Scene scene(cfg.seed, cfg.policy);
    ScenarioReport report;
    report.scenario = cfg.name;
    report.policy = cfg.policy;
    report.seed = cfg.seed;
    report.expected = expected_outcome(cfg.name, cfg.policy);

    switch (cfg.name) {
        case ScenarioName::LegitEnroll: {
            ClientSession session = scene.fresh_session();
            bool ok = scene.enroll_genuine(kGenuineAppId, kVictimDevice, session, kLegitPid);
            report.outcome = ok ? Outcome::Success : Outcome::Failed;
            break;
        }
        case ScenarioName::LegitReinstall: {
            ClientSession first = scene.fresh_session();
            bool ok = scene.enroll_genuine(kGenuineAppId, kVictimDevice, first, kLegitPid);

            // second genuine install on a new device; the user reads the
            // otp from their phone, or approves in-app under FIX
            Device second;
            second.id = kSecondDevice;
            second.os_version = "14";
            second.model = "PX-2";
            scene.world.add_device(second);
            AppInstance app;
            app.app_id = kSecondAppId;
            app.host_device = kSecondDevice;
            app.perm_network = true;
            app.kind = AppKind::GenuinePosteid;
            scene.world.install_app(app);

            ClientSession reinstall = scene.fresh_session();
            ok = ok && scene.enroll_genuine(kSecondAppId, kSecondDevice, reinstall,
                                            "posteid-two", kLegitPid);
            report.outcome = ok ? Outcome::Success : Outcome::Failed;
            break;
        }
        case ScenarioName::Attack:
        case ScenarioName::AttackNoSmsPerm:
        case ScenarioName::AttackBadCreds: {
            ClientSession victim = scene.fresh_session();
            if (!scene.enroll_genuine(kGenuineAppId, kVictimDevice, victim, kLegitPid)) {
                report.outcome = Outcome::Failed;
                break;
            }

            AppInstance trojan_app;
            trojan_app.app_id = kTrojanAppId;
            trojan_app.host_device = kVictimDevice;
            trojan_app.perm_network = true;
            trojan_app.perm_read_sms = cfg.name != ScenarioName::AttackNoSmsPerm;
            trojan_app.kind = AppKind::Trojan;
            scene.world.install_app(trojan_app);

            TrojanConfig trojan_cfg;
            trojan_cfg.stolen_usr = kVictimUsr;
            trojan_cfg.stolen_pwd =
                cfg.name == ScenarioName::AttackBadCreds ? "wrong-password" : kVictimPwd;
            trojan_cfg.extracted_codk = extract_codk(scene.package);
            trojan_cfg.host_device = kVictimDevice;
            trojan_cfg.app_id = kTrojanAppId;

            AttackReport attack = run_attack(trojan_cfg, scene.world, *scene.server, scene.rng,
                                             [&]() {
                                                 return level2_login(scene.world, kGenuineAppId,
                                                                     victim, scene.rng);
                                             });
            report.outcome = attack.overall ? Outcome::Success : Outcome::Failed;
            report.phases = std::move(attack);
            break;
        }
    }

    std::string transcript = scene.world.transcript_jsonl();
    if (!cfg.transcript_path.empty()) {
        std::ofstream out(cfg.transcript_path, std::ios::binary);
        if (!out || !(out << transcript))
            throw IoError("cannot write transcript: " + cfg.transcript_path);
    }
    report.transcript_digest = to_hex(sha256(transcript));

    if (!cfg.report_path.empty()) {
        std::ofstream out(cfg.report_path, std::ios::binary);
        if (!out || !(out << report.to_json() << "\n"))
            throw IoError("cannot write report: " + cfg.report_path);
    }
    return report;
}

// --- transcript verification ----------------------------------------------

namespace {

struct HttpEvent {
    int seq = 0;
    std::string endpoint;
    bool is_request = false;
    int status = 0;
    std::string app;  // requesting app id
    EncBinding enc = EncBinding::Plain;
};

}  // namespace

VerifyResult verify_transcript(const std::string& path, ScenarioName name, PolicyMode policy) {
    VerifyResult result;
    auto flag = [&result](const std::string& tag, const std::string& detail) {
        result.ok = false;
        result.violations.push_back(tag + ": " + detail);
    };

    std::ifstream in(path, std::ios::binary);
    if (!in) {
        flag("io", "cannot open " + path);
        return result;
    }

    std::vector<HttpEvent> http;
    std::vector<std::pair<size_t, std::string>> sms_bodies;  // index into http at delivery time
    int64_t last_t = 0;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string where = "line " + std::to_string(lineno);
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            flag("parse", where);
            continue;
        }
        if (!j.contains("t") || !j["t"].is_number_integer() || !j.contains("channel") ||
            !j["channel"].is_string() || !j.contains("event") || !j["event"].is_string() ||
            !j.contains("from") || !j.contains("to")) {
            flag("schema", where);
            continue;
        }
        int64_t t = j["t"].get<int64_t>();
        if (t < last_t) flag("clock", where + ": time went backwards");
        last_t = t;
        std::string channel = j["channel"].get<std::string>();
        std::string event = j["event"].get<std::string>();

        if (channel == "sms") {
            if (event == "deliver") {
                std::string body = j.value("sms_body", "");
                if (!parse_otp_sms(body)) flag("sms-template", where + ": " + body);
                sms_bodies.emplace_back(http.size(), body);
            }
            continue;
        }
        if (channel != "http") {
            flag("schema", where + ": unknown channel " + channel);
            continue;
        }
        if (event != "request" && event != "response") continue;  // action records etc.

        if (!j.contains("envelope") || !j["envelope"].is_string()) {
            flag("schema", where + ": http event without envelope");
            continue;
        }
        std::string wire = j["envelope"].get<std::string>();
        json env = json::parse(wire, nullptr, false);
        if (env.is_discarded() || !env.is_object() || !env.contains("seq") ||
            !env.contains("enc") || !env.contains("endpoint") || !env.contains("dir")) {
            flag("envelope-decode", where);
            continue;
        }
        HttpEvent he;
        he.seq = env["seq"].get<int>();
        he.endpoint = env["endpoint"].get<std::string>();
        he.is_request = env["dir"].get<std::string>() == "req";
        he.status = env.value("status", 0);
        he.app = j[he.is_request ? "from" : "to"].get<std::string>();

        const WireRule* rule = find_wire_rule(he.seq);
        std::string enc = env["enc"].get<std::string>();
        const char* expect = "plain";
        if (rule) {
            switch (rule->enc) {
                case EncBinding::Codk: expect = "codk"; break;
                case EncBinding::Srvk: expect = "srvk"; break;
                case EncBinding::Appk: expect = "appk"; break;
                case EncBinding::Plain: expect = "plain"; break;
            }
        }
        if (!rule || he.endpoint != rule->endpoint ||
            (he.is_request ? rule->dir != Direction::Request : rule->dir != Direction::Response))
            flag("enc-binding", where + ": seq/endpoint/direction mismatch");
        else if ((he.is_request || he.status == 200) && enc != expect)
            flag("enc-binding", where + ": enc " + enc + " for seq " + std::to_string(he.seq));
        if (std::holds_alternative<DecodeError>(decode_envelope(wire)))
            flag("envelope-canonical", where);
        http.push_back(he);
    }

    // synchronous channel: a response directly follows its request
    for (size_t i = 0; i < http.size(); ++i) {
        if (!http[i].is_request) continue;
        if (i + 1 >= http.size() || http[i + 1].is_request ||
            http[i + 1].seq != http[i].seq + 1 || http[i + 1].endpoint != http[i].endpoint)
            flag("seq-order", "request seq " + std::to_string(http[i].seq) +
                                  " without immediate response");
    }

    // per-app request seqs never go backwards
    std::map<std::string, int> last_seq;
    for (const auto& he : http) {
        if (!he.is_request) continue;
        auto [it, inserted] = last_seq.try_emplace(he.app, he.seq);
        if (!inserted) {
            if (he.seq < it->second)
                flag("seq-order", "app " + he.app + " sent seq " + std::to_string(he.seq) +
                                      " after " + std::to_string(it->second));
            it->second = he.seq;
        }
    }

    if (name == ScenarioName::LegitEnroll) {
        std::vector<int> want = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 13, 14, 15};
        std::vector<int> got;
        for (const auto& he : http) got.push_back(he.seq);
        if (got != want) flag("flow", "http events are not exactly seqs 1..15");
        for (const auto& he : http)
            if (!he.is_request && he.status != 200)
                flag("flow", "non-200 response seq " + std::to_string(he.seq));
        size_t sms_between = 0;
        for (const auto& [pos, body] : sms_bodies) {
            // delivered after the seq-10 response (index 9), before seq 12
            if (pos == 10) ++sms_between;
        }
        // first enrollment goes over SMS under every policy (FIX bootstraps)
        if (sms_between != 1)
            flag("flow", "expected exactly one OTP SMS between seqs 10 and 12");
    }

    if (name == ScenarioName::Attack && policy == PolicyMode::Baseline) {
        int enrollments = 0;
        int disables = 0;
        bool disable_after_enrollments = true;
        for (const auto& he : http) {
            if (!he.is_request && he.seq == 15 && he.status == 200) ++enrollments;
            if (!he.is_request && he.seq == 17 && he.status == 200) {
                ++disables;
                if (enrollments != 2) disable_after_enrollments = false;
            }
        }
        if (enrollments != 2) flag("flow", "expected exactly two enrollments");
        if (disables != 1) flag("flow", "expected exactly one disable");
        if (!disable_after_enrollments) flag("flow", "disable before both enrollments");
    }

    return result;
}

}  // namespace posteid
