#include <algorithm>

#include "doctest.h"
#include "json.hpp"
#include "posteid/client_app.hpp"
#include "posteid/identity_server.hpp"

using namespace posteid;
using nlohmann::json;

namespace {

// Drives the server through hand-built envelopes so every field can be
// tampered with independently of the client implementation.
struct Fx {
    World world;
    Rng rng{99};
    AppPackage pkg;
    KeyPair server_keys;
    IdentityServer server;

    explicit Fx(PolicyMode mode = PolicyMode::Baseline)
        : pkg{SymmetricKey{}, "1.0"},
          server_keys(derive_keypair(std::array<uint8_t, 32>{0x42})),
          server(make_policy(mode), make_codk(), server_keys, world, rng) {
        pkg.codk = make_codk();
        world.set_dispatcher([this](const Envelope& req) { return server.handle(req); });
        server.add_account({"alice", "pw-alice", "+39000000001"});
        server.add_account({"bob", "pw-bob", "+39000000002"});
        Device d1{"dev-1", "+39000000001", "14", false, "PX-1", {}, {}};
        Device d2{"dev-2", "+39000000002", "13", false, "PX-2", {}, {}};
        world.add_device(d1);
        world.add_device(d2);
        world.install_app({"app-1", "dev-1", true, true, AppKind::GenuinePosteid});
        world.install_app({"app-2", "dev-2", true, true, AppKind::GenuinePosteid});
    }

    static PolicyConfig make_policy(PolicyMode mode) {
        PolicyConfig p;
        p.mode = mode;
        return p;
    }

    static SymmetricKey make_codk() {
        SymmetricKey k;
        k.bytes.fill(0x07);
        return k;
    }

    ClientSession new_session() {
        ClientSession s;
        s.identity = make_identity(rng.uuid());
        s.keys = derive_keypair(rng.bytes32());
        return s;
    }

    Envelope sealed_req(int seq, const std::string& endpoint, const json& body) {
        Envelope e;
        e.seq = seq;
        e.endpoint = endpoint;
        e.dir = Direction::Request;
        e.enc = EncBinding::Srvk;
        e.payload = hybrid_seal(server_keys.public_key, rng.bytes32(), rng.nonce(),
                                to_bytes(body.dump()));
        return e;
    }

    Envelope msg1(const ClientSession& s, std::optional<SymmetricKey> key = {}) {
        json body;
        body["uuid_hash"] = to_hex(s.identity.uuid_hash);
        Envelope e;
        e.seq = 1;
        e.endpoint = "/registerinit";
        e.dir = Direction::Request;
        e.enc = EncBinding::Codk;
        e.payload = seal(CipherSuiteId::ToyV1, key.value_or(pkg.codk).bytes, rng.nonce(),
                         to_bytes(body.dump()));
        return e;
    }

    Envelope msg3(const ClientSession& s, const std::string& fing = "os=14;rooted=0;model=PX-1") {
        json body;
        body["uuid_hash"] = to_hex(s.identity.uuid_hash);
        body["appk"] = to_hex(s.keys.public_key);
        body["fing"] = fing;
        return sealed_req(3, "/register", body);
    }

    Envelope msg5(const ClientSession& s, std::optional<std::string> echo = {}) {
        json body;
        body["uuid_hash"] = to_hex(s.identity.uuid_hash);
        body["echo"] = echo.value_or(to_hex(s.identity.uuid_hash));
        return sealed_req(5, "/activation", body);
    }

    Envelope msg7(const ClientSession& s, const std::string& usr, const std::string& pwd) {
        json body;
        body["level"] = "lvl0";
        body["usr"] = usr;
        body["pwd"] = pwd;
        body["uuid_hash"] = to_hex(s.identity.uuid_hash);
        return sealed_req(7, "/xmobileauth", body);
    }

    Envelope msg9(const ClientSession& s, const std::string& usr,
                  std::optional<std::string> uuid = {}) {
        json body;
        body["level"] = "lvl2";
        body["usr"] = usr;
        body["uuid"] = uuid.value_or(s.identity.uuid);
        return sealed_req(9, "/xmobileauth", body);
    }

    Envelope msg12(const ClientSession& s, const std::string& otp) {
        json body;
        body["level"] = "lvl2";
        body["otp"] = otp;
        body["uuid"] = s.identity.uuid;
        return sealed_req(12, "/xmobileauth", body);
    }

    Envelope msg14(const ClientSession& s, const std::string& token_hex, const std::string& pid) {
        json body;
        body["uuid_hash"] = to_hex(s.identity.uuid_hash);
        body["token"] = token_hex;
        body["pid"] = pid;
        return sealed_req(14, "/registerapp", body);
    }

    Envelope msg16(const std::string& pid, const std::string& target) {
        json body;
        body["pid"] = pid;
        body["target"] = target;
        return sealed_req(16, "/disableapp", body);
    }

    Envelope msg18(const std::string& pid, const std::string& action) {
        json body;
        body["pid"] = pid;
        body["action"] = action;
        return sealed_req(18, "/level2action", body);
    }

    Envelope send(const std::string& app_id, const Envelope& e) {
        return world.send_http(app_id, e);
    }

    std::string hash(const ClientSession& s) { return to_hex(s.identity.uuid_hash); }

    // prefix drivers
    void to_activated(const std::string& app_id, ClientSession& s) {
        REQUIRE(*send(app_id, msg1(s)).status == 200);
        REQUIRE(*send(app_id, msg3(s)).status == 200);
        REQUIRE(*send(app_id, msg5(s)).status == 200);
    }

    void to_lvl0(const std::string& app_id, ClientSession& s, const std::string& usr,
                 const std::string& pwd) {
        to_activated(app_id, s);
        REQUIRE(*send(app_id, msg7(s, usr, pwd)).status == 200);
    }

    std::string to_otp_pending(const std::string& app_id, ClientSession& s,
                               const std::string& usr, const std::string& pwd) {
        to_lvl0(app_id, s, usr, pwd);
        REQUIRE(*send(app_id, msg9(s, usr)).status == 200);
        auto inbox = world.read_sms(app_id, 0);
        REQUIRE(!inbox.empty());
        auto otp = parse_otp_sms(inbox.back().body);
        REQUIRE(otp.has_value());
        return *otp;
    }

    std::string token_from(const Envelope& rsp, const ClientSession& s) {
        auto opened = hybrid_open(s.keys.public_key, rsp.payload);
        REQUIRE(std::holds_alternative<Bytes>(opened));
        json j = json::parse(to_string(std::get<Bytes>(opened)));
        return j["token"].get<std::string>();
    }

    std::string to_lvl2(const std::string& app_id, ClientSession& s, const std::string& usr,
                        const std::string& pwd) {
        std::string otp = to_otp_pending(app_id, s, usr, pwd);
        Envelope rsp = send(app_id, msg12(s, otp));
        REQUIRE(*rsp.status == 200);
        return token_from(rsp, s);
    }

    void to_enrolled(const std::string& app_id, ClientSession& s, const std::string& usr,
                     const std::string& pwd, const std::string& pid) {
        std::string token = to_lvl2(app_id, s, usr, pwd);
        REQUIRE(*send(app_id, msg14(s, token, pid)).status == 200);
    }
};

std::string payload_str(const Envelope& e) {
    return to_string(e.payload);
}

}  // namespace

TEST_CASE("registerinit: fresh uuid gets the server certificate, duplicates 409") {
    Fx fx;
    ClientSession s = fx.new_session();
    Envelope rsp = fx.send("app-1", fx.msg1(s));
    CHECK(*rsp.status == 200);
    auto opened = open(CipherSuiteId::ToyV1, fx.pkg.codk.bytes, rsp.payload);
    REQUIRE(std::holds_alternative<Bytes>(opened));
    auto cert = certificate_from_json(to_string(std::get<Bytes>(opened)));
    REQUIRE(cert.has_value());
    CHECK(cert->role == CertRole::Server);
    CHECK(verify_certificate(fx.server_keys, *cert));

    CHECK(*fx.send("app-1", fx.msg1(s)).status == 409);

    SymmetricKey wrong;
    wrong.bytes.fill(0x55);
    ClientSession s2 = fx.new_session();
    CHECK(*fx.send("app-1", fx.msg1(s2, wrong)).status == 400);
}

TEST_CASE("register: certificate issuance, state and fingerprint checks") {
    Fx fx;
    ClientSession s = fx.new_session();
    REQUIRE(*fx.send("app-1", fx.msg1(s)).status == 200);
    Envelope rsp = fx.send("app-1", fx.msg3(s));
    CHECK(*rsp.status == 200);
    auto opened = hybrid_open(s.keys.public_key, rsp.payload);
    REQUIRE(std::holds_alternative<Bytes>(opened));
    auto cert = certificate_from_json(to_string(std::get<Bytes>(opened)));
    REQUIRE(cert.has_value());
    CHECK(cert->role == CertRole::App);
    CHECK(cert->subject_public == s.keys.public_key);

    ClientSession unknown = fx.new_session();
    CHECK(*fx.send("app-1", fx.msg3(unknown)).status == 409);

    ClientSession s3 = fx.new_session();
    REQUIRE(*fx.send("app-1", fx.msg1(s3)).status == 200);
    CHECK(*fx.send("app-1", fx.msg3(s3, "rooted=0;model=X")).status == 400);  // os missing
}

TEST_CASE("activation: echo rules") {
    Fx fx;
    ClientSession s = fx.new_session();
    REQUIRE(*fx.send("app-1", fx.msg1(s)).status == 200);
    // before /register
    CHECK(*fx.send("app-1", fx.msg5(s)).status == 409);
    REQUIRE(*fx.send("app-1", fx.msg3(s)).status == 200);
    // echo of a different uuid_hash
    CHECK(*fx.send("app-1", fx.msg5(s, std::string(64, 'a'))).status == 400);
    CHECK(*fx.send("app-1", fx.msg5(s)).status == 200);
    CHECK(fx.server.registration(fx.hash(s))->state == RegState::Activated);
}

TEST_CASE("lvl0 auth: lockout after three consecutive failures") {
    Fx fx;
    ClientSession s = fx.new_session();
    fx.to_activated("app-1", s);
    CHECK(*fx.send("app-1", fx.msg7(s, "alice", "nope")).status == 401);
    CHECK(*fx.send("app-1", fx.msg7(s, "alice", "nope")).status == 401);
    Envelope rsp = fx.send("app-1", fx.msg7(s, "alice", "nope"));
    CHECK(*rsp.status == 423);
    CHECK(fx.server.registration(fx.hash(s))->state == RegState::Disabled);
}

TEST_CASE("lvl0 auth: success binds the account") {
    Fx fx;
    ClientSession s = fx.new_session();
    fx.to_activated("app-1", s);
    CHECK(*fx.send("app-1", fx.msg7(s, "alice", "wrong")).status == 401);  // one failure is fine
    CHECK(*fx.send("app-1", fx.msg7(s, "alice", "pw-alice")).status == 200);
    const DeviceRegistration* reg = fx.server.registration(fx.hash(s));
    CHECK(reg->state == RegState::Lvl0Auth);
    CHECK(reg->account == "alice");
}

TEST_CASE("lvl2 request: otp sms delivered to the account phone") {
    Fx fx;
    ClientSession s = fx.new_session();
    fx.to_lvl0("app-1", s, "alice", "pw-alice");
    CHECK(*fx.send("app-1", fx.msg9(s, "alice")).status == 200);
    auto inbox = fx.world.read_sms("app-1", 0);
    REQUIRE(inbox.size() == 1);
    CHECK(parse_otp_sms(inbox[0].body).has_value());
    CHECK(fx.server.registration(fx.hash(s))->state == RegState::OtpPending);
}

TEST_CASE("lvl2 request: uuid mismatch is 401") {
    Fx fx;
    ClientSession s = fx.new_session();
    fx.to_lvl0("app-1", s, "alice", "pw-alice");
    CHECK(*fx.send("app-1", fx.msg9(s, "alice", "123e4567-e89b-12d3-a456-426614174000")).status ==
          401);
}

TEST_CASE("otp: correct code yields exactly one token; replay 409") {
    Fx fx;
    ClientSession s = fx.new_session();
    std::string otp = fx.to_otp_pending("app-1", s, "alice", "pw-alice");
    Envelope rsp = fx.send("app-1", fx.msg12(s, otp));
    CHECK(*rsp.status == 200);
    CHECK(fx.token_from(rsp, s).size() == 64);
    // single use: resubmitting after success
    CHECK(*fx.send("app-1", fx.msg12(s, otp)).status == 409);
}

TEST_CASE("otp: ttl boundary at 120 ticks") {
    Fx fx;
    ClientSession s = fx.new_session();
    std::string otp = fx.to_otp_pending("app-1", s, "alice", "pw-alice");
    fx.world.advance_clock(120);
    CHECK(*fx.send("app-1", fx.msg12(s, otp)).status == 200);

    ClientSession late = fx.new_session();
    std::string otp2 = fx.to_otp_pending("app-1", late, "alice", "pw-alice");
    fx.world.advance_clock(121);
    Envelope rsp = fx.send("app-1", fx.msg12(late, otp2));
    CHECK(*rsp.status == 401);
    CHECK(payload_str(rsp) == "EXPIRED");
}

TEST_CASE("otp: three wrong attempts disable the registration") {
    Fx fx;
    ClientSession s = fx.new_session();
    fx.to_otp_pending("app-1", s, "alice", "pw-alice");
    CHECK(*fx.send("app-1", fx.msg12(s, "000000")).status == 401);
    CHECK(*fx.send("app-1", fx.msg12(s, "000001")).status == 401);
    CHECK(*fx.send("app-1", fx.msg12(s, "000002")).status == 423);
    CHECK(fx.server.registration(fx.hash(s))->state == RegState::Disabled);
    // and it can never yield a token afterwards
    CHECK(*fx.send("app-1", fx.msg12(s, "000003")).status == 409);
}

TEST_CASE("registerapp: token binding and pid rules") {
    Fx fx;
    ClientSession a = fx.new_session();
    std::string token_a = fx.to_lvl2("app-1", a, "alice", "pw-alice");

    ClientSession b = fx.new_session();
    std::string token_b = fx.to_lvl2("app-2", b, "bob", "pw-bob");

    // token bound to another registration
    CHECK(*fx.send("app-1", fx.msg14(a, token_b, "legit-pid")).status == 401);
    // pid too short
    CHECK(*fx.send("app-1", fx.msg14(a, token_a, "ab")).status == 400);
    // success consumes the token
    Envelope rsp = fx.send("app-1", fx.msg14(a, token_a, "legit-pid"));
    CHECK(*rsp.status == 200);
    auto opened = hybrid_open(a.keys.public_key, rsp.payload);
    REQUIRE(std::holds_alternative<Bytes>(opened));
    auto cert = certificate_from_json(to_string(std::get<Bytes>(opened)));
    REQUIRE(cert.has_value());
    CHECK(cert->role == CertRole::Reg);
    CHECK(*fx.send("app-1", fx.msg14(a, token_a, "legit-pid")).status == 409);  // already enrolled
}

TEST_CASE("disableapp: baseline disables and revokes, repeat is 409") {
    Fx fx;
    ClientSession a = fx.new_session();
    fx.to_enrolled("app-1", a, "alice", "pw-alice", "pid-alice1");
    ClientSession a2 = fx.new_session();
    fx.to_enrolled("app-1", a2, "alice", "pw-alice", "pid-alice2");

    CHECK(*fx.send("app-1", fx.msg16("pid-alice2", fx.hash(a))).status == 200);
    const DeviceRegistration* victim = fx.server.registration(fx.hash(a));
    CHECK(victim->state == RegState::Disabled);
    CHECK_FALSE(victim->pid.has_value());
    CHECK(*fx.send("app-1", fx.msg16("pid-alice2", fx.hash(a))).status == 409);
    // the revoked pid no longer authorizes anything
    CHECK(*fx.send("app-1", fx.msg18("pid-alice1", "READ_PRIVATE_DATA")).status == 401);
}

TEST_CASE("disableapp: unknown pid and cross-account") {
    Fx fx;
    ClientSession a = fx.new_session();
    fx.to_enrolled("app-1", a, "alice", "pw-alice", "pid-alice1");
    ClientSession b = fx.new_session();
    fx.to_enrolled("app-2", b, "bob", "pw-bob", "pid-bob01");

    CHECK(*fx.send("app-1", fx.msg16("missing-pid", fx.hash(a))).status == 401);
    CHECK(*fx.send("app-2", fx.msg16("pid-bob01", fx.hash(a))).status == 403);
}

TEST_CASE("disableapp: RESTRICT grace period blocks a fresh enrollee") {
    Fx fx(PolicyMode::Restrict);
    ClientSession a = fx.new_session();
    fx.to_enrolled("app-1", a, "alice", "pw-alice", "pid-alice1");
    ClientSession fresh = fx.new_session();
    fx.to_enrolled("app-1", fresh, "alice", "pw-alice", "pid-alice2");

    fx.world.advance_clock(10);
    Envelope rsp = fx.send("app-1", fx.msg16("pid-alice2", fx.hash(a)));
    CHECK(*rsp.status == 403);
    CHECK(payload_str(rsp) == "GRACE_PERIOD");
    CHECK(fx.server.registration(fx.hash(a))->state == RegState::Enrolled);

    // after the grace period the same call goes through, and the other
    // enrolled device is notified on the transcript
    fx.world.advance_clock(1440);
    CHECK(*fx.send("app-1", fx.msg16("pid-alice2", fx.hash(a))).status == 200);
    bool notified = false;
    for (const auto& ev : fx.world.transcript())
        if (ev.event == "notify") notified = true;
    CHECK(notified);
}

TEST_CASE("FIX: lvl2 request needs in-app approval when a device is enrolled") {
    Fx fx(PolicyMode::Fix);
    ClientSession first = fx.new_session();
    // bootstrap: no enrolled device yet, sms fallback works
    fx.to_enrolled("app-1", first, "alice", "pw-alice", "pid-first1");

    ClientSession second = fx.new_session();
    fx.to_lvl0("app-1", second, "alice", "pw-alice");
    size_t sms_before = fx.world.read_sms("app-1", 0).size();
    Envelope rsp = fx.send("app-1", fx.msg9(second, "alice"));
    CHECK(*rsp.status == 200);
    CHECK(payload_str(rsp) == "{\"approval\":\"required\"}");
    CHECK(fx.world.read_sms("app-1", 0).size() == sms_before);  // zero new sms

    // without approval, no token
    CHECK(*fx.send("app-1", fx.msg12(second, "whatever")).status == 403);

    // victim denies: pending registration is disabled
    auto pending = fx.server.pending_approvals("pid-first1");
    REQUIRE(pending == std::vector<std::string>{fx.hash(second)});
    CHECK(fx.server.approve_enrollment("pid-first1", fx.hash(second), false) == 200);
    CHECK(fx.server.registration(fx.hash(second))->state == RegState::Disabled);
}

TEST_CASE("FIX: approval lets the enrollment complete") {
    Fx fx(PolicyMode::Fix);
    ClientSession first = fx.new_session();
    fx.to_enrolled("app-1", first, "alice", "pw-alice", "pid-first1");

    ClientSession second = fx.new_session();
    fx.to_lvl0("app-1", second, "alice", "pw-alice");
    REQUIRE(*fx.send("app-1", fx.msg9(second, "alice")).status == 200);
    CHECK(fx.server.approve_enrollment("pid-first1", fx.hash(second), true) == 200);
    Envelope rsp = fx.send("app-1", fx.msg12(second, "approved"));
    REQUIRE(*rsp.status == 200);
    std::string token = fx.token_from(rsp, second);
    CHECK(*fx.send("app-1", fx.msg14(second, token, "pid-secnd1")).status == 200);
}

TEST_CASE("FIX: approval from another account is rejected") {
    Fx fx(PolicyMode::Fix);
    ClientSession a = fx.new_session();
    fx.to_enrolled("app-1", a, "alice", "pw-alice", "pid-alice1");
    ClientSession b = fx.new_session();
    fx.to_enrolled("app-2", b, "bob", "pw-bob", "pid-bob01");

    ClientSession second = fx.new_session();
    fx.to_lvl0("app-1", second, "alice", "pw-alice");
    REQUIRE(*fx.send("app-1", fx.msg9(second, "alice")).status == 200);
    CHECK(fx.server.approve_enrollment("pid-bob01", fx.hash(second), true) == 403);
    CHECK(fx.server.approve_enrollment("pid-alice1", std::string(64, 'f'), true) == 404);
}

TEST_CASE("level2action: records the acting registration") {
    Fx fx;
    ClientSession a = fx.new_session();
    fx.to_enrolled("app-1", a, "alice", "pw-alice", "pid-alice1");
    CHECK(*fx.send("app-1", fx.msg18("pid-alice1", "MONEY_TRANSFER")).status == 200);
    bool recorded = false;
    for (const auto& ev : fx.world.transcript())
        if (ev.event == "action:MONEY_TRANSFER" && ev.from == fx.hash(a)) recorded = true;
    CHECK(recorded);
    CHECK(*fx.send("app-1", fx.msg18("nobody-pid", "MONEY_TRANSFER")).status == 401);
    CHECK(*fx.send("app-1", fx.msg18("pid-alice1", "FORMAT_DISK")).status == 400);
}

TEST_CASE("token binding property: tokens only redeem for their registration") {
    Fx fx;
    for (int i = 0; i < 5; ++i) {
        ClientSession r1 = fx.new_session();
        std::string t1 = fx.to_lvl2("app-1", r1, "alice", "pw-alice");
        ClientSession r2 = fx.new_session();
        std::string t2 = fx.to_lvl2("app-1", r2, "alice", "pw-alice");
        CHECK(*fx.send("app-1", fx.msg14(r1, t2, "some-pid")).status == 401);
        CHECK(*fx.send("app-1", fx.msg14(r2, t1, "some-pid")).status == 401);
        CHECK(*fx.send("app-1", fx.msg14(r1, t1, "some-pid")).status == 200);
    }
}

TEST_CASE("account snapshot lists devices and pids") {
    Fx fx;
    ClientSession a = fx.new_session();
    fx.to_enrolled("app-1", a, "alice", "pw-alice", "pid-alice1");
    json snap = json::parse(fx.server.snapshot_json());
    REQUIRE(snap.contains("accounts"));
    bool found = false;
    for (const auto& acc : snap["accounts"]) {
        if (acc["usr"] != "alice") continue;
        REQUIRE(acc["devices"].size() == 1);
        CHECK(acc["devices"][0]["uuid_hash"] == fx.hash(a));
        CHECK(acc["devices"][0]["state"] == "ENROLLED");
        CHECK(acc["pids"]["pid-alice1"] == fx.hash(a));
        found = true;
    }
    CHECK(found);
}
