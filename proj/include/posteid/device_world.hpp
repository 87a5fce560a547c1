//
// device_world.hpp
//
// Deterministic simulated universe: devices with SIM cards, installed
// apps with permissions, SMS delivery, a synchronous HTTP-like channel
// to the server, and a logical clock.
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

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "posteid/envelope.hpp"

namespace posteid {

struct SmsMessage {
    std::string to_phone;
    std::string body;
    int64_t delivered_at = 0;
};

enum class AppKind { GenuinePosteid, Trojan };

struct AppInstance {
    std::string app_id;
    std::string host_device;
    bool perm_network = false;
    bool perm_read_sms = false;
    AppKind kind = AppKind::GenuinePosteid;
};

struct Device {
    std::string id;
    std::optional<std::string> phone_number;  // SIM presence
    std::string os_version;
    bool rooted = false;
    std::string model;
    std::vector<std::string> installed_apps;
    std::vector<SmsMessage> sms_inbox;  // delivery order
};

struct TranscriptEvent {
    int64_t t = 0;
    std::string channel;  // "http" or "sms"
    std::string from;
    std::string to;
    std::string event;
    std::optional<std::string> envelope;  // encoded wire bytes
    std::optional<std::string> sms_body;
};

struct PermissionDenied : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fixed OTP SMS shape; interception is a parse of this template.
inline constexpr const char* kOtpSmsPrefix = "PosteID code: ";
std::string otp_sms_body(const std::string& otp);

class World {
public:
    using Dispatcher = std::function<Envelope(const Envelope&)>;

    void add_device(Device device);
    void install_app(AppInstance app);

    Device& device(const std::string& id);
    const Device& device(const std::string& id) const;
    AppInstance& app(const std::string& app_id);

    void set_dispatcher(Dispatcher dispatcher) { dispatcher_ = std::move(dispatcher); }

    /// Synchronous request/response; both envelopes land in the
    /// transcript, then queued server side effects (the OTP SMS) flush.
    /// Throws PermissionDenied before the server sees anything.
    Envelope send_http(const std::string& app_id, const Envelope& request);

    void deliver_sms(const std::string& to_phone, const std::string& body);

    /// Server code runs inside the dispatcher; its SMS goes out after
    /// the response is on the transcript, matching the diagram order
    /// (10 then the dashed 11).
    void queue_sms(const std::string& to_phone, const std::string& body);
    void queue_event(TranscriptEvent event);

    std::vector<SmsMessage> read_sms(const std::string& app_id, int64_t since) const;

    void advance_clock(int64_t ticks);
    int64_t now() const { return now_; }

    void append_event(TranscriptEvent event);
    const std::vector<TranscriptEvent>& transcript() const { return transcript_; }

    /// JSONL, one event per line, trailing newline per line.
    std::string transcript_jsonl() const;

private:
    void flush_queued();

    std::map<std::string, Device> devices_;
    std::map<std::string, AppInstance> apps_;
    int64_t now_ = 0;
    std::vector<TranscriptEvent> transcript_;
    Dispatcher dispatcher_;

    struct Queued {
        std::optional<std::pair<std::string, std::string>> sms;  // phone, body
        std::optional<TranscriptEvent> event;
    };
    std::vector<Queued> queued_;
};

}  // namespace posteid
