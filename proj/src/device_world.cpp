//
// device_world.cpp
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

#include "posteid/device_world.hpp"

#include "json.hpp"

namespace posteid {

using nlohmann::json;

std::string otp_sms_body(const std::string& otp) {
    return std::string(kOtpSmsPrefix) + otp;
}

void World::add_device(Device device) {
    if (device.id.empty()) throw std::invalid_argument("device id must be non-empty");
    if (devices_.count(device.id)) throw std::invalid_argument("duplicate device id");
    devices_.emplace(device.id, std::move(device));
}

void World::install_app(AppInstance app) {
    auto it = devices_.find(app.host_device);
    if (it == devices_.end()) throw std::invalid_argument("unknown host device");
    it->second.installed_apps.push_back(app.app_id);
    apps_.emplace(app.app_id, std::move(app));
}

Device& World::device(const std::string& id) {
    return devices_.at(id);
}

const Device& World::device(const std::string& id) const {
    return devices_.at(id);
}

AppInstance& World::app(const std::string& app_id) {
    return apps_.at(app_id);
}

Envelope World::send_http(const std::string& app_id, const Envelope& request) {
    const AppInstance& app = apps_.at(app_id);
    if (!app.perm_network) throw PermissionDenied("NETWORK permission missing: " + app_id);
    if (!dispatcher_) throw std::logic_error("no dispatcher wired");
    append_event({now_, "http", app_id, "server", "request", encode_envelope(request),
                  std::nullopt});
    Envelope response = dispatcher_(request);
    append_event({now_, "http", "server", app_id, "response", encode_envelope(response),
                  std::nullopt});
    flush_queued();
    return response;
}

void World::deliver_sms(const std::string& to_phone, const std::string& body) {
    if (body.empty()) throw std::invalid_argument("sms body must be non-empty");
    for (auto& [id, device] : devices_) {
        if (device.phone_number == to_phone) {
            device.sms_inbox.push_back({to_phone, body, now_});
            append_event({now_, "sms", "server", id, "deliver", std::nullopt, body});
            return;
        }
    }
    append_event({now_, "sms", "server", to_phone, "undeliverable", std::nullopt, body});
}

void World::queue_sms(const std::string& to_phone, const std::string& body) {
    queued_.push_back({{{to_phone, body}}, std::nullopt});
}

void World::queue_event(TranscriptEvent event) {
    queued_.push_back({std::nullopt, std::move(event)});
}

void World::flush_queued() {
    auto pending = std::move(queued_);
    queued_.clear();
    for (auto& q : pending) {
        if (q.sms) deliver_sms(q.sms->first, q.sms->second);
        if (q.event) append_event(std::move(*q.event));
    }
}

std::vector<SmsMessage> World::read_sms(const std::string& app_id, int64_t since) const {
    const AppInstance& app = apps_.at(app_id);
    if (!app.perm_read_sms) throw PermissionDenied("READ_SMS permission missing: " + app_id);
    const Device& device = devices_.at(app.host_device);
    std::vector<SmsMessage> out;
    for (const auto& sms : device.sms_inbox)
        if (sms.delivered_at >= since) out.push_back(sms);
    return out;
}

void World::advance_clock(int64_t ticks) {
    if (ticks < 1) throw std::invalid_argument("ticks must be >= 1");
    now_ += ticks;
}

void World::append_event(TranscriptEvent event) {
    transcript_.push_back(std::move(event));
}

std::string World::transcript_jsonl() const {
    std::string out;
    for (const auto& e : transcript_) {
        json j;
        j["t"] = e.t;
        j["channel"] = e.channel;
        j["from"] = e.from;
        j["to"] = e.to;
        j["event"] = e.event;
        if (e.envelope) j["envelope"] = *e.envelope;
        if (e.sms_body) j["sms_body"] = *e.sms_body;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace posteid
