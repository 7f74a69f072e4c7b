// Copyright 2026 The pasr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>

#include "httplib.h"
#include "pasr/core/client.hpp"

namespace pasr {

/// POSTs each request as JSON to an http:// endpoint and parses the JSON
/// reply. A bearer token is read from `api_key_env` when that variable is set.
class HttpEndpointClient final : public ModelClient {
 public:
  HttpEndpointClient(const std::string& url, double timeout_s = 60.0, std::string api_key_env = {})
      : url_(url), api_key_env_(std::move(api_key_env)) {
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0) throw ClientError("http-endpoint url must start with http://: " + url);
    const auto slash = url.find('/', scheme.size());
    host_ = url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
    client_ = std::make_unique<httplib::Client>(host_);
    const auto sec = static_cast<time_t>(timeout_s);
    const auto usec = static_cast<time_t>((timeout_s - static_cast<double>(sec)) * 1e6);
    client_->set_connection_timeout(sec, usec);
    client_->set_read_timeout(sec, usec);
    client_->set_write_timeout(sec, usec);
  }

  json call(const json& request) override {
    std::lock_guard<std::mutex> lock(mu_);
    httplib::Headers headers;
    if (!api_key_env_.empty()) {
      if (const char* key = std::getenv(api_key_env_.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
      }
    }
    auto res = client_->Post(path_, headers, request.dump(), "application/json");
    if (!res) throw ClientError("http-endpoint " + url_ + ": " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
      throw ClientError("http-endpoint " + url_ + ": status " + std::to_string(res->status));
    }
    try {
      json out = json::parse(res->body);
      if (out.is_object() && out.contains("error")) throw ClientError("http-endpoint " + url_ + ": " + out["error"].dump());
      return out;
    } catch (const json::parse_error& e) {
      throw ClientError("http-endpoint " + url_ + ": malformed response: " + e.what());
    }
  }

  std::string describe() const override { return "http-endpoint:" + url_; }

 private:
  std::string url_;
  std::string api_key_env_;
  std::string host_;
  std::string path_;
  std::unique_ptr<httplib::Client> client_;
  std::mutex mu_;
};

}  // namespace pasr
