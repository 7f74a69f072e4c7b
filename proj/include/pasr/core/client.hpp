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

// Uniform request/response interface for model-backed services (text
// generation, speech synthesis, transcription, embedding extraction).
// Requests and responses are JSON objects; every request carries a "task"
// field naming the operation.

#pragma once

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstdio>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

#include "json.hpp"

namespace pasr {

using json = nlohmann::json;

class ClientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual json call(const json& request) = 0;
  /// True when call() may be invoked from several threads at once.
  virtual bool concurrent_safe() const { return false; }
  virtual std::string describe() const = 0;
};

/// In-process client backed by a function.
class FunctionClient final : public ModelClient {
 public:
  FunctionClient(std::string name, std::function<json(const json&)> fn, bool concurrent_safe = true)
      : name_(std::move(name)), fn_(std::move(fn)), concurrent_safe_(concurrent_safe) {}

  json call(const json& request) override {
    try {
      return fn_(request);
    } catch (const ClientError&) {
      throw;
    } catch (const std::exception& e) {
      throw ClientError(name_ + ": " + e.what());
    }
  }
  bool concurrent_safe() const override { return concurrent_safe_; }
  std::string describe() const override { return "in-process:" + name_; }

 private:
  std::string name_;
  std::function<json(const json&)> fn_;
  bool concurrent_safe_;
};

/// Long-lived child process speaking one JSON object per line on stdin/stdout.
/// Calls are serialized.
class ExternalCommandClient final : public ModelClient {
 public:
  explicit ExternalCommandClient(std::string command) : command_(std::move(command)) {}
  ExternalCommandClient(const ExternalCommandClient&) = delete;
  ExternalCommandClient& operator=(const ExternalCommandClient&) = delete;
  ~ExternalCommandClient() override { stop(); }

  json call(const json& request) override {
    std::lock_guard<std::mutex> lock(mu_);
    if (pid_ <= 0) start();
    const std::string line = request.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), to_child_) != line.size() || std::fflush(to_child_) != 0) {
      stop();
      throw ClientError("external command '" + command_ + "': write failed");
    }
    std::string response;
    int c;
    while ((c = std::fgetc(from_child_)) != EOF && c != '\n') response.push_back(static_cast<char>(c));
    if (c == EOF && response.empty()) {
      stop();
      throw ClientError("external command '" + command_ + "': no response");
    }
    try {
      json out = json::parse(response);
      if (out.is_object() && out.contains("error")) {
        throw ClientError("external command '" + command_ + "': " + out["error"].dump());
      }
      return out;
    } catch (const json::parse_error& e) {
      throw ClientError("external command '" + command_ + "': malformed response: " + e.what());
    }
  }

  std::string describe() const override { return "external-command:" + command_; }

 private:
  void start() {
    int in_pipe[2];
    int out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) throw ClientError("pipe() failed");
    std::signal(SIGPIPE, SIG_IGN);
    pid_ = fork();
    if (pid_ < 0) throw ClientError("fork() failed");
    if (pid_ == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      close(in_pipe[0]);
      close(in_pipe[1]);
      close(out_pipe[0]);
      close(out_pipe[1]);
      execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    to_child_ = fdopen(in_pipe[1], "w");
    from_child_ = fdopen(out_pipe[0], "r");
  }

  void stop() {
    if (to_child_ != nullptr) std::fclose(to_child_);
    if (from_child_ != nullptr) std::fclose(from_child_);
    to_child_ = nullptr;
    from_child_ = nullptr;
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }

  std::string command_;
  std::mutex mu_;
  pid_t pid_ = -1;
  FILE* to_child_ = nullptr;
  FILE* from_child_ = nullptr;
};

/// Wraps a client that is not concurrent-safe behind a mutex.
class SerializedClient final : public ModelClient {
 public:
  explicit SerializedClient(std::shared_ptr<ModelClient> inner) : inner_(std::move(inner)) {}
  json call(const json& request) override {
    std::lock_guard<std::mutex> lock(mu_);
    return inner_->call(request);
  }
  bool concurrent_safe() const override { return true; }
  std::string describe() const override { return "serialized:" + inner_->describe(); }

 private:
  std::shared_ptr<ModelClient> inner_;
  std::mutex mu_;
};

}  // namespace pasr
