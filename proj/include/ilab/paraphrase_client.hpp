#pragma once

// HTTP client for an external paraphrase model:
//   POST {base}/paraphrase  {"text": ..., "n": ..., "seed": ...}
//   200 -> {"paraphrases": [...]}

#include <httplib.h>

#include <chrono>
#include <string>
#include <thread>

#include <json.hpp>

#include "ilab/paraphrase.hpp"

namespace ilab {

struct HttpProviderOptions {
  std::string base_url = "http://127.0.0.1:8090";
  double timeout_seconds = 30.0;
  std::size_t retries = 2;
};

class HttpParaphraseProvider final : public ParaphraseProvider {
 public:
  explicit HttpParaphraseProvider(HttpProviderOptions opts) : opts_(std::move(opts)) {}

  [[nodiscard]] std::string name() const override { return "http"; }

  std::vector<std::string> paraphrase(const std::string& text, std::size_t n, std::uint64_t seed) const override {
    nlohmann::json body{{"text", text}, {"n", n}, {"seed", seed}};
    std::string last_error;
    for (std::size_t attempt = 0; attempt <= opts_.retries; ++attempt) {
      httplib::Client cli(opts_.base_url);
      const auto secs = static_cast<time_t>(opts_.timeout_seconds);
      const auto usecs = static_cast<time_t>((opts_.timeout_seconds - static_cast<double>(secs)) * 1e6);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      auto res = cli.Post("/paraphrase", body.dump(), "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
      } else if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
        if (res->status >= 400 && res->status < 500) break;  // not worth retrying
      } else {
        try {
          auto j = nlohmann::json::parse(res->body);
          return j.at("paraphrases").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
          last_error = std::string("bad response: ") + e.what();
        }
      }
      if (attempt < opts_.retries) std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
    }
    throw Error(Errc::provider, "paraphrase service " + opts_.base_url + ": " + last_error);
  }

 private:
  HttpProviderOptions opts_;
};

}  // namespace ilab
