#pragma once

#include <chrono>
#include <semaphore>
#include <string>

#include "httplib.h"
// <resolv.h> (pulled in by httplib) defines _res, which breaks Eigen.
#ifdef _res
#undef _res
#endif
#include "json.hpp"

#include "lanegen/hash.hpp"
#include "lanegen/image_io.hpp"
#include "lanegen/pipeline.hpp"

namespace lanegen {

// JSON bodies of the generation wire protocol (see docs/protocol.md).
namespace protocol {

using nlohmann::json;

inline json make_request(const GenerateRequest& req) {
  json j;
  j["image"] = base64_encode(encode_png(req.image));
  j["control_map"] = base64_encode(encode_mask_png(req.control.mask));
  j["category"] = std::string(category_name(req.recipe.category));
  j["positive_prompt"] = req.recipe.positive_prompt;
  j["negative_prompt"] = req.recipe.negative_prompt;
  j["stage2_prompt"] = req.recipe.stage2_enabled ? json(req.recipe.stage2_prompt) : json(nullptr);
  j["steps"] = req.sampler.steps;
  j["cfg_scale"] = req.sampler.cfg_scale;
  j["seed"] = req.sampler.seed;
  return j;
}

// Server-side view of a request; throws ParseError naming the bad field.
struct ParsedRequest {
  ImageBuffer image;
  GrayMask control_map;
  Category category = Category::normal;
  std::string positive_prompt, negative_prompt;
  std::optional<std::string> stage2_prompt;
  int steps = 0;
  double cfg_scale = 0.0;
  std::uint64_t seed = 0;
};

inline ParsedRequest parse_request(const json& j) {
  auto field = [&](const char* name, json::value_t type) -> const json& {
    if (!j.is_object() || !j.contains(name)) throw ParseError(std::string("request: missing field '") + name + "'");
    const json& v = j.at(name);
    const bool ok = type == json::value_t::number_float ? v.is_number()
                    : type == json::value_t::number_unsigned ? v.is_number_unsigned() || v.is_number_integer()
                                                              : v.type() == type;
    if (!ok) throw ParseError(std::string("request: field '") + name + "' has the wrong type");
    return v;
  };
  ParsedRequest r;
  try {
    r.category = parse_category(field("category", json::value_t::string).get<std::string>());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("request: ") + e.what());
  }
  r.positive_prompt = field("positive_prompt", json::value_t::string).get<std::string>();
  r.negative_prompt = field("negative_prompt", json::value_t::string).get<std::string>();
  if (!j.contains("stage2_prompt")) throw ParseError("request: missing field 'stage2_prompt'");
  if (!j["stage2_prompt"].is_null()) r.stage2_prompt = field("stage2_prompt", json::value_t::string).get<std::string>();
  r.steps = field("steps", json::value_t::number_unsigned).get<int>();
  r.cfg_scale = field("cfg_scale", json::value_t::number_float).get<double>();
  r.seed = field("seed", json::value_t::number_unsigned).get<std::uint64_t>();
  r.image = decode_png(base64_decode(field("image", json::value_t::string).get<std::string>()));
  r.control_map = decode_mask_png(base64_decode(field("control_map", json::value_t::string).get<std::string>()));
  return r;
}

inline json make_response(const ImageBuffer& img, const std::string& backend, double elapsed_ms) {
  return {{"image", base64_encode(encode_png(img))}, {"backend", backend}, {"elapsed_ms", elapsed_ms}};
}

inline json make_error(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

// Decodes a response body; any deviation from the schema is a BackendError.
inline ImageBuffer parse_response(const std::string& body, const std::string& endpoint) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    throw BackendError("malformed_response", "backend at " + endpoint + " returned invalid JSON");
  }
  if (!j.is_object()) throw BackendError("malformed_response", "backend at " + endpoint + " returned a non-object");
  if (j.contains("error")) {
    const auto& e = j["error"];
    const std::string code = e.is_object() && e.contains("code") && e["code"].is_string() ? e["code"].get<std::string>() : "unknown";
    const std::string msg =
        e.is_object() && e.contains("message") && e["message"].is_string() ? e["message"].get<std::string>() : "";
    throw BackendError(code, "backend at " + endpoint + ": " + msg);
  }
  if (!j.contains("image") || !j["image"].is_string())
    throw BackendError("malformed_response", "backend at " + endpoint + " response lacks 'image'");
  try {
    return decode_png(base64_decode(j["image"].get<std::string>()));
  } catch (const Error& e) {
    throw BackendError("malformed_response", "backend at " + endpoint + " sent an undecodable image: " + e.what());
  }
}

}  // namespace protocol

struct RemoteOptions {
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds request_timeout{120000};
  int max_in_flight = 8;
};

// HTTP client for POST /v1/generate and GET /v1/health. One connection per
// request; concurrency is capped by a semaphore.
class RemoteBackend final : public Backend {
public:
  explicit RemoteBackend(std::string endpoint, RemoteOptions opts = {})
      : endpoint_(std::move(endpoint)), opts_(opts), slots_(std::max(1, opts.max_in_flight)) {
    const auto scheme = endpoint_.find("://");
    if (scheme == std::string::npos || endpoint_.compare(0, scheme, "http") != 0)
      throw InvalidArgument("backend endpoint must be an http:// URL: " + endpoint_);
    const auto path = endpoint_.find('/', scheme + 3);
    origin_ = endpoint_.substr(0, path);
    prefix_ = path == std::string::npos ? "" : endpoint_.substr(path);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  std::string id() const override { return endpoint_; }
  const std::string& endpoint() const { return endpoint_; }

  ImageBuffer generate(const GenerateRequest& req) const override {
    const std::string body = protocol::make_request(req).dump();
    const auto res = call([&](httplib::Client& cli) { return cli.Post(prefix_ + "/v1/generate", body, "application/json"); });
    ImageBuffer img = protocol::parse_response(res.body, endpoint_);
    if (img.width() != req.image.width() || img.height() != req.image.height())
      throw BackendError("malformed_response", "backend at " + endpoint_ + " changed image dimensions");
    return img;
  }

  // Modes advertised by GET /v1/health.
  std::vector<std::string> health() const {
    const auto res = call([&](httplib::Client& cli) { return cli.Get(prefix_ + "/v1/health"); });
    try {
      const auto j = nlohmann::json::parse(res.body);
      if (j.at("status").get<std::string>() != "ok") throw BackendError("unhealthy", "backend at " + endpoint_ + " is not ok");
      return j.at("modes").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
      throw BackendError("malformed_response", "backend at " + endpoint_ + " sent a malformed health response");
    }
  }

private:
  struct Reply {
    int status = 0;
    std::string body;
  };

  template <typename Fn>
  Reply call(Fn&& fn) const {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};
    httplib::Client cli(origin_);
    cli.set_connection_timeout(opts_.connect_timeout);
    cli.set_read_timeout(opts_.request_timeout);
    cli.set_write_timeout(opts_.request_timeout);
    auto res = fn(cli);
    if (!res) {
      const auto err = res.error();
      const bool timeout = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
      throw BackendError(timeout ? "timeout" : "unreachable",
                         "backend at " + endpoint_ + (timeout ? " timed out: " : " unreachable: ") + httplib::to_string(err));
    }
    if (res->status != 200) {
      // Structured errors are reported with their own code.
      const auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_object() && j.contains("error")) protocol::parse_response(res->body, endpoint_);
      throw BackendError("http_" + std::to_string(res->status),
                         "backend at " + endpoint_ + " answered HTTP " + std::to_string(res->status));
    }
    return {res->status, res->body};
  }

  std::string endpoint_;
  std::string origin_;
  std::string prefix_;
  RemoteOptions opts_;
  mutable std::counting_semaphore<> slots_;
};

}  // namespace lanegen
