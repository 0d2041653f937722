#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "tailrisk/core.hpp"

namespace tailrisk {

inline nlohmann::json to_json(const EstimationConfig& c) {
  nlohmann::json j{{"n_starts", c.n_starts},
                   {"n_keep", c.n_keep},
                   {"n_chained", c.n_chained},
                   {"prefix_fraction", c.prefix_fraction},
                   {"seed", c.seed},
                   {"max_iter", c.max_iter},
                   {"tol", c.tol},
                   {"loss_variant", to_string(c.loss_variant)},
                   {"no_cross", c.no_cross},
                   {"uniform_share", c.uniform_share},
                   {"bound", c.bound},
                   {"require_stationary", c.require_stationary}};
  j["lambda_r"] = c.lambda_r ? nlohmann::json(*c.lambda_r) : nlohmann::json("10/T");
  j["lambda_q"] = c.lambda_q ? nlohmann::json(*c.lambda_q) : nlohmann::json("10/T");
  j["lambda_e"] = c.lambda_e ? nlohmann::json(*c.lambda_e) : nlohmann::json("10/T");
  return j;
}

inline EstimationConfig estimation_config_from_json(const nlohmann::json& j) {
  EstimationConfig c;
  c.n_starts = j.value("n_starts", c.n_starts);
  c.n_keep = j.value("n_keep", c.n_keep);
  c.n_chained = j.value("n_chained", c.n_chained);
  c.prefix_fraction = j.value("prefix_fraction", c.prefix_fraction);
  c.seed = j.value("seed", c.seed);
  c.max_iter = j.value("max_iter", c.max_iter);
  c.tol = j.value("tol", c.tol);
  c.no_cross = j.value("no_cross", c.no_cross);
  c.uniform_share = j.value("uniform_share", c.uniform_share);
  c.bound = j.value("bound", c.bound);
  c.require_stationary = j.value("require_stationary", c.require_stationary);
  if (j.contains("loss_variant")) c.loss_variant = loss_variant_from_string(j.at("loss_variant").get<std::string>());
  auto lambda = [&](const char* key, std::optional<double>& slot) {
    if (j.contains(key) && j.at(key).is_number()) slot = j.at(key).get<double>();
  };
  lambda("lambda_r", c.lambda_r);
  lambda("lambda_q", c.lambda_q);
  lambda("lambda_e", c.lambda_e);
  c.validate();
  return c;
}

/// 64-bit FNV-1a of a string; used to tag report cells with model/config provenance.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

inline std::string json_hash(const nlohmann::json& j) { return fnv1a_hex(j.dump()); }

}  // namespace tailrisk
