// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/serialization.hpp"

#include <array>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mqpool/errors.hpp"

namespace mqpool {

namespace {

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t(static_cast<unsigned char>(bytes[i])) << 16) |
                            (std::uint32_t(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                            std::uint32_t(static_cast<unsigned char>(bytes[i + 2]));
    for (int s = 18; s >= 0; s -= 6) out.push_back(kAlphabet[(v >> s) & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t v = std::uint32_t(static_cast<unsigned char>(bytes[i])) << 16;
    if (rest == 2) v |= std::uint32_t(static_cast<unsigned char>(bytes[i + 1])) << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> q{};
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        q[j] = 0;
        ++pad;
        continue;
      }
      if (pad > 0 || (q[j] = decode_char(c)) < 0) throw FormatError("invalid base64 input");
    }
    const std::uint32_t v = (std::uint32_t(q[0]) << 18) | (std::uint32_t(q[1]) << 12) |
                            (std::uint32_t(q[2]) << 6) | std::uint32_t(q[3]);
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

namespace {

json pooling_header(const PoolingConfig& cfg) {
  return json{{"kind", to_string(cfg.kind)},
              {"K", cfg.feature_size},
              {"Q", cfg.queries},
              {"H", cfg.heads},
              {"n", cfg.scorer_depth},
              {"p", cfg.hidden_size},
              {"seed", cfg.seed}};
}

}  // namespace

json pooling_to_json(const PoolingConfig& cfg) {
  cfg.validate();
  json j = pooling_header(cfg);
  json weights = json::array();
  const auto names = cfg.scorer_names();
  for (std::size_t i = 0; i < cfg.scorer.size(); ++i) {
    weights.push_back({{"name", names[i]}, {"base64", base64_encode(encode_tensor(cfg.scorer[i]))}});
  }
  j["weights"] = std::move(weights);
  return j;
}

json pooling_to_json(const PoolingConfig& cfg, const std::filesystem::path& dir,
                     const std::string& prefix) {
  cfg.validate();
  json j = pooling_header(cfg);
  json weights = json::array();
  const auto names = cfg.scorer_names();
  for (std::size_t i = 0; i < cfg.scorer.size(); ++i) {
    const std::string file = prefix + names[i] + ".mqt";
    tensor_write(cfg.scorer[i], dir / file);
    weights.push_back({{"name", names[i]}, {"file", file}});
  }
  j["weights"] = std::move(weights);
  return j;
}

PoolingConfig pooling_from_json(const json& j, const std::filesystem::path& base_dir) {
  try {
    reject_unknown_keys(j, {"kind", "K", "Q", "H", "n", "p", "seed", "weights"}, "pooling config");
    PoolingConfig cfg;
    cfg.kind = parse_pooling_kind(j.at("kind").get<std::string>());
    cfg.feature_size = j.at("K").get<std::size_t>();
    cfg.queries = j.value("Q", std::size_t{1});
    cfg.heads = j.value("H", std::size_t{1});
    cfg.scorer_depth = j.value("n", 1);
    cfg.hidden_size = j.value("p", std::size_t{0});
    cfg.seed = j.value("seed", std::uint64_t{0});
    const auto names = cfg.scorer_names();
    const json weights = j.value("weights", json::array());
    if (weights.size() != names.size()) {
      throw ConfigError("pooling config lists " + std::to_string(weights.size()) +
                        " weight tensors, expected " + std::to_string(names.size()));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      const json& w = weights[i];
      reject_unknown_keys(w, {"name", "base64", "file"}, "pooling weight");
      if (w.at("name").get<std::string>() != names[i]) {
        throw ConfigError("pooling weight " + std::to_string(i) + " should be '" + names[i] + "'");
      }
      if (w.contains("base64")) {
        cfg.scorer.push_back(decode_tensor(base64_decode(w.at("base64").get<std::string>())));
      } else {
        cfg.scorer.push_back(tensor_read(base_dir / w.at("file").get<std::string>()));
      }
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed pooling config: ") + e.what());
  }
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view context) {
  if (!j.is_object()) throw ConfigError(std::string(context) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + std::string(context));
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mqpool
