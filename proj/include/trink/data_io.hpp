#pragma once

// File formats for ink data.
//
//   ink JSONL:   {"text": "abc", "points": [[dx, dy, s], ...]}   one sample per line
//   prompts:     {"text": "abc"}                                   one prompt per line
//   stats JSON:  {"mean_dx":..,"mean_dy":..,"std_dx":..,"std_dy":..,"r":..}

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trink/errors.hpp"
#include "trink/ink.hpp"
#include "trink/vocabulary.hpp"

namespace trink {

using json = nlohmann::json;

inline Sample parse_ink_line(const std::string& line, const Vocabulary& vocab, const std::string& where, std::size_t n) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(where, n, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("text") || !j.contains("points")) {
    throw ParseError(where, n, "expected an object with \"text\" and \"points\"");
  }
  if (!j["text"].is_string() || j["text"].get<std::string>().empty()) throw ParseError(where, n, "\"text\" must be a nonempty string");
  if (!j["points"].is_array() || j["points"].empty()) throw ParseError(where, n, "\"points\" must be a nonempty array");
  Sample s;
  try {
    s.text = encode_text(j["text"].get<std::string>(), vocab);
  } catch (const VocabularyError& e) {
    throw ParseError(where, n, e.what());
  }
  std::size_t k = 0;
  for (const auto& p : j["points"]) {
    if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() || !p[2].is_number()) {
      throw ParseError(where, n, "point " + std::to_string(k) + " must be [dx, dy, s]");
    }
    const double dx = p[0].get<double>(), dy = p[1].get<double>(), pen = p[2].get<double>();
    if (!std::isfinite(dx) || !std::isfinite(dy)) throw ParseError(where, n, "point " + std::to_string(k) + " is not finite");
    if (pen != 0.0 && pen != 1.0) throw ParseError(where, n, "point " + std::to_string(k) + " has pen state outside {0,1}");
    s.ink.points.push_back({dx, dy, pen == 1.0});
    ++k;
  }
  return s;
}

inline Corpus load_ink_jsonl(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ink file " + path);
  Corpus out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_ink_line(line, vocab, path, n));
  }
  return out;
}

inline std::string ink_to_json_line(const std::string& text, const InkSequence& ink) {
  // Shortest round-trip formatting keeps the files diffable and exact.
  std::ostringstream os;
  os << R"({"text":)" << json(text).dump() << R"(,"points":[)";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < ink.points.size(); ++i) {
    const auto& p = ink.points[i];
    if (i) os << ',';
    os << '[' << json(p.dx).dump() << ',' << json(p.dy).dump() << ',' << (p.pen_up ? 1 : 0) << ']';
  }
  os << "]}";
  return os.str();
}

inline void save_ink_jsonl(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write ink file " + path);
  for (const auto& s : corpus) out << ink_to_json_line(s.text.chars, s.ink) << '\n';
}

inline std::vector<std::string> load_prompts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prompts file " + path);
  std::vector<std::string> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path, n, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string() || j["text"].get<std::string>().empty()) {
      throw ParseError(path, n, "expected {\"text\": nonempty string}");
    }
    out.push_back(j["text"].get<std::string>());
  }
  return out;
}

inline void save_prompts(const std::string& path, const std::vector<std::string>& prompts) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write prompts file " + path);
  for (const auto& p : prompts) out << json{{"text", p}}.dump() << '\n';
}

inline json stats_to_json(const NormalizationStats& s) {
  return json{{"mean_dx", s.mean_dx}, {"mean_dy", s.mean_dy}, {"std_dx", s.std_dx}, {"std_dy", s.std_dy}, {"r", s.r}};
}

inline NormalizationStats stats_from_json(const json& j) {
  NormalizationStats s;
  for (const char* key : {"mean_dx", "mean_dy", "std_dx", "std_dy", "r"}) {
    if (!j.contains(key) || !j[key].is_number()) throw ParseError("stats", 0, std::string("missing numeric field '") + key + "'");
  }
  s.mean_dx = j["mean_dx"].get<double>();
  s.mean_dy = j["mean_dy"].get<double>();
  s.std_dx = j["std_dx"].get<double>();
  s.std_dy = j["std_dy"].get<double>();
  s.r = j["r"].get<double>();
  s.validate();
  return s;
}

inline void save_stats(const std::string& path, const NormalizationStats& s) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write stats " + path);
  out << stats_to_json(s).dump(2) << '\n';
}

inline NormalizationStats load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stats " + path);
  return stats_from_json(json::parse(in));
}

}  // namespace trink
