#pragma once

// Objective evaluation: generate (optionally Top-k), recognize, score, and
// aggregate over the full / long (> 40 chars) / short (< 10 chars) subsets.
// WER is not aggregated for the short subset.

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trink/generate.hpp"
#include "trink/metrics.hpp"
#include "trink/recognizer.hpp"

namespace trink {

inline constexpr std::size_t kLongTextMin = 41;   // long: more than 40 characters
inline constexpr std::size_t kShortTextMax = 9;   // short: fewer than 10 characters

inline bool is_long_text(const std::string& s) { return s.size() >= kLongTextMin; }
inline bool is_short_text(const std::string& s) { return s.size() <= kShortTextMax; }

inline std::string subset_of(const std::string& s) {
  if (is_long_text(s)) return "long";
  if (is_short_text(s)) return "short";
  return "full";
}

struct EvalRow {
  std::string text;
  std::string recognized;
  double cer = 0;
  double wer = 0;
  std::size_t candidates = 0;
  std::size_t selected = 0;
  bool failed = false;
  std::string error;
};

struct SubsetSummary {
  std::size_t count = 0;
  double mean_cer = 0;
  std::optional<double> mean_wer;
};

struct EvalReport {
  SubsetSummary full;
  SubsetSummary long_texts;
  SubsetSummary short_texts;
  std::size_t failed = 0;
  std::vector<EvalRow> rows;

  nlohmann::json to_json() const {
    auto subset = [](const SubsetSummary& s) {
      nlohmann::json j{{"count", s.count}, {"mean_cer", s.mean_cer}};
      if (s.mean_wer) j["mean_wer"] = *s.mean_wer;
      return j;
    };
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json j{{"text", r.text},           {"recognized", r.recognized}, {"cer", r.cer},
                       {"wer", r.wer},             {"subset", subset_of(r.text)}, {"candidates", r.candidates},
                       {"selected", r.selected},   {"failed", r.failed}};
      if (!r.error.empty()) j["error"] = r.error;
      rows_j.push_back(std::move(j));
    }
    return nlohmann::json{{"full", subset(full)},
                          {"long", subset(long_texts)},
                          {"short", subset(short_texts)},
                          {"failed", failed},
                          {"samples", rows_j}};
  }

  std::string to_csv() const {
    std::string out = "text,recognized,subset,cer,wer,candidates,selected,failed\n";
    auto quote = [](const std::string& s) {
      std::string q = "\"";
      for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      return q + "\"";
    };
    for (const auto& r : rows) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%zu,%zu,%d\n", r.cer, r.wer, r.candidates, r.selected, r.failed ? 1 : 0);
      out += quote(r.text) + "," + quote(r.recognized) + "," + subset_of(r.text) + buf;
    }
    return out;
  }
};

// Aggregates rows into subset means; failed rows are excluded and counted.
inline EvalReport aggregate(std::vector<EvalRow> rows) {
  EvalReport rep;
  double full_wer = 0, long_wer = 0;
  for (const auto& r : rows) {
    if (r.failed) {
      ++rep.failed;
      continue;
    }
    ++rep.full.count;
    rep.full.mean_cer += r.cer;
    full_wer += r.wer;
    if (is_long_text(r.text)) {
      ++rep.long_texts.count;
      rep.long_texts.mean_cer += r.cer;
      long_wer += r.wer;
    } else if (is_short_text(r.text)) {
      ++rep.short_texts.count;
      rep.short_texts.mean_cer += r.cer;
    }
  }
  if (rep.full.count) {
    rep.full.mean_cer /= double(rep.full.count);
    rep.full.mean_wer = full_wer / double(rep.full.count);
  }
  if (rep.long_texts.count) {
    rep.long_texts.mean_cer /= double(rep.long_texts.count);
    rep.long_texts.mean_wer = long_wer / double(rep.long_texts.count);
  }
  if (rep.short_texts.count) rep.short_texts.mean_cer /= double(rep.short_texts.count);
  rep.rows = std::move(rows);
  return rep;
}

template <typename T>
EvalReport evaluate(ModelBundle<T>& bundle, const std::vector<std::string>& prompts, Recognizer& recognizer,
                    const GenerationConfig& cfg) {
  if (prompts.empty()) throw ContractError("evaluate: no prompts");
  cfg.validate();
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    EvalRow row;
    row.text = prompts[i];
    try {
      GenerationConfig per = cfg;
      per.seed = cfg.seed + std::uint64_t(i) * 1000003ULL;
      const TopKResult r = generate_topk(bundle, prompts[i], per, recognizer);
      const Candidate& best = r.selected();
      row.recognized = best.recognized;
      row.cer = best.cer;
      row.wer = wer(best.recognized, prompts[i]);
      row.candidates = r.candidates.size();
      row.selected = r.best;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return aggregate(std::move(rows));
}

inline void save_report(const EvalReport& rep, const std::string& json_path, const std::string& csv_path) {
  std::ofstream j(json_path, std::ios::trunc);
  j << rep.to_json().dump(2) << '\n';
  std::ofstream c(csv_path, std::ios::trunc);
  c << rep.to_csv();
  if (!j || !c) throw std::runtime_error("failed to write evaluation report");
}

}  // namespace trink
