#include "ncd/eval/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "ncd/core/error.hpp"

namespace ncd {
namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

std::pair<double, double> mean_stderr(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

ordered_json aggregates(const MetricReport& r) {
  ordered_json j;
  j["count"] = r.count;
  j["failures"] = r.failures;
  j["token_f1_mean"] = r.token_f1_mean;
  j["token_f1_stderr"] = r.token_f1_stderr;
  j["lcs_ratio_mean"] = r.lcs_ratio_mean;
  j["lcs_ratio_stderr"] = r.lcs_ratio_stderr;
  j["combined_mean"] = number_or_null(r.combined_mean);
  j["selection_mean"] = number_or_null(r.selection_mean);
  j["bleu"] = r.bleu ? ordered_json(*r.bleu) : ordered_json(nullptr);
  j["bleu_stats"] = {{"matches", r.bleu_stats.matches},
                     {"totals", r.bleu_stats.totals},
                     {"reference_totals", r.bleu_stats.reference_totals},
                     {"hypothesis_length", r.bleu_stats.hypothesis_length},
                     {"reference_length", r.bleu_stats.reference_length}};
  j["perplexity"] = r.perplexity ? number_or_null(*r.perplexity) : ordered_json(nullptr);
  j["perplexity_stats"] = {{"log_prob", number_or_null(r.perplexity_stats.log_prob)},
                           {"tokens", r.perplexity_stats.tokens}};
  j["factuality_proxy"] = "token_f1";
  j["not_computed"] = {"Q2", "BERTScore", "METEOR"};
  return j;
}

}  // namespace

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

Condition decoding_condition(const GroundedExample& example) {
  return Condition::direct(example.context, example.document, example.control);
}

std::vector<ExampleOutcome> decode_examples(std::span<const GroundedExample> examples, DecoderKind kind,
                                            const ScorerSet& scorers, const ScalingConfig& scaling,
                                            const BeamConfig& beam, std::size_t workers) {
  scaling.validate();
  beam.validate();
  std::vector<ExampleOutcome> out(examples.size());
  parallel_for(examples.size(), workers, [&](std::size_t i) {
    out[i].example_id = examples[i].id;
    try {
      out[i].result = run_decoder(kind, scorers, decoding_condition(examples[i]), scaling, beam);
    } catch (const ScorerError& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

MetricReport evaluate(std::span<const GroundedExample> examples, std::span<const ExampleOutcome> outcomes,
                      const Scorer* lm, bool length_normalize) {
  if (examples.size() != outcomes.size()) throw ConfigError("evaluate needs one outcome per example");
  MetricReport report;
  std::vector<double> f1, lcs;
  double combined = 0.0, selection = 0.0;
  bool all_have_gold = true;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const auto& out = outcomes[i];
    if (out.example_id != ex.id) throw ConfigError("outcome order does not match the examples");
    ExampleMetrics m;
    m.example_id = ex.id;
    if (!out.result) {
      m.error = out.error;
      ++report.failures;
      report.examples.push_back(std::move(m));
      continue;
    }
    const auto& best = out.result->best;
    m.ok = true;
    m.response = best.response();
    m.token_f1 = token_f1(m.response, ex.document);
    m.lcs_ratio = lcs_ratio(m.response, ex.document);
    m.combined = best.combined;
    m.selection = selection_score(best, length_normalize);
    f1.push_back(m.token_f1);
    lcs.push_back(m.lcs_ratio);
    combined += m.combined;
    selection += m.selection;
    if (ex.response) {
      report.bleu_stats.add(m.response, *ex.response);
    } else {
      all_have_gold = false;
    }
    if (lm) report.perplexity_stats += perplexity_stats(*lm, Condition::response_lm(ex.context), m.response);
    report.examples.push_back(std::move(m));
  }
  report.count = f1.size();
  std::tie(report.token_f1_mean, report.token_f1_stderr) = mean_stderr(f1);
  std::tie(report.lcs_ratio_mean, report.lcs_ratio_stderr) = mean_stderr(lcs);
  if (report.count > 0) {
    report.combined_mean = combined / static_cast<double>(report.count);
    report.selection_mean = selection / static_cast<double>(report.count);
    if (all_have_gold) report.bleu = report.bleu_stats.score();
    if (lm) report.perplexity = report.perplexity_stats.perplexity();
  }
  return report;
}

double metric_value(const MetricReport& report, const std::string& metric) {
  if (metric == "token_f1") return report.token_f1_mean;
  if (metric == "lcs_ratio") return report.lcs_ratio_mean;
  if (metric == "combined") return report.combined_mean;
  if (metric == "selection") return report.selection_mean;
  if (metric == "bleu") {
    if (!report.bleu) throw ConfigError("bleu needs gold responses for every example");
    return *report.bleu;
  }
  if (metric == "perplexity") {
    if (!report.perplexity) throw ConfigError("perplexity needs a response LM");
    return *report.perplexity;
  }
  throw ConfigError("unknown metric '" + metric + "'");
}

std::vector<double> parse_grid_axis(const std::string& text) {
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + s + "' in grid '" + text + "'");
    }
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("grid range must be start:stop:step, got '" + text + "'");
    const double start = number(parts[0]), stop = number(parts[1]), step = number(parts[2]);
    if (!(step > 0.0) || stop < start) throw ConfigError("grid range needs step > 0 and stop >= start");
    const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(std::round((start + static_cast<double>(i) * step) * 1e10) / 1e10);
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
  }
  if (out.empty()) throw ConfigError("empty grid");
  for (double v : out) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("grid values must be finite and >= 0");
  }
  return out;
}

std::vector<double> default_grid_axis() {
  auto axis = parse_grid_axis("0.1:2.0:0.1");
  axis.insert(axis.begin(), 0.0);
  return axis;
}

SweepResult sweep(std::span<const GroundedExample> examples, const ScorerSet& scorers, DecoderKind kind,
                  const BeamConfig& beam, std::span<const std::pair<double, double>> grid,
                  const std::string& selection_metric, double lambda_direct, std::size_t workers,
                  std::string dataset_id) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (grid[i] == grid[j]) throw ConfigError("sweep grid points must be unique");
    }
  }
  SweepResult result;
  result.decoder = to_string(kind);
  result.dataset_id = std::move(dataset_id);
  result.selection_metric = selection_metric;
  const bool lower_wins = selection_metric == "perplexity";
  for (const auto& [l1, l2] : grid) {
    SweepPoint point;
    point.lambda_channel = l1;
    point.lambda_lm = l2;
    ScalingConfig scaling{lambda_direct, l1, l2};
    auto outcomes = decode_examples(examples, kind, scorers, scaling, beam, workers);
    point.report = evaluate(examples, outcomes, scorers.lm, beam.length_normalize_final);
    point.failed = point.report.count == 0;
    result.points.push_back(std::move(point));
  }
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    if (result.points[i].failed) continue;
    const double v = metric_value(result.points[i].report, selection_metric);
    if (!result.best) {
      result.best = i;
      continue;
    }
    const double b = metric_value(result.points[*result.best].report, selection_metric);
    if (lower_wins ? v < b : v > b) result.best = i;
  }
  return result;
}

std::pair<int, int> liu_factorization(int budget) {
  if (budget < 1) throw ConfigError("budgets must be >= 1");
  int k1 = 1;
  for (int d = 1; d * d <= budget; ++d) {
    if (budget % d == 0) k1 = d;
  }
  return {k1, budget / k1};
}

std::vector<CurveRow> budget_curve(std::span<const GroundedExample> examples, const ScorerSet& scorers,
                                   std::span<const DecoderKind> kinds, std::span<const int> budgets,
                                   const BeamConfig& base, const std::function<ScalingConfig(DecoderKind)>& scaling_for,
                                   std::size_t workers) {
  if (budgets.empty()) throw ConfigError("budget list is empty");
  std::vector<CurveRow> rows;
  for (auto kind : kinds) {
    for (int budget : budgets) {
      if (budget < 1) throw ConfigError("budgets must be >= 1");
      CurveRow row;
      row.kind = kind;
      row.budget = budget;
      BeamConfig cfg = base;
      if (kind == DecoderKind::online_liu) {
        std::tie(row.k1, row.k2) = liu_factorization(budget);
        cfg.liu_k1 = row.k1;
        cfg.liu_k2 = row.k2;
      } else {
        cfg.beam = budget;
      }
      auto outcomes = decode_examples(examples, kind, scorers, scaling_for(kind), cfg, workers);
      row.report = evaluate(examples, outcomes, scorers.lm, cfg.length_normalize_final);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string curve_csv(std::span<const CurveRow> rows) {
  std::string out = "kind,budget,metric,value\n";
  for (const auto& row : rows) {
    auto emit = [&](const char* metric, double value) {
      out += std::string(to_string(row.kind)) + "," + std::to_string(row.budget) + "," + metric + "," +
             format_number(value) + "\n";
    };
    emit("token_f1", row.report.token_f1_mean);
    emit("lcs_ratio", row.report.lcs_ratio_mean);
    emit("combined", row.report.combined_mean);
    emit("selection", row.report.selection_mean);
    if (row.report.bleu) emit("bleu", *row.report.bleu);
    if (row.report.perplexity) emit("perplexity", *row.report.perplexity);
    emit("failures", static_cast<double>(row.report.failures));
    if (row.kind == DecoderKind::online_liu) {
      emit("k1", row.k1);
      emit("k2", row.k2);
    }
  }
  return out;
}

std::string report_json(const MetricReport& report) { return aggregates(report).dump(2) + "\n"; }

std::string report_examples_jsonl(const MetricReport& report) {
  std::string out;
  for (const auto& m : report.examples) {
    ordered_json j;
    j["example_id"] = m.example_id;
    j["ok"] = m.ok;
    if (m.ok) {
      j["response"] = m.response;
      j["token_f1"] = m.token_f1;
      j["lcs_ratio"] = m.lcs_ratio;
      j["combined"] = number_or_null(m.combined);
      j["selection"] = number_or_null(m.selection);
    } else {
      j["error"] = m.error;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string sweep_json(const SweepResult& result) {
  ordered_json j;
  j["decoder"] = result.decoder;
  j["dataset_id"] = result.dataset_id;
  j["selection_metric"] = result.selection_metric;
  j["points"] = ordered_json::array();
  for (const auto& p : result.points) {
    ordered_json point;
    point["lambda_channel"] = p.lambda_channel;
    point["lambda_lm"] = p.lambda_lm;
    point["failed"] = p.failed;
    point["report"] = aggregates(p.report);
    j["points"].push_back(std::move(point));
  }
  if (result.best) {
    j["best"] = {{"index", *result.best},
                 {"lambda_channel", result.points[*result.best].lambda_channel},
                 {"lambda_lm", result.points[*result.best].lambda_lm}};
  } else {
    j["best"] = nullptr;
  }
  return j.dump(2) + "\n";
}

}  // namespace ncd
