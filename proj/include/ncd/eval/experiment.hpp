#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ncd/core/types.hpp"
#include "ncd/decode/decode.hpp"
#include "ncd/eval/metrics.hpp"

namespace ncd {

/// Calls fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception (lowest index) is rethrown after all threads finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Worker count used when none is configured.
std::size_t default_workers();

struct ExampleOutcome {
  std::string example_id;
  std::optional<DecodeResult> result;
  std::string error;  // set when decoding failed
};

/// The direct condition an example is decoded under.
Condition decoding_condition(const GroundedExample& example);

/// Decodes every example, in input order. Failures are recorded per example.
std::vector<ExampleOutcome> decode_examples(std::span<const GroundedExample> examples, DecoderKind kind,
                                            const ScorerSet& scorers, const ScalingConfig& scaling,
                                            const BeamConfig& beam, std::size_t workers = 1);

struct ExampleMetrics {
  std::string example_id;
  bool ok = false;
  std::string error;
  TokenSeq response;
  double token_f1 = 0.0;   // response vs grounding document
  double lcs_ratio = 0.0;  // response vs grounding document
  double combined = 0.0;
  double selection = 0.0;  // final-selection objective of the decoder
};

struct MetricReport {
  std::vector<ExampleMetrics> examples;
  std::size_t count = 0;     // examples with an output
  std::size_t failures = 0;  // examples whose decoding failed
  double token_f1_mean = 0.0;
  double token_f1_stderr = 0.0;
  double lcs_ratio_mean = 0.0;
  double lcs_ratio_stderr = 0.0;
  double combined_mean = 0.0;
  double selection_mean = 0.0;
  std::optional<double> bleu;  // against gold responses, when every example has one
  BleuStats bleu_stats;
  std::optional<double> perplexity;  // of the outputs under the response LM
  PerplexityStats perplexity_stats;
};

/// Scores decoder outputs. The grounding document of each example is the
/// token_f1/lcs reference; `lm` may be null.
MetricReport evaluate(std::span<const GroundedExample> examples, std::span<const ExampleOutcome> outcomes,
                      const Scorer* lm, bool length_normalize);

/// Metric names accepted by metric_value: token_f1, lcs_ratio, bleu,
/// perplexity, combined, selection.
double metric_value(const MetricReport& report, const std::string& metric);

/// "a:b:step" or a comma separated list.
std::vector<double> parse_grid_axis(const std::string& text);

/// {0.0, 0.1, ..., 2.0}
std::vector<double> default_grid_axis();

struct SweepPoint {
  double lambda_channel = 0.0;
  double lambda_lm = 0.0;
  MetricReport report;
  bool failed = false;  // every example failed
};

struct SweepResult {
  std::string decoder;
  std::string dataset_id;
  std::string selection_metric;
  std::vector<SweepPoint> points;
  std::optional<std::size_t> best;
};

/// Evaluates every (lambda_channel, lambda_lm) pair of the grid.
/// Perplexity is the only metric where lower wins.
SweepResult sweep(std::span<const GroundedExample> examples, const ScorerSet& scorers, DecoderKind kind,
                  const BeamConfig& beam, std::span<const std::pair<double, double>> grid,
                  const std::string& selection_metric = "token_f1", double lambda_direct = 1.0,
                  std::size_t workers = 1, std::string dataset_id = {});

/// Largest divisor of b not above sqrt(b) as k1, k2 = b / k1.
std::pair<int, int> liu_factorization(int budget);

struct CurveRow {
  DecoderKind kind = DecoderKind::direct;
  int budget = 1;
  int k1 = 0;  // Liu only
  int k2 = 0;
  MetricReport report;
};

/// One run per (kind, budget). Scaling comes from `scaling_for(kind)`.
std::vector<CurveRow> budget_curve(std::span<const GroundedExample> examples, const ScorerSet& scorers,
                                   std::span<const DecoderKind> kinds, std::span<const int> budgets,
                                   const BeamConfig& base, const std::function<ScalingConfig(DecoderKind)>& scaling_for,
                                   std::size_t workers = 1);

/// CSV with header "kind,budget,metric,value".
std::string curve_csv(std::span<const CurveRow> rows);

/// Aggregates and config-free summary of a report.
std::string report_json(const MetricReport& report);
/// One line per example.
std::string report_examples_jsonl(const MetricReport& report);
std::string sweep_json(const SweepResult& result);

}  // namespace ncd
