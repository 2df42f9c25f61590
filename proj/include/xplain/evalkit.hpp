#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace xplain::eval {

inline constexpr std::array<std::string_view, 7> kMetricKeys = {
    "overall_quality", "understandability", "trustworthiness", "satisfaction",
    "sufficiency",     "completeness",      "accuracy"};

// (v - 1) / 2 for v in {1, 2, 3}; ArgumentError otherwise.
double normalize_likert(int v);

struct LikertResponse {
    std::string evaluator;
    std::string instance;
    std::string group;  // optional cohort label, e.g. "crowd" or "expert"
    std::map<std::string, int> answers;

    // All seven metrics present with values in {1,2,3}, no unknown keys.
    void validate() const;
    nlohmann::ordered_json to_json() const;
    static LikertResponse from_json(const nlohmann::json& j);
};

std::vector<LikertResponse> parse_responses(std::istream& in);
std::vector<LikertResponse> read_responses(const std::filesystem::path& path);

struct Aggregate {
    std::size_t count = 0;
    double mean = 0.0;
    double variance = 0.0;  // population
    double median = 0.0;
};

// Statistics of the normalized values of `metric`. ArgumentError if no response carries it.
Aggregate aggregate(const std::vector<LikertResponse>& responses, std::string_view metric);
Aggregate aggregate_values(std::vector<double> values);

// Sample Pearson coefficient. ArgumentError on unequal lengths, n < 2 or zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct AccuracyResult {
    std::string model;
    std::size_t vanilla_correct = 0;
    std::size_t enhanced_correct = 0;
    std::size_t total = 0;
};

struct AccuracyDelta {
    std::string model;
    double vanilla = 0.0;
    double enhanced = 0.0;
    double delta = 0.0;
    bool max_delta = false;  // largest delta (first model on ties)
};

std::vector<AccuracyDelta> accuracy_compare(const std::vector<AccuracyResult>& results);

struct EvalReport {
    // group -> metric -> statistics; group "all" covers every response
    std::map<std::string, std::map<std::string, Aggregate>> metrics;
    // "a~b" -> Pearson over per-response normalized values
    std::map<std::string, double> correlations;
    std::vector<AccuracyDelta> accuracy;

    std::string to_text() const;
    nlohmann::ordered_json to_json() const;
};

// `correlate` lists metric pairs; pairs with zero variance are skipped.
EvalReport build_report(const std::vector<LikertResponse>& responses,
                        const std::vector<std::pair<std::string, std::string>>& correlate = {},
                        const std::vector<AccuracyResult>& accuracy = {});

}  // namespace xplain::eval
