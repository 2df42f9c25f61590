#include "xplain/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "xplain/errors.hpp"
#include "xplain/text.hpp"

namespace xplain::eval {

double normalize_likert(int v) {
    if (v < 1 || v > 3) throw ArgumentError("Likert value must be 1, 2 or 3, got " + std::to_string(v));
    return (v - 1) / 2.0;
}

void LikertResponse::validate() const {
    for (auto key : kMetricKeys) {
        auto it = answers.find(std::string(key));
        if (it == answers.end()) throw ArgumentError("missing metric " + std::string(key));
        normalize_likert(it->second);
    }
    for (const auto& [k, v] : answers) {
        if (std::find(kMetricKeys.begin(), kMetricKeys.end(), k) == kMetricKeys.end()) {
            throw ArgumentError("unknown metric " + k);
        }
    }
}

nlohmann::ordered_json LikertResponse::to_json() const {
    nlohmann::ordered_json j;
    j["evaluator"] = evaluator;
    j["instance"] = instance;
    if (!group.empty()) j["group"] = group;
    for (auto key : kMetricKeys) {
        auto it = answers.find(std::string(key));
        if (it != answers.end()) j[std::string(key)] = it->second;
    }
    return j;
}

LikertResponse LikertResponse::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ArgumentError("response is not an object");
    LikertResponse r;
    try {
        r.evaluator = j.value("evaluator", std::string());
        r.instance = j.value("instance", std::string());
        r.group = j.value("group", std::string());
        for (const auto& [k, v] : j.items()) {
            if (k == "evaluator" || k == "instance" || k == "group") continue;
            if (!v.is_number_integer()) throw ArgumentError("metric " + k + " is not an integer");
            r.answers[k] = v.get<int>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("malformed response: ") + e.what());
    }
    r.validate();
    return r;
}

std::vector<LikertResponse> parse_responses(std::istream& in) {
    std::vector<LikertResponse> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(LikertResponse::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(e.what(), lineno);
        } catch (const ArgumentError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return out;
}

std::vector<LikertResponse> read_responses(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open responses: " + path.string());
    return parse_responses(in);
}

Aggregate aggregate_values(std::vector<double> values) {
    if (values.empty()) throw ArgumentError("nothing to aggregate");
    Aggregate a;
    a.count = values.size();
    double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / n;
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.variance = ss / n;
    std::sort(values.begin(), values.end());
    std::size_t mid = values.size() / 2;
    a.median = values.size() % 2 ? values[mid] : (values[mid - 1] + values[mid]) / 2.0;
    return a;
}

Aggregate aggregate(const std::vector<LikertResponse>& responses, std::string_view metric) {
    std::vector<double> values;
    for (const auto& r : responses) {
        auto it = r.answers.find(std::string(metric));
        if (it != r.answers.end()) values.push_back(normalize_likert(it->second));
    }
    if (values.empty()) throw ArgumentError("no responses for metric " + std::string(metric));
    return aggregate_values(std::move(values));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ArgumentError("pearson: lengths differ");
    if (x.size() < 2) throw ArgumentError("pearson: need at least two points");
    double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw ArgumentError("pearson: zero variance");
    double r = sxy / (std::sqrt(sxx) * std::sqrt(syy));
    return std::clamp(r, -1.0, 1.0);
}

std::vector<AccuracyDelta> accuracy_compare(const std::vector<AccuracyResult>& results) {
    std::vector<AccuracyDelta> out;
    std::size_t best = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (r.total == 0) throw ArgumentError("accuracy total must be positive for " + r.model);
        if (r.vanilla_correct > r.total || r.enhanced_correct > r.total) {
            throw ArgumentError("correct count exceeds total for " + r.model);
        }
        double t = static_cast<double>(r.total);
        AccuracyDelta d{r.model, r.vanilla_correct / t, r.enhanced_correct / t, 0.0, false};
        d.delta = d.enhanced - d.vanilla;
        out.push_back(d);
        if (out[i].delta > out[best].delta) best = i;
    }
    if (!out.empty()) out[best].max_delta = true;
    return out;
}

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string EvalReport::to_text() const {
    std::ostringstream out;
    for (const auto& [group, per] : metrics) {
        out << "group " << group << '\n';
        out << "  metric               n      mean  variance    median\n";
        for (const auto& [name, a] : per) {
            char line[160];
            std::snprintf(line, sizeof line, "  %-18s %4zu %9s %9s %9s\n", name.c_str(), a.count, fixed(a.mean).c_str(),
                          fixed(a.variance).c_str(), fixed(a.median).c_str());
            out << line;
        }
    }
    if (!correlations.empty()) {
        out << "correlations\n";
        for (const auto& [pair, r] : correlations) out << "  " << pair << ' ' << fixed(r) << '\n';
    }
    if (!accuracy.empty()) {
        out << "accuracy\n";
        for (const auto& a : accuracy) {
            out << "  " << a.model << " vanilla " << fixed(a.vanilla) << " enhanced " << fixed(a.enhanced) << " delta "
                << fixed(a.delta) << (a.max_delta ? " *" : "") << '\n';
        }
    }
    return out.str();
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["metrics"] = nlohmann::ordered_json::object();
    for (const auto& [group, per] : metrics) {
        for (const auto& [name, a] : per) {
            j["metrics"][group][name] = {{"count", a.count}, {"mean", a.mean}, {"variance", a.variance}, {"median", a.median}};
        }
    }
    j["correlations"] = nlohmann::ordered_json::object();
    for (const auto& [pair, r] : correlations) j["correlations"][pair] = r;
    j["accuracy"] = nlohmann::ordered_json::array();
    for (const auto& a : accuracy) {
        j["accuracy"].push_back({{"model", a.model}, {"vanilla", a.vanilla}, {"enhanced", a.enhanced},
                                 {"delta", a.delta}, {"max_delta", a.max_delta}});
    }
    return j;
}

EvalReport build_report(const std::vector<LikertResponse>& responses,
                        const std::vector<std::pair<std::string, std::string>>& correlate,
                        const std::vector<AccuracyResult>& accuracy) {
    EvalReport rep;
    std::map<std::string, std::vector<LikertResponse>> groups;
    for (const auto& r : responses) {
        groups["all"].push_back(r);
        if (!r.group.empty() && r.group != "all") groups[r.group].push_back(r);
    }
    for (const auto& [group, rs] : groups) {
        for (auto key : kMetricKeys) rep.metrics[group][std::string(key)] = aggregate(rs, key);
    }
    for (const auto& [a, b] : correlate) {
        for (const auto& name : {a, b}) {
            if (std::find(kMetricKeys.begin(), kMetricKeys.end(), name) == kMetricKeys.end()) {
                throw ArgumentError("unknown metric " + name);
            }
        }
        std::vector<double> x, y;
        for (const auto& r : responses) {
            x.push_back(normalize_likert(r.answers.at(a)));
            y.push_back(normalize_likert(r.answers.at(b)));
        }
        try {
            rep.correlations[a + "~" + b] = pearson(x, y);
        } catch (const ArgumentError&) {
        }
    }
    rep.accuracy = accuracy_compare(accuracy);
    return rep;
}

}  // namespace xplain::eval
