#include "pyroprop/metrics.hpp"

#include <cmath>

#include "pyroprop/errors.hpp"

namespace pyroprop {

namespace {

void require_same_shape(const Raster& a, const Raster& b, const char* op) {
    if (!a.same_shape(b))
        throw InvalidShape(std::string(op) + ": raster shapes differ");
    if (a.data.empty()) throw InvalidShape(std::string(op) + ": empty raster");
}

} // namespace

double mse(const Raster& a, const Raster& b) {
    require_same_shape(a, b, "mse");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(a.data.size());
}

double burned_area(const Raster& y_t, const Raster& y_0) {
    require_same_shape(y_t, y_0, "burned_area");
    double sum = 0.0;
    for (std::size_t i = 0; i < y_t.data.size(); ++i)
        sum += static_cast<double>(y_t.data[i]) - static_cast<double>(y_0.data[i]);
    return sum;
}

double wmse(const std::vector<WmseSample>& samples) {
    std::vector<std::pair<double, double>> parts;
    parts.reserve(samples.size());
    for (const WmseSample& s : samples)
        parts.emplace_back(mse(*s.y_t, *s.y_p), burned_area(*s.y_t, *s.y_0));
    return wmse_from_parts(parts);
}

double wmse_from_parts(const std::vector<std::pair<double, double>>& mse_area) {
    if (mse_area.empty()) throw InvalidInput("wmse: no samples");
    double num = 0.0, den = 0.0;
    for (auto [m, a] : mse_area) {
        num += m * a;
        den += a;
    }
    if (den <= 0.0) throw InvalidInput("wmse: total burned area is zero, weights undefined");
    return num / den;
}

double jaccard_at_threshold(const Raster& target, const Raster& pred, double threshold) {
    require_same_shape(target, pred, "jaccard_at_threshold");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw InvalidInput("jaccard threshold must lie strictly between 0 and 1");
    const float thr = static_cast<float>(threshold);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < target.data.size(); ++i) {
        const bool a = target.data[i] >= thr;
        const bool b = pred.data[i] >= thr;
        inter += a && b;
        uni += a || b;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double loss_value(const Raster& y_p, const Raster& y_t, const Raster& y_0, double tau) {
    return std::log10((mse(y_p, y_t) + tau) / (mse(y_0, y_t) + tau));
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const Entry& e : samples)
        entries.push_back({{"scenario_id", e.scenario_id},
                           {"mse", e.mse},
                           {"burned_area", e.burned_area},
                           {"jaccard", e.jaccard}});
    nlohmann::json j{{"threshold", threshold},
                     {"wmse", wmse},
                     {"mean_jaccard", mean_jaccard},
                     {"samples", entries}};
    if (!wall_times_s.empty()) j["wall_times_s"] = wall_times_s;
    return j;
}

EvalReport evaluate_samples(const std::vector<EvalItem>& items, double threshold) {
    if (items.empty()) throw InvalidInput("evaluate_samples: no samples");
    EvalReport report;
    report.threshold = threshold;
    std::vector<std::pair<double, double>> parts;
    double jsum = 0.0;
    for (const EvalItem& it : items) {
        EvalReport::Entry e;
        e.scenario_id = it.scenario_id;
        e.mse = mse(*it.y_t, *it.y_p);
        e.burned_area = burned_area(*it.y_t, *it.y_0);
        e.jaccard = jaccard_at_threshold(*it.y_t, *it.y_p, threshold);
        parts.emplace_back(e.mse, e.burned_area);
        jsum += e.jaccard;
        report.samples.push_back(e);
    }
    report.wmse = wmse_from_parts(parts);
    report.mean_jaccard = jsum / static_cast<double>(items.size());
    return report;
}

} // namespace pyroprop
