#include "tabrex/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace tabrex {

using nlohmann::json;

const char* test_mode_name(TestModeKind k) {
    switch (k) {
        case TestModeKind::overall: return "overall";
        case TestModeKind::single: return "single";
        case TestModeKind::one: return "one";
        case TestModeKind::two: return "two";
        case TestModeKind::all: return "all";
        case TestModeKind::empty_onehop: return "empty-onehop";
    }
    return "overall";
}

std::optional<TestModeKind> parse_test_mode(const std::string& s) {
    for (TestModeKind k : {TestModeKind::overall, TestModeKind::single, TestModeKind::one,
                           TestModeKind::two, TestModeKind::all, TestModeKind::empty_onehop}) {
        if (s == test_mode_name(k)) return k;
    }
    return std::nullopt;
}

std::vector<Prediction> rank_facts(std::vector<Prediction> predictions) {
    for (const Prediction& p : predictions) {
        if (!std::isfinite(p.score)) throw ValidationError("non-finite prediction score");
    }
    std::sort(predictions.begin(), predictions.end(), [](const Prediction& a, const Prediction& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.pair != b.pair) return a.pair < b.pair;
        return a.relation_name < b.relation_name;
    });
    return predictions;
}

std::pair<PRCurve, EvalReport> pr_metrics(std::span<const Prediction> ranked, const GoldSet& gold) {
    if (gold.empty()) throw ValidationError("empty gold set");

    PRCurve curve;
    curve.n_gold = gold.size();
    curve.points.reserve(ranked.size());
    std::size_t hits = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        if (gold.count({ranked[k].pair, ranked[k].relation})) ++hits;
        PRCurve::Point pt;
        pt.rank = k + 1;
        pt.precision = static_cast<double>(hits) / static_cast<double>(k + 1);
        pt.recall = static_cast<double>(hits) / static_cast<double>(gold.size());
        curve.points.push_back(pt);
    }

    EvalReport report;
    report.n_gold = gold.size();
    report.n_predictions = ranked.size();

    // Trapezoid area under the (recall, precision) polyline, with the first
    // precision carried back to recall 0.
    double auc = 0.0;
    double prev_recall = 0.0;
    double prev_precision = curve.points.empty() ? 0.0 : curve.points.front().precision;
    for (const auto& pt : curve.points) {
        auc += (pt.recall - prev_recall) * (pt.precision + prev_precision) / 2.0;
        prev_recall = pt.recall;
        prev_precision = pt.precision;
    }
    report.auc = auc;

    for (double level : {0.1, 0.2, 0.3}) {
        for (const auto& pt : curve.points) {
            if (pt.recall >= level) {
                char key[8];
                std::snprintf(key, sizeof key, "%.1f", level);
                report.p_at[key] = pt.precision;
                break;
            }
        }
    }
    return {std::move(curve), std::move(report)};
}

namespace {

// Uniform sample of k bag entries, deterministic per (seed, pair).
std::vector<std::uint32_t> sample_bag(std::vector<std::uint32_t> bag, std::size_t k,
                                      const EntityPair& pair, std::uint64_t seed) {
    if (bag.size() <= k) return bag;
    Rng rng(mix_seed(seed, fnv1a64(pair.head + '\x1f' + pair.tail)));
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(bag.size() - i));
        std::swap(bag[i], bag[j]);
    }
    bag.resize(k);
    return bag;
}

}  // namespace

std::vector<EvalPair> filter_test_mode(std::vector<EvalPair> pairs, const TestMode& mode) {
    std::vector<EvalPair> out;
    out.reserve(pairs.size());
    for (EvalPair& p : pairs) {
        const std::size_t n = p.onehop.size();
        switch (mode.kind) {
            case TestModeKind::overall:
                if (n >= 1) out.push_back(std::move(p));
                break;
            case TestModeKind::single:
                if (n == 1) out.push_back(std::move(p));
                break;
            case TestModeKind::one:
                if (n >= 2) {
                    p.onehop = sample_bag(std::move(p.onehop), 1, p.pair, mode.seed);
                    out.push_back(std::move(p));
                }
                break;
            case TestModeKind::two:
                if (n >= 2) {
                    p.onehop = sample_bag(std::move(p.onehop), 2, p.pair, mode.seed);
                    out.push_back(std::move(p));
                }
                break;
            case TestModeKind::all:
                if (n >= 2) out.push_back(std::move(p));
                break;
            case TestModeKind::empty_onehop:
                if (n == 0 && !p.twohop.empty()) out.push_back(std::move(p));
                break;
        }
    }
    return out;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
    json j;
    j["mode"] = report.mode;
    j["auc"] = report.auc;
    j["p_at"] = json::object();
    for (const auto& [k, v] : report.p_at) j["p_at"][k] = v;
    j["n_gold"] = report.n_gold;
    j["n_predictions"] = report.n_predictions;
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write report: " + path.string());
    out << j.dump(2) << "\n";
}

void write_pr_curve(const std::filesystem::path& path, const PRCurve& curve) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write PR curve: " + path.string());
    out << "rank,recall,precision\n";
    char buf[96];
    for (const auto& pt : curve.points) {
        std::snprintf(buf, sizeof buf, "%zu,%.9f,%.9f\n", pt.rank, pt.recall, pt.precision);
        out << buf;
    }
}

void write_predictions(const std::filesystem::path& path, std::span<const Prediction> ranked) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write predictions: " + path.string());
    for (const Prediction& p : ranked) {
        json j;
        j["head"] = p.pair.head;
        j["tail"] = p.pair.tail;
        j["relation"] = p.relation_name;
        j["score"] = p.score;
        out << j.dump() << "\n";
    }
}

}  // namespace tabrex
