#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tabrex/corpus.hpp"

namespace tabrex {

// One ranked relational fact candidate. NA is never predicted.
struct Prediction {
    EntityPair pair;
    int relation = 0;           // non-NA relation index
    std::string relation_name;  // used for deterministic tie-breaking
    double score = 0.0;
};

struct PRCurve {
    struct Point {
        std::size_t rank = 0;
        double recall = 0.0;
        double precision = 0.0;
    };
    std::vector<Point> points;
    std::size_t n_gold = 0;
};

enum class TestModeKind : std::uint8_t { overall, single, one, two, all, empty_onehop };

const char* test_mode_name(TestModeKind k);
std::optional<TestModeKind> parse_test_mode(const std::string& s);

struct TestMode {
    TestModeKind kind = TestModeKind::overall;
    std::uint64_t seed = 0;  // used by the random-sentence modes ONE and TWO
};

struct EvalReport {
    std::string mode;
    double auc = 0.0;
    // Precision at recall 0.1 / 0.2 / 0.3; absent when recall never gets there.
    std::map<std::string, double> p_at;
    std::size_t n_gold = 0;
    std::size_t n_predictions = 0;
};

// Sort by score descending; ties broken by (pair, relation name) so the
// ranking is deterministic.
std::vector<Prediction> rank_facts(std::vector<Prediction> predictions);

using GoldSet = std::set<std::pair<EntityPair, int>>;

// Precision/recall at every rank prefix, trapezoid AUC over the polyline from
// recall 0 (first precision carried back) to the maximum recall reached, and
// first-crossing P@{0.1,0.2,0.3}.
std::pair<PRCurve, EvalReport> pr_metrics(std::span<const Prediction> ranked, const GoldSet& gold);

// A pair under evaluation with its (mode-filtered) 1-hop and full 2-hop bags.
struct EvalPair {
    EntityPair pair;
    std::vector<std::uint32_t> onehop;
    std::vector<std::uint32_t> twohop;
};

// SINGLE keeps |S| = 1 pairs; ONE/TWO/ALL keep |S| >= 2 pairs and sample
// 1/2/all sentences per pair; EMPTY_ONEHOP keeps |S| = 0, |S^T| > 0 pairs;
// OVERALL keeps pairs with |S| >= 1. 2-hop bags pass through untouched.
std::vector<EvalPair> filter_test_mode(std::vector<EvalPair> pairs, const TestMode& mode);

void write_report(const std::filesystem::path& path, const EvalReport& report);
void write_pr_curve(const std::filesystem::path& path, const PRCurve& curve);
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> ranked);

}  // namespace tabrex
