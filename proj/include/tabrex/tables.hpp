#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tabrex/corpus.hpp"

namespace tabrex {

// A table cell; empty eid means the cell is not linked to an entity.
struct Cell {
    std::string text;
    std::string eid;
};

// A linked table. Rows are padded to a rectangular grid at load time.
struct WebTable {
    std::string table_id;
    std::string page_eid;  // empty when the hosting page has no linked entity
    std::vector<std::vector<Cell>> rows;

    int width() const { return rows.empty() ? 0 : static_cast<int>(rows[0].size()); }
    int height() const { return static_cast<int>(rows.size()); }
};

struct TableElements {
    std::string topic;                       // page entity, may be empty
    int subject_column = -1;                 // -1 when the table has no NE-column
    std::set<std::string> subject_entities;  // linked entities of the subject column
    std::set<int> body_columns;              // NE-columns other than the subject column
    std::set<std::string> body_entities;     // linked entities of the body columns
    std::set<int> ne_columns;
};

enum class AnchorCriterion : std::uint8_t { topic_subject = 0, row_pair = 1 };

struct AnchorProvenance {
    std::string table_id;
    AnchorCriterion criterion = AnchorCriterion::topic_subject;
    // For topic_subject groups: true when the group places the topic as tail.
    bool reversed = false;

    auto operator<=>(const AnchorProvenance&) const = default;
};

struct AnchorEntry {
    EntityPair pair;
    AnchorProvenance prov;

    auto operator<=>(const AnchorEntry&) const = default;
};

// Map from an entity pair to the set of its anchor pairs with provenance.
// Symmetric on pair membership and irreflexive by construction.
struct AnchorIndex {
    std::map<EntityPair, std::set<AnchorEntry>> anchors;

    // Distinct anchor pairs of `pair`, sorted; provenance duplicates collapsed.
    std::vector<EntityPair> anchor_pairs(const EntityPair& pair) const;

    void save(const std::filesystem::path& path) const;
    static AnchorIndex load(const std::filesystem::path& path);
};

// Incremental index construction over a table stream.
class AnchorIndexBuilder {
public:
    explicit AnchorIndexBuilder(double ne_threshold) : ne_threshold_(ne_threshold) {}

    void add(const WebTable& table);
    AnchorIndex finish() { return std::move(index_); }

private:
    double ne_threshold_;
    AnchorIndex index_;
};

// Column c is a named-entity column iff it has at least one linked cell and
// linked/nonempty >= ne_threshold.
std::set<int> classify_columns(const WebTable& table, double ne_threshold);

// Subject column = leftmost NE-column; its linked entities are the subject
// entities, entities of the remaining NE-columns are the body entities.
TableElements extract_elements(const WebTable& table, double ne_threshold);

AnchorIndex build_anchor_index(const std::vector<WebTable>& tables, double ne_threshold);

// Union of the 1-hop training bags of all anchors of `pair`, deduplicated and
// minus the pair's own bag; uniformly downsampled to `cap` sentences with a
// per-pair seed when larger.
SentenceBag expand_bag(const EntityPair& pair, const AnchorIndex& index, const BagMap& train_bags,
                       int cap, std::uint64_t seed);

// `tables.jsonl`: {"table_id": str, "page_eid": str|null,
//                  "rows": [[{"text": str, "eid": str|null}]]}
// When an entity map is supplied, eid values found in it are rewritten.
std::vector<WebTable> load_tables(const std::filesystem::path& path,
                                  const std::map<std::string, std::string>* entity_map = nullptr);

// `entity_map.tsv`: URL-or-title <TAB> entity id
std::map<std::string, std::string> load_entity_map(const std::filesystem::path& path);

}  // namespace tabrex
