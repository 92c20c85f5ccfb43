#include "tabrex/tables.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tabrex {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "anchor index serialization assumes a little-endian host");

std::set<int> classify_columns(const WebTable& table, double ne_threshold) {
    std::set<int> ne;
    const int w = table.width();
    for (int c = 0; c < w; ++c) {
        int nonempty = 0;
        int linked = 0;
        for (const auto& row : table.rows) {
            if (!row[c].text.empty()) ++nonempty;
            if (!row[c].eid.empty()) ++linked;
        }
        if (linked >= 1 &&
            static_cast<double>(linked) >= ne_threshold * static_cast<double>(nonempty)) {
            ne.insert(c);
        }
    }
    return ne;
}

TableElements extract_elements(const WebTable& table, double ne_threshold) {
    TableElements el;
    el.topic = table.page_eid;
    el.ne_columns = classify_columns(table, ne_threshold);
    if (el.ne_columns.empty()) return el;
    el.subject_column = *el.ne_columns.begin();
    for (int c : el.ne_columns) {
        for (const auto& row : table.rows) {
            const std::string& eid = row[c].eid;
            if (eid.empty()) continue;
            if (c == el.subject_column) {
                el.subject_entities.insert(eid);
            } else {
                el.body_entities.insert(eid);
            }
        }
        if (c != el.subject_column) el.body_columns.insert(c);
    }
    return el;
}

std::vector<EntityPair> AnchorIndex::anchor_pairs(const EntityPair& pair) const {
    std::vector<EntityPair> out;
    auto it = anchors.find(pair);
    if (it == anchors.end()) return out;
    for (const auto& entry : it->second) {
        if (out.empty() || out.back() != entry.pair) out.push_back(entry.pair);
    }
    return out;
}

namespace {

// Inserts all ordered pairs of distinct group members, both directions.
void link_group(AnchorIndex& index, const std::vector<EntityPair>& group,
                const AnchorProvenance& prov) {
    for (std::size_t i = 0; i < group.size(); ++i) {
        for (std::size_t j = 0; j < group.size(); ++j) {
            if (i == j || group[i] == group[j]) continue;
            index.anchors[group[i]].insert(AnchorEntry{group[j], prov});
        }
    }
}

std::vector<EntityPair> dedup_sorted(std::vector<EntityPair> pairs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

}  // namespace

void AnchorIndexBuilder::add(const WebTable& table) {
    const TableElements el = extract_elements(table, ne_threshold_);

    // Criterion (a): the topic paired with each subject entity; plus the
    // reversed grouping so directional relations with the topic as tail are
    // also covered.
    if (!el.topic.empty()) {
        std::vector<EntityPair> forward, reversed;
        for (const std::string& s : el.subject_entities) {
            if (s == el.topic) continue;
            forward.push_back(EntityPair{el.topic, s});
            reversed.push_back(EntityPair{s, el.topic});
        }
        link_group(index_, forward,
                   AnchorProvenance{table.table_id, AnchorCriterion::topic_subject, false});
        link_group(index_, reversed,
                   AnchorProvenance{table.table_id, AnchorCriterion::topic_subject, true});
    }

    // Criterion (b): for every ordered pair of NE-columns involving the
    // subject column, the row-aligned entity pairs form one anchor group.
    if (el.subject_column >= 0) {
        const AnchorProvenance prov{table.table_id, AnchorCriterion::row_pair, false};
        for (int c1 : el.ne_columns) {
            for (int c2 : el.ne_columns) {
                if (c1 == c2) continue;
                if (c1 != el.subject_column && c2 != el.subject_column) continue;
                std::vector<EntityPair> group;
                for (const auto& row : table.rows) {
                    const std::string& h = row[c1].eid;
                    const std::string& t = row[c2].eid;
                    if (h.empty() || t.empty() || h == t) continue;
                    group.push_back(EntityPair{h, t});
                }
                link_group(index_, dedup_sorted(std::move(group)), prov);
            }
        }
    }
}

AnchorIndex build_anchor_index(const std::vector<WebTable>& tables, double ne_threshold) {
    AnchorIndexBuilder builder(ne_threshold);
    for (const auto& t : tables) builder.add(t);
    return builder.finish();
}

SentenceBag expand_bag(const EntityPair& pair, const AnchorIndex& index, const BagMap& train_bags,
                       int cap, std::uint64_t seed) {
    if (cap < 1) throw ConfigError("expansion cap must be at least 1");
    SentenceBag bag;
    bag.pair = pair;
    bag.kind = BagKind::two_hop;

    std::set<std::uint32_t> own;
    if (auto it = train_bags.find(pair); it != train_bags.end()) {
        own.insert(it->second.sentences.begin(), it->second.sentences.end());
    }

    std::set<std::uint32_t> taken;
    for (const EntityPair& anchor : index.anchor_pairs(pair)) {
        auto it = train_bags.find(anchor);
        if (it == train_bags.end()) continue;
        for (std::uint32_t s : it->second.sentences) {
            if (own.count(s) || !taken.insert(s).second) continue;
            bag.sentences.push_back(s);
        }
    }

    if (static_cast<int>(bag.sentences.size()) > cap) {
        const std::uint64_t pair_seed =
            mix_seed(seed, fnv1a64(pair.head + '\x1f' + pair.tail));
        Rng rng(pair_seed);
        // Partial Fisher-Yates; the first `cap` slots are a uniform sample.
        for (int i = 0; i < cap; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(rng.below(bag.sentences.size() - i));
            std::swap(bag.sentences[i], bag.sentences[j]);
        }
        bag.sentences.resize(cap);
    }
    return bag;
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_str(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

std::string read_str(std::istream& in) {
    const std::uint32_t n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

constexpr char kIndexMagic[8] = {'R', 'D', 'S', '2', 'A', 'I', 'D', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

}  // namespace

void AnchorIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write index file: " + path.string());
    out.write(kIndexMagic, sizeof kIndexMagic);
    write_u32(out, kIndexVersion);
    write_u64(out, anchors.size());
    for (const auto& [pair, entries] : anchors) {
        write_str(out, pair.head);
        write_str(out, pair.tail);
        write_u64(out, entries.size());
        for (const auto& e : entries) {
            write_str(out, e.pair.head);
            write_str(out, e.pair.tail);
            write_str(out, e.prov.table_id);
            const std::uint8_t crit = static_cast<std::uint8_t>(e.prov.criterion);
            const std::uint8_t rev = e.prov.reversed ? 1 : 0;
            out.write(reinterpret_cast<const char*>(&crit), 1);
            out.write(reinterpret_cast<const char*>(&rev), 1);
        }
    }
    if (!out) throw ParseError("write failure on index file: " + path.string());
}

AnchorIndex AnchorIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open index file: " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kIndexMagic, sizeof magic) != 0) {
        throw ParseError("bad magic in index file: " + path.string());
    }
    const std::uint32_t version = read_u32(in);
    if (version != kIndexVersion) {
        throw ParseError("unsupported index version " + std::to_string(version) + " in " +
                         path.string());
    }
    AnchorIndex index;
    const std::uint64_t n_pairs = read_u64(in);
    for (std::uint64_t i = 0; i < n_pairs; ++i) {
        EntityPair pair;
        pair.head = read_str(in);
        pair.tail = read_str(in);
        const std::uint64_t n_entries = read_u64(in);
        auto& set = index.anchors[pair];
        for (std::uint64_t k = 0; k < n_entries; ++k) {
            AnchorEntry e;
            e.pair.head = read_str(in);
            e.pair.tail = read_str(in);
            e.prov.table_id = read_str(in);
            std::uint8_t crit = 0, rev = 0;
            in.read(reinterpret_cast<char*>(&crit), 1);
            in.read(reinterpret_cast<char*>(&rev), 1);
            e.prov.criterion = static_cast<AnchorCriterion>(crit);
            e.prov.reversed = rev != 0;
            set.insert(std::move(e));
        }
        if (!in) throw ParseError("truncated index file: " + path.string());
    }
    return index;
}

namespace {

[[noreturn]] void fail_table_line(const std::filesystem::path& path, std::size_t line,
                                  const std::string& what, bool parse) {
    std::ostringstream msg;
    msg << path.string() << ":" << line << ": " << what;
    if (parse) throw ParseError(msg.str());
    throw ValidationError(msg.str());
}

std::string map_eid(std::string eid, const std::map<std::string, std::string>* entity_map) {
    if (entity_map && !eid.empty()) {
        if (auto it = entity_map->find(eid); it != entity_map->end()) return it->second;
    }
    return eid;
}

}  // namespace

std::vector<WebTable> load_tables(const std::filesystem::path& path,
                                  const std::map<std::string, std::string>* entity_map) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open tables file: " + path.string());
    std::vector<WebTable> tables;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail_table_line(path, line_no, e.what(), true);
        }
        WebTable t;
        try {
            t.table_id = j.at("table_id").get<std::string>();
            if (j.contains("page_eid") && !j.at("page_eid").is_null()) {
                t.page_eid = j.at("page_eid").get<std::string>();
            }
            t.page_eid = map_eid(std::move(t.page_eid), entity_map);
            for (const auto& jr : j.at("rows")) {
                std::vector<Cell> row;
                for (const auto& jc : jr) {
                    Cell c;
                    c.text = jc.at("text").get<std::string>();
                    if (jc.contains("eid") && !jc.at("eid").is_null()) {
                        c.eid = jc.at("eid").get<std::string>();
                    }
                    c.eid = map_eid(std::move(c.eid), entity_map);
                    row.push_back(std::move(c));
                }
                t.rows.push_back(std::move(row));
            }
        } catch (const json::exception& e) {
            fail_table_line(path, line_no, e.what(), true);
        }
        if (t.rows.empty() || t.rows[0].empty()) {
            fail_table_line(path, line_no, "table must have at least 1 row and 1 column", false);
        }
        std::size_t width = 0;
        for (const auto& r : t.rows) width = std::max(width, r.size());
        for (auto& r : t.rows) r.resize(width);
        for (const auto& r : t.rows) {
            for (const auto& c : r) {
                if (!c.eid.empty() && c.text.empty()) {
                    fail_table_line(path, line_no, "linked cell with empty text", false);
                }
            }
        }
        tables.push_back(std::move(t));
    }
    return tables;
}

std::map<std::string, std::string> load_entity_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open entity map: " + path.string());
    std::map<std::string, std::string> map;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
            std::ostringstream msg;
            msg << path.string() << ":" << line_no << ": expected \"key<TAB>entity id\"";
            throw ParseError(msg.str());
        }
        map[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return map;
}

}  // namespace tabrex
