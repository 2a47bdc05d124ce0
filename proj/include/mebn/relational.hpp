#pragma once

// Relational layer: schema manifests, CSV-backed relation instances,
// integrity validation, entity/relationship classification, 1:1 key folding
// into entity relations, and closed-world completion of boolean
// relationship relations.
//
// Schema manifest grammar (line oriented, '#' starts a comment):
//   relation <Name>
//   attr <name> <kind>        kind: key | fk:<Relation> | cat:<s1|s2|...>
//                                   | cont:<unit> | bool
//   pk <name> [<name> ...]
//   end
//
// Data files are <data_dir>/<RelationName>.csv, UTF-8, comma separated, one
// header row naming the attributes in declaration order.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mebn/error.hpp"
#include "mebn/util.hpp"

namespace mebn {

enum class AttrKind { Key, ForeignKey, Categorical, Continuous, Boolean };

struct AttributeSpec {
    std::string name;
    AttrKind kind = AttrKind::Key;
    std::string target;              // ForeignKey: referenced relation
    std::vector<std::string> states; // Categorical: declared states, in order
    std::string unit;                // Continuous: unit label (informational)
};

struct RelationSchema {
    std::string name;
    std::vector<AttributeSpec> attrs;
    std::vector<std::string> pk; // names of primary-key attributes, in order

    const AttributeSpec* find_attr(const std::string& n) const {
        for (const auto& a : attrs)
            if (a.name == n) return &a;
        return nullptr;
    }
    AttributeSpec* find_attr(const std::string& n) {
        for (auto& a : attrs)
            if (a.name == n) return &a;
        return nullptr;
    }
    int attr_index(const std::string& n) const {
        for (size_t i = 0; i < attrs.size(); ++i)
            if (attrs[i].name == n) return static_cast<int>(i);
        return -1;
    }
    bool is_pk(const std::string& n) const {
        for (const auto& k : pk)
            if (k == n) return true;
        return false;
    }
    std::vector<int> pk_indices() const {
        std::vector<int> out;
        for (const auto& k : pk) out.push_back(attr_index(k));
        return out;
    }
    std::vector<const AttributeSpec*> nonkey_attrs() const {
        std::vector<const AttributeSpec*> out;
        for (const auto& a : attrs)
            if (!is_pk(a.name)) out.push_back(&a);
        return out;
    }
};

struct RelationInstance {
    RelationSchema schema;
    std::vector<std::vector<std::string>> rows; // cell text, schema.attrs order

    std::vector<std::string> key_of(const std::vector<std::string>& row) const {
        std::vector<std::string> k;
        for (int i : schema.pk_indices()) k.push_back(row[static_cast<size_t>(i)]);
        return k;
    }
};

// std::map keeps relation iteration name-ordered, which keeps every
// downstream artifact (mapped model, emitted scripts, CSV dumps) deterministic.
struct Database {
    std::map<std::string, RelationInstance> relations;

    const RelationInstance& at(const std::string& name) const {
        auto it = relations.find(name);
        if (it == relations.end()) fail(Errc::BadManifest, "unknown relation '" + name + "'");
        return it->second;
    }
    RelationInstance& at(const std::string& name) {
        auto it = relations.find(name);
        if (it == relations.end()) fail(Errc::BadManifest, "unknown relation '" + name + "'");
        return it->second;
    }
    bool has(const std::string& name) const { return relations.count(name) != 0; }
};

enum class RelationKind { Entity, Relationship };

// ---------------------------------------------------------------------------
// Manifest parsing / emission
// ---------------------------------------------------------------------------

inline AttributeSpec parse_attr_spec(const std::string& name, const std::string& kind,
                                     const std::string& where) {
    AttributeSpec a;
    a.name = name;
    if (kind == "key") {
        a.kind = AttrKind::Key;
    } else if (kind.rfind("fk:", 0) == 0) {
        a.kind = AttrKind::ForeignKey;
        a.target = kind.substr(3);
        if (a.target.empty()) fail(Errc::BadManifest, where + ": fk attribute '" + name + "' without target");
    } else if (kind.rfind("cat:", 0) == 0) {
        a.kind = AttrKind::Categorical;
        a.states = split(kind.substr(4), '|');
        if (a.states.size() < 2 || a.states.front().empty())
            fail(Errc::BadManifest, where + ": cat attribute '" + name + "' needs at least two states");
    } else if (kind.rfind("cont:", 0) == 0) {
        a.kind = AttrKind::Continuous;
        a.unit = kind.substr(5);
    } else if (kind == "cont") {
        a.kind = AttrKind::Continuous;
    } else if (kind == "bool") {
        a.kind = AttrKind::Boolean;
    } else {
        fail(Errc::BadManifest, where + ": unknown attribute kind '" + kind + "'");
    }
    return a;
}

inline std::map<std::string, RelationSchema> parse_manifest(const std::string& text) {
    std::map<std::string, RelationSchema> out;
    std::optional<RelationSchema> cur;
    int lineno = 0;
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(raw);
        const std::string where = "manifest line " + std::to_string(lineno);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "relation") {
            if (cur) fail(Errc::BadManifest, where + ": 'relation' before previous 'end'");
            std::string name;
            ls >> name;
            if (name.empty()) fail(Errc::BadManifest, where + ": relation without a name");
            if (out.count(name)) fail(Errc::BadManifest, where + ": duplicate relation '" + name + "'");
            cur = RelationSchema{};
            cur->name = name;
        } else if (word == "attr") {
            if (!cur) fail(Errc::BadManifest, where + ": 'attr' outside a relation block");
            std::string name, kind;
            ls >> name >> kind;
            if (name.empty() || kind.empty()) fail(Errc::BadManifest, where + ": attr needs a name and a kind");
            if (cur->find_attr(name)) fail(Errc::BadManifest, where + ": duplicate attribute '" + name + "'");
            cur->attrs.push_back(parse_attr_spec(name, kind, where));
        } else if (word == "pk") {
            if (!cur) fail(Errc::BadManifest, where + ": 'pk' outside a relation block");
            std::string name;
            while (ls >> name) {
                if (!cur->find_attr(name))
                    fail(Errc::BadManifest, where + ": pk names unknown attribute '" + name + "'");
                cur->pk.push_back(name);
            }
            if (cur->pk.empty()) fail(Errc::BadManifest, where + ": empty pk");
        } else if (word == "end") {
            if (!cur) fail(Errc::BadManifest, where + ": 'end' outside a relation block");
            if (cur->pk.empty()) fail(Errc::BadManifest, where + ": relation '" + cur->name + "' has no pk");
            out.emplace(cur->name, *cur);
            cur.reset();
        } else {
            fail(Errc::BadManifest, where + ": unknown directive '" + word + "'");
        }
    }
    if (cur) fail(Errc::BadManifest, "manifest ends inside relation '" + cur->name + "'");

    // Cross-relation checks: fk targets exist and have a single-attribute pk
    // (a single fk column can only reference a single-column key).
    for (const auto& [name, schema] : out) {
        for (const auto& a : schema.attrs) {
            if (a.kind != AttrKind::ForeignKey) continue;
            auto it = out.find(a.target);
            if (it == out.end())
                fail(Errc::BadManifest,
                     "relation '" + name + "': fk attribute '" + a.name + "' targets unknown relation '" + a.target + "'");
            if (it->second.pk.size() != 1)
                fail(Errc::BadManifest,
                     "relation '" + name + "': fk attribute '" + a.name + "' targets composite-key relation '" + a.target + "'");
        }
    }
    return out;
}

inline std::string emit_attr_kind(const AttributeSpec& a) {
    switch (a.kind) {
    case AttrKind::Key: return "key";
    case AttrKind::ForeignKey: return "fk:" + a.target;
    case AttrKind::Categorical: return "cat:" + join(a.states, "|");
    case AttrKind::Continuous: return a.unit.empty() ? "cont" : "cont:" + a.unit;
    case AttrKind::Boolean: return "bool";
    }
    return "key";
}

inline std::string emit_manifest(const std::map<std::string, RelationSchema>& schemas) {
    std::string out;
    for (const auto& [name, s] : schemas) {
        out += "relation " + name + "\n";
        for (const auto& a : s.attrs) out += "attr " + a.name + " " + emit_attr_kind(a) + "\n";
        out += "pk " + join(s.pk, " ") + "\n";
        out += "end\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV IO
// ---------------------------------------------------------------------------

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& where) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        if (raw.empty()) continue;
        auto cells = split(raw, ',');
        for (auto& c : cells) c = trim(c);
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) fail(Errc::BadCsv, where + ": no header row");
    return rows;
}

inline std::string emit_csv(const RelationInstance& rel) {
    std::string out;
    std::vector<std::string> header;
    for (const auto& a : rel.schema.attrs) header.push_back(a.name);
    out += join(header, ",") + "\n";
    for (const auto& row : rel.rows) out += join(row, ",") + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Loading + validation
// ---------------------------------------------------------------------------

inline void validate_relation(const Database& db, RelationInstance& rel) {
    const auto& s = rel.schema;
    std::set<std::vector<std::string>> seen_keys;
    for (size_t r = 0; r < rel.rows.size(); ++r) {
        auto& row = rel.rows[r];
        const std::string where = "relation " + s.name + " row " + std::to_string(r + 1);
        if (row.size() != s.attrs.size())
            fail(Errc::BadCsv, where + ": expected " + std::to_string(s.attrs.size()) + " cells, got " +
                                   std::to_string(row.size()));
        for (size_t c = 0; c < row.size(); ++c) {
            const auto& a = s.attrs[c];
            std::string& cell = row[c];
            if (cell.empty())
                fail(Errc::MissingValue, where + " attribute " + a.name + ": missing value");
            switch (a.kind) {
            case AttrKind::Key:
                break;
            case AttrKind::ForeignKey: {
                const auto& target = db.at(a.target);
                bool found = false;
                const int pk_idx = target.schema.attr_index(target.schema.pk[0]);
                for (const auto& trow : target.rows)
                    if (trow[static_cast<size_t>(pk_idx)] == cell) { found = true; break; }
                if (!found)
                    fail(Errc::DanglingForeignKey,
                         where + " attribute " + a.name + ": value '" + cell + "' not found in " + a.target);
                break;
            }
            case AttrKind::Categorical: {
                bool ok = false;
                for (const auto& st : a.states)
                    if (st == cell) { ok = true; break; }
                if (!ok)
                    fail(Errc::UnknownState, where + " attribute " + a.name + ": unknown state '" + cell + "'");
                break;
            }
            case AttrKind::Continuous:
                parse_number(cell, where + " attribute " + a.name);
                break;
            case AttrKind::Boolean:
                if (cell != "True" && cell != "False")
                    fail(Errc::UnknownState,
                         where + " attribute " + a.name + ": boolean cell must be True or False, got '" + cell + "'");
                break;
            }
        }
        auto key = rel.key_of(row);
        if (!seen_keys.insert(key).second)
            fail(Errc::DuplicatePrimaryKey, where + ": duplicate primary key (" + join(key, ", ") + ")");
    }
}

inline void validate_database(Database& db) {
    for (auto& [name, rel] : db.relations) validate_relation(db, rel);
}

inline Database load_database(const std::map<std::string, RelationSchema>& schemas,
                              const std::string& data_dir) {
    Database db;
    for (const auto& [name, schema] : schemas) {
        RelationInstance rel;
        rel.schema = schema;
        const std::string path = data_dir + "/" + name + ".csv";
        auto rows = parse_csv(read_file(path), path);
        std::vector<std::string> expect;
        for (const auto& a : schema.attrs) expect.push_back(a.name);
        if (rows.front() != expect)
            fail(Errc::BadCsv, path + ": header (" + join(rows.front(), ",") + ") does not match manifest attributes (" +
                                   join(expect, ",") + ")");
        rel.rows.assign(rows.begin() + 1, rows.end());
        db.relations.emplace(name, std::move(rel));
    }
    validate_database(db);
    return db;
}

inline Database load_database(const std::string& manifest_path, const std::string& data_dir) {
    return load_database(parse_manifest(read_file(manifest_path)), data_dir);
}

inline void save_database(const Database& db, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::map<std::string, RelationSchema> schemas;
    for (const auto& [name, rel] : db.relations) schemas.emplace(name, rel.schema);
    write_file(out_dir + "/manifest.txt", emit_manifest(schemas));
    for (const auto& [name, rel] : db.relations) write_file(out_dir + "/" + name + ".csv", emit_csv(rel));
}

// ---------------------------------------------------------------------------
// Classification and normalization
// ---------------------------------------------------------------------------

// Entity relation: exactly one primary-key attribute, and it is a plain key.
// Relationship relation: two or more primary-key attributes, all foreign keys.
// Anything else (notably a single-foreign-key pk) is not in normal form.
inline RelationKind classify_relation(const RelationSchema& s) {
    if (s.pk.size() == 1) {
        const auto* a = s.find_attr(s.pk[0]);
        if (a->kind == AttrKind::Key) return RelationKind::Entity;
        fail(Errc::NotNormalized,
             "relation '" + s.name + "': single-attribute pk is a foreign key; fold it into '" + a->target + "'");
    }
    for (const auto& k : s.pk) {
        if (s.find_attr(k)->kind != AttrKind::ForeignKey)
            fail(Errc::NotNormalized,
                 "relation '" + s.name + "': composite pk contains non-foreign-key attribute '" + k + "'");
    }
    return RelationKind::Relationship;
}

inline bool is_fold_candidate(const RelationSchema& s) {
    return s.pk.size() == 1 && s.find_attr(s.pk[0])->kind == AttrKind::ForeignKey;
}

namespace detail {

// Fold `src` (pk = single fk to `dst`) into `dst`: dst gains src's non-key
// attributes; every dst row must be matched by exactly one src row.
inline void fold_relation(Database& db, const std::string& src_name) {
    RelationInstance src = db.at(src_name);
    const std::string dst_name = src.schema.find_attr(src.schema.pk[0])->target;
    RelationInstance& dst = db.at(dst_name);

    const int src_key_idx = src.schema.attr_index(src.schema.pk[0]);
    const int dst_key_idx = dst.schema.attr_index(dst.schema.pk[0]);

    std::map<std::string, const std::vector<std::string>*> by_key;
    for (const auto& row : src.rows) by_key.emplace(row[static_cast<size_t>(src_key_idx)], &row);
    if (src.rows.size() != dst.rows.size())
        fail(Errc::MergeCardinality, "folding '" + src_name + "' into '" + dst_name + "': " +
                                         std::to_string(src.rows.size()) + " rows vs " +
                                         std::to_string(dst.rows.size()) + " target rows (must be 1:1)");

    std::vector<int> moved; // src attr indices that move over
    for (size_t i = 0; i < src.schema.attrs.size(); ++i) {
        const auto& a = src.schema.attrs[i];
        if (src.schema.is_pk(a.name)) continue;
        if (dst.schema.find_attr(a.name))
            fail(Errc::MergeNameClash,
                 "folding '" + src_name + "' into '" + dst_name + "': attribute '" + a.name + "' already exists");
        dst.schema.attrs.push_back(a);
        moved.push_back(static_cast<int>(i));
    }
    for (auto& drow : dst.rows) {
        auto it = by_key.find(drow[static_cast<size_t>(dst_key_idx)]);
        if (it == by_key.end())
            fail(Errc::MergeCardinality, "folding '" + src_name + "' into '" + dst_name + "': no row for key '" +
                                             drow[static_cast<size_t>(dst_key_idx)] + "'");
        for (int i : moved) drow.push_back((*it->second)[static_cast<size_t>(i)]);
    }
    db.relations.erase(src_name);

    // Re-target foreign keys that referenced the folded relation.
    for (auto& [name, rel] : db.relations)
        for (auto& a : rel.schema.attrs)
            if (a.kind == AttrKind::ForeignKey && a.target == src_name) a.target = dst_name;
}

} // namespace detail

// Iterate 1:1 folds (deterministically, by relation name) until every
// relation classifies as entity or relationship.
inline Database er_normalize(const Database& input) {
    Database db = input;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& [name, rel] : db.relations) {
            if (is_fold_candidate(rel.schema)) {
                detail::fold_relation(db, name);
                changed = true;
                break; // iterator invalidated; rescan in name order
            }
        }
    }
    for (const auto& [name, rel] : db.relations) classify_relation(rel.schema); // throws if still abnormal
    return db;
}

// ---------------------------------------------------------------------------
// Closed-world completion of boolean relationship relations
// ---------------------------------------------------------------------------

// The input relation must be a binary relationship relation with no non-key
// attributes; rows assert True pairs. The result appends one boolean
// attribute named after the relation and contains one row per candidate
// pair: unordered pairs under the strict lexicographic order id1 < id2 for a
// self-relationship, the full cross product for two distinct entity types.
inline RelationInstance complete_boolean_relation(const Database& db, const std::string& rel_name) {
    const RelationInstance& rel = db.at(rel_name);
    if (classify_relation(rel.schema) != RelationKind::Relationship)
        fail(Errc::NotRelationship, "relation '" + rel_name + "' is not a relationship relation");
    if (!rel.schema.nonkey_attrs().empty())
        fail(Errc::NonKeyAttributesPresent,
             "relation '" + rel_name + "' carries non-key attributes; closed-world completion expects none");
    if (rel.schema.pk.size() != 2)
        fail(Errc::UnsupportedArity, "relation '" + rel_name + "' has arity " +
                                         std::to_string(rel.schema.pk.size()) +
                                         "; closed-world completion supports binary relationships only");

    const auto* k1 = rel.schema.find_attr(rel.schema.pk[0]);
    const auto* k2 = rel.schema.find_attr(rel.schema.pk[1]);
    const bool self_rel = (k1->target == k2->target);

    auto ids_of = [&](const std::string& target) {
        const auto& ent = db.at(target);
        const int idx = ent.schema.attr_index(ent.schema.pk[0]);
        std::vector<std::string> ids;
        for (const auto& row : ent.rows) ids.push_back(row[static_cast<size_t>(idx)]);
        return ids;
    };

    std::set<std::pair<std::string, std::string>> truths;
    for (const auto& row : rel.rows) {
        std::string a = row[static_cast<size_t>(rel.schema.attr_index(k1->name))];
        std::string b = row[static_cast<size_t>(rel.schema.attr_index(k2->name))];
        if (self_rel) {
            if (a == b)
                fail(Errc::BadPair, "relation '" + rel_name + "': self pair (" + a + ", " + b +
                                        ") is outside the strict-order candidate set");
            if (b < a) std::swap(a, b); // canonical order
        }
        truths.emplace(a, b);
    }

    RelationInstance out;
    out.schema = rel.schema;
    AttributeSpec truth;
    truth.name = rel_name;
    truth.kind = AttrKind::Boolean;
    out.schema.attrs.push_back(truth);

    auto add = [&](const std::string& a, const std::string& b) {
        const bool t = truths.count({a, b}) != 0;
        out.rows.push_back({a, b, t ? "True" : "False"});
    };
    if (self_rel) {
        auto ids = ids_of(k1->target);
        std::sort(ids.begin(), ids.end());
        for (size_t i = 0; i < ids.size(); ++i)
            for (size_t j = i + 1; j < ids.size(); ++j) add(ids[i], ids[j]);
    } else {
        auto ids1 = ids_of(k1->target);
        auto ids2 = ids_of(k2->target);
        std::sort(ids1.begin(), ids1.end());
        std::sort(ids2.begin(), ids2.end());
        for (const auto& a : ids1)
            for (const auto& b : ids2) add(a, b);
    }
    return out;
}

} // namespace mebn
