#include "lorentzfm/data.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "lorentzfm/errors.hpp"
#include "lorentzfm/kv.hpp"
#include "lorentzfm/util.hpp"

namespace lfm {

std::string to_string(TaskKind task) {
    return task == TaskKind::kRanking ? "ranking" : "ctr";
}

TaskKind task_from_string(const std::string& s) {
    if (s == "ranking") return TaskKind::kRanking;
    if (s == "ctr") return TaskKind::kCtr;
    throw ConfigError("unknown task '" + s + "' (expected ranking|ctr)");
}

std::string to_string(FieldSide side) {
    switch (side) {
        case FieldSide::kUser: return "user";
        case FieldSide::kItem: return "item";
        default: return "context";
    }
}

FieldSide side_from_string(const std::string& s) {
    if (s == "user") return FieldSide::kUser;
    if (s == "item") return FieldSide::kItem;
    if (s == "context") return FieldSide::kContext;
    throw ConfigError("unknown field side '" + s + "' (expected user|item|context)");
}

int FieldSchema::total_slots() const {
    int n = 0;
    for (const auto& f : fields) n += f.max_multiplicity;
    return n;
}

int FieldSchema::slot_offset(int field) const {
    int off = 0;
    for (int i = 0; i < field; ++i) off += fields[static_cast<std::size_t>(i)].max_multiplicity;
    return off;
}

int FieldSchema::field_of_name(const std::string& name) const {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

void FieldSchema::validate() const {
    if (fields.empty()) {
        throw ConfigError("schema declares no fields");
    }
    std::set<std::string> seen;
    for (const auto& f : fields) {
        if (f.name.empty()) throw ConfigError("schema has a field with an empty name");
        if (!seen.insert(f.name).second) {
            throw ConfigError("duplicate field name '" + f.name + "'");
        }
        if (f.max_multiplicity < 1) {
            throw ConfigError("field '" + f.name + "' must have multiplicity >= 1");
        }
    }
}

std::int32_t Vocabulary::lookup(int field, const std::string& token) const {
    const auto& map = token_to_index_.at(static_cast<std::size_t>(field));
    auto it = map.find(token);
    if (it == map.end()) return unknown_[static_cast<std::size_t>(field)];
    return it->second;
}

std::int32_t Vocabulary::unknown_index(int field) const {
    return unknown_.at(static_cast<std::size_t>(field));
}

bool Vocabulary::is_unknown(int field, std::int32_t index) const {
    return index == unknown_.at(static_cast<std::size_t>(field));
}

VocabBuilder::VocabBuilder(const FieldSchema& schema)
    : field_count_(schema.field_count()), counts_(schema.fields.size()) {
    schema.validate();
}

void VocabBuilder::count(int field, const std::string& token) {
    counts_.at(static_cast<std::size_t>(field))[token] += 1;
}

Vocabulary VocabBuilder::freeze(int min_freq, const std::vector<char>& fold_exempt) const {
    Vocabulary v;
    v.token_to_index_.resize(static_cast<std::size_t>(field_count_));
    v.unknown_.resize(static_cast<std::size_t>(field_count_));
    for (int f = 0; f < field_count_; ++f) {
        const bool exempt =
            f < static_cast<int>(fold_exempt.size()) && fold_exempt[static_cast<std::size_t>(f)];
        const auto& counts = counts_[static_cast<std::size_t>(f)];

        v.unknown_[static_cast<std::size_t>(f)] = static_cast<std::int32_t>(v.index_to_token_.size());
        v.index_to_token_.push_back(Vocabulary::kUnknownToken);
        v.index_to_field_.push_back(f);

        std::vector<std::string> kept;
        for (const auto& [token, n] : counts) {
            if (token == Vocabulary::kUnknownToken) continue;  // reserved
            if (exempt || n >= min_freq) kept.push_back(token);
        }
        std::sort(kept.begin(), kept.end());
        auto& map = v.token_to_index_[static_cast<std::size_t>(f)];
        for (const auto& token : kept) {
            map.emplace(token, static_cast<std::int32_t>(v.index_to_token_.size()));
            v.index_to_token_.push_back(token);
            v.index_to_field_.push_back(f);
        }
    }
    return v;
}

Vocabulary build_vocab(const std::vector<RawRecord>& records, const FieldSchema& schema,
                       int min_freq) {
    if (records.empty()) {
        throw DataError("build_vocab: no records to build a vocabulary from");
    }
    VocabBuilder builder(schema);
    for (const auto& r : records) {
        for (int f = 0; f < schema.field_count(); ++f) {
            for (const auto& token : r.field_tokens[static_cast<std::size_t>(f)]) {
                builder.count(f, token);
            }
        }
    }
    return builder.freeze(min_freq, {});
}

std::vector<std::pair<std::int32_t, std::int32_t>> k_core_filter(
    const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs, int k_user, int k_item) {
    if (k_user < 1 || k_item < 1) {
        throw ConfigError("k-core thresholds must be >= 1");
    }
    std::vector<std::pair<std::int32_t, std::int32_t>> edges(pairs);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    std::unordered_map<std::int32_t, std::vector<std::size_t>> by_user, by_item;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        by_user[edges[e].first].push_back(e);
        by_item[edges[e].second].push_back(e);
    }
    std::unordered_map<std::int32_t, int> user_deg, item_deg;
    for (const auto& [u, es] : by_user) user_deg[u] = static_cast<int>(es.size());
    for (const auto& [i, es] : by_item) item_deg[i] = static_cast<int>(es.size());

    std::vector<char> edge_removed(edges.size(), 0);
    std::deque<std::pair<char, std::int32_t>> queue;  // ('u'|'i', id)
    std::set<std::pair<char, std::int32_t>> queued;
    auto enqueue_user = [&](std::int32_t u) {
        if (user_deg[u] < k_user && queued.insert({'u', u}).second) queue.push_back({'u', u});
    };
    auto enqueue_item = [&](std::int32_t i) {
        if (item_deg[i] < k_item && queued.insert({'i', i}).second) queue.push_back({'i', i});
    };
    for (const auto& [u, d] : user_deg) enqueue_user(u);
    for (const auto& [i, d] : item_deg) enqueue_item(i);

    while (!queue.empty()) {
        auto [kind, id] = queue.front();
        queue.pop_front();
        const auto& incident = kind == 'u' ? by_user[id] : by_item[id];
        for (std::size_t e : incident) {
            if (edge_removed[e]) continue;
            edge_removed[e] = 1;
            user_deg[edges[e].first] -= 1;
            item_deg[edges[e].second] -= 1;
            enqueue_user(edges[e].first);
            enqueue_item(edges[e].second);
        }
    }

    std::vector<std::pair<std::int32_t, std::int32_t>> out;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        if (!edge_removed[e]) out.push_back(edges[e]);
    }
    return out;
}

std::vector<std::int32_t> pad_multivalued(const std::vector<std::int32_t>& indices,
                                          int max_multiplicity, std::int32_t unknown_index) {
    if (max_multiplicity < 1) {
        throw ConfigError("pad_multivalued: multiplicity must be >= 1");
    }
    std::vector<std::int32_t> out;
    out.reserve(static_cast<std::size_t>(max_multiplicity));
    for (std::int32_t idx : indices) {
        if (static_cast<int>(out.size()) == max_multiplicity) break;
        out.push_back(idx);
    }
    while (static_cast<int>(out.size()) < max_multiplicity) out.push_back(unknown_index);
    return out;
}

SplitIndices make_splits(std::size_t n, const SplitSpec& spec, std::uint64_t seed) {
    if (static_cast<bool>(spec.val_size) != static_cast<bool>(spec.test_size) ||
        static_cast<bool>(spec.val_fraction) != static_cast<bool>(spec.test_fraction)) {
        throw ConfigError("make_splits: val/test sizes must be given together");
    }
    if (spec.val_size && spec.val_fraction) {
        throw ConfigError("make_splits: choose absolute sizes or fractions, not both");
    }
    std::size_t n_val = 0;
    std::size_t n_test = 0;
    if (spec.val_size) {
        if (*spec.val_size < 0 || *spec.test_size < 0) {
            throw ConfigError("make_splits: negative split size");
        }
        n_val = static_cast<std::size_t>(*spec.val_size);
        n_test = static_cast<std::size_t>(*spec.test_size);
    } else if (spec.val_fraction) {
        if (*spec.val_fraction < 0 || *spec.test_fraction < 0 ||
            *spec.val_fraction + *spec.test_fraction > 1.0) {
            throw ConfigError("make_splits: fractions must be nonnegative and sum to <= 1");
        }
        n_val = static_cast<std::size_t>(std::floor(*spec.val_fraction * static_cast<double>(n)));
        n_test = static_cast<std::size_t>(std::floor(*spec.test_fraction * static_cast<double>(n)));
    } else {
        throw ConfigError("make_splits: no split sizes configured");
    }
    if (n_val + n_test > n) {
        throw ConfigError("make_splits: requested " + std::to_string(n_val + n_test) +
                          " val+test samples but only " + std::to_string(n) + " available");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, seed_tag::kSplit));
    std::shuffle(order.begin(), order.end(), rng);

    SplitIndices out;
    out.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                   order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), order.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

namespace {

char parse_delimiter(const std::string& v, const std::string& origin) {
    if (v == "tab" || v == "\\t") return '\t';
    if (v == "space") return ' ';
    if (v == "comma") return ',';
    if (v.size() == 1) return v[0];
    throw ConfigError(origin + ": delimiter must be a single character or tab|space|comma");
}

}  // namespace

RawSchema parse_schema_string(const std::string& text, const std::string& origin) {
    const KvFile kv = KvFile::parse_string(text, origin);
    RawSchema s;
    s.task = task_from_string(kv.get_or("task", "ranking"));
    s.delimiter = parse_delimiter(kv.get_or("delimiter", "tab"), origin);
    s.list_delimiter = parse_delimiter(kv.get_or("list_delimiter", "|"), origin);

    for (const auto& decl : kv.all("field")) {
        // field = <name> <side> <max_multiplicity>
        std::istringstream in(decl);
        FieldSpec f;
        std::string side;
        std::string mult;
        if (!(in >> f.name >> side)) {
            throw ConfigError(origin + ": bad field declaration '" + decl +
                              "' (expected '<name> <side> [multiplicity]')");
        }
        f.side = side_from_string(side);
        f.max_multiplicity = (in >> mult) ? static_cast<int>(parse_int(mult, origin + ": field '" + f.name + "' multiplicity")) : 1;
        s.schema.fields.push_back(f);
    }
    s.schema.validate();

    for (const auto& decl : kv.all("filter")) {
        // filter = <column> <op> <number>
        std::istringstream in(decl);
        RawSchema::Filter f;
        std::string value;
        if (!(in >> f.column >> f.op >> value)) {
            throw ConfigError(origin + ": bad filter '" + decl +
                              "' (expected '<column> <op> <number>')");
        }
        static const std::set<std::string> ops = {"<", "<=", ">", ">=", "==", "!="};
        if (!ops.count(f.op)) {
            throw ConfigError(origin + ": unknown filter operator '" + f.op + "'");
        }
        f.value = parse_double(value, origin + ": filter value");
        s.filters.push_back(f);
    }

    if (s.task == TaskKind::kRanking) {
        // default keys: first user-side / first item-side field
        std::string first_user, first_item;
        for (const auto& f : s.schema.fields) {
            if (f.side == FieldSide::kUser && first_user.empty()) first_user = f.name;
            if (f.side == FieldSide::kItem && first_item.empty()) first_item = f.name;
        }
        s.user_key = kv.get_or("user_key", first_user);
        s.item_key = kv.get_or("item_key", first_item);
        if (s.user_key.empty() || s.schema.field_of_name(s.user_key) < 0) {
            throw ConfigError(origin + ": ranking schema needs a user-side key field");
        }
        if (s.item_key.empty() || s.schema.field_of_name(s.item_key) < 0) {
            throw ConfigError(origin + ": ranking schema needs an item-side key field");
        }
        for (const auto& name : {s.user_key, s.item_key}) {
            const auto& f = s.schema.fields[static_cast<std::size_t>(s.schema.field_of_name(name))];
            if (f.max_multiplicity != 1) {
                throw ConfigError(origin + ": key field '" + name + "' must be single-valued");
            }
        }
    } else {
        s.label_column = kv.get("label");
    }

    s.min_freq = static_cast<int>(kv.get_int_or("min_freq", s.task == TaskKind::kCtr ? 5 : 0));
    s.k_core_user = static_cast<int>(kv.get_int_or("k_core_user", 1));
    s.k_core_item = static_cast<int>(kv.get_int_or("k_core_item", 1));
    if (kv.has("val_size")) s.val_size = kv.get_int("val_size");
    if (kv.has("test_size")) s.test_size = kv.get_int("test_size");
    if (kv.has("val_fraction")) s.val_fraction = kv.get_double("val_fraction");
    if (kv.has("test_fraction")) s.test_fraction = kv.get_double("test_fraction");
    return s;
}

RawSchema parse_schema_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_schema_string(buf.str(), path.string());
}

std::vector<RawRecord> read_raw_file(const std::filesystem::path& path, const RawSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file " + path.string());

    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path.string() + ": empty file (expected a header row)");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split(line, schema.delimiter);
    std::unordered_map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.size(); ++i) column[trim(header[i])] = i;

    auto column_of = [&](const std::string& name, const char* what) {
        auto it = column.find(name);
        if (it == column.end()) {
            throw DataError(path.string() + ":1: " + std::string(what) + " column '" + name +
                            "' not found in header");
        }
        return it->second;
    };

    std::vector<std::size_t> field_cols;
    for (const auto& f : schema.schema.fields) field_cols.push_back(column_of(f.name, "field"));
    std::vector<std::size_t> filter_cols;
    for (const auto& f : schema.filters) filter_cols.push_back(column_of(f.column, "filter"));
    std::size_t label_col = 0;
    if (schema.task == TaskKind::kCtr) label_col = column_of(schema.label_column, "label");

    const int user_field = schema.task == TaskKind::kRanking ? schema.user_key_field() : -1;
    const int item_field = schema.task == TaskKind::kRanking ? schema.item_key_field() : -1;

    std::vector<RawRecord> records;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split(line, schema.delimiter);
        if (cells.size() != header.size()) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " columns, got " +
                            std::to_string(cells.size()));
        }

        bool keep = true;
        for (std::size_t i = 0; i < schema.filters.size(); ++i) {
            const auto& f = schema.filters[i];
            const double v = parse_double(cells[filter_cols[i]], path.string() + ":" +
                                                                     std::to_string(lineno) +
                                                                     ": filter column '" +
                                                                     f.column + "'");
            if (f.op == "<") keep = v < f.value;
            else if (f.op == "<=") keep = v <= f.value;
            else if (f.op == ">") keep = v > f.value;
            else if (f.op == ">=") keep = v >= f.value;
            else if (f.op == "==") keep = v == f.value;
            else keep = v != f.value;
            if (!keep) break;
        }
        if (!keep) continue;

        RawRecord r;
        r.field_tokens.resize(schema.schema.fields.size());
        for (std::size_t f = 0; f < schema.schema.fields.size(); ++f) {
            const std::string cell = trim(cells[field_cols[f]]);
            if (schema.schema.fields[f].max_multiplicity > 1) {
                for (const auto& tok : split(cell, schema.list_delimiter)) {
                    const std::string t = trim(tok);
                    if (!t.empty()) r.field_tokens[f].push_back(t);
                }
            } else if (!cell.empty()) {
                r.field_tokens[f].push_back(cell);
            }
        }
        if (schema.task == TaskKind::kCtr) {
            const std::string label = trim(cells[label_col]);
            if (label == "0") r.label = 0;
            else if (label == "1") r.label = 1;
            else
                throw DataError(path.string() + ":" + std::to_string(lineno) +
                                ": label must be 0 or 1, got '" + label + "'");
        } else {
            r.label = 1;
            if (r.field_tokens[static_cast<std::size_t>(user_field)].empty() ||
                r.field_tokens[static_cast<std::size_t>(item_field)].empty()) {
                throw DataError(path.string() + ":" + std::to_string(lineno) +
                                ": empty user or item key");
            }
            r.user_token = r.field_tokens[static_cast<std::size_t>(user_field)][0];
            r.item_token = r.field_tokens[static_cast<std::size_t>(item_field)][0];
        }
        records.push_back(std::move(r));
    }
    return records;
}

namespace {

SparseInstance encode_record(const RawRecord& r, const Vocabulary& vocab,
                             const FieldSchema& schema) {
    SparseInstance inst;
    inst.label = r.label;
    inst.entries.reserve(static_cast<std::size_t>(schema.total_slots()));
    for (int f = 0; f < schema.field_count(); ++f) {
        std::vector<std::int32_t> indices;
        for (const auto& token : r.field_tokens[static_cast<std::size_t>(f)]) {
            indices.push_back(vocab.lookup(f, token));
        }
        const auto padded = pad_multivalued(
            indices, schema.fields[static_cast<std::size_t>(f)].max_multiplicity,
            vocab.unknown_index(f));
        for (std::int32_t idx : padded) {
            inst.entries.push_back({f, idx, 1.0, vocab.is_unknown(f, idx)});
        }
    }
    return inst;
}

void insert_observed(std::unordered_map<std::int32_t, std::vector<std::int32_t>>& map,
                     std::int32_t user, std::int32_t item_ordinal) {
    map[user].push_back(item_ordinal);
}

void sort_observed(std::unordered_map<std::int32_t, std::vector<std::int32_t>>& map) {
    for (auto& [u, v] : map) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
}

}  // namespace

std::int32_t DatasetBundle::user_of(const SparseInstance& inst) const {
    const int f = user_key_field();
    if (f < 0) throw DataError("bundle has no user key field");
    return inst.entries[static_cast<std::size_t>(schema.slot_offset(f))].index;
}

std::int32_t DatasetBundle::item_index_of(const SparseInstance& inst) const {
    const int f = item_key_field();
    if (f < 0) throw DataError("bundle has no item key field");
    return inst.entries[static_cast<std::size_t>(schema.slot_offset(f))].index;
}

std::int32_t DatasetBundle::item_ordinal_of(const SparseInstance& inst) const {
    auto it = item_ordinal_by_index.find(item_index_of(inst));
    if (it == item_ordinal_by_index.end()) {
        throw LookupError("instance references an item outside the catalog");
    }
    return it->second;
}

std::vector<std::int32_t> DatasetBundle::observed_all(std::int32_t user) const {
    std::vector<std::int32_t> out;
    for (const auto* map : {&observed_train, &observed_val, &observed_test}) {
        auto it = map->find(user);
        if (it != map->end()) out.insert(out.end(), it->second.begin(), it->second.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

SparseInstance DatasetBundle::with_item(const SparseInstance& base,
                                        std::int32_t item_ordinal) const {
    const auto& item = items.at(static_cast<std::size_t>(item_ordinal));
    SparseInstance out = base;
    // item.entries holds the item-side slots only, in field order
    std::size_t entry_at = 0;
    for (int f = 0; f < schema.field_count(); ++f) {
        const auto& spec = schema.fields[static_cast<std::size_t>(f)];
        if (spec.side != FieldSide::kItem) continue;
        for (int m = 0; m < spec.max_multiplicity; ++m) {
            const std::size_t slot = static_cast<std::size_t>(schema.slot_offset(f) + m);
            out.entries[slot] = item.entries.at(entry_at++);
        }
    }
    return out;
}

void DatasetBundle::rebuild_observed() {
    observed_train.clear();
    observed_val.clear();
    observed_test.clear();
    if (task != TaskKind::kRanking) return;
    auto scan = [&](const std::vector<SparseInstance>& split,
                    std::unordered_map<std::int32_t, std::vector<std::int32_t>>& map) {
        for (const auto& inst : split) {
            insert_observed(map, user_of(inst), item_ordinal_of(inst));
        }
    };
    scan(train, observed_train);
    scan(val, observed_val);
    scan(test, observed_test);
    sort_observed(observed_train);
    sort_observed(observed_val);
    sort_observed(observed_test);
}

void DatasetBundle::validate() const {
    const int slots = schema.total_slots();
    for (const auto* split : {&train, &val, &test}) {
        for (const auto& inst : *split) {
            if (static_cast<int>(inst.entries.size()) != slots) {
                throw DataError("instance has " + std::to_string(inst.entries.size()) +
                                " entries, schema declares " + std::to_string(slots));
            }
            for (const auto& e : inst.entries) {
                if (e.index < 0 || e.index >= vocab.size()) {
                    throw DataError("instance entry index " + std::to_string(e.index) +
                                    " outside vocabulary of size " + std::to_string(vocab.size()));
                }
            }
        }
    }
}

std::vector<std::int32_t> sample_negatives(std::int32_t user, int count,
                                           const DatasetBundle& bundle, std::mt19937_64& rng,
                                           bool* with_replacement) {
    if (with_replacement) *with_replacement = false;
    if (count < 1) return {};
    const auto n_items = static_cast<std::int32_t>(bundle.items.size());
    if (n_items == 0) throw DataError("sample_negatives: empty item catalog");
    const auto observed = bundle.observed_all(user);
    const auto pool = static_cast<std::int64_t>(n_items) -
                      static_cast<std::int64_t>(observed.size());
    if (pool <= 0) throw DataError("sample_negatives: user has observed every item");

    auto is_observed = [&](std::int32_t item) {
        return std::binary_search(observed.begin(), observed.end(), item);
    };
    std::uniform_int_distribution<std::int32_t> pick(0, n_items - 1);

    if (pool < count) {
        // Shortfall: sample the unobserved pool with replacement.
        if (with_replacement) *with_replacement = true;
        std::vector<std::int32_t> unobserved;
        unobserved.reserve(static_cast<std::size_t>(pool));
        for (std::int32_t i = 0; i < n_items; ++i) {
            if (!is_observed(i)) unobserved.push_back(i);
        }
        std::uniform_int_distribution<std::size_t> upick(0, unobserved.size() - 1);
        std::vector<std::int32_t> out;
        for (int i = 0; i < count; ++i) out.push_back(unobserved[upick(rng)]);
        return out;
    }

    std::vector<std::int32_t> out;
    if (pool <= 2 * static_cast<std::int64_t>(count) || n_items < 64) {
        // Small pool: enumerate and draw without replacement directly.
        std::vector<std::int32_t> unobserved;
        for (std::int32_t i = 0; i < n_items; ++i) {
            if (!is_observed(i)) unobserved.push_back(i);
        }
        for (int i = 0; i < count; ++i) {
            std::uniform_int_distribution<std::size_t> upick(0, unobserved.size() - 1);
            const std::size_t j = upick(rng);
            out.push_back(unobserved[j]);
            unobserved[j] = unobserved.back();
            unobserved.pop_back();
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    // Large pool: rejection sampling against observed + already chosen.
    std::set<std::int32_t> chosen;
    while (static_cast<int>(chosen.size()) < count) {
        const std::int32_t candidate = pick(rng);
        if (is_observed(candidate)) continue;
        chosen.insert(candidate);
    }
    out.assign(chosen.begin(), chosen.end());
    return out;
}

DatasetStats compute_stats(const DatasetBundle& bundle) {
    DatasetStats s;
    s.train_size = static_cast<std::int64_t>(bundle.train.size());
    s.val_size = static_cast<std::int64_t>(bundle.val.size());
    s.test_size = static_cast<std::int64_t>(bundle.test.size());
    s.samples = s.train_size + s.val_size + s.test_size;
    s.slots = bundle.schema.total_slots();
    for (const auto& f : bundle.schema.fields) {
        if (f.side == FieldSide::kUser) s.user_fields += f.max_multiplicity;
        if (f.side == FieldSide::kItem) s.item_fields += f.max_multiplicity;
    }
    s.features = bundle.vocab.size();
    if (bundle.task == TaskKind::kRanking) {
        std::set<std::int32_t> users;
        for (const auto* split : {&bundle.train, &bundle.val, &bundle.test}) {
            for (const auto& inst : *split) users.insert(bundle.user_of(inst));
        }
        s.users = static_cast<std::int64_t>(users.size());
        s.items = static_cast<std::int64_t>(bundle.items.size());
        if (s.users > 0 && s.items > 0) {
            s.sparsity = 1.0 - static_cast<double>(s.samples) /
                                   (static_cast<double>(s.users) * static_cast<double>(s.items));
        }
    }
    return s;
}

DatasetBundle preprocess_dataset(const RawSchema& raw, const std::vector<RawRecord>& records,
                                 std::uint64_t seed) {
    if (records.empty()) {
        throw DataError("preprocess: no records survived ingestion filters");
    }
    DatasetBundle bundle;
    bundle.task = raw.task;
    bundle.schema = raw.schema;
    bundle.user_key = raw.user_key;
    bundle.item_key = raw.item_key;

    std::vector<RawRecord> kept;
    if (raw.task == TaskKind::kRanking) {
        // Dedup (user,item) pairs, first occurrence wins, then k-core.
        std::set<std::pair<std::string, std::string>> seen;
        std::vector<RawRecord> unique_records;
        for (const auto& r : records) {
            if (seen.insert({r.user_token, r.item_token}).second) unique_records.push_back(r);
        }

        std::unordered_map<std::string, std::int32_t> user_ids, item_ids;
        std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
        for (const auto& r : unique_records) {
            const auto u = user_ids.emplace(r.user_token,
                                            static_cast<std::int32_t>(user_ids.size()));
            const auto i = item_ids.emplace(r.item_token,
                                            static_cast<std::int32_t>(item_ids.size()));
            pairs.emplace_back(u.first->second, i.first->second);
        }
        const auto surviving = k_core_filter(pairs, raw.k_core_user, raw.k_core_item);
        std::set<std::pair<std::int32_t, std::int32_t>> alive(surviving.begin(), surviving.end());
        for (std::size_t r = 0; r < unique_records.size(); ++r) {
            if (alive.count(pairs[r])) kept.push_back(unique_records[r]);
        }
        if (kept.empty()) {
            throw DataError("preprocess: k-core filtering removed every interaction");
        }
    } else {
        kept = records;
    }

    SplitSpec split_spec{raw.val_size, raw.test_size, raw.val_fraction, raw.test_fraction};
    const SplitIndices splits = make_splits(kept.size(), split_spec, seed);

    // Vocabulary: counting on the training portion only; identity key
    // fields are counted over all records and never folded, so the
    // user/item <-> index maps stay bijective across splits.
    VocabBuilder builder(raw.schema);
    std::vector<char> exempt(static_cast<std::size_t>(raw.schema.field_count()), 0);
    if (raw.task == TaskKind::kRanking) {
        exempt[static_cast<std::size_t>(raw.user_key_field())] = 1;
        exempt[static_cast<std::size_t>(raw.item_key_field())] = 1;
    }
    for (std::size_t i : splits.train) {
        for (int f = 0; f < raw.schema.field_count(); ++f) {
            for (const auto& t : kept[i].field_tokens[static_cast<std::size_t>(f)]) {
                builder.count(f, t);
            }
        }
    }
    for (int f = 0; f < raw.schema.field_count(); ++f) {
        if (!exempt[static_cast<std::size_t>(f)]) continue;
        for (const auto& r : kept) {
            for (const auto& t : r.field_tokens[static_cast<std::size_t>(f)]) builder.count(f, t);
        }
    }
    bundle.vocab = builder.freeze(raw.min_freq, exempt);

    for (std::size_t i : splits.train) {
        bundle.train.push_back(encode_record(kept[i], bundle.vocab, raw.schema));
    }
    for (std::size_t i : splits.val) {
        bundle.val.push_back(encode_record(kept[i], bundle.vocab, raw.schema));
    }
    for (std::size_t i : splits.test) {
        bundle.test.push_back(encode_record(kept[i], bundle.vocab, raw.schema));
    }

    if (raw.task == TaskKind::kRanking) {
        // Item catalog: item-side slots from the first record mentioning
        // the item, ordered by item token.
        const int item_field = raw.item_key_field();
        std::vector<std::pair<std::string, const RawRecord*>> first_record;
        std::set<std::string> seen_items;
        for (const auto& r : kept) {
            if (seen_items.insert(r.item_token).second) {
                first_record.emplace_back(r.item_token, &r);
            }
        }
        std::sort(first_record.begin(), first_record.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [token, rec] : first_record) {
            ItemRecord item;
            item.item_index = bundle.vocab.lookup(item_field, token);
            const SparseInstance enc = encode_record(*rec, bundle.vocab, raw.schema);
            for (int f = 0; f < raw.schema.field_count(); ++f) {
                const auto& spec = raw.schema.fields[static_cast<std::size_t>(f)];
                if (spec.side != FieldSide::kItem) continue;
                for (int m = 0; m < spec.max_multiplicity; ++m) {
                    item.entries.push_back(
                        enc.entries[static_cast<std::size_t>(raw.schema.slot_offset(f) + m)]);
                }
            }
            bundle.item_ordinal_by_index[item.item_index] =
                static_cast<std::int32_t>(bundle.items.size());
            bundle.items.push_back(std::move(item));
        }
        bundle.rebuild_observed();
    }

    bundle.validate();
    return bundle;
}

namespace {

void write_instances(const std::filesystem::path& path,
                     const std::vector<SparseInstance>& split) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& inst : split) {
        out << static_cast<int>(inst.label);
        for (const auto& e : inst.entries) {
            out << ' ' << e.index << ':' << fmt_double(e.value);
        }
        out << '\n';
    }
}

std::vector<SparseInstance> read_instances(const std::filesystem::path& path,
                                           const DatasetBundle& bundle) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<SparseInstance> out;
    const int slots = bundle.schema.total_slots();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        std::istringstream iss(line);
        SparseInstance inst;
        int label = 0;
        if (!(iss >> label) || (label != 0 && label != 1)) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad label");
        }
        inst.label = static_cast<std::int8_t>(label);
        std::string pair;
        int slot = 0;
        while (iss >> pair) {
            const std::size_t colon = pair.find(':');
            if (colon == std::string::npos || slot >= slots) {
                throw DataError(path.string() + ":" + std::to_string(lineno) +
                                ": malformed entry '" + pair + "'");
            }
            InstanceEntry e;
            e.index = static_cast<std::int32_t>(
                parse_int(pair.substr(0, colon), path.string() + ":" + std::to_string(lineno)));
            e.value =
                parse_double(pair.substr(colon + 1), path.string() + ":" + std::to_string(lineno));
            // recover field and padding flag from the slot layout
            int field = 0;
            while (bundle.schema.slot_offset(field + 1) <= slot &&
                   field + 1 < bundle.schema.field_count()) {
                ++field;
            }
            e.field = field;
            e.padding = bundle.vocab.is_unknown(field, e.index);
            inst.entries.push_back(e);
            ++slot;
        }
        if (slot != slots) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(slots) + " entries, got " + std::to_string(slot));
        }
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace

Vocabulary load_vocabulary(const std::filesystem::path& path, const FieldSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    Vocabulary v;
    v.token_to_index_.resize(schema.fields.size());
    v.unknown_.assign(schema.fields.size(), -1);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(line, '\t');
        if (cells.size() != 3) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": expected 'field<TAB>token<TAB>index'");
        }
        const int field = schema.field_of_name(cells[0]);
        if (field < 0) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown field '" +
                            cells[0] + "'");
        }
        const auto index = static_cast<std::int32_t>(
            parse_int(cells[2], path.string() + ":" + std::to_string(lineno)));
        if (index != static_cast<std::int32_t>(v.index_to_token_.size())) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": indices must be dense and ascending");
        }
        v.index_to_token_.push_back(cells[1]);
        v.index_to_field_.push_back(field);
        if (cells[1] == Vocabulary::kUnknownToken) {
            v.unknown_[static_cast<std::size_t>(field)] = index;
        } else {
            v.token_to_index_[static_cast<std::size_t>(field)].emplace(cells[1], index);
        }
    }
    for (std::size_t f = 0; f < schema.fields.size(); ++f) {
        if (v.unknown_[f] < 0) {
            throw DataError(path.string() + ": field '" + schema.fields[f].name +
                            "' has no <unk> entry");
        }
    }
    return v;
}

void write_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle,
                  const DatasetStats& stats) {
    std::filesystem::create_directories(dir);

    {
        std::ofstream out(dir / "schema.txt", std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / "schema.txt").string());
        out << "task = " << to_string(bundle.task) << '\n';
        if (bundle.task == TaskKind::kRanking) {
            out << "user_key = " << bundle.user_key << '\n';
            out << "item_key = " << bundle.item_key << '\n';
        }
        for (const auto& f : bundle.schema.fields) {
            out << "field = " << f.name << ' ' << to_string(f.side) << ' ' << f.max_multiplicity
                << '\n';
        }
    }
    {
        std::ofstream out(dir / "vocab.tsv", std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / "vocab.tsv").string());
        const auto& tokens = bundle.vocab.tokens();
        const auto& fields = bundle.vocab.fields();
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            out << bundle.schema.fields[static_cast<std::size_t>(fields[i])].name << '\t'
                << tokens[i] << '\t' << i << '\n';
        }
    }
    write_instances(dir / "train.txt", bundle.train);
    write_instances(dir / "val.txt", bundle.val);
    write_instances(dir / "test.txt", bundle.test);
    if (bundle.task == TaskKind::kRanking) {
        std::ofstream out(dir / "items.tsv", std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / "items.tsv").string());
        for (const auto& item : bundle.items) {
            out << item.item_index;
            for (const auto& e : item.entries) {
                out << '\t' << e.index << ':' << fmt_double(e.value);
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "stats.txt", std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / "stats.txt").string());
        out << "task = " << to_string(bundle.task) << '\n';
        out << "samples = " << stats.samples << '\n';
        out << "fields = " << stats.slots << '\n';
        out << "user_fields = " << stats.user_fields << '\n';
        out << "item_fields = " << stats.item_fields << '\n';
        out << "features = " << stats.features << '\n';
        if (bundle.task == TaskKind::kRanking) {
            out << "users = " << stats.users << '\n';
            out << "items = " << stats.items << '\n';
            out << "sparsity = " << fmt_double(stats.sparsity) << '\n';
        }
        out << "train_size = " << stats.train_size << '\n';
        out << "val_size = " << stats.val_size << '\n';
        out << "test_size = " << stats.test_size << '\n';
    }
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
    const KvFile schema_kv = KvFile::parse_file(dir / "schema.txt");
    DatasetBundle bundle;
    bundle.task = task_from_string(schema_kv.get("task"));
    for (const auto& decl : schema_kv.all("field")) {
        std::istringstream in(decl);
        FieldSpec f;
        std::string side;
        int mult = 1;
        if (!(in >> f.name >> side >> mult)) {
            throw DataError((dir / "schema.txt").string() + ": bad field declaration '" + decl +
                            "'");
        }
        f.side = side_from_string(side);
        f.max_multiplicity = mult;
        bundle.schema.fields.push_back(f);
    }
    bundle.schema.validate();
    if (bundle.task == TaskKind::kRanking) {
        bundle.user_key = schema_kv.get("user_key");
        bundle.item_key = schema_kv.get("item_key");
        if (bundle.user_key_field() < 0 || bundle.item_key_field() < 0) {
            throw DataError((dir / "schema.txt").string() + ": key fields missing from schema");
        }
    }

    bundle.vocab = load_vocabulary(dir / "vocab.tsv", bundle.schema);
    bundle.train = read_instances(dir / "train.txt", bundle);
    bundle.val = read_instances(dir / "val.txt", bundle);
    bundle.test = read_instances(dir / "test.txt", bundle);

    if (bundle.task == TaskKind::kRanking) {
        std::ifstream in(dir / "items.tsv");
        if (!in) throw DataError("cannot open " + (dir / "items.tsv").string());
        std::string line;
        int lineno = 0;
        int item_slots = 0;
        for (const auto& f : bundle.schema.fields) {
            if (f.side == FieldSide::kItem) item_slots += f.max_multiplicity;
        }
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            const auto cells = split(line, '\t');
            if (static_cast<int>(cells.size()) != item_slots + 1) {
                throw DataError((dir / "items.tsv").string() + ":" + std::to_string(lineno) +
                                ": expected " + std::to_string(item_slots + 1) + " columns");
            }
            ItemRecord item;
            item.item_index = static_cast<std::int32_t>(
                parse_int(cells[0], (dir / "items.tsv").string() + ":" + std::to_string(lineno)));
            std::size_t cell_at = 1;
            for (int f = 0; f < bundle.schema.field_count(); ++f) {
                const auto& spec = bundle.schema.fields[static_cast<std::size_t>(f)];
                if (spec.side != FieldSide::kItem) continue;
                for (int m = 0; m < spec.max_multiplicity; ++m) {
                    const std::string& cell = cells[cell_at++];
                    const std::size_t colon = cell.find(':');
                    if (colon == std::string::npos) {
                        throw DataError((dir / "items.tsv").string() + ":" +
                                        std::to_string(lineno) + ": malformed entry '" + cell +
                                        "'");
                    }
                    InstanceEntry e;
                    e.field = f;
                    e.index = static_cast<std::int32_t>(parse_int(
                        cell.substr(0, colon),
                        (dir / "items.tsv").string() + ":" + std::to_string(lineno)));
                    e.value = parse_double(cell.substr(colon + 1), (dir / "items.tsv").string() +
                                                                       ":" +
                                                                       std::to_string(lineno));
                    e.padding = bundle.vocab.is_unknown(f, e.index);
                    item.entries.push_back(e);
                }
            }
            bundle.item_ordinal_by_index[item.item_index] =
                static_cast<std::int32_t>(bundle.items.size());
            bundle.items.push_back(std::move(item));
        }
        bundle.rebuild_observed();
    }

    bundle.validate();
    return bundle;
}

}  // namespace lfm
