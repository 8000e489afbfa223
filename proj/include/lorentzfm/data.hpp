#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "lorentzfm/model.hpp"

namespace lfm {

enum class TaskKind { kRanking, kCtr };

std::string to_string(TaskKind task);
TaskKind task_from_string(const std::string& s);

enum class FieldSide { kUser, kItem, kContext };

std::string to_string(FieldSide side);
FieldSide side_from_string(const std::string& s);

struct FieldSpec {
    std::string name;
    FieldSide side = FieldSide::kContext;
    int max_multiplicity = 1;
};

// Ordered field list plus the derived slot layout: field f occupies
// max_multiplicity consecutive slots starting at slot_offset(f), so every
// encoded instance has exactly total_slots() entries.
struct FieldSchema {
    std::vector<FieldSpec> fields;

    int field_count() const { return static_cast<int>(fields.size()); }
    int total_slots() const;
    int slot_offset(int field) const;
    int field_of_name(const std::string& name) const;  // -1 when absent
    void validate() const;
};

// (field, token) -> dense feature index in [0, size()). Every field owns an
// "<unk>" entry; tokens below the fold threshold and tokens unseen at build
// time resolve to it.
class Vocabulary {
public:
    static constexpr const char* kUnknownToken = "<unk>";

    std::int32_t lookup(int field, const std::string& token) const;
    std::int32_t unknown_index(int field) const;
    bool is_unknown(int field, std::int32_t index) const;
    std::int64_t size() const { return static_cast<std::int64_t>(index_to_token_.size()); }
    int field_count() const { return static_cast<int>(unknown_.size()); }

    // dense reverse maps, index order
    const std::vector<std::string>& tokens() const { return index_to_token_; }
    const std::vector<std::int32_t>& fields() const { return index_to_field_; }

private:
    friend class VocabBuilder;
    friend Vocabulary load_vocabulary(const std::filesystem::path&, const FieldSchema&);
    std::vector<std::unordered_map<std::string, std::int32_t>> token_to_index_;
    std::vector<std::int32_t> unknown_;
    std::vector<std::string> index_to_token_;
    std::vector<std::int32_t> index_to_field_;
};

// Token counting decoupled from freezing so the pipeline can count key
// fields over all records and the remaining fields over the training
// portion only.
class VocabBuilder {
public:
    explicit VocabBuilder(const FieldSchema& schema);
    void count(int field, const std::string& token);
    // Tokens with count < min_freq fold into their field's unknown entry;
    // fold_exempt fields keep every token. Index assignment: fields in
    // schema order, <unk> first, surviving tokens lexicographic.
    Vocabulary freeze(int min_freq, const std::vector<char>& fold_exempt) const;

private:
    int field_count_;
    std::vector<std::unordered_map<std::string, std::int64_t>> counts_;
};

// One raw data row after tokenization and filtering.
struct RawRecord {
    std::vector<std::vector<std::string>> field_tokens;  // per field
    std::int8_t label = 1;
    std::string user_token;  // ranking only
    std::string item_token;  // ranking only
};

// Parsed schema file: fields plus ingestion settings.
struct RawSchema {
    TaskKind task = TaskKind::kRanking;
    FieldSchema schema;
    std::string user_key;      // ranking: field holding the user id
    std::string item_key;      // ranking: field holding the item id
    std::string label_column;  // ctr: raw column holding the {0,1} label
    char delimiter = '\t';
    char list_delimiter = '|';

    struct Filter {
        std::string column;
        std::string op;  // < <= > >= == !=
        double value = 0.0;
    };
    std::vector<Filter> filters;

    int min_freq = 0;  // default 5 for ctr schemas
    int k_core_user = 1;
    int k_core_item = 1;
    std::optional<std::int64_t> val_size;
    std::optional<std::int64_t> test_size;
    std::optional<double> val_fraction;
    std::optional<double> test_fraction;

    int user_key_field() const { return schema.field_of_name(user_key); }
    int item_key_field() const { return schema.field_of_name(item_key); }
};

RawSchema parse_schema_file(const std::filesystem::path& path);
RawSchema parse_schema_string(const std::string& text, const std::string& origin);

// Reads a delimited file with a header row, applies the schema's filters
// and (ctr) label column. Errors carry file and line numbers.
std::vector<RawRecord> read_raw_file(const std::filesystem::path& path, const RawSchema& schema);

// Spec operation: vocabulary from records with fold threshold; counting is
// the caller's responsibility to restrict to the training portion.
Vocabulary build_vocab(const std::vector<RawRecord>& records, const FieldSchema& schema,
                       int min_freq);

// Iteratively removes users with < k_user interactions and items with
// < k_item interactions until a fixpoint. Input pairs are deduplicated;
// the surviving unique pairs are returned sorted.
std::vector<std::pair<std::int32_t, std::int32_t>> k_core_filter(
    const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs, int k_user, int k_item);

// Pads (or truncates, input order kept) to exactly max_multiplicity
// entries; missing slots are filled with unknown_index.
std::vector<std::int32_t> pad_multivalued(const std::vector<std::int32_t>& indices,
                                          int max_multiplicity, std::int32_t unknown_index);

struct SplitSpec {
    std::optional<std::int64_t> val_size;
    std::optional<std::int64_t> test_size;
    std::optional<double> val_fraction;
    std::optional<double> test_fraction;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

// Uniform random disjoint splits, deterministic per seed. Fractional sizes
// floor; the remainder goes to train. Each index list is sorted.
SplitIndices make_splits(std::size_t n, const SplitSpec& spec, std::uint64_t seed);

// Item-side slot entries for one catalog item.
struct ItemRecord {
    std::int32_t item_index = -1;  // vocab index of the item-key token
    std::vector<InstanceEntry> entries;
};

struct DatasetStats {
    std::int64_t samples = 0;
    std::int64_t slots = 0;  // instance width d (Eq. 8 sum range)
    std::int64_t user_fields = 0;
    std::int64_t item_fields = 0;
    std::int64_t features = 0;
    std::int64_t users = 0;
    std::int64_t items = 0;
    double sparsity = 0.0;  // ranking: 1 - samples / (users * items)
    std::int64_t train_size = 0, val_size = 0, test_size = 0;
};

struct DatasetBundle {
    TaskKind task = TaskKind::kRanking;
    FieldSchema schema;
    Vocabulary vocab;
    std::string user_key, item_key;
    std::vector<SparseInstance> train, val, test;

    // ranking only
    std::vector<ItemRecord> items;  // sorted by item_index
    std::unordered_map<std::int32_t, std::int32_t> item_ordinal_by_index;
    std::unordered_map<std::int32_t, std::vector<std::int32_t>> observed_train;
    std::unordered_map<std::int32_t, std::vector<std::int32_t>> observed_val;
    std::unordered_map<std::int32_t, std::vector<std::int32_t>> observed_test;

    int user_key_field() const { return schema.field_of_name(user_key); }
    int item_key_field() const { return schema.field_of_name(item_key); }
    std::int32_t user_of(const SparseInstance& inst) const;
    std::int32_t item_index_of(const SparseInstance& inst) const;
    std::int32_t item_ordinal_of(const SparseInstance& inst) const;

    // merged observed item ordinals (all splits), sorted unique
    std::vector<std::int32_t> observed_all(std::int32_t user) const;

    // copy of base with the item-side slots replaced by the catalog item
    SparseInstance with_item(const SparseInstance& base, std::int32_t item_ordinal) const;

    // scans the splits; called by the pipeline and after loading
    void rebuild_observed();
    void validate() const;
};

// `count` items uniformly without replacement from the items the user has
// not interacted with (any split). When the unobserved pool is smaller
// than count, falls back to sampling with replacement and sets the flag.
std::vector<std::int32_t> sample_negatives(std::int32_t user, int count,
                                           const DatasetBundle& bundle, std::mt19937_64& rng,
                                           bool* with_replacement = nullptr);

DatasetStats compute_stats(const DatasetBundle& bundle);

// Full ingestion: filter -> dedup -> k-core -> split -> vocab(train) ->
// encode -> catalog/observed.
DatasetBundle preprocess_dataset(const RawSchema& schema, const std::vector<RawRecord>& records,
                                 std::uint64_t seed);

// Processed-dataset container: schema.txt, vocab.tsv, {train,val,test}.txt,
// items.tsv (ranking), stats.txt.
void write_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle,
                  const DatasetStats& stats);
DatasetBundle load_bundle(const std::filesystem::path& dir);
Vocabulary load_vocabulary(const std::filesystem::path& path, const FieldSchema& schema);

}  // namespace lfm
