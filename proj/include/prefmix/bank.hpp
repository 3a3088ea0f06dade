#pragma once
// Preference data bank: prompts, screens, ordered comparison pairs and a dense
// designer x pair table of four-point labels, plus screen-grouped splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefmix/error.hpp"
#include "prefmix/label.hpp"

namespace prefmix {

using json = nlohmann::json;

struct Prompt {
    std::string prompt_id;
    std::string text;
    std::string category;

    bool operator==(const Prompt&) const = default;
};

struct Screen {
    std::string screen_id;
    std::string prompt_id;
    std::string embedding_ref;
    std::string image_url;  // optional, empty when absent

    bool operator==(const Screen&) const = default;
};

/// Ordered pair of screens for one prompt. Labels are relative to `left_id`.
struct ComparisonPair {
    std::string pair_id;
    std::string prompt_id;
    std::string left_id;
    std::string right_id;

    bool operator==(const ComparisonPair&) const = default;
};

/// Exchanges left and right and negates the label.
inline std::pair<ComparisonPair, Label> swap_pair(const ComparisonPair& pair, Label label) {
    ComparisonPair swapped = pair;
    std::swap(swapped.left_id, swapped.right_id);
    return {std::move(swapped), negate(label)};
}

enum class Partition : std::uint8_t { Train = 0, Validation = 1, Test = 2 };

inline constexpr std::array<Partition, 3> kAllPartitions = {Partition::Train, Partition::Validation,
                                                            Partition::Test};

inline std::string_view to_string(Partition p) {
    switch (p) {
    case Partition::Train: return "train";
    case Partition::Validation: return "validation";
    case Partition::Test: return "test";
    }
    return "train";
}

inline Partition partition_from_string(std::string_view tag) {
    if (tag == "train") return Partition::Train;
    if (tag == "validation" || tag == "val") return Partition::Validation;
    if (tag == "test") return Partition::Test;
    fail(ErrorCode::ParseError, "unknown partition tag '" + std::string(tag) + "'", "tag");
}

/// Result of make_splits. `by_pair` is aligned with DataBank::pairs().
struct SplitAssignment {
    std::vector<Partition> by_pair;
    std::array<std::size_t, 3> pair_counts{};
    /// Set when some partition misses its target fraction by more than 5 points.
    bool unsatisfiable = false;
    /// Largest |category share - target ratio| over categories and partitions.
    double stratification_error = 0.0;
};

class BankBuilder;

/// Immutable labeled corpus. Designers and pairs are kept in first-seen order;
/// the label table stores 0 for entries missing from sparse banks.
class DataBank {
public:
    DataBank() = default;

    const std::vector<Prompt>& prompts() const noexcept { return prompts_; }
    const std::vector<Screen>& screens() const noexcept { return screens_; }
    const std::vector<ComparisonPair>& pairs() const noexcept { return pairs_; }
    const std::vector<std::string>& designer_ids() const noexcept { return designer_ids_; }

    std::size_t num_pairs() const noexcept { return pairs_.size(); }
    std::size_t num_designers() const noexcept { return designer_ids_.size(); }
    std::size_t num_labels() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(labels_.begin(), labels_.end(), [](std::int8_t v) { return v != 0; }));
    }
    bool complete() const noexcept { return num_labels() == labels_.size(); }

    /// Raw label value, 0 when missing.
    int label_value(std::size_t designer, std::size_t pair) const noexcept {
        return labels_[designer * pairs_.size() + pair];
    }
    std::optional<Label> label(std::size_t designer, std::size_t pair) const noexcept {
        const int v = label_value(designer, pair);
        if (v == 0) return std::nullopt;
        return static_cast<Label>(v);
    }

    std::optional<std::size_t> pair_index(std::string_view pair_id) const {
        return lookup(pair_index_, pair_id);
    }
    std::optional<std::size_t> screen_index(std::string_view screen_id) const {
        return lookup(screen_index_, screen_id);
    }
    std::optional<std::size_t> prompt_index(std::string_view prompt_id) const {
        return lookup(prompt_index_, prompt_id);
    }
    std::optional<std::size_t> designer_index(std::string_view designer_id) const {
        return lookup(designer_index_, designer_id);
    }

    std::size_t require_pair(std::string_view pair_id) const {
        if (auto idx = pair_index(pair_id)) return *idx;
        fail(ErrorCode::UnknownPair, "unknown pair '" + std::string(pair_id) + "'", "pair_id");
    }

    /// Bank pair with the same unordered screen set, if any.
    std::optional<std::size_t> find_pair_by_screens(std::string_view a, std::string_view b) const {
        auto it = unordered_index_.find(unordered_key(a, b));
        if (it == unordered_index_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& category_of_pair(std::size_t pair) const {
        return prompts_[*prompt_index(pairs_[pair].prompt_id)].category;
    }

    const std::optional<std::vector<Partition>>& split() const noexcept { return split_; }
    bool has_split() const noexcept { return split_.has_value(); }

    /// Pair indices in a partition. Without a split every pair counts as train.
    std::vector<std::size_t> pairs_in(Partition p) const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < pairs_.size(); ++j) {
            const Partition tag = split_ ? (*split_)[j] : Partition::Train;
            if (tag == p) out.push_back(j);
        }
        return out;
    }

    DataBank with_split(const SplitAssignment& split) const {
        return with_split(split.by_pair);
    }
    DataBank with_split(std::vector<Partition> by_pair) const {
        if (by_pair.size() != pairs_.size()) {
            fail(ErrorCode::InvalidArgument, "split covers " + std::to_string(by_pair.size()) +
                                                 " pairs, bank has " + std::to_string(pairs_.size()));
        }
        DataBank copy = *this;
        copy.split_ = std::move(by_pair);
        return copy;
    }

    /// Copy of the bank with one designer removed from the designer set and
    /// label table.
    DataBank without_designer(std::size_t designer) const {
        DataBank copy = *this;
        const std::size_t P = pairs_.size();
        copy.labels_.erase(copy.labels_.begin() + static_cast<std::ptrdiff_t>(designer * P),
                           copy.labels_.begin() + static_cast<std::ptrdiff_t>((designer + 1) * P));
        copy.designer_ids_.erase(copy.designer_ids_.begin() + static_cast<std::ptrdiff_t>(designer));
        copy.designer_index_.clear();
        for (std::size_t d = 0; d < copy.designer_ids_.size(); ++d) {
            copy.designer_index_.emplace(copy.designer_ids_[d], d);
        }
        return copy;
    }

    bool operator==(const DataBank& other) const {
        return prompts_ == other.prompts_ && screens_ == other.screens_ && pairs_ == other.pairs_ &&
               designer_ids_ == other.designer_ids_ && labels_ == other.labels_ &&
               split_ == other.split_;
    }

private:
    friend class BankBuilder;

    using Index = std::unordered_map<std::string, std::size_t>;

    static std::optional<std::size_t> lookup(const Index& index, std::string_view key) {
        auto it = index.find(std::string(key));
        if (it == index.end()) return std::nullopt;
        return it->second;
    }
    static std::string unordered_key(std::string_view a, std::string_view b) {
        if (b < a) std::swap(a, b);
        std::string key(a);
        key.push_back('\x1f');
        key.append(b);
        return key;
    }

    std::vector<Prompt> prompts_;
    std::vector<Screen> screens_;
    std::vector<ComparisonPair> pairs_;
    std::vector<std::string> designer_ids_;
    std::vector<std::int8_t> labels_;
    std::optional<std::vector<Partition>> split_;

    Index prompt_index_;
    Index screen_index_;
    Index pair_index_;
    Index designer_index_;
    Index unordered_index_;
};

struct IngestOptions {
    /// Accept banks where some designers lack labels for some pairs.
    bool allow_sparse = false;
    /// Closed screen-type taxonomy; empty accepts any category.
    std::vector<std::string> categories;
};

/// Validating incremental constructor for DataBank. Entities may be added in
/// any order; references are resolved in build().
class BankBuilder {
public:
    explicit BankBuilder(IngestOptions options = {}) : options_(std::move(options)) {}

    BankBuilder& add_prompt(Prompt prompt) {
        if (prompt.text.empty()) {
            fail(ErrorCode::InvalidArgument, "prompt '" + prompt.prompt_id + "' has empty text", "text");
        }
        insert_unique(bank_.prompt_index_, prompt.prompt_id, bank_.prompts_.size(), "prompt");
        bank_.prompts_.push_back(std::move(prompt));
        return *this;
    }

    BankBuilder& add_screen(Screen screen) {
        insert_unique(bank_.screen_index_, screen.screen_id, bank_.screens_.size(), "screen");
        if (screen.embedding_ref.empty()) screen.embedding_ref = screen.screen_id;
        bank_.screens_.push_back(std::move(screen));
        return *this;
    }

    BankBuilder& add_pair(ComparisonPair pair) {
        if (pair.left_id == pair.right_id) {
            fail(ErrorCode::InvalidPair, "pair '" + pair.pair_id + "' compares a screen with itself",
                 "right_id");
        }
        insert_unique(bank_.pair_index_, pair.pair_id, bank_.pairs_.size(), "pair");
        bank_.pairs_.push_back(std::move(pair));
        return *this;
    }

    BankBuilder& add_label(std::string designer_id, std::string pair_id, int value) {
        const Label label = label_from_int(value);
        auto [it, inserted] =
            raw_labels_.try_emplace({designer_id, pair_id}, static_cast<std::int8_t>(to_int(label)));
        if (!inserted) {
            fail(ErrorCode::DuplicateLabel,
                 "designer '" + designer_id + "' labeled pair '" + pair_id + "' twice", "pair_id");
        }
        if (!bank_.designer_index_.count(designer_id)) {
            bank_.designer_index_.emplace(designer_id, bank_.designer_ids_.size());
            bank_.designer_ids_.push_back(std::move(designer_id));
        }
        return *this;
    }

    DataBank build() {
        DataBank& b = bank_;
        for (const auto& prompt : b.prompts_) {
            if (!options_.categories.empty() &&
                std::find(options_.categories.begin(), options_.categories.end(), prompt.category) ==
                    options_.categories.end()) {
                fail(ErrorCode::UnknownCategory,
                     "prompt '" + prompt.prompt_id + "' has category '" + prompt.category +
                         "' outside the configured taxonomy",
                     "category");
            }
        }
        for (const auto& screen : b.screens_) {
            if (!b.prompt_index_.count(screen.prompt_id)) {
                fail(ErrorCode::DanglingReference,
                     "screen '" + screen.screen_id + "' references unknown prompt '" +
                         screen.prompt_id + "'",
                     "prompt_id");
            }
        }
        for (std::size_t j = 0; j < b.pairs_.size(); ++j) {
            const auto& pair = b.pairs_[j];
            if (!b.prompt_index_.count(pair.prompt_id)) {
                fail(ErrorCode::DanglingReference,
                     "pair '" + pair.pair_id + "' references unknown prompt '" + pair.prompt_id + "'",
                     "prompt_id");
            }
            for (const auto* sid : {&pair.left_id, &pair.right_id}) {
                auto it = b.screen_index_.find(*sid);
                if (it == b.screen_index_.end()) {
                    fail(ErrorCode::DanglingReference,
                         "pair '" + pair.pair_id + "' references unknown screen '" + *sid + "'",
                         sid == &pair.left_id ? "left_id" : "right_id");
                }
                if (b.screens_[it->second].prompt_id != pair.prompt_id) {
                    fail(ErrorCode::InvalidPair,
                         "pair '" + pair.pair_id + "' mixes screens from different prompts",
                         "prompt_id");
                }
            }
            auto [it, inserted] =
                b.unordered_index_.try_emplace(DataBank::unordered_key(pair.left_id, pair.right_id), j);
            if (!inserted) {
                fail(ErrorCode::DuplicatePair,
                     "pairs '" + b.pairs_[it->second].pair_id + "' and '" + pair.pair_id +
                         "' compare the same screens",
                     "pair_id");
            }
        }

        const std::size_t P = b.pairs_.size();
        b.labels_.assign(b.designer_ids_.size() * P, 0);
        for (const auto& [key, value] : raw_labels_) {
            auto pit = b.pair_index_.find(key.second);
            if (pit == b.pair_index_.end()) {
                fail(ErrorCode::DanglingReference,
                     "label from '" + key.first + "' references unknown pair '" + key.second + "'",
                     "pair_id");
            }
            b.labels_[b.designer_index_.at(key.first) * P + pit->second] = value;
        }
        if (!options_.allow_sparse) {
            for (std::size_t d = 0; d < b.designer_ids_.size(); ++d) {
                std::size_t missing = 0;
                for (std::size_t j = 0; j < P; ++j) missing += b.labels_[d * P + j] == 0;
                if (missing > 0) {
                    fail(ErrorCode::IncompleteLabelTable,
                         "designer '" + b.designer_ids_[d] + "' is missing " +
                             std::to_string(missing) + " of " + std::to_string(P) + " labels",
                         "designer_id");
                }
            }
        }
        return std::move(bank_);
    }

private:
    static void insert_unique(DataBank::Index& index, const std::string& id, std::size_t pos,
                              const char* what) {
        if (id.empty()) fail(ErrorCode::ParseError, std::string(what) + " with empty id");
        if (!index.emplace(id, pos).second) {
            fail(ErrorCode::DuplicateId, std::string("duplicate ") + what + " id '" + id + "'");
        }
    }

    IngestOptions options_;
    DataBank bank_;
    std::map<std::pair<std::string, std::string>, std::int8_t> raw_labels_;
};

// ---------------------------------------------------------------------------
// Record format
// ---------------------------------------------------------------------------

namespace detail {

inline std::string required_string(const json& record, const char* field) {
    auto it = record.find(field);
    if (it == record.end() || !it->is_string()) {
        fail(ErrorCode::ParseError, std::string("record is missing string field '") + field + "'",
             field);
    }
    return it->get<std::string>();
}

inline std::string optional_string(const json& record, const char* field) {
    auto it = record.find(field);
    if (it == record.end() || it->is_null()) return {};
    if (!it->is_string()) fail(ErrorCode::ParseError, std::string("field '") + field + "' must be a string", field);
    return it->get<std::string>();
}

} // namespace detail

/// Builds a bank from prompt/screen/pair/label records (each carries `type`).
inline DataBank ingest_bank(std::span<const json> records, const IngestOptions& options = {}) {
    BankBuilder builder(options);
    for (const json& record : records) {
        if (!record.is_object()) fail(ErrorCode::ParseError, "record is not an object");
        const std::string type = detail::required_string(record, "type");
        if (type == "prompt") {
            builder.add_prompt({detail::required_string(record, "prompt_id"),
                                detail::required_string(record, "text"),
                                detail::optional_string(record, "category")});
        } else if (type == "screen") {
            builder.add_screen({detail::required_string(record, "screen_id"),
                                detail::required_string(record, "prompt_id"),
                                detail::optional_string(record, "embedding_ref"),
                                detail::optional_string(record, "image_url")});
        } else if (type == "pair") {
            builder.add_pair({detail::required_string(record, "pair_id"),
                              detail::required_string(record, "prompt_id"),
                              detail::required_string(record, "left_id"),
                              detail::required_string(record, "right_id")});
        } else if (type == "label") {
            auto it = record.find("value");
            if (it == record.end() || !it->is_number_integer()) {
                fail(ErrorCode::ParseError, "label record needs an integer 'value'", "value");
            }
            builder.add_label(detail::required_string(record, "designer_id"),
                              detail::required_string(record, "pair_id"), it->get<int>());
        } else {
            fail(ErrorCode::ParseError, "unknown record type '" + type + "'", "type");
        }
    }
    return builder.build();
}

inline json to_record(const Prompt& p) {
    return {{"type", "prompt"}, {"prompt_id", p.prompt_id}, {"text", p.text}, {"category", p.category}};
}
inline json to_record(const Screen& s) {
    json r = {{"type", "screen"}, {"screen_id", s.screen_id}, {"prompt_id", s.prompt_id},
              {"embedding_ref", s.embedding_ref}};
    if (!s.image_url.empty()) r["image_url"] = s.image_url;
    return r;
}
inline json to_record(const ComparisonPair& p) {
    return {{"type", "pair"}, {"pair_id", p.pair_id}, {"prompt_id", p.prompt_id},
            {"left_id", p.left_id}, {"right_id", p.right_id}};
}

/// All records of a bank, grouped by file: prompts, screens, pairs, labels.
inline std::array<std::vector<json>, 4> to_record_files(const DataBank& bank) {
    std::array<std::vector<json>, 4> files;
    for (const auto& p : bank.prompts()) files[0].push_back(to_record(p));
    for (const auto& s : bank.screens()) files[1].push_back(to_record(s));
    for (const auto& p : bank.pairs()) files[2].push_back(to_record(p));
    for (std::size_t d = 0; d < bank.num_designers(); ++d) {
        for (std::size_t j = 0; j < bank.num_pairs(); ++j) {
            if (const int v = bank.label_value(d, j); v != 0) {
                files[3].push_back({{"type", "label"},
                                    {"designer_id", bank.designer_ids()[d]},
                                    {"pair_id", bank.pairs()[j].pair_id},
                                    {"value", v}});
            }
        }
    }
    return files;
}

inline std::vector<json> to_records(const DataBank& bank) {
    std::vector<json> all;
    for (auto& file : to_record_files(bank)) {
        all.insert(all.end(), std::make_move_iterator(file.begin()), std::make_move_iterator(file.end()));
    }
    return all;
}

inline constexpr std::array<const char*, 4> kBankFiles = {"prompts.jsonl", "screens.jsonl",
                                                          "pairs.jsonl", "labels.jsonl"};
inline constexpr const char* kSplitsFile = "splits.txt";
inline constexpr const char* kCategoriesFile = "categories.txt";

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string(), path.string());
    std::vector<json> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            fail(ErrorCode::ParseError,
                 path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what(),
                 path.string());
        }
    }
    return records;
}

inline void write_jsonl(const std::filesystem::path& path, std::span<const json> records) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string(), path.string());
    for (const auto& r : records) out << r.dump() << '\n';
}

inline void write_splits(const std::filesystem::path& path, const DataBank& bank,
                         std::span<const Partition> by_pair) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string(), path.string());
    for (std::size_t j = 0; j < bank.num_pairs(); ++j) {
        out << bank.pairs()[j].pair_id << ' ' << to_string(by_pair[j]) << '\n';
    }
}

inline std::vector<Partition> read_splits(const std::filesystem::path& path, const DataBank& bank) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string(), path.string());
    std::vector<std::optional<Partition>> tags(bank.num_pairs());
    std::string pair_id, tag;
    while (in >> pair_id >> tag) {
        tags[bank.require_pair(pair_id)] = partition_from_string(tag);
    }
    std::vector<Partition> out;
    out.reserve(tags.size());
    for (std::size_t j = 0; j < tags.size(); ++j) {
        if (!tags[j]) {
            fail(ErrorCode::IncompleteLabelTable,
                 "split file has no tag for pair '" + bank.pairs()[j].pair_id + "'", path.string());
        }
        out.push_back(*tags[j]);
    }
    return out;
}

/// Loads a bank directory. categories.txt (one category per line) and
/// splits.txt are optional.
inline DataBank load_bank_dir(const std::filesystem::path& dir, IngestOptions options = {}) {
    if (options.categories.empty() && std::filesystem::exists(dir / kCategoriesFile)) {
        std::ifstream in(dir / kCategoriesFile);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) options.categories.push_back(line);
        }
    }
    std::vector<json> records;
    for (const char* name : kBankFiles) {
        auto part = read_jsonl(dir / name);
        records.insert(records.end(), std::make_move_iterator(part.begin()),
                       std::make_move_iterator(part.end()));
    }
    DataBank bank = ingest_bank(records, options);
    if (std::filesystem::exists(dir / kSplitsFile)) {
        bank = bank.with_split(read_splits(dir / kSplitsFile, bank));
    }
    return bank;
}

inline void save_bank_dir(const DataBank& bank, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto files = to_record_files(bank);
    for (std::size_t i = 0; i < files.size(); ++i) write_jsonl(dir / kBankFiles[i], files[i]);
    if (bank.split()) write_splits(dir / kSplitsFile, bank, *bank.split());
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

namespace detail {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

} // namespace detail

/// Screen-grouped stratified split. Connected components of the pair/screen
/// graph are atomic; components are visited category by category (largest
/// first) and each goes to the partition with the largest running deficit.
inline SplitAssignment make_splits(const DataBank& bank, std::array<double, 3> ratios,
                                   std::uint64_t seed) {
    double total_ratio = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) fail(ErrorCode::InvalidArgument, "split ratios must be positive", "ratios");
        total_ratio += r;
    }
    if (std::abs(total_ratio - 1.0) > 1e-9) {
        fail(ErrorCode::InvalidArgument, "split ratios must sum to 1", "ratios");
    }

    const std::size_t P = bank.num_pairs();
    detail::DisjointSets sets(bank.screens().size());
    for (const auto& pair : bank.pairs()) {
        sets.unite(*bank.screen_index(pair.left_id), *bank.screen_index(pair.right_id));
    }

    struct Component {
        std::vector<std::size_t> pairs;
        std::string category;
    };
    std::map<std::size_t, Component> by_root;
    for (std::size_t j = 0; j < P; ++j) {
        auto& comp = by_root[sets.find(*bank.screen_index(bank.pairs()[j].left_id))];
        if (comp.pairs.empty()) comp.category = bank.category_of_pair(j);
        comp.pairs.push_back(j);
    }

    std::map<std::string, std::vector<Component>> by_category;
    for (auto& [root, comp] : by_root) by_category[comp.category].push_back(std::move(comp));

    std::mt19937_64 rng(seed);
    std::vector<std::string> category_order;
    for (const auto& [cat, comps] : by_category) category_order.push_back(cat);
    std::shuffle(category_order.begin(), category_order.end(), rng);

    SplitAssignment result;
    result.by_pair.assign(P, Partition::Train);
    std::array<std::size_t, 3> counts{};
    std::size_t assigned = 0;
    std::map<std::string, std::array<std::size_t, 3>> category_counts;

    for (const auto& cat : category_order) {
        auto& comps = by_category[cat];
        std::shuffle(comps.begin(), comps.end(), rng);
        std::stable_sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
            return a.pairs.size() > b.pairs.size();
        });
        for (const auto& comp : comps) {
            const double after = static_cast<double>(assigned + comp.pairs.size());
            std::size_t best = 0;
            double best_deficit = -std::numeric_limits<double>::infinity();
            for (std::size_t p = 0; p < 3; ++p) {
                const double deficit = ratios[p] * after - static_cast<double>(counts[p]);
                if (deficit > best_deficit + 1e-12) {
                    best_deficit = deficit;
                    best = p;
                }
            }
            for (std::size_t j : comp.pairs) result.by_pair[j] = static_cast<Partition>(best);
            counts[best] += comp.pairs.size();
            category_counts[cat][best] += comp.pairs.size();
            assigned += comp.pairs.size();
        }
    }

    result.pair_counts = counts;
    if (P > 0) {
        for (std::size_t p = 0; p < 3; ++p) {
            if (std::abs(static_cast<double>(counts[p]) / static_cast<double>(P) - ratios[p]) > 0.05) {
                result.unsatisfiable = true;
            }
        }
        for (const auto& [cat, cc] : category_counts) {
            const double n = static_cast<double>(cc[0] + cc[1] + cc[2]);
            for (std::size_t p = 0; p < 3; ++p) {
                result.stratification_error = std::max(
                    result.stratification_error, std::abs(static_cast<double>(cc[p]) / n - ratios[p]));
            }
        }
    }
    return result;
}

} // namespace prefmix
