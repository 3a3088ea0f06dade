#pragma once
// Small hand-built banks and helpers shared by the test binaries.

#include <filesystem>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "prefmix/bank.hpp"
#include "prefmix/embed.hpp"

namespace prefmix::testing {

inline std::string padded(const char* prefix, std::size_t i) {
    std::ostringstream out;
    out << prefix << std::setw(3) << std::setfill('0') << i;
    return out.str();
}

/// One prompt per pair, two screens per prompt. labels[d][j] is designer d's
/// value for pair j; 0 leaves the label out.
inline DataBank bank_from_table(const std::vector<std::vector<int>>& labels, const std::string& category = "form",
                                bool allow_sparse = false) {
    IngestOptions opts;
    opts.allow_sparse = allow_sparse;
    BankBuilder b(opts);
    const std::size_t pairs = labels.empty() ? 0 : labels.front().size();
    for (std::size_t j = 0; j < pairs; ++j) {
        const std::string p = padded("p", j);
        b.add_prompt({p, "prompt " + std::to_string(j), category});
        b.add_screen({p + "a", p, p + "a", ""});
        b.add_screen({p + "b", p, p + "b", ""});
        b.add_pair({padded("x", j), p, p + "a", p + "b"});
    }
    for (std::size_t d = 0; d < labels.size(); ++d) {
        for (std::size_t j = 0; j < pairs; ++j) {
            if (labels[d][j] != 0) b.add_label(padded("d", d), padded("x", j), labels[d][j]);
        }
    }
    return b.build();
}

/// Random complete table with values drawn uniformly from the four labels.
template <class Rng>
std::vector<std::vector<int>> random_table(std::size_t designers, std::size_t pairs, Rng& rng) {
    static constexpr int kValues[] = {-2, -1, 1, 2};
    std::uniform_int_distribution<int> pick(0, 3);
    std::vector<std::vector<int>> t(designers, std::vector<int>(pairs));
    for (auto& row : t) {
        for (auto& v : row) v = kValues[pick(rng)];
    }
    return t;
}

template <class Rng>
Vector random_unit(Eigen::Index dim, Rng& rng) {
    std::normal_distribution<double> normal;
    Vector v(dim);
    for (auto& x : v) x = normal(rng);
    return v.normalized();
}

/// Random unit embeddings for every screen of `bank`, keyed by embedding_ref.
template <class Rng>
EmbeddingStore random_store(const DataBank& bank, Eigen::Index dim, Rng& rng) {
    EmbeddingStore store(dim);
    for (const auto& s : bank.screens()) store.add(s.embedding_ref, random_unit(dim, rng));
    return store;
}

/// Bank of `prompts` prompts with four screens and all six pairs each.
inline DataBank six_pair_bank(std::size_t prompts, std::size_t designers, std::size_t categories, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, 3);
    static constexpr int kValues[] = {-2, -1, 1, 2};
    BankBuilder b;
    std::vector<std::string> pair_ids;
    for (std::size_t p = 0; p < prompts; ++p) {
        const std::string pid = padded("p", p);
        b.add_prompt({pid, "prompt", padded("c", p % categories)});
        for (int s = 0; s < 4; ++s) b.add_screen({pid + "s" + std::to_string(s), pid, pid + "s" + std::to_string(s), ""});
        int n = 0;
        for (int s = 0; s < 4; ++s) {
            for (int t = s + 1; t < 4; ++t) {
                const std::string id = pid + "x" + std::to_string(n++);
                b.add_pair({id, pid, pid + "s" + std::to_string(s), pid + "s" + std::to_string(t)});
                pair_ids.push_back(id);
            }
        }
    }
    for (std::size_t d = 0; d < designers; ++d) {
        for (const auto& id : pair_ids) b.add_label(padded("d", d), id, kValues[pick(rng)]);
    }
    return b.build();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("prefmix-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

template <class F>
ErrorCode error_code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    throw std::logic_error("expected prefmix::Error");
}

} // namespace prefmix::testing
