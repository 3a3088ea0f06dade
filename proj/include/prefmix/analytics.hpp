#pragma once
// Inter-rater agreement and consensus statistics over a data bank.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefmix/bank.hpp"
#include "prefmix/error.hpp"
#include "prefmix/label.hpp"

namespace prefmix {

enum class Granularity { Binary, FourWay };

inline std::string_view to_string(Granularity g) { return g == Granularity::Binary ? "binary" : "four_way"; }

inline Granularity granularity_from_string(std::string_view s) {
    if (s == "binary") return Granularity::Binary;
    if (s == "four_way" || s == "four-way") return Granularity::FourWay;
    fail(ErrorCode::InvalidArgument, "granularity must be binary or four_way", "granularity");
}

/// sign(label) as +1 / -1.
inline int binary_direction(Label label) { return direction(label); }

namespace detail {

/// Category index of a raw label value at the given granularity.
inline std::size_t category_of(int value, Granularity g) {
    if (g == Granularity::Binary) return value > 0 ? 1 : 0;
    return label_index(static_cast<Label>(value));
}

inline std::size_t num_categories(Granularity g) { return g == Granularity::Binary ? 2 : kNumLabels; }

inline void require_same_length(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) fail(ErrorCode::InvalidArgument, "rater vectors differ in length");
}

inline void require_domain(int v) {
    if (v != 0 && !is_label_value(v)) label_from_int(v);
}

} // namespace detail

/// Fraction of shared items on which two raters give the same category.
/// Raw values of 0 mark missing labels and are skipped.
inline double pairwise_agreement(std::span<const int> r1, std::span<const int> r2, Granularity g) {
    detail::require_same_length(r1, r2);
    std::size_t shared = 0, same = 0;
    for (std::size_t i = 0; i < r1.size(); ++i) {
        detail::require_domain(r1[i]);
        detail::require_domain(r2[i]);
        if (r1[i] == 0 || r2[i] == 0) continue;
        ++shared;
        same += detail::category_of(r1[i], g) == detail::category_of(r2[i], g);
    }
    if (shared == 0) fail(ErrorCode::NoSharedItems, "raters share no labeled items");
    return static_cast<double>(same) / static_cast<double>(shared);
}

/// Cohen's kappa with per-rater marginals.
inline double cohen_kappa(std::span<const int> r1, std::span<const int> r2, Granularity g) {
    detail::require_same_length(r1, r2);
    const std::size_t k = detail::num_categories(g);
    std::vector<double> m1(k, 0.0), m2(k, 0.0);
    std::size_t shared = 0, same = 0;
    for (std::size_t i = 0; i < r1.size(); ++i) {
        detail::require_domain(r1[i]);
        detail::require_domain(r2[i]);
        if (r1[i] == 0 || r2[i] == 0) continue;
        const std::size_t a = detail::category_of(r1[i], g);
        const std::size_t b = detail::category_of(r2[i], g);
        m1[a] += 1.0;
        m2[b] += 1.0;
        same += a == b;
        ++shared;
    }
    if (shared < 2) fail(ErrorCode::InsufficientData, "kappa needs at least two shared items");
    const double n = static_cast<double>(shared);
    const double po = static_cast<double>(same) / n;
    double pe = 0.0;
    for (std::size_t c = 0; c < k; ++c) pe += (m1[c] / n) * (m2[c] / n);
    if (pe >= 1.0) fail(ErrorCode::DegenerateMarginals, "both raters use one identical category; kappa undefined");
    return (po - pe) / (1.0 - pe);
}

/// Nominal Krippendorff's alpha from the coincidence matrix. `table` is
/// raters x items with 0 for missing values; items with fewer than two values
/// are not pairable and are ignored.
inline double krippendorff_alpha(const std::vector<std::vector<int>>& table, Granularity g) {
    if (table.size() < 2) fail(ErrorCode::InsufficientData, "alpha needs at least two raters");
    const std::size_t items = table.front().size();
    if (items < 2) fail(ErrorCode::InsufficientData, "alpha needs at least two items");
    for (const auto& row : table) {
        if (row.size() != items) fail(ErrorCode::InvalidArgument, "ragged rater table");
    }
    const std::size_t k = detail::num_categories(g);
    std::vector<double> coincidence(k * k, 0.0);
    std::vector<double> counts(k);
    for (std::size_t u = 0; u < items; ++u) {
        std::fill(counts.begin(), counts.end(), 0.0);
        double m = 0.0;
        for (const auto& row : table) {
            detail::require_domain(row[u]);
            if (row[u] == 0) continue;
            counts[detail::category_of(row[u], g)] += 1.0;
            m += 1.0;
        }
        if (m < 2.0) continue;
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t e = 0; e < k; ++e) {
                const double pairs = c == e ? counts[c] * (counts[c] - 1.0) : counts[c] * counts[e];
                coincidence[c * k + e] += pairs / (m - 1.0);
            }
        }
    }
    std::vector<double> marginal(k, 0.0);
    double n = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t e = 0; e < k; ++e) marginal[c] += coincidence[c * k + e];
        n += marginal[c];
    }
    if (n < 2.0) fail(ErrorCode::InsufficientData, "alpha needs at least two pairable values");
    double observed = 0.0, expected = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t e = 0; e < k; ++e) {
            if (c == e) continue;
            observed += coincidence[c * k + e];
            expected += marginal[c] * marginal[e];
        }
    }
    if (expected == 0.0) fail(ErrorCode::InsufficientData, "alpha undefined: every value is in one category");
    return 1.0 - (n - 1.0) * observed / expected;
}

struct StrengthUsage {
    double middle_share;
    double extreme_share;
};

inline StrengthUsage strength_usage(const DataBank& bank, std::size_t designer) {
    std::size_t middle = 0, extreme = 0;
    for (std::size_t j = 0; j < bank.num_pairs(); ++j) {
        if (auto l = bank.label(designer, j)) (strength(*l) == 1 ? middle : extreme)++;
    }
    const double total = static_cast<double>(middle + extreme);
    if (total == 0.0) fail(ErrorCode::InsufficientData, "designer has no labels");
    return {static_cast<double>(middle) / total, static_cast<double>(extreme) / total};
}

/// Entropy (nats) of a binary vote split.
inline double vote_entropy(std::size_t left_votes, std::size_t right_votes) {
    const double n = static_cast<double>(left_votes + right_votes);
    double h = 0.0;
    for (std::size_t v : {left_votes, right_votes}) {
        if (v > 0) {
            const double p = static_cast<double>(v) / n;
            h -= p * std::log(p);
        }
    }
    return h;
}

struct CategoryConsensus {
    std::size_t items = 0;
    double mean_agreement = 0.0;     // binary, over rater pairs then items
    double mean_vote_entropy = 0.0;  // binary votes, nats
    double extreme_share = 0.0;
};

inline std::map<std::string, CategoryConsensus> category_consensus(const DataBank& bank) {
    std::map<std::string, CategoryConsensus> out;
    std::map<std::string, std::pair<std::size_t, std::size_t>> extremes;  // (extreme, total)
    for (std::size_t j = 0; j < bank.num_pairs(); ++j) {
        std::size_t left = 0, right = 0, extreme = 0;
        for (std::size_t d = 0; d < bank.num_designers(); ++d) {
            if (auto l = bank.label(d, j)) {
                (direction(*l) > 0 ? left : right)++;
                extreme += strength(*l) == 2;
            }
        }
        const std::size_t n = left + right;
        if (n == 0) continue;
        auto& c = out[bank.category_of_pair(j)];
        ++c.items;
        if (n >= 2) {
            const double agree = static_cast<double>(left * (left - 1) + right * (right - 1)) /
                                 static_cast<double>(n * (n - 1));
            c.mean_agreement += agree;
        } else {
            c.mean_agreement += 1.0;
        }
        c.mean_vote_entropy += vote_entropy(left, right);
        extremes[bank.category_of_pair(j)].first += extreme;
        extremes[bank.category_of_pair(j)].second += n;
    }
    for (auto& [cat, c] : out) {
        c.mean_agreement /= static_cast<double>(c.items);
        c.mean_vote_entropy /= static_cast<double>(c.items);
        c.extreme_share = static_cast<double>(extremes[cat].first) / static_cast<double>(extremes[cat].second);
    }
    return out;
}

/// Sample Pearson correlation.
inline double pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorCode::InvalidArgument, "pearson_r needs paired vectors");
    if (x.size() < 2) fail(ErrorCode::InsufficientData, "pearson_r needs at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) fail(ErrorCode::ZeroVariance, "pearson_r undefined for a constant vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Full report
// ---------------------------------------------------------------------------

struct GranularityStats {
    double mean_pairwise_agreement = 0.0;
    /// Designer x designer; nullopt where kappa is undefined.
    std::vector<std::vector<std::optional<double>>> kappa_matrix;
    double mean_kappa = 0.0;
    std::optional<double> krippendorff_alpha;
};

struct AgreementReport {
    std::vector<std::string> designer_ids;
    GranularityStats binary;
    GranularityStats four_way;
    std::vector<StrengthUsage> strength;
    std::map<std::string, CategoryConsensus> categories;
    /// Pearson r between binary and four-way kappa over designer pairs.
    std::optional<double> pearson_r_kappa;

    const GranularityStats& at(Granularity g) const { return g == Granularity::Binary ? binary : four_way; }
};

namespace detail {

inline std::vector<int> designer_row(const DataBank& bank, std::size_t d) {
    std::vector<int> row(bank.num_pairs());
    for (std::size_t j = 0; j < bank.num_pairs(); ++j) row[j] = bank.label_value(d, j);
    return row;
}

inline GranularityStats granularity_stats(const std::vector<std::vector<int>>& rows, Granularity g) {
    GranularityStats s;
    const std::size_t D = rows.size();
    s.kappa_matrix.assign(D, std::vector<std::optional<double>>(D));
    double agree_sum = 0.0, kappa_sum = 0.0;
    std::size_t agree_n = 0, kappa_n = 0;
    for (std::size_t a = 0; a < D; ++a) {
        for (std::size_t b = a + 1; b < D; ++b) {
            try {
                agree_sum += pairwise_agreement(rows[a], rows[b], g);
                ++agree_n;
            } catch (const Error&) {
            }
            try {
                const double k = cohen_kappa(rows[a], rows[b], g);
                s.kappa_matrix[a][b] = s.kappa_matrix[b][a] = k;
                kappa_sum += k;
                ++kappa_n;
            } catch (const Error&) {
            }
        }
        s.kappa_matrix[a][a] = 1.0;
    }
    s.mean_pairwise_agreement = agree_n ? agree_sum / static_cast<double>(agree_n) : 0.0;
    s.mean_kappa = kappa_n ? kappa_sum / static_cast<double>(kappa_n) : 0.0;
    try {
        s.krippendorff_alpha = krippendorff_alpha(rows, g);
    } catch (const Error&) {
    }
    return s;
}

} // namespace detail

inline AgreementReport agreement_report(const DataBank& bank) {
    AgreementReport r;
    r.designer_ids = bank.designer_ids();
    std::vector<std::vector<int>> rows;
    for (std::size_t d = 0; d < bank.num_designers(); ++d) rows.push_back(detail::designer_row(bank, d));
    r.binary = detail::granularity_stats(rows, Granularity::Binary);
    r.four_way = detail::granularity_stats(rows, Granularity::FourWay);
    for (std::size_t d = 0; d < bank.num_designers(); ++d) {
        try {
            r.strength.push_back(strength_usage(bank, d));
        } catch (const Error&) {
            r.strength.push_back({0.0, 0.0});
        }
    }
    r.categories = category_consensus(bank);
    std::vector<double> kb, kf;
    for (std::size_t a = 0; a < rows.size(); ++a) {
        for (std::size_t b = a + 1; b < rows.size(); ++b) {
            if (r.binary.kappa_matrix[a][b] && r.four_way.kappa_matrix[a][b]) {
                kb.push_back(*r.binary.kappa_matrix[a][b]);
                kf.push_back(*r.four_way.kappa_matrix[a][b]);
            }
        }
    }
    try {
        r.pearson_r_kappa = pearson_r(kb, kf);
    } catch (const Error&) {
    }
    return r;
}

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
inline std::optional<double> json_opt(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

} // namespace detail

/// Line-delimited records: one summary per granularity, one kappa row per
/// designer pair, one strength record per designer, one record per category.
inline std::vector<nlohmann::json> to_records(const AgreementReport& r) {
    std::vector<nlohmann::json> out;
    for (Granularity g : {Granularity::Binary, Granularity::FourWay}) {
        const auto& s = r.at(g);
        out.push_back({{"type", "summary"},
                       {"granularity", to_string(g)},
                       {"mean_pairwise_agreement", s.mean_pairwise_agreement},
                       {"mean_kappa", s.mean_kappa},
                       {"krippendorff_alpha", detail::opt_json(s.krippendorff_alpha)}});
        for (std::size_t a = 0; a < r.designer_ids.size(); ++a) {
            for (std::size_t b = a + 1; b < r.designer_ids.size(); ++b) {
                out.push_back({{"type", "kappa"},
                               {"granularity", to_string(g)},
                               {"designer_a", r.designer_ids[a]},
                               {"designer_b", r.designer_ids[b]},
                               {"kappa", detail::opt_json(s.kappa_matrix[a][b])}});
            }
        }
    }
    for (std::size_t d = 0; d < r.designer_ids.size(); ++d) {
        out.push_back({{"type", "strength"},
                       {"designer_id", r.designer_ids[d]},
                       {"middle_share", r.strength[d].middle_share},
                       {"extreme_share", r.strength[d].extreme_share}});
    }
    for (const auto& [cat, c] : r.categories) {
        out.push_back({{"type", "category"},
                       {"category", cat},
                       {"items", c.items},
                       {"mean_agreement", c.mean_agreement},
                       {"mean_vote_entropy", c.mean_vote_entropy},
                       {"extreme_share", c.extreme_share}});
    }
    out.push_back({{"type", "correlation"},
                   {"statistic", "pearson_r"},
                   {"x", "binary_kappa"},
                   {"y", "four_way_kappa"},
                   {"value", detail::opt_json(r.pearson_r_kappa)}});
    return out;
}

inline AgreementReport report_from_records(std::span<const nlohmann::json> records) {
    AgreementReport r;
    std::map<std::string, std::size_t> index;
    auto designer = [&](const std::string& id) {
        auto [it, inserted] = index.try_emplace(id, r.designer_ids.size());
        if (inserted) r.designer_ids.push_back(id);
        return it->second;
    };
    // First pass fixes designer order from strength records.
    for (const auto& rec : records) {
        if (rec.at("type") == "strength") {
            designer(rec.at("designer_id").get<std::string>());
            r.strength.push_back({rec.at("middle_share").get<double>(), rec.at("extreme_share").get<double>()});
        }
    }
    const std::size_t D = r.designer_ids.size();
    for (auto* s : {&r.binary, &r.four_way}) {
        s->kappa_matrix.assign(D, std::vector<std::optional<double>>(D));
        for (std::size_t d = 0; d < D; ++d) s->kappa_matrix[d][d] = 1.0;
    }
    for (const auto& rec : records) {
        const std::string type = rec.at("type");
        if (type == "summary") {
            auto& s = granularity_from_string(rec.at("granularity").get<std::string>()) == Granularity::Binary
                          ? r.binary
                          : r.four_way;
            s.mean_pairwise_agreement = rec.at("mean_pairwise_agreement");
            s.mean_kappa = rec.at("mean_kappa");
            s.krippendorff_alpha = detail::json_opt(rec.at("krippendorff_alpha"));
        } else if (type == "kappa") {
            auto& s = granularity_from_string(rec.at("granularity").get<std::string>()) == Granularity::Binary
                          ? r.binary
                          : r.four_way;
            const std::size_t a = index.at(rec.at("designer_a"));
            const std::size_t b = index.at(rec.at("designer_b"));
            s.kappa_matrix[a][b] = s.kappa_matrix[b][a] = detail::json_opt(rec.at("kappa"));
        } else if (type == "category") {
            r.categories[rec.at("category")] = {rec.at("items"), rec.at("mean_agreement"),
                                                rec.at("mean_vote_entropy"), rec.at("extreme_share")};
        } else if (type == "correlation") {
            r.pearson_r_kappa = detail::json_opt(rec.at("value"));
        }
    }
    return r;
}

inline void write_summary(std::ostream& out, const AgreementReport& r) {
    out << std::fixed << std::setprecision(3);
    out << "granularity  agreement  mean_kappa  alpha\n";
    for (Granularity g : {Granularity::Binary, Granularity::FourWay}) {
        const auto& s = r.at(g);
        out << std::left << std::setw(13) << to_string(g) << std::right << std::setw(9)
            << s.mean_pairwise_agreement << std::setw(12) << s.mean_kappa << std::setw(7);
        if (s.krippendorff_alpha) out << *s.krippendorff_alpha;
        else out << "n/a";
        out << '\n';
    }
    out << "pearson_r(binary kappa, four_way kappa): ";
    if (r.pearson_r_kappa) out << *r.pearson_r_kappa << '\n';
    else out << "n/a\n";
    out << "\ncategory                 items  agreement  vote_entropy  extreme_share\n";
    for (const auto& [cat, c] : r.categories) {
        out << std::left << std::setw(24) << (cat.empty() ? "(none)" : cat) << std::right << std::setw(6) << c.items
            << std::setw(11) << c.mean_agreement << std::setw(14) << c.mean_vote_entropy << std::setw(15)
            << c.extreme_share << '\n';
    }
    out << "\ndesigner                 middle  extreme\n";
    for (std::size_t d = 0; d < r.designer_ids.size(); ++d) {
        out << std::left << std::setw(24) << r.designer_ids[d] << std::right << std::setw(7)
            << r.strength[d].middle_share << std::setw(9) << r.strength[d].extreme_share << '\n';
    }
    out << std::defaultfloat;
}

} // namespace prefmix
