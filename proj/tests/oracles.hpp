#pragma once
// Reference computations written directly from the defining formulas. They
// share no code paths with the library beyond reading bank labels.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "prefmix/bank.hpp"

namespace prefmix::oracle {

/// Case table for p(response | stored label).
inline double likelihood(double eps_dir, double eps_str, int observed, int response) {
    const bool same_dir = (observed > 0) == (response > 0);
    const bool same_str = std::abs(observed) == std::abs(response);
    if (same_dir && same_str) return (1 - eps_dir) * (1 - eps_str);
    if (same_dir) return (1 - eps_dir) * eps_str;
    if (same_str) return eps_dir * (1 - eps_str);
    return eps_dir * eps_str;
}

inline constexpr std::array<int, 4> kResponses = {-2, -1, 1, 2};

/// Joint table p(d, c) = pi(d) p(c | label_d) for one pair.
inline std::vector<std::array<double, 4>> joint(const std::vector<double>& pi, const std::vector<int>& labels,
                                                double eps_dir, double eps_str) {
    std::vector<std::array<double, 4>> t(pi.size());
    for (std::size_t d = 0; d < pi.size(); ++d) {
        for (std::size_t c = 0; c < 4; ++c) {
            t[d][c] = labels[d] == 0 ? pi[d] * 0.25 : pi[d] * likelihood(eps_dir, eps_str, labels[d], kResponses[c]);
        }
    }
    return t;
}

inline std::vector<double> posterior(const std::vector<double>& pi, const std::vector<int>& labels, int response,
                                     double eps_dir, double eps_str) {
    const auto t = joint(pi, labels, eps_dir, eps_str);
    const std::size_t c = static_cast<std::size_t>(std::find(kResponses.begin(), kResponses.end(), response) -
                                                   kResponses.begin());
    double evidence = 0.0;
    for (const auto& row : t) evidence += row[c];
    std::vector<double> out(pi.size());
    for (std::size_t d = 0; d < pi.size(); ++d) out[d] = t[d][c] / evidence;
    return out;
}

/// I(D; C) from the explicit joint table.
inline double mutual_information(const std::vector<double>& pi, const std::vector<int>& labels, double eps_dir,
                                 double eps_str) {
    const auto t = joint(pi, labels, eps_dir, eps_str);
    std::array<double, 4> pc{};
    for (const auto& row : t) {
        for (std::size_t c = 0; c < 4; ++c) pc[c] += row[c];
    }
    double mi = 0.0;
    for (std::size_t d = 0; d < t.size(); ++d) {
        for (std::size_t c = 0; c < 4; ++c) {
            if (t[d][c] > 0.0) mi += t[d][c] * std::log(t[d][c] / (pi[d] * pc[c]));
        }
    }
    return mi;
}

/// s(q|u) evaluated term by term: all candidate pairs are scored, the top n
/// kept, and the direct and swapped contributions summed explicitly.
inline double retrieval_score(const Eigen::VectorXd& ql, const Eigen::VectorXd& qr,
                              const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& bank_pairs,
                              const std::vector<std::size_t>& candidates, const std::vector<std::vector<int>>& labels,
                              const std::vector<double>& pi, std::size_t n, double tau, double beta) {
    struct Row {
        std::size_t j;
        double sim, s, sw;
    };
    std::vector<Row> rows;
    for (std::size_t j : candidates) {
        const double s = ql.dot(bank_pairs[j].first) + qr.dot(bank_pairs[j].second);
        const double sw = ql.dot(bank_pairs[j].second) + qr.dot(bank_pairs[j].first);
        rows.push_back({j, tau * std::log(std::exp(s / tau) + std::exp(sw / tau)), s, sw});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.sim > b.sim; });
    if (rows.size() > n) rows.resize(n);
    double z = 0.0;
    for (const auto& r : rows) z += std::exp(r.sim / beta);
    double score = 0.0;
    for (const auto& r : rows) {
        const double w = std::exp(r.sim / beta) / z;
        const double od = std::exp(r.s / tau) / (std::exp(r.s / tau) + std::exp(r.sw / tau));
        const double os = std::exp(r.sw / tau) / (std::exp(r.s / tau) + std::exp(r.sw / tau));
        for (std::size_t d = 0; d < pi.size(); ++d) {
            score += w * od * pi[d] * labels[d][r.j];
            score += w * os * pi[d] * (-labels[d][r.j]);
        }
    }
    return score;
}

/// Hinge loss recomputed from scratch for finite differences.
inline double hinge_loss(const Eigen::MatrixXd& w, const Eigen::VectorXd& a, const Eigen::VectorXd& zl,
                         const Eigen::VectorXd& zr, int label, double margin, double multiplier) {
    const Eigen::VectorXd yl = zl + w * zl;
    const Eigen::VectorXd yr = zr + w * zr;
    const double m = std::abs(label) == 2 ? margin * multiplier : margin;
    const double sign = label > 0 ? 1.0 : -1.0;
    return std::max(0.0, m - sign * a.dot(yl / yl.norm() - yr / yr.norm()));
}

/// Central differences of hinge_loss with respect to every entry of W and a.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> hinge_gradient_fd(const Eigen::MatrixXd& w,
                                                                       const Eigen::VectorXd& a,
                                                                       const Eigen::VectorXd& zl,
                                                                       const Eigen::VectorXd& zr, int label,
                                                                       double margin, double multiplier, double h) {
    Eigen::MatrixXd gw(w.rows(), w.cols());
    Eigen::VectorXd ga(a.size());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            Eigen::MatrixXd plus = w, minus = w;
            plus(r, c) += h;
            minus(r, c) -= h;
            gw(r, c) = (hinge_loss(plus, a, zl, zr, label, margin, multiplier) -
                        hinge_loss(minus, a, zl, zr, label, margin, multiplier)) /
                       (2 * h);
        }
    }
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        Eigen::VectorXd plus = a, minus = a;
        plus(i) += h;
        minus(i) -= h;
        ga(i) = (hinge_loss(w, plus, zl, zr, label, margin, multiplier) -
                 hinge_loss(w, minus, zl, zr, label, margin, multiplier)) /
                (2 * h);
    }
    return {gw, ga};
}

/// Nominal alpha by enumerating every ordered pair of values within each unit.
/// table[rater][item], 0 = missing.
inline double krippendorff_alpha(const std::vector<std::vector<int>>& table) {
    std::map<std::pair<int, int>, double> o;
    const std::size_t items = table.front().size();
    for (std::size_t i = 0; i < items; ++i) {
        std::vector<int> values;
        for (const auto& row : table) {
            if (row[i] != 0) values.push_back(row[i]);
        }
        if (values.size() < 2) continue;
        for (std::size_t a = 0; a < values.size(); ++a) {
            for (std::size_t b = 0; b < values.size(); ++b) {
                if (a != b) o[{values[a], values[b]}] += 1.0 / static_cast<double>(values.size() - 1);
            }
        }
    }
    std::map<int, double> nc;
    double n = 0.0;
    for (const auto& [key, v] : o) {
        nc[key.first] += v;
        n += v;
    }
    double d_o = 0.0;
    for (const auto& [key, v] : o) {
        if (key.first != key.second) d_o += v;
    }
    d_o /= n;
    double d_e = 0.0;
    for (const auto& [c, vc] : nc) {
        for (const auto& [k, vk] : nc) {
            if (c != k) d_e += vc * vk;
        }
    }
    d_e /= n * (n - 1.0);
    return 1.0 - d_o / d_e;
}

/// Cohen's kappa from the explicit confusion matrix.
inline double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<int, double> ma, mb;
    double agree = 0.0;
    const double n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma[a[i]] += 1.0 / n;
        mb[b[i]] += 1.0 / n;
        agree += a[i] == b[i] ? 1.0 / n : 0.0;
    }
    double pe = 0.0;
    for (const auto& [c, p] : ma) pe += p * (mb.count(c) ? mb[c] : 0.0);
    return (agree - pe) / (1.0 - pe);
}

} // namespace prefmix::oracle
